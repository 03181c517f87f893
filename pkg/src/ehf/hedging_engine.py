"""Hedging episodes: loss accounting, entropic-risk objective, trade masks, policies.

One episode = one simulated price path hedged day by day. The issuer of an
ATM call holds delta_t shares from day t to t+1, pays proportional costs on
every rebalance, and settles the payoff at maturity. The termination loss

    L = sum_t delta_t (S_{t+1} - S_t) - sum_t rate |delta_t - delta_{t-1}| S_t
        - max(S_T - K, 0),   delta_{-1} = 0

is aggregated across paths by the entropic risk measure, which is what the
neural policies are trained to minimize. Rebalancing is gated by a boolean
trade mask built from a daily-move threshold alpha and (optionally) a
classifier's skip labels; on gated-off days delta is frozen.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .analytics_bsm import ContractSpec
from .errors import ConfigurationError, DomainError, ShapeError
from .market_sim import PathSet
from . import neural_core as nc
from .neural_core import AdamState, Tape, adam_step, fan_uniform, require_finite


# ---------------------------------------------------------------------------
# configuration types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostModel:
    """Proportional transaction cost: rate * |cash traded|."""

    rate: float

    def __post_init__(self):
        if not (self.rate >= 0.0 and math.isfinite(self.rate)):
            raise DomainError(f"cost rate must be >= 0, got {self.rate}")


@dataclass(frozen=True)
class RiskConfig:
    """Entropic risk parameter; rho(L) = (1/lambda) log E[exp(-lambda L)]."""

    risk_aversion: float

    def __post_init__(self):
        if not (self.risk_aversion > 0.0 and math.isfinite(self.risk_aversion)):
            raise DomainError(f"risk aversion must be > 0, got {self.risk_aversion}")


_ARCHS = ("bsm", "dense", "gru")


@dataclass(frozen=True)
class PolicyConfig:
    """Architecture tag plus feature switches shared by the trainable policies."""

    arch: str = "dense"
    hidden: int = 32          # dense hidden width (two hidden layers)
    gru_hidden: int = 10      # recurrent units per layer
    gru_layers: int = 2
    window: int = 3           # price-history window consumed by the gru
    use_change: bool = True   # feed the one-day relative price change
    use_label: bool = False   # feed the classifier label as an input

    def __post_init__(self):
        if self.arch not in _ARCHS:
            raise ConfigurationError(f"unknown policy architecture {self.arch!r}")
        if self.hidden < 1 or self.gru_hidden < 1 or self.gru_layers < 1:
            raise ConfigurationError("network sizes must be >= 1")
        if self.window < 1:
            raise ConfigurationError(f"window length must be >= 1, got {self.window}")

    @property
    def n_features(self) -> int:
        # log-price, t/T, previous delta, plus optional extras
        return 3 + int(self.use_change) + int(self.use_label)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 12
    batch_size: int = 256
    lr: float = 1e-3
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be >= 1")
        if not (0.0 <= self.val_fraction < 1.0):
            raise ConfigurationError(
                f"val_fraction must be in [0, 1), got {self.val_fraction}")
        if not (self.lr > 0.0):
            raise ConfigurationError(f"learning rate must be > 0, got {self.lr}")


# ---------------------------------------------------------------------------
# trade masks
# ---------------------------------------------------------------------------

def compute_trade_mask(paths: PathSet, alpha: float) -> np.ndarray:
    """Boolean [n_paths, n_steps]; True on day 0 and whenever the one-day
    relative move |S_t/S_{t-1} - 1| exceeds alpha."""
    if alpha < 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    rel = np.abs(paths.prices[:, 1:] / paths.prices[:, :-1] - 1.0)
    mask = np.empty((paths.n_paths, paths.n_steps), dtype=bool)
    mask[:, 0] = True
    # decision on day t (1 <= t < n_steps) looks at the move into day t
    mask[:, 1:] = rel[:, : paths.n_steps - 1] > alpha
    return mask


def check_mask(mask: np.ndarray, n_paths: int, n_steps: int) -> np.ndarray:
    if mask.shape != (n_paths, n_steps) or mask.dtype != np.bool_:
        raise ShapeError(
            f"expected bool mask of shape {(n_paths, n_steps)}, got "
            f"{mask.dtype} {mask.shape}")
    if not mask[:, 0].all():
        raise DomainError("trade mask must keep day 0 enabled on every path")
    return mask


def combine_mask(threshold_mask: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """AND the alpha mask with classifier labels (1 = trade allowed); day 0 stays on."""
    if threshold_mask.shape != labels.shape:
        raise ShapeError(
            f"mask shape {threshold_mask.shape} != labels shape {labels.shape}")
    out = threshold_mask & (labels == 1)
    out[:, 0] = True
    return out


def trade_frequency(paths: PathSet, alpha: float) -> float:
    """Average number of daily moves per path exceeding alpha.

    This is the frequency statistic of the threshold filter itself, counted
    over all n_steps daily returns of each path (at alpha = 0 it is exactly
    n_steps); it deliberately excludes the forced day-0 rebalance of the mask.
    """
    if alpha < 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    rel = np.abs(paths.prices[:, 1:] / paths.prices[:, :-1] - 1.0)
    return float(np.mean(np.sum(rel > alpha, axis=1)))


def mask_frequency(mask: np.ndarray) -> float:
    """Average number of enabled rebalance days per path."""
    return float(np.mean(np.sum(mask, axis=1)))


# ---------------------------------------------------------------------------
# episode accounting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HedgeEpisodeResult:
    """Per-path episode outcomes plus per-day trade detail."""

    loss: np.ndarray         # [n] termination loss (currency; more negative = worse)
    trade_counts: np.ndarray  # [n] days with a nonzero position change
    total_cost: np.ndarray   # [n] accumulated transaction cost
    buy_sell: np.ndarray     # [n, n_steps] signed cash traded per day
    costs: np.ndarray        # [n, n_steps] cost per day
    deltas: np.ndarray       # [n, n_steps]


def episode_results(prices: np.ndarray, deltas: np.ndarray,
                    contract: ContractSpec, cost: CostModel) -> HedgeEpisodeResult:
    """Vectorized termination-loss accounting for a batch of paths."""
    prices = np.asarray(prices, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.ndim != 2 or prices.shape != (deltas.shape[0], deltas.shape[1] + 1):
        raise ShapeError(
            f"prices {prices.shape} incompatible with deltas {deltas.shape}")
    if contract.maturity_steps != deltas.shape[1]:
        raise ShapeError(
            f"contract maturity {contract.maturity_steps} != {deltas.shape[1]} hedge days")
    position_changes = np.diff(deltas, axis=1, prepend=0.0)
    buy_sell = position_changes * prices[:, :-1]
    costs = cost.rate * np.abs(buy_sell)
    pnl = np.sum(deltas * np.diff(prices, axis=1), axis=1)
    payoff = np.maximum(prices[:, -1] - contract.strike, 0.0)
    loss = pnl - costs.sum(axis=1) - payoff
    return HedgeEpisodeResult(
        loss=loss,
        trade_counts=np.count_nonzero(position_changes, axis=1),
        total_cost=costs.sum(axis=1),
        buy_sell=buy_sell,
        costs=costs,
        deltas=deltas,
    )


def termination_loss(path: np.ndarray, deltas: np.ndarray,
                     contract: ContractSpec, cost: CostModel) -> float:
    """Single-path loss; see module docstring for the accounting identity."""
    res = episode_results(np.asarray(path, dtype=np.float64)[None, :],
                          np.asarray(deltas, dtype=np.float64)[None, :],
                          contract, cost)
    return float(res.loss[0])


def write_episode_csv(filename, path: np.ndarray, deltas: np.ndarray,
                      cost: CostModel) -> None:
    """Per-day debug dump: day, price, delta, buy_sell, trading_cost."""
    path = np.asarray(path, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    changes = np.diff(deltas, prepend=0.0)
    buy_sell = changes * path[: len(deltas)]
    costs = cost.rate * np.abs(buy_sell)
    with open(filename, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["day", "price", "delta", "buy_sell", "trading_cost"])
        for t in range(len(deltas)):
            writer.writerow([t, repr(float(path[t])), repr(float(deltas[t])),
                             repr(float(buy_sell[t])), repr(float(costs[t]))])


# ---------------------------------------------------------------------------
# entropic risk
# ---------------------------------------------------------------------------

def entropy_risk(losses: np.ndarray, risk: RiskConfig) -> float:
    """rho = (1/lambda) log mean exp(-lambda L), max-shifted for overflow safety."""
    losses = np.asarray(losses, dtype=np.float64)
    if losses.size == 0:
        raise DomainError("entropy risk of an empty sample is undefined")
    lam = risk.risk_aversion
    a = -lam * losses
    m = float(np.max(a))
    return (m + math.log(float(np.mean(np.exp(a - m))))) / lam


def tape_entropy_risk(tape: Tape, loss_node: nc.Node, risk_aversion: float) -> nc.Node:
    """Entropic risk as a recorded scalar node (same max-shift as entropy_risk)."""
    a = tape.mul_const(loss_node, -risk_aversion)
    m = float(np.max(a.value))
    shifted = tape.add_const(a, -m)
    log_mean = tape.log(tape.mean(tape.exp(shifted)))
    return tape.mul_const(tape.add_const(log_mean, m), 1.0 / risk_aversion)


# ---------------------------------------------------------------------------
# delta policies
# ---------------------------------------------------------------------------

def _require_labels(cfg: PolicyConfig, labels, n: int, n_steps: int) -> np.ndarray:
    if not cfg.use_label:
        return np.ones((n, n_steps))
    if labels is None:
        raise ConfigurationError("policy expects a label feature but none was given")
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != (n, n_steps):
        raise ShapeError(f"labels shape {labels.shape} != {(n, n_steps)}")
    return labels


class BSMPolicy:
    """Closed-form delta policy; not trainable. Rebalances only on masked days."""

    arch = "bsm"

    def __init__(self, contract: ContractSpec, vol: float, dt: float,
                 rate: float = 0.0):
        self.contract = contract
        self.vol = vol
        self.dt = dt
        self.rate = rate

    def deltas(self, prices: np.ndarray, mask: np.ndarray,
               labels=None) -> np.ndarray:
        from .analytics_bsm import bsm_delta_matrix
        return bsm_delta_matrix(prices, self.contract, self.vol, self.dt,
                                rate=self.rate, mask=mask)


class DensePolicy:
    """Two-hidden-layer feedforward delta generator with sigmoid output in [0,1].

    Per-day features: log(S_t/S0), t/T, previous delta, and optionally the
    one-day relative change and the classifier label.
    """

    arch = "dense"

    def __init__(self, config: PolicyConfig, params: dict[str, np.ndarray],
                 s0: float = 100.0):
        self.config = config
        self.params = params
        self.s0 = float(s0)

    @classmethod
    def init(cls, config: PolicyConfig, seed: int, s0: float = 100.0) -> "DensePolicy":
        rng = np.random.default_rng(seed)
        nf, h = config.n_features, config.hidden
        params = {
            "w1": fan_uniform(rng, h, nf), "b1": np.zeros(h),
            "w2": fan_uniform(rng, h, h), "b2": np.zeros(h),
            "w3": fan_uniform(rng, 1, h), "b3": np.zeros(1),
        }
        return cls(config, params, s0)

    def _feature_arrays(self, prices: np.ndarray, labels) -> tuple:
        n, width = prices.shape
        logp = np.log(prices / self.s0)
        change = np.zeros_like(prices)
        change[:, 1:] = prices[:, 1:] / prices[:, :-1] - 1.0
        lab = _require_labels(self.config, labels, n, width - 1)
        return logp, change, lab

    def deltas(self, prices: np.ndarray, mask: np.ndarray, labels=None) -> np.ndarray:
        n, n_steps = check_mask(mask, prices.shape[0], prices.shape[1] - 1).shape
        logp, change, lab = self._feature_arrays(prices, labels)
        p = self.params
        prev = np.zeros(n)
        out = np.empty((n, n_steps))
        for t in range(n_steps):
            cols = [logp[:, t], np.full(n, t / n_steps), prev]
            if self.config.use_change:
                cols.append(change[:, t])
            if self.config.use_label:
                cols.append(lab[:, t])
            x = np.stack(cols, axis=1)
            h1 = np.maximum(x @ p["w1"].T + p["b1"], 0.0)
            h2 = np.maximum(h1 @ p["w2"].T + p["b2"], 0.0)
            raw = nc.sigmoid(h2 @ p["w3"].T + p["b3"])[:, 0]
            prev = np.where(mask[:, t], raw, prev)
            out[:, t] = prev
        return out

    def tape_deltas(self, tape: Tape, prices: np.ndarray, mask: np.ndarray,
                    labels=None) -> list:
        n, n_steps = check_mask(mask, prices.shape[0], prices.shape[1] - 1).shape
        logp, change, lab = self._feature_arrays(prices, labels)
        w1 = tape.param("w1", self.params["w1"]); b1 = tape.param("b1", self.params["b1"])
        w2 = tape.param("w2", self.params["w2"]); b2 = tape.param("b2", self.params["b2"])
        w3 = tape.param("w3", self.params["w3"]); b3 = tape.param("b3", self.params["b3"])
        prev = tape.const(np.zeros(n))
        nodes = []
        for t in range(n_steps):
            cols = [tape.const(logp[:, t]), tape.const(np.full(n, t / n_steps)), prev]
            if self.config.use_change:
                cols.append(tape.const(change[:, t]))
            if self.config.use_label:
                cols.append(tape.const(lab[:, t]))
            x = tape.hstack(cols)
            h1 = tape.relu(tape.add_row(tape.matmul(x, w1), b1))
            h2 = tape.relu(tape.add_row(tape.matmul(h1, w2), b2))
            raw = tape.squeeze_col(tape.sigmoid(tape.add_row(tape.matmul(h2, w3), b3)))
            prev = tape.where(mask[:, t], raw, prev)
            nodes.append(prev)
        return nodes


class GRUPolicy:
    """Stacked-GRU delta generator reading a rolling window of log prices.

    Days with an incomplete window (the first window-1 days) route through a
    small dense fallback using the same per-day features as DensePolicy; from
    then on the recurrent state advances every day and the trade mask only
    gates whether the output replaces the held delta.
    """

    arch = "gru"

    def __init__(self, config: PolicyConfig, params: dict[str, np.ndarray],
                 s0: float = 100.0):
        self.config = config
        self.params = params
        self.s0 = float(s0)

    @classmethod
    def init(cls, config: PolicyConfig, seed: int, s0: float = 100.0) -> "GRUPolicy":
        rng = np.random.default_rng(seed)
        h, nf = config.gru_hidden, config.n_features
        params = {}
        in_size = config.window
        for layer in range(1, config.gru_layers + 1):
            for gate in ("z", "r", "h"):
                params[f"l{layer}_w{gate}"] = fan_uniform(rng, h, in_size + h)
                params[f"l{layer}_b{gate}"] = np.zeros(h)
            in_size = h
        params["head_w"] = fan_uniform(rng, 1, h)
        params["head_b"] = np.zeros(1)
        fb = config.hidden
        params.update({
            "fb_w1": fan_uniform(rng, fb, nf), "fb_b1": np.zeros(fb),
            "fb_w2": fan_uniform(rng, fb, fb), "fb_b2": np.zeros(fb),
            "fb_w3": fan_uniform(rng, 1, fb), "fb_b3": np.zeros(1),
        })
        return cls(config, params, s0)

    def _cell(self, layer: int) -> nc.GRUCell:
        p = self.params
        return nc.GRUCell(
            w_update=p[f"l{layer}_wz"], w_reset=p[f"l{layer}_wr"],
            w_cand=p[f"l{layer}_wh"], b_update=p[f"l{layer}_bz"],
            b_reset=p[f"l{layer}_br"], b_cand=p[f"l{layer}_bh"])

    def deltas(self, prices: np.ndarray, mask: np.ndarray, labels=None) -> np.ndarray:
        cfg = self.config
        n, n_steps = check_mask(mask, prices.shape[0], prices.shape[1] - 1).shape
        logp = np.log(prices / self.s0)
        change = np.zeros_like(prices)
        change[:, 1:] = prices[:, 1:] / prices[:, :-1] - 1.0
        lab = _require_labels(cfg, labels, n, n_steps)
        p = self.params
        cells = [self._cell(layer) for layer in range(1, cfg.gru_layers + 1)]
        states = [np.zeros((n, cfg.gru_hidden)) for _ in cells]
        prev = np.zeros(n)
        out = np.empty((n, n_steps))
        for t in range(n_steps):
            if t < cfg.window - 1:
                cols = [logp[:, t], np.full(n, t / n_steps), prev]
                if cfg.use_change:
                    cols.append(change[:, t])
                if cfg.use_label:
                    cols.append(lab[:, t])
                x = np.stack(cols, axis=1)
                h1 = np.maximum(x @ p["fb_w1"].T + p["fb_b1"], 0.0)
                h2 = np.maximum(h1 @ p["fb_w2"].T + p["fb_b2"], 0.0)
                raw = nc.sigmoid(h2 @ p["fb_w3"].T + p["fb_b3"])[:, 0]
            else:
                x = logp[:, t - cfg.window + 1: t + 1]
                for i, cell in enumerate(cells):
                    states[i] = nc.gru_forward(cell, x, states[i])
                    x = states[i]
                raw = nc.sigmoid(x @ p["head_w"].T + p["head_b"])[:, 0]
            prev = np.where(mask[:, t], raw, prev)
            out[:, t] = prev
        return out

    def tape_deltas(self, tape: Tape, prices: np.ndarray, mask: np.ndarray,
                    labels=None) -> list:
        cfg = self.config
        n, n_steps = check_mask(mask, prices.shape[0], prices.shape[1] - 1).shape
        logp = np.log(prices / self.s0)
        change = np.zeros_like(prices)
        change[:, 1:] = prices[:, 1:] / prices[:, :-1] - 1.0
        lab = _require_labels(cfg, labels, n, n_steps)
        prm = {name: tape.param(name, value) for name, value in self.params.items()}
        states = [tape.const(np.zeros((n, cfg.gru_hidden)))
                  for _ in range(cfg.gru_layers)]
        prev = tape.const(np.zeros(n))
        nodes = []
        for t in range(n_steps):
            if t < cfg.window - 1:
                cols = [tape.const(logp[:, t]), tape.const(np.full(n, t / n_steps)), prev]
                if cfg.use_change:
                    cols.append(tape.const(change[:, t]))
                if cfg.use_label:
                    cols.append(tape.const(lab[:, t]))
                x = tape.hstack(cols)
                h1 = tape.relu(tape.add_row(tape.matmul(x, prm["fb_w1"]), prm["fb_b1"]))
                h2 = tape.relu(tape.add_row(tape.matmul(h1, prm["fb_w2"]), prm["fb_b2"]))
                raw = tape.squeeze_col(
                    tape.sigmoid(tape.add_row(tape.matmul(h2, prm["fb_w3"]), prm["fb_b3"])))
            else:
                x = tape.const(logp[:, t - cfg.window + 1: t + 1])
                for i in range(cfg.gru_layers):
                    layer = i + 1
                    states[i] = nc.tape_gru(
                        tape, x, states[i],
                        prm[f"l{layer}_wz"], prm[f"l{layer}_bz"],
                        prm[f"l{layer}_wr"], prm[f"l{layer}_br"],
                        prm[f"l{layer}_wh"], prm[f"l{layer}_bh"])
                    x = states[i]
                raw = tape.squeeze_col(
                    tape.sigmoid(tape.add_row(tape.matmul(x, prm["head_w"]), prm["head_b"])))
            prev = tape.where(mask[:, t], raw, prev)
            nodes.append(prev)
        return nodes


def make_policy(config: PolicyConfig, seed: int, s0: float = 100.0,
                contract: ContractSpec | None = None, vol: float | None = None,
                dt: float = 1.0 / 365.0):
    if config.arch == "dense":
        return DensePolicy.init(config, seed, s0)
    if config.arch == "gru":
        return GRUPolicy.init(config, seed, s0)
    if contract is None or vol is None:
        raise ConfigurationError("bsm policy needs a contract and a volatility")
    return BSMPolicy(contract, vol, dt)


def policy_forward(policy, prices: np.ndarray, mask: np.ndarray,
                   labels=None) -> np.ndarray:
    """Delta matrix [n, n_steps] for any policy; frozen on masked-out days."""
    return policy.deltas(prices, mask, labels=labels)


# ---------------------------------------------------------------------------
# training / evaluation
# ---------------------------------------------------------------------------

def episode_loss_node(tape: Tape, policy, prices: np.ndarray, mask: np.ndarray,
                      contract: ContractSpec, cost: CostModel,
                      labels=None) -> nc.Node:
    """Record the per-path termination loss of a batch as a [n]-shaped node."""
    delta_nodes = policy.tape_deltas(tape, prices, mask, labels=labels)
    if contract.maturity_steps != len(delta_nodes):
        raise ShapeError(
            f"contract maturity {contract.maturity_steps} != {len(delta_nodes)} hedge days")
    price_diffs = np.diff(prices, axis=1)
    prev = tape.const(np.zeros(len(prices)))
    pnl = None
    cost_sum = None
    for t, delta in enumerate(delta_nodes):
        gain = tape.mul_const(delta, price_diffs[:, t])
        pnl = gain if pnl is None else tape.add(pnl, gain)
        cash = tape.mul_const(tape.sub(delta, prev), prices[:, t])
        day_cost = tape.mul_const(tape.abs(cash), cost.rate)
        cost_sum = day_cost if cost_sum is None else tape.add(cost_sum, day_cost)
        prev = delta
    payoff = np.maximum(prices[:, -1] - contract.strike, 0.0)
    return tape.add_const(tape.sub(pnl, cost_sum), -payoff)


@dataclass
class TrainingLog:
    train_objective: list[float] = field(default_factory=list)  # per-epoch mean batch risk
    val_objective: list[float] = field(default_factory=list)
    best_epoch: int = -1


@dataclass(frozen=True)
class EvalSummary:
    mean_loss: float
    std_loss: float
    avg_trades: float
    n_paths: int
    result: HedgeEpisodeResult


def evaluate_policy(paths: PathSet, policy, mask: np.ndarray,
                    contract: ContractSpec, cost: CostModel,
                    labels=None) -> EvalSummary:
    """Pure evaluation pass: per-path losses and their summary statistics."""
    deltas = policy.deltas(paths.prices, mask, labels=labels)
    res = episode_results(paths.prices, deltas, contract, cost)
    return EvalSummary(
        mean_loss=float(np.mean(res.loss)),
        std_loss=float(np.std(res.loss)),
        avg_trades=float(np.mean(res.trade_counts)),
        n_paths=paths.n_paths,
        result=res,
    )


def train_policy(train_paths: PathSet, contract: ContractSpec, cost: CostModel,
                 risk: RiskConfig, policy_cfg: PolicyConfig, mask: np.ndarray,
                 train_cfg: TrainConfig, labels=None):
    """Minimize the entropic risk of the termination loss by mini-batch Adam.

    The leading (1 - val_fraction) block of paths trains; the trailing block
    is a validation set scored after every epoch, and the parameters with the
    best validation objective are the ones returned. Deterministic given the
    seeds in train_cfg / policy init.
    """
    prices = train_paths.prices
    n = train_paths.n_paths
    check_mask(mask, n, train_paths.n_steps)
    if policy_cfg.arch == "bsm":
        raise ConfigurationError("the closed-form policy has no trainable parameters")
    policy = make_policy(policy_cfg, seed=train_cfg.seed, s0=train_paths.s0)
    n_val = int(round(n * train_cfg.val_fraction))
    n_train = n - n_val
    if n_train < 1:
        raise ConfigurationError(f"no training paths left after split ({n} total)")
    lab = None if labels is None else np.asarray(labels)
    adam = AdamState.for_params(policy.params, lr=train_cfg.lr)
    rng = np.random.default_rng(np.uint64(train_cfg.seed) ^ np.uint64(0x5EED5EED))
    log = TrainingLog()
    best_val = math.inf
    best_params = {k: v.copy() for k, v in policy.params.items()}

    def validation_objective() -> float:
        if n_val == 0:
            sel = slice(0, n_train)
        else:
            sel = slice(n_train, n)
        deltas = policy.deltas(prices[sel], mask[sel],
                               labels=None if lab is None else lab[sel])
        res = episode_results(prices[sel], deltas, contract, cost)
        return entropy_risk(res.loss, risk)

    for epoch in range(train_cfg.epochs):
        order = rng.permutation(n_train)
        batch_objectives = []
        for start in range(0, n_train, train_cfg.batch_size):
            idx = order[start:start + train_cfg.batch_size]
            tape = Tape()
            loss_node = episode_loss_node(
                tape, policy, prices[idx], mask[idx], contract, cost,
                labels=None if lab is None else lab[idx])
            objective = tape_entropy_risk(tape, loss_node, risk.risk_aversion)
            require_finite(objective.value, f"training objective (epoch {epoch})")
            grads = tape.backward(objective)
            for name, g in grads.items():
                require_finite(g, f"gradient of {name} (epoch {epoch})")
            adam_step(policy.params, grads, adam)
            batch_objectives.append(objective.value)
        val = validation_objective()
        log.train_objective.append(float(np.mean(batch_objectives)))
        log.val_objective.append(val)
        if val < best_val:
            best_val = val
            best_params = {k: v.copy() for k, v in policy.params.items()}
            log.best_epoch = epoch
    policy.params.update(best_params)
    return policy, log


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_policy(filename, policy) -> None:
    if policy.arch == "bsm":
        raise ConfigurationError("closed-form policy has no checkpointable state")
    cfg = policy.config
    meta = {
        "s0": policy.s0,
        "hidden": cfg.hidden, "gru_hidden": cfg.gru_hidden,
        "gru_layers": cfg.gru_layers, "window": cfg.window,
        "use_change": cfg.use_change, "use_label": cfg.use_label,
    }
    nc.save_params(filename, policy.arch, policy.params, meta)


def load_policy(filename):
    arch, params, meta = nc.load_params(filename)
    cfg = PolicyConfig(
        arch=arch, hidden=int(meta["hidden"]), gru_hidden=int(meta["gru_hidden"]),
        gru_layers=int(meta["gru_layers"]), window=int(meta["window"]),
        use_change=bool(meta["use_change"]), use_label=bool(meta["use_label"]))
    cls = DensePolicy if arch == "dense" else GRUPolicy
    if arch not in ("dense", "gru"):
        raise ConfigurationError(f"cannot restore a policy of architecture {arch!r}")
    return cls(cfg, params, s0=float(meta["s0"]))
