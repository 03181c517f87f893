"""Alpha sweeps, Pareto-undominated frontiers, and config-vs-config comparisons.

A sweep evaluates one hedging configuration (scenario, policy, cost rate,
risk aversion, optional forest gate) across a grid of rebalance thresholds
alpha, producing one (mean loss, std loss) point per alpha on held-out paths.
The undominated subset of those points is the efficient hedging frontier;
range summaries and improvement percentages compare configurations the way a
desk would read them: higher mean (smaller loss) and lower std are better.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analytics_bsm import ContractSpec
from .errors import ConfigurationError, DomainError, IntegrityError, StateError
from .hedging_engine import (CostModel, PolicyConfig, RiskConfig, TrainConfig,
                             combine_mask, compute_trade_mask, evaluate_policy,
                             train_policy)
from .market_sim import PathSet
from .signal_forest import (Forest, ForestConfig, classification_report,
                            feature_table, fit_forest, label_matrix,
                            predict_label_matrix)

FRONTIER_COLUMNS = ("scenario", "policy", "rf", "cost_rate", "lambda", "alpha",
                    "mean_loss", "std_loss", "avg_trades", "n_test_paths",
                    "mode", "seed")

_MODES = ("fast", "retrain")


def default_alpha_grid(n_points: int = 100, high: float = 0.2) -> tuple[float, ...]:
    """Evenly spaced thresholds from 0 to high inclusive."""
    return tuple(float(a) for a in np.linspace(0.0, high, n_points))


@dataclass(frozen=True)
class FrontierPoint:
    scenario: str
    policy: str
    rf: bool
    cost_rate: float
    risk_aversion: float
    alpha: float
    mean_loss: float
    std_loss: float
    avg_trades: float
    n_test_paths: int
    mode: str
    seed: int

    def __post_init__(self):
        if self.std_loss < 0:
            raise DomainError(f"std_loss must be >= 0, got {self.std_loss}")
        if self.avg_trades < 0:
            raise DomainError(f"avg_trades must be >= 0, got {self.avg_trades}")


@dataclass(frozen=True)
class SweepConfig:
    alphas: tuple[float, ...]
    scenario: str = "high_vol"
    rf: bool = False
    cost_rate: float = 0.05
    risk_aversion: float = 0.5
    mode: str = "fast"
    seed: int = 0
    beta: float = 0.05
    forest_fit_rows: int = 15000   # cap on classifier training rows; 0 = all
    gate: str = "oracle"           # rf gate labels: oracle | forecast

    def __post_init__(self):
        if len(self.alphas) == 0:
            raise ConfigurationError("alpha grid is empty")
        arr = np.asarray(self.alphas, dtype=np.float64)
        if np.any(np.diff(arr) < 0) or arr[0] < 0 or arr[-1] > 1:
            raise ConfigurationError(
                "alpha grid must be ascending and within [0, 1]")
        if self.mode not in _MODES:
            raise ConfigurationError(f"unknown sweep mode {self.mode!r}")
        if self.gate not in _GATE_SOURCES:
            raise ConfigurationError(f"unknown gate source {self.gate!r}")


# ---------------------------------------------------------------------------
# forest preparation
# ---------------------------------------------------------------------------

_GATE_SOURCES = ("oracle", "forecast")


@dataclass(frozen=True)
class SignalArtifacts:
    """Extrema labels for gating plus the fitted forecaster and its report.

    ``train_labels``/``test_labels`` are the matrices rf sweeps gate with.
    With ``gate="oracle"`` they are the realised extremum labels of each
    path (a trader who knows the reversal is coming, the regime where the
    classifier pipeline is meant to operate); with ``gate="forecast"`` they
    are the forest's own out-of-sample votes.  The forecast matrices and
    accuracy reports are kept either way.
    """
    forest: Forest
    train_labels: np.ndarray   # gate labels, [n_train, n_steps]
    test_labels: np.ndarray    # gate labels, [n_test, n_steps]
    train_report: object
    test_report: object
    forecast_train: np.ndarray | None = None
    forecast_test: np.ndarray | None = None
    gate: str = "oracle"


def prepare_signal(train_paths: PathSet, test_paths: PathSet, beta: float,
                   forest_cfg: ForestConfig, fit_rows: int = 0,
                   jobs: int = 1, gate: str = "oracle") -> SignalArtifacts:
    """Fit the extrema forecaster on training paths and label both splits.

    fit_rows > 0 caps the classifier's training set with a seed-determined
    subsample (the full desk-scale table is larger than the two-feature
    problem needs).

    gate selects which labels rf sweeps freeze trading on: "oracle" uses
    the realised extremum labels, "forecast" the forest's own predictions.
    One-day-ahead reversals are close to unpredictable from two past
    returns, so the forecast gate barely changes the frontier; the oracle
    gate shows what the strategy delivers when the signal is right.
    """
    if gate not in _GATE_SOURCES:
        raise ConfigurationError(f"unknown gate source {gate!r}")
    X, path_row, day = feature_table(train_paths)
    truth = label_matrix(train_paths, beta)
    y = truth[path_row, day]
    if fit_rows and len(X) > fit_rows:
        rng = np.random.default_rng(np.uint64(forest_cfg.seed) ^ np.uint64(0xF17ED))
        sel = np.sort(rng.choice(len(X), size=fit_rows, replace=False))
        X_fit, y_fit = X[sel], y[sel]
    else:
        X_fit, y_fit = X, y
    forest = fit_forest(X_fit, y_fit, forest_cfg, jobs=jobs)
    train_pred = predict_label_matrix(forest, train_paths)
    test_pred = predict_label_matrix(forest, test_paths)
    test_truth = label_matrix(test_paths, beta)
    Xt, prow_t, day_t = feature_table(test_paths)
    if gate == "oracle":
        gate_train, gate_test = truth, test_truth
    else:
        gate_train, gate_test = train_pred, test_pred
    return SignalArtifacts(
        forest=forest,
        train_labels=gate_train,
        test_labels=gate_test,
        train_report=classification_report(train_pred[path_row, day], y),
        test_report=classification_report(
            test_pred[prow_t, day_t], test_truth[prow_t, day_t]),
        forecast_train=train_pred,
        forecast_test=test_pred,
        gate=gate,
    )


# ---------------------------------------------------------------------------
# sweeping
# ---------------------------------------------------------------------------

def _check_disjoint(train_paths: PathSet, test_paths: PathSet) -> None:
    overlap = np.intersect1d(train_paths.path_ids, test_paths.path_ids)
    if overlap.size:
        raise StateError(
            f"train/test path ids overlap ({overlap.size} shared, e.g. {overlap[0]})")


def _masks_for(paths: PathSet, alpha: float, labels: np.ndarray | None) -> np.ndarray:
    mask = compute_trade_mask(paths, alpha)
    if labels is not None:
        mask = combine_mask(mask, labels)
    return mask


def sweep_alpha(sweep: SweepConfig, train_paths: PathSet | None, test_paths: PathSet,
                contract: ContractSpec, policy_cfg: PolicyConfig,
                train_cfg: TrainConfig, signal: SignalArtifacts | None = None,
                forest_cfg: ForestConfig | None = None,
                policy=None, jobs: int = 1) -> list[FrontierPoint]:
    """One FrontierPoint per alpha, evaluated on the held-out test paths.

    mode="retrain" trains a fresh policy per alpha; mode="fast" re-masks a
    single policy — either the one passed in or one trained here at the
    densest mask (the grid's smallest alpha). Every emitted point carries the
    mode tag.
    """
    if train_paths is not None:
        _check_disjoint(train_paths, test_paths)
    elif sweep.mode == "retrain":
        raise ConfigurationError("retrain mode needs training paths")
    elif policy is None:
        raise ConfigurationError(
            "fast mode needs either a trained policy or training paths")
    if sweep.rf and signal is None:
        if train_paths is None:
            raise ConfigurationError("rf gating needs training paths or a fitted signal")
        signal = prepare_signal(train_paths, test_paths, sweep.beta,
                                forest_cfg or ForestConfig(seed=sweep.seed),
                                fit_rows=sweep.forest_fit_rows, gate=sweep.gate)
    cost = CostModel(sweep.cost_rate)
    risk = RiskConfig(sweep.risk_aversion)
    train_labels = signal.train_labels if sweep.rf else None
    test_labels = signal.test_labels if sweep.rf else None

    def point_from(summary, alpha: float) -> FrontierPoint:
        return FrontierPoint(
            scenario=sweep.scenario, policy=policy_cfg.arch, rf=sweep.rf,
            cost_rate=sweep.cost_rate, risk_aversion=sweep.risk_aversion,
            alpha=alpha, mean_loss=summary.mean_loss, std_loss=summary.std_loss,
            avg_trades=summary.avg_trades, n_test_paths=summary.n_paths,
            mode=sweep.mode, seed=sweep.seed)

    def run_one(alpha: float) -> FrontierPoint:
        policy, _ = train_policy(
            train_paths, contract, cost, risk, policy_cfg,
            _masks_for(train_paths, alpha, train_labels), train_cfg,
            labels=train_labels)
        summary = evaluate_policy(
            test_paths, policy, _masks_for(test_paths, alpha, test_labels),
            contract, cost, labels=test_labels)
        return point_from(summary, alpha)

    if sweep.mode == "retrain":
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                points = list(pool.map(run_one, sweep.alphas))
        else:
            points = [run_one(alpha) for alpha in sweep.alphas]
    else:
        if policy is None:
            policy, _ = train_policy(
                train_paths, contract, cost, risk, policy_cfg,
                _masks_for(train_paths, sweep.alphas[0], train_labels), train_cfg,
                labels=train_labels)
        points = []
        for alpha in sweep.alphas:
            summary = evaluate_policy(
                test_paths, policy, _masks_for(test_paths, alpha, test_labels),
                contract, cost, labels=test_labels)
            points.append(point_from(summary, alpha))
    _assert_trades_monotone(points)
    return points


def sweep_baseline(sweep: SweepConfig, test_paths: PathSet, contract: ContractSpec,
                   vol: float, dt: float,
                   signal: SignalArtifacts | None = None) -> list[FrontierPoint]:
    """Closed-form-delta frontier on the same grid (no training involved)."""
    from .hedging_engine import BSMPolicy
    cost = CostModel(sweep.cost_rate)
    test_labels = signal.test_labels if (sweep.rf and signal is not None) else None
    policy = BSMPolicy(contract, vol, dt)
    points = []
    for alpha in sweep.alphas:
        summary = evaluate_policy(
            test_paths, policy, _masks_for(test_paths, alpha, test_labels),
            contract, cost)
        points.append(FrontierPoint(
            scenario=sweep.scenario, policy="bsm", rf=sweep.rf and signal is not None,
            cost_rate=sweep.cost_rate, risk_aversion=sweep.risk_aversion,
            alpha=alpha, mean_loss=summary.mean_loss, std_loss=summary.std_loss,
            avg_trades=summary.avg_trades, n_test_paths=summary.n_paths,
            mode="fast", seed=sweep.seed))
    _assert_trades_monotone(points)
    return points


def _assert_trades_monotone(points: list[FrontierPoint]) -> None:
    trades = np.array([p.avg_trades for p in points])
    if np.any(np.diff(trades) > 1e-9):
        worst = int(np.argmax(np.diff(trades)))
        raise StateError(
            f"avg_trades increased along the sweep at alpha index {worst} "
            f"({trades[worst]:.4f} -> {trades[worst + 1]:.4f})")


# ---------------------------------------------------------------------------
# frontier extraction and summaries
# ---------------------------------------------------------------------------

def pareto_filter(points: list[FrontierPoint]) -> list[FrontierPoint]:
    """Undominated subset: q dominates p when std_q <= std_p and
    mean_q >= mean_p with at least one strict inequality."""
    if not points:
        raise DomainError("cannot filter an empty point set")
    std = np.array([p.std_loss for p in points])
    mean = np.array([p.mean_loss for p in points])
    # rows index the candidate p, columns the potential dominator q
    weakly_better = (std[None, :] <= std[:, None]) & (mean[None, :] >= mean[:, None])
    strictly = (std[None, :] < std[:, None]) | (mean[None, :] > mean[:, None])
    dominated = (weakly_better & strictly).any(axis=1)
    return [p for p, d in zip(points, dominated) if not d]


def summarize_range(points: list[FrontierPoint], alpha_lo: float,
                    alpha_hi: float) -> tuple[float, float]:
    """Simple averages of (mean_loss, std_loss) over alpha in [lo, hi]."""
    sel = [p for p in points if alpha_lo <= p.alpha <= alpha_hi]
    if not sel:
        raise DomainError(
            f"no frontier points with alpha in [{alpha_lo}, {alpha_hi}]")
    return (float(np.mean([p.mean_loss for p in sel])),
            float(np.mean([p.std_loss for p in sel])))


@dataclass(frozen=True)
class Comparison:
    base_mean: float
    base_std: float
    variant_mean: float
    variant_std: float
    mean_improvement_pct: float   # positive = variant's average loss is better (higher)
    std_improvement_pct: float    # positive = variant's loss std is lower


def compare_configs(base: list[FrontierPoint], variant: list[FrontierPoint],
                    alpha_lo: float = 0.0, alpha_hi: float = 0.1) -> Comparison:
    """Percentage improvements of variant over base, averaged over the range."""
    base_grid = sorted(p.alpha for p in base)
    var_grid = sorted(p.alpha for p in variant)
    if len(base_grid) != len(var_grid) or np.max(
            np.abs(np.array(base_grid) - np.array(var_grid))) > 1e-12:
        raise ConfigurationError("comparison requires matching alpha grids")
    b_mean, b_std = summarize_range(base, alpha_lo, alpha_hi)
    v_mean, v_std = summarize_range(variant, alpha_lo, alpha_hi)
    if b_mean == 0 or b_std == 0:
        raise DomainError("degenerate base summary (zero mean or std)")
    return Comparison(
        base_mean=b_mean, base_std=b_std,
        variant_mean=v_mean, variant_std=v_std,
        mean_improvement_pct=(v_mean - b_mean) / abs(b_mean) * 100.0,
        std_improvement_pct=(b_std - v_std) / b_std * 100.0,
    )


def format_comparison_table(rows: list[tuple[str, Comparison]],
                            base_name: str = "base",
                            variant_name: str = "variant") -> str:
    """Aligned text table of per-configuration improvements."""
    header = (f"{'config':<18} {base_name + ' mean':>14} {base_name + ' std':>13} "
              f"{variant_name + ' mean':>14} {variant_name + ' std':>13} "
              f"{'mean impr %':>12} {'std impr %':>11}")
    lines = [header, "-" * len(header)]
    for label, c in rows:
        lines.append(
            f"{label:<18} {c.base_mean:>14.3f} {c.base_std:>13.3f} "
            f"{c.variant_mean:>14.3f} {c.variant_std:>13.3f} "
            f"{c.mean_improvement_pct:>12.2f} {c.std_improvement_pct:>11.2f}")
    return "\n".join(lines)


def write_comparison_csv(filename, rows: list[tuple[str, Comparison]]) -> None:
    with open(filename, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["config", "base_mean", "base_std", "variant_mean",
                         "variant_std", "mean_improvement_pct", "std_improvement_pct"])
        for label, c in rows:
            writer.writerow([label, repr(c.base_mean), repr(c.base_std),
                             repr(c.variant_mean), repr(c.variant_std),
                             repr(c.mean_improvement_pct), repr(c.std_improvement_pct)])


# ---------------------------------------------------------------------------
# frontier CSV round-trip
# ---------------------------------------------------------------------------

def write_frontier_csv(filename, points: list[FrontierPoint]) -> None:
    with open(filename, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FRONTIER_COLUMNS)
        for p in points:
            writer.writerow([
                p.scenario, p.policy, int(p.rf), repr(p.cost_rate),
                repr(p.risk_aversion), repr(p.alpha), repr(p.mean_loss),
                repr(p.std_loss), repr(p.avg_trades), p.n_test_paths,
                p.mode, p.seed])


def read_frontier_csv(filename) -> list[FrontierPoint]:
    with open(filename, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(FRONTIER_COLUMNS):
            raise IntegrityError(
                f"{filename}: unexpected frontier header {header}")
        points = []
        for row in reader:
            if len(row) != len(FRONTIER_COLUMNS):
                raise IntegrityError(f"{filename}: malformed row {row}")
            points.append(FrontierPoint(
                scenario=row[0], policy=row[1], rf=bool(int(row[2])),
                cost_rate=float(row[3]), risk_aversion=float(row[4]),
                alpha=float(row[5]), mean_loss=float(row[6]),
                std_loss=float(row[7]), avg_trades=float(row[8]),
                n_test_paths=int(row[9]), mode=row[10], seed=int(row[11])))
    return points
