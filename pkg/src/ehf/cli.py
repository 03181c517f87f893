"""Command-line pipeline: simulate -> label -> train -> sweep -> report.

Every command is driven by an INI config (see configs/ and the README for the
grammar) plus a handful of overriding flags, writes its artifacts under the
configured output directory, and is byte-for-byte reproducible given the same
config and seeds. Exit codes: 0 success, 2 configuration/validation problems,
3 missing or corrupt files, 4 numeric failures during training.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import glob
import hashlib
import json
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import market_sim
from .analytics_bsm import ContractSpec
from .errors import (ConfigurationError, DomainError, IntegrityError,
                     NumericError, ResolutionError, ShapeError, StateError)
from .frontier import (SweepConfig, compare_configs, format_comparison_table,
                       pareto_filter, prepare_signal, read_frontier_csv,
                       sweep_alpha, sweep_baseline, write_comparison_csv,
                       write_frontier_csv)
from .hedging_engine import (CostModel, PolicyConfig, RiskConfig, TrainConfig,
                             combine_mask, compute_trade_mask, load_policy,
                             save_policy, train_policy)
from .market_sim import (GBMParams, HestonParams, PathSet, SimConfig,
                         load_pathset, save_pathset, split_pathset)
from .signal_forest import ForestConfig, save_forest, write_label_csv

PATHS_FILE = "paths.ehfp"
MANIFEST_FILE = "paths.manifest.json"
FOREST_FILE = "forest.npz"

_SCENARIOS = ("low_vol", "high_vol", "gbm", "custom")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    scenario: str = "high_vol"
    heston: HestonParams | None = None        # only for scenario = custom
    gbm: GBMParams | None = None
    bsm_vol: float | None = None              # baseline vol override
    strike: float = 100.0
    maturity_steps: int = 30
    n_paths: int = 25000
    n_train: int = 20000
    n_test: int = 5000
    s0: float = 100.0
    dt: float = 1.0 / 365.0
    sim_seed: int = 12345
    beta: float = 0.05
    forest: ForestConfig = ForestConfig()
    forest_fit_rows: int = 15000
    gate: str = "oracle"
    policy: PolicyConfig = PolicyConfig()
    train: TrainConfig = TrainConfig()
    alphas: tuple = tuple(np.linspace(0.0, 0.2, 21))
    cost_rates: tuple = (0.05,)
    risk_aversions: tuple = (0.5,)
    rf: bool = False
    mode: str = "fast"
    alpha_lo: float = 0.0
    alpha_hi: float = 0.1
    out_dir: str = "out"

    def __post_init__(self):
        if self.scenario not in _SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}")
        if self.scenario == "custom" and self.heston is None:
            raise ConfigurationError("scenario=custom needs Heston parameters")
        if self.n_train + self.n_test > self.n_paths:
            raise ConfigurationError(
                f"train ({self.n_train}) + test ({self.n_test}) exceeds "
                f"simulated paths ({self.n_paths})")
        if not (0 < self.n_train and 0 < self.n_test):
            raise ConfigurationError("n_train and n_test must be positive")


def _parse_number(text: str) -> float:
    """Plain float, or an a/b fraction so configs can say dt = 1/365."""
    text = text.strip()
    if "/" in text:
        num, _, den = text.partition("/")
        return float(num) / float(den)
    return float(text)


def _parse_float_list(text: str) -> tuple[float, ...]:
    parts = [p for chunk in text.split(",") for p in chunk.split()]
    return tuple(_parse_number(p) for p in parts if p)


def _parse_alpha_grid(text: str) -> tuple[float, ...]:
    """Either 'lo:hi:count' (inclusive linspace) or an explicit list."""
    text = text.strip()
    if ":" in text:
        lo, hi, count = text.split(":")
        return tuple(float(a) for a in
                     np.linspace(_parse_number(lo), _parse_number(hi), int(count)))
    return _parse_float_list(text)


_CONFIG_GRAMMAR = {
    "scenario": {"name", "v0", "theta", "kappa", "mu", "sigma_v", "rho",
                 "gbm_mu", "gbm_sigma", "bsm_vol"},
    "simulation": {"n_paths", "n_train", "n_test", "s0", "dt", "seed"},
    "contract": {"strike", "maturity_steps"},
    "labels": {"beta", "n_trees", "max_depth", "min_leaf",
               "bootstrap_fraction", "seed", "fit_rows", "gate"},
    "policy": {"arch", "hidden", "gru_hidden", "gru_layers", "window",
               "use_change", "use_label"},
    "training": {"epochs", "batch_size", "lr", "val_fraction", "seed"},
    "sweep": {"alphas", "cost_rates", "risk_aversions", "rf", "mode",
              "alpha_lo", "alpha_hi"},
    "output": {"dir"},
}


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    if not os.path.exists(path):
        raise ResolutionError(f"config file not found: {path}")
    ini = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        ini.read(path)
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc

    # reject anything the grammar does not define: a silently ignored key is
    # far worse than a hard error in an experiment config
    for section in ini.sections():
        if section not in _CONFIG_GRAMMAR:
            raise ConfigurationError(f"{path}: unknown section [{section}]")
        for option in ini.options(section):
            if option not in _CONFIG_GRAMMAR[section]:
                raise ConfigurationError(
                    f"{path}: unknown key {option!r} in section [{section}]")

    def get(section, option, fallback):
        if ini.has_option(section, option):
            return ini.get(section, option)
        return fallback

    def getnum(section, option, fallback):
        raw = get(section, option, None)
        return fallback if raw is None else _parse_number(raw)

    def getint(section, option, fallback):
        raw = get(section, option, None)
        return fallback if raw is None else int(raw)

    def getbool(section, option, fallback):
        if ini.has_option(section, option):
            return ini.getboolean(section, option)
        return fallback

    d = RunConfig()  # defaults
    try:
        scenario = get("scenario", "name", d.scenario)
        heston = None
        if scenario == "custom":
            heston = HestonParams(
                v0=getnum("scenario", "v0", 0.8), theta=getnum("scenario", "theta", 0.8),
                kappa=getnum("scenario", "kappa", 1.0), mu=getnum("scenario", "mu", 0.01),
                sigma_v=getnum("scenario", "sigma_v", 4.0),
                rho=getnum("scenario", "rho", -0.7))
        gbm = GBMParams(mu=getnum("scenario", "gbm_mu", 0.0),
                        sigma=getnum("scenario", "gbm_sigma", 0.2)) \
            if scenario == "gbm" else None
        bsm_vol = getnum("scenario", "bsm_vol", None) \
            if ini.has_option("scenario", "bsm_vol") else None
        forest = ForestConfig(
            n_trees=getint("labels", "n_trees", d.forest.n_trees),
            max_depth=getint("labels", "max_depth", d.forest.max_depth),
            min_leaf=getint("labels", "min_leaf", d.forest.min_leaf),
            bootstrap_fraction=getnum("labels", "bootstrap_fraction",
                                      d.forest.bootstrap_fraction),
            seed=getint("labels", "seed", d.forest.seed))
        policy = PolicyConfig(
            arch=get("policy", "arch", d.policy.arch),
            hidden=getint("policy", "hidden", d.policy.hidden),
            gru_hidden=getint("policy", "gru_hidden", d.policy.gru_hidden),
            gru_layers=getint("policy", "gru_layers", d.policy.gru_layers),
            window=getint("policy", "window", d.policy.window),
            use_change=getbool("policy", "use_change", d.policy.use_change),
            use_label=getbool("policy", "use_label", d.policy.use_label))
        train = TrainConfig(
            epochs=getint("training", "epochs", d.train.epochs),
            batch_size=getint("training", "batch_size", d.train.batch_size),
            lr=getnum("training", "lr", d.train.lr),
            val_fraction=getnum("training", "val_fraction", d.train.val_fraction),
            seed=getint("training", "seed", d.train.seed))
        alphas = _parse_alpha_grid(get("sweep", "alphas", "")) \
            if ini.has_option("sweep", "alphas") else d.alphas
        return RunConfig(
            scenario=scenario, heston=heston, gbm=gbm, bsm_vol=bsm_vol,
            strike=getnum("contract", "strike", d.strike),
            maturity_steps=getint("contract", "maturity_steps", d.maturity_steps),
            n_paths=getint("simulation", "n_paths", d.n_paths),
            n_train=getint("simulation", "n_train", d.n_train),
            n_test=getint("simulation", "n_test", d.n_test),
            s0=getnum("simulation", "s0", d.s0),
            dt=getnum("simulation", "dt", d.dt),
            sim_seed=getint("simulation", "seed", d.sim_seed),
            beta=getnum("labels", "beta", d.beta),
            forest=forest,
            forest_fit_rows=getint("labels", "fit_rows", d.forest_fit_rows),
            gate=get("labels", "gate", d.gate),
            policy=policy, train=train, alphas=alphas,
            cost_rates=_parse_float_list(get("sweep", "cost_rates", "0.05")),
            risk_aversions=_parse_float_list(get("sweep", "risk_aversions", "0.5")),
            rf=getbool("sweep", "rf", d.rf),
            mode=get("sweep", "mode", d.mode),
            alpha_lo=getnum("sweep", "alpha_lo", d.alpha_lo),
            alpha_hi=getnum("sweep", "alpha_hi", d.alpha_hi),
            out_dir=get("output", "dir", d.out_dir))
    except (ValueError, KeyError) as exc:
        raise ConfigurationError(f"{path}: bad value ({exc})") from exc


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "out", None):
        cfg = replace(cfg, out_dir=args.out)
    if getattr(args, "mode", None):
        cfg = replace(cfg, mode=args.mode)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, sim_seed=args.seed,
                      train=replace(cfg.train, seed=args.seed),
                      forest=replace(cfg.forest, seed=args.seed))
    return cfg


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _scenario_assets(cfg: RunConfig):
    """Returns (simulate(sim_config) -> PathSet, baseline volatility)."""
    if cfg.scenario == "gbm":
        params = cfg.gbm or GBMParams(mu=0.0, sigma=0.2)
        return (lambda sim: market_sim.simulate_gbm(params, sim)), params.sigma
    params = {"low_vol": market_sim.LOW_VOL, "high_vol": market_sim.HIGH_VOL,
              "custom": cfg.heston}[cfg.scenario]
    vol = cfg.bsm_vol if cfg.bsm_vol is not None else float(np.sqrt(params.theta))
    return (lambda sim: market_sim.simulate_heston(params, sim)), vol


def _sha256(filename) -> str:
    digest = hashlib.sha256()
    with open(filename, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _paths_file(cfg: RunConfig) -> str:
    return os.path.join(cfg.out_dir, PATHS_FILE)


def _load_paths(cfg: RunConfig) -> PathSet:
    filename = _paths_file(cfg)
    if not os.path.exists(filename):
        raise ResolutionError(
            f"path file {filename} not found — run the simulate command first")
    manifest_file = os.path.join(cfg.out_dir, MANIFEST_FILE)
    if os.path.exists(manifest_file):
        with open(manifest_file) as fh:
            manifest = json.load(fh)
        actual = _sha256(filename)
        if manifest.get("sha256") != actual:
            raise IntegrityError(
                f"{filename}: checksum mismatch ({actual} != manifest "
                f"{manifest.get('sha256')})")
    return load_pathset(filename)


def _contract(cfg: RunConfig) -> ContractSpec:
    return ContractSpec(strike=cfg.strike, maturity_steps=cfg.maturity_steps)


def _signal_if_needed(cfg: RunConfig, train_paths, test_paths, jobs: int = 1):
    if not cfg.rf:
        return None
    return prepare_signal(train_paths, test_paths, cfg.beta, cfg.forest,
                          fit_rows=cfg.forest_fit_rows, jobs=jobs, gate=cfg.gate)


def _checkpoint_name(cfg: RunConfig, cost_rate: float, lam: float) -> str:
    rf_tag = "_rf" if cfg.rf else ""
    return os.path.join(
        cfg.out_dir, f"policy_{cfg.policy.arch}{rf_tag}_c{cost_rate:g}_l{lam:g}.ehfm")


def _frontier_name(out_dir: str, policy: str, rf: bool, cost_rate: float,
                   lam: float) -> str:
    rf_tag = "_rf" if rf else ""
    return os.path.join(out_dir, f"frontier_{policy}{rf_tag}_c{cost_rate:g}_l{lam:g}.csv")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    simulate, _ = _scenario_assets(cfg)
    sim = SimConfig(n_paths=cfg.n_paths, seed=cfg.sim_seed, s0=cfg.s0,
                    n_steps=cfg.maturity_steps, dt=cfg.dt)
    paths = simulate(sim)
    filename = _paths_file(cfg)
    save_pathset(paths, filename)
    manifest = {
        "scenario": cfg.scenario,
        "n_paths": cfg.n_paths, "n_steps": cfg.maturity_steps,
        "s0": cfg.s0, "dt": cfg.dt, "seed": cfg.sim_seed,
        "sha256": _sha256(filename),
    }
    if cfg.scenario == "gbm":
        params = cfg.gbm or GBMParams(mu=0.0, sigma=0.2)
        manifest["params"] = {"mu": params.mu, "sigma": params.sigma}
    else:
        p = {"low_vol": market_sim.LOW_VOL, "high_vol": market_sim.HIGH_VOL,
             "custom": cfg.heston}[cfg.scenario]
        manifest["params"] = {"v0": p.v0, "theta": p.theta, "kappa": p.kappa,
                              "mu": p.mu, "sigma_v": p.sigma_v, "rho": p.rho}
    with open(os.path.join(cfg.out_dir, MANIFEST_FILE), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"wrote {cfg.n_paths} x {cfg.maturity_steps + 1} prices to {filename} "
          f"(seed {cfg.sim_seed}, sha256 {manifest['sha256'][:12]}...)")
    return 0


def cmd_label(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    paths = _load_paths(cfg)
    train_paths, test_paths = split_pathset(paths, cfg.n_train, cfg.n_test)
    signal = prepare_signal(train_paths, test_paths, cfg.beta, cfg.forest,
                            fit_rows=cfg.forest_fit_rows, jobs=args.jobs,
                            gate=cfg.gate)
    save_forest(os.path.join(cfg.out_dir, FOREST_FILE), signal.forest)
    write_label_csv(os.path.join(cfg.out_dir, "labels.csv"), test_paths,
                    cfg.beta, predicted=signal.forecast_test)
    report_text = (f"training split:\n{signal.train_report}\n\n"
                   f"test split:\n{signal.test_report}\n")
    with open(os.path.join(cfg.out_dir, "label_report.txt"), "w") as fh:
        fh.write(report_text)
    print(report_text, end="")
    return 0


def cmd_train(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    paths = _load_paths(cfg)
    train_paths, test_paths = split_pathset(paths, cfg.n_train, cfg.n_test)
    contract = _contract(cfg)
    signal = _signal_if_needed(cfg, train_paths, test_paths, jobs=args.jobs)
    base_alpha = cfg.alphas[0]
    mask = compute_trade_mask(train_paths, base_alpha)
    labels = signal.train_labels if signal is not None else None
    if labels is not None:
        mask = combine_mask(mask, labels)
    for cost_rate in cfg.cost_rates:
        for lam in cfg.risk_aversions:
            policy, log = train_policy(
                train_paths, contract, CostModel(cost_rate), RiskConfig(lam),
                cfg.policy, mask, cfg.train, labels=labels)
            checkpoint = _checkpoint_name(cfg, cost_rate, lam)
            save_policy(checkpoint, policy)
            log_file = checkpoint[: -len(".ehfm")] + "_log.csv"
            with open(log_file, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["epoch", "train_objective", "val_objective"])
                for e, (tr, va) in enumerate(zip(log.train_objective,
                                                 log.val_objective)):
                    writer.writerow([e, repr(tr), repr(va)])
            print(f"trained {cfg.policy.arch} (cost {cost_rate:g}, lambda {lam:g}): "
                  f"val objective {log.val_objective[-1]:.4f} "
                  f"(best epoch {log.best_epoch}) -> {checkpoint}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    paths = _load_paths(cfg)
    train_paths, test_paths = split_pathset(paths, cfg.n_train, cfg.n_test)
    contract = _contract(cfg)
    _, baseline_vol = _scenario_assets(cfg)
    signal = _signal_if_needed(cfg, train_paths, test_paths, jobs=args.jobs)
    for cost_rate in cfg.cost_rates:
        for lam in cfg.risk_aversions:
            sweep = SweepConfig(
                alphas=tuple(cfg.alphas), scenario=cfg.scenario, rf=cfg.rf,
                cost_rate=cost_rate, risk_aversion=lam, mode=cfg.mode,
                seed=cfg.train.seed, beta=cfg.beta,
                forest_fit_rows=cfg.forest_fit_rows, gate=cfg.gate)
            base_points = sweep_baseline(sweep, test_paths, contract,
                                         baseline_vol, cfg.dt)
            write_frontier_csv(
                _frontier_name(cfg.out_dir, "bsm", False, cost_rate, lam),
                base_points)
            if cfg.policy.arch == "bsm":
                print(f"swept closed-form baseline only (cost {cost_rate:g}, "
                      f"lambda {lam:g})")
                continue
            policy = None
            checkpoint = _checkpoint_name(cfg, cost_rate, lam)
            if cfg.mode == "fast" and os.path.exists(checkpoint):
                policy = load_policy(checkpoint)
            points = sweep_alpha(sweep, train_paths, test_paths, contract,
                                 cfg.policy, cfg.train, signal=signal,
                                 forest_cfg=cfg.forest, policy=policy,
                                 jobs=args.jobs)
            out = _frontier_name(cfg.out_dir, cfg.policy.arch, cfg.rf,
                                 cost_rate, lam)
            write_frontier_csv(out, points)
            print(f"swept {len(points)} alphas (cost {cost_rate:g}, lambda "
                  f"{lam:g}, mode {cfg.mode}) -> {out}")
    return 0


def cmd_report(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    files = sorted(glob.glob(os.path.join(cfg.out_dir, "frontier_*.csv")))
    if not files:
        raise ResolutionError(f"no frontier CSVs under {cfg.out_dir}")
    groups: dict[tuple, list] = {}
    for filename in files:
        points = read_frontier_csv(filename)
        if not points:
            continue
        p = points[0]
        groups[(p.scenario, p.policy, p.rf, p.cost_rate, p.risk_aversion)] = points
        kept = pareto_filter(points)
        pareto_name = os.path.join(
            cfg.out_dir, "pareto_" + os.path.basename(filename)[len("frontier_"):])
        write_frontier_csv(pareto_name, kept)
    rows = []
    for (scenario, policy, rf, cost_rate, lam), points in sorted(groups.items()):
        if policy == "dense" and not rf:
            continue  # this is the base config itself
        base = groups.get((scenario, "dense", False, cost_rate, lam))
        if base is None:
            continue
        label = f"{policy}{'+rf' if rf else ''}@{cost_rate:g}/l{lam:g}"
        rows.append((label, compare_configs(base, points,
                                            cfg.alpha_lo, cfg.alpha_hi)))
    if not rows:
        raise ResolutionError(
            "nothing to compare: need a dense no-rf frontier plus at least "
            "one variant with matching cost rate and risk aversion")
    table = format_comparison_table(rows, base_name="dense", variant_name="variant")
    with open(os.path.join(cfg.out_dir, "report.txt"), "w") as fh:
        fh.write(table + "\n")
    write_comparison_csv(os.path.join(cfg.out_dir, "report.csv"), rows)
    print(table)
    return 0


def cmd_gradcheck(args) -> int:
    from .hedging_engine import (DensePolicy, GRUPolicy, episode_loss_node,
                                 tape_entropy_risk)
    from .neural_core import Tape, grad_check

    failures = []

    # linear model, quadratic loss: reverse-mode is exact up to rounding
    rng = np.random.default_rng(11)
    x = rng.normal(size=(6, 3))
    w0 = {"w": rng.normal(size=(1, 3))}

    def lin_quad(params):
        tape = Tape()
        out = tape.squeeze_col(tape.matmul(tape.const(x), tape.param("w", params["w"])))
        loss = tape.mul_const(tape.sum(tape.mul(out, out)), 0.5)
        return loss.value, tape.backward(loss)

    report = grad_check(lin_quad, w0)
    print(f"linear/quadratic: max rel error {report.max_rel_error:.3e} (tol 1e-9)")
    if not report.ok(1e-9):
        failures.append("linear")

    # both policy architectures through a short masked episode
    sim = SimConfig(n_paths=8, seed=404, n_steps=6)
    paths = market_sim.simulate_gbm(GBMParams(mu=0.0, sigma=0.3), sim)
    contract = ContractSpec(strike=100.0, maturity_steps=6)
    mask = compute_trade_mask(paths, 0.005)
    cost = CostModel(0.02)

    for arch, tol in (("dense", 1e-5), ("gru", 1e-4)):
        pol_cfg = PolicyConfig(arch=arch, hidden=6)
        policy = (DensePolicy if arch == "dense" else GRUPolicy).init(pol_cfg, seed=7)
        # Check at a generic parameter point: with zero biases the day-0
        # feature vector (all zeros) puts relu pre-activations exactly on the
        # kink, where central differences disagree with the subgradient.
        jitter = np.random.default_rng(99)
        policy.params = {
            k: v + 0.05 * jitter.standard_normal(v.shape)
            for k, v in policy.params.items()
        }

        def episode(params, policy=policy):
            policy.params = params
            tape = Tape()
            loss = episode_loss_node(tape, policy, paths.prices, mask, contract, cost)
            risk = tape_entropy_risk(tape, loss, 0.5)
            return risk.value, tape.backward(risk)

        report = grad_check(episode, policy.params)
        print(f"{arch}: max rel error {report.max_rel_error:.3e} (tol {tol:g})")
        if not report.ok(tol):
            failures.append(arch)

    if failures:
        print(f"gradient check FAILED for: {', '.join(failures)}")
        return 1
    print("gradient check passed for all architectures")
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ehf",
        description="Hedging-frontier pipeline: simulate paths, label extrema, "
                    "train delta policies, sweep rebalance thresholds, report.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, doc in (
            ("simulate", cmd_simulate, "simulate price paths and write the path file"),
            ("label", cmd_label, "fit the extrema forecaster and export labels"),
            ("train", cmd_train, "train delta policies for each cost/risk setting"),
            ("sweep", cmd_sweep, "evaluate the alpha grid and write frontier CSVs"),
            ("report", cmd_report, "compare frontiers and write summary tables"),
            ("gradcheck", cmd_gradcheck, "verify analytic gradients by finite differences")):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--jobs", type=int, default=1,
                       help="concurrent jobs for sweeps (default 1)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seeds")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--mode", choices=("retrain", "fast"), default=None,
                       help="frontier sweep mode override")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, ShapeError, StateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ResolutionError, IntegrityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
