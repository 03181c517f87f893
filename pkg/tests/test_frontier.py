"""Alpha sweeps, Pareto filtering, range summaries, and frontier CSV I/O."""

import numpy as np
import pytest

import ehf
from ehf.errors import ConfigurationError, DomainError, IntegrityError, StateError
from ehf.hedging_engine import DensePolicy


def _point(mean, std, alpha=0.0, trades=10.0, **kw):
    base = dict(scenario="high_vol", policy="dense", rf=False, cost_rate=0.05,
                risk_aversion=0.5, alpha=alpha, mean_loss=mean, std_loss=std,
                avg_trades=trades, n_test_paths=100, mode="fast", seed=0)
    base.update(kw)
    return ehf.FrontierPoint(**base)


def _brute_force_pareto(points):
    keep = []
    for p in points:
        dominated = False
        for q in points:
            if q is p:
                continue
            weakly = q.std_loss <= p.std_loss and q.mean_loss >= p.mean_loss
            strictly = q.std_loss < p.std_loss or q.mean_loss > p.mean_loss
            if weakly and strictly:
                dominated = True
                break
        if not dominated:
            keep.append(p)
    return keep


# ---------------------------------------------------------------------------
# pareto filtering
# ---------------------------------------------------------------------------

def test_pareto_single_point_survives():
    pts = [_point(-10.0, 5.0)]
    assert ehf.pareto_filter(pts) == pts


def test_pareto_removes_dominated():
    good = _point(-9.0, 4.0)
    bad = _point(-10.0, 5.0)      # worse mean, worse std
    tradeoff = _point(-11.0, 3.0)  # worse mean, better std: kept
    kept = ehf.pareto_filter([bad, good, tradeoff])
    assert good in kept and tradeoff in kept and bad not in kept


def test_pareto_keeps_exact_duplicates():
    a = _point(-10.0, 5.0, alpha=0.0)
    b = _point(-10.0, 5.0, alpha=0.1)
    assert len(ehf.pareto_filter([a, b])) == 2


def test_pareto_matches_brute_force_on_random_sets():
    rng = np.random.default_rng(17)
    for trial in range(300):
        n = rng.integers(1, 14)
        pts = [_point(float(rng.normal(-10, 3)),
                      float(rng.uniform(0.5, 8)), alpha=float(k) / 20)
               for k in range(n)]
        fast = ehf.pareto_filter(pts)
        slow = _brute_force_pareto(pts)
        assert {id(p) for p in fast} == {id(p) for p in slow}, f"trial {trial}"


def test_pareto_survivors_form_a_staircase():
    rng = np.random.default_rng(18)
    pts = [_point(float(rng.normal(-10, 3)), float(rng.uniform(0.5, 8)),
                  alpha=float(k) / 60) for k in range(50)]
    kept = sorted(ehf.pareto_filter(pts), key=lambda p: p.std_loss)
    means = [p.mean_loss for p in kept]
    # among undominated points, taking more risk must buy more return
    assert np.all(np.diff(means) >= 0)


# ---------------------------------------------------------------------------
# summaries and comparisons
# ---------------------------------------------------------------------------

def test_summarize_range_hand_oracle():
    pts = [_point(-10.0, 4.0, alpha=0.00), _point(-12.0, 6.0, alpha=0.05),
           _point(-20.0, 9.0, alpha=0.15)]
    mean, std = ehf.summarize_range(pts, 0.0, 0.1)
    assert mean == pytest.approx(-11.0)
    assert std == pytest.approx(5.0)


def test_summarize_range_empty_raises():
    pts = [_point(-10.0, 4.0, alpha=0.2)]
    with pytest.raises(DomainError):
        ehf.summarize_range(pts, 0.0, 0.1)


def test_compare_configs_improvement_formulas():
    base = [_point(-10.0, 5.0, alpha=0.0), _point(-10.0, 5.0, alpha=0.1)]
    variant = [_point(-9.0, 4.0, alpha=0.0, rf=True),
               _point(-9.0, 4.0, alpha=0.1, rf=True)]
    cmp = ehf.compare_configs(base, variant)
    assert cmp.base_mean == -10.0 and cmp.variant_mean == -9.0
    # mean improves by 10% of |base|; std drops by 20% of base
    assert cmp.mean_improvement_pct == pytest.approx(10.0)
    assert cmp.std_improvement_pct == pytest.approx(20.0)


def test_compare_configs_order_invariant():
    rng = np.random.default_rng(19)
    alphas = np.linspace(0, 0.1, 6)
    base = [_point(float(rng.normal(-10, 1)), float(rng.uniform(3, 6)), alpha=float(a))
            for a in alphas]
    variant = [_point(float(rng.normal(-9, 1)), float(rng.uniform(3, 6)), alpha=float(a))
               for a in alphas]
    forward = ehf.compare_configs(base, variant)
    shuffled = ehf.compare_configs(base[::-1], variant[::-1])
    assert forward.base_mean == pytest.approx(shuffled.base_mean, rel=1e-14)
    assert forward.variant_std == pytest.approx(shuffled.variant_std, rel=1e-14)
    assert forward.mean_improvement_pct == pytest.approx(
        shuffled.mean_improvement_pct, rel=1e-12)


def test_compare_configs_rejects_grid_mismatch():
    base = [_point(-10.0, 5.0, alpha=0.0)]
    variant = [_point(-9.0, 4.0, alpha=0.05)]
    with pytest.raises(ConfigurationError):
        ehf.compare_configs(base, variant)


def test_format_comparison_table_mentions_labels():
    cmp = ehf.compare_configs([_point(-10.0, 5.0)], [_point(-9.0, 4.0, rf=True)])
    text = ehf.format_comparison_table([("dense+rf@0.05", cmp)])
    assert "dense+rf@0.05" in text
    assert "10.00" in text and "20.00" in text


# ---------------------------------------------------------------------------
# frontier CSV
# ---------------------------------------------------------------------------

def test_frontier_csv_roundtrip(tmp_path):
    pts = [_point(-10.5, 4.25, alpha=0.0), _point(-11.0, 5.0, alpha=0.07,
                                                  rf=True, policy="gru", seed=3)]
    fn = tmp_path / "frontier.csv"
    ehf.write_frontier_csv(fn, pts)
    header = fn.read_text().splitlines()[0]
    assert header == ",".join(ehf.frontier.FRONTIER_COLUMNS)
    assert header == ("scenario,policy,rf,cost_rate,lambda,alpha,mean_loss,"
                      "std_loss,avg_trades,n_test_paths,mode,seed")
    loaded = ehf.read_frontier_csv(fn)
    assert loaded == pts


def test_frontier_csv_rejects_foreign_header(tmp_path):
    fn = tmp_path / "other.csv"
    fn.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(IntegrityError):
        ehf.read_frontier_csv(fn)


def test_default_alpha_grid_endpoints():
    grid = ehf.default_alpha_grid()
    assert len(grid) == 100
    assert grid[0] == 0.0
    assert grid[-1] == pytest.approx(0.2)
    assert np.all(np.diff(grid) > 0)


# ---------------------------------------------------------------------------
# sweeps on tiny path sets
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_split():
    cfg = ehf.SimConfig(n_paths=96, seed=21)
    paths = ehf.simulate_heston(ehf.HIGH_VOL, cfg)
    return ehf.split_pathset(paths, 64, 32)


TINY_TRAIN = ehf.TrainConfig(epochs=1, batch_size=32, seed=5)
TINY_POLICY = ehf.PolicyConfig(arch="dense", hidden=8)


def test_sweep_fast_mode_shapes_and_monotone_trades(tiny_split, contract):
    train, test = tiny_split
    sweep = ehf.SweepConfig(alphas=(0.0, 0.02, 0.05, 0.1), cost_rate=0.02,
                            mode="fast", seed=5)
    pts = ehf.sweep_alpha(sweep, train, test, contract, TINY_POLICY, TINY_TRAIN)
    assert [p.alpha for p in pts] == [0.0, 0.02, 0.05, 0.1]
    trades = [p.avg_trades for p in pts]
    assert np.all(np.diff(trades) <= 1e-9)
    assert all(p.policy == "dense" and p.mode == "fast" for p in pts)
    assert all(p.n_test_paths == 32 for p in pts)


def test_sweep_rejects_overlapping_splits(tiny_split, contract):
    train, _ = tiny_split
    sweep = ehf.SweepConfig(alphas=(0.0, 0.05))
    with pytest.raises(StateError):
        ehf.sweep_alpha(sweep, train, train.take(0, 16), contract,
                        TINY_POLICY, TINY_TRAIN)


def test_sweep_fast_needs_policy_or_training_paths(tiny_split, contract):
    _, test = tiny_split
    sweep = ehf.SweepConfig(alphas=(0.0, 0.05), mode="fast")
    with pytest.raises(ConfigurationError):
        ehf.sweep_alpha(sweep, None, test, contract, TINY_POLICY, TINY_TRAIN)


def test_sweep_cost_rates_scale_costs_linearly(tiny_split, contract):
    """With one frozen policy, switching 2% -> 5% must shift the mean loss by
    exactly 1.5x the 2% cost component at every alpha."""
    train, test = tiny_split
    policy, _ = ehf.train_policy(train, contract, ehf.CostModel(0.02),
                                 ehf.RiskConfig(0.5), TINY_POLICY,
                                 ehf.compute_trade_mask(train, 0.0), TINY_TRAIN)
    alphas = (0.0, 0.03, 0.08)
    pts2 = ehf.sweep_alpha(ehf.SweepConfig(alphas=alphas, cost_rate=0.02),
                           None, test, contract, TINY_POLICY, TINY_TRAIN,
                           policy=policy)
    pts5 = ehf.sweep_alpha(ehf.SweepConfig(alphas=alphas, cost_rate=0.05),
                           None, test, contract, TINY_POLICY, TINY_TRAIN,
                           policy=policy)
    for a, p2, p5 in zip(alphas, pts2, pts5):
        mask = ehf.compute_trade_mask(test, a)
        res2 = ehf.evaluate_policy(test, policy, mask, contract,
                                   ehf.CostModel(0.02)).result
        mean_cost2 = res2.total_cost.mean()
        assert p5.mean_loss == pytest.approx(p2.mean_loss - 1.5 * mean_cost2,
                                             abs=1e-9)


def test_sweep_baseline_covers_grid(tiny_split, contract):
    _, test = tiny_split
    sweep = ehf.SweepConfig(alphas=(0.0, 0.02, 0.06), cost_rate=0.05)
    pts = ehf.sweep_baseline(sweep, test, contract, vol=np.sqrt(0.8), dt=1 / 365)
    assert len(pts) == 3
    assert all(p.policy == "bsm" for p in pts)
    assert pts[0].avg_trades >= pts[-1].avg_trades
    # continuous hedge at alpha 0 trades essentially every day
    assert pts[0].avg_trades > 25


def test_retrain_mode_needs_training_paths(tiny_split, contract):
    _, test = tiny_split
    sweep = ehf.SweepConfig(alphas=(0.0, 0.05), mode="retrain")
    with pytest.raises(ConfigurationError):
        ehf.sweep_alpha(sweep, None, test, contract, TINY_POLICY, TINY_TRAIN)


def test_rf_sweep_uses_signal(tiny_split, contract):
    train, test = tiny_split
    signal = ehf.prepare_signal(train, test, beta=0.05,
                                forest_cfg=ehf.ForestConfig(n_trees=5, seed=6),
                                fit_rows=1000)
    sweep = ehf.SweepConfig(alphas=(0.0, 0.04), rf=True, cost_rate=0.02, seed=5)
    pts = ehf.sweep_alpha(sweep, train, test, contract, TINY_POLICY,
                          TINY_TRAIN, signal=signal)
    assert all(p.rf for p in pts)
    # the forest gate can only remove trading days
    plain = ehf.sweep_alpha(ehf.SweepConfig(alphas=(0.0, 0.04), cost_rate=0.02,
                                            seed=5),
                            train, test, contract, TINY_POLICY, TINY_TRAIN)
    for with_rf, without in zip(pts, plain):
        assert with_rf.avg_trades <= without.avg_trades + 1e-9


def test_sweep_config_validation():
    with pytest.raises(ConfigurationError):
        ehf.SweepConfig(alphas=())
    with pytest.raises(ConfigurationError):
        ehf.SweepConfig(alphas=(0.1, 0.05))
    with pytest.raises(ConfigurationError):
        ehf.SweepConfig(alphas=(0.0, 1.5))
    with pytest.raises(ConfigurationError):
        ehf.SweepConfig(alphas=(0.0,), mode="lazy")
    with pytest.raises(ConfigurationError):
        ehf.SweepConfig(alphas=(0.0,), gate="hunch")


def test_frontier_point_validation():
    with pytest.raises(DomainError):
        _point(-10.0, -1.0)
    with pytest.raises(DomainError):
        _point(-10.0, 5.0, trades=-2.0)
