"""Episode accounting, the entropic objective, trade masks, and training."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ehf
from ehf.errors import DomainError, ShapeError
from ehf.hedging_engine import (DensePolicy, GRUPolicy, episode_loss_node,
                                tape_entropy_risk)
from ehf.neural_core import Tape


def _pathset(prices, s0=100.0):
    prices = np.asarray(prices, dtype=np.float64)
    return ehf.PathSet(prices, None, s0, 0, np.arange(prices.shape[0]))


# ---------------------------------------------------------------------------
# episode accounting
# ---------------------------------------------------------------------------

def test_episode_hand_computed():
    """3-day episode worked by hand: pnl 6, costs 0.82, payoff 15."""
    prices = np.array([[100.0, 110.0, 105.0, 115.0]])
    deltas = np.array([[0.5, 0.6, 0.4]])
    contract = ehf.ContractSpec(strike=100.0, maturity_steps=3)
    res = ehf.episode_results(prices, deltas, contract, ehf.CostModel(0.01))
    assert np.allclose(res.buy_sell, [[50.0, 11.0, -21.0]])
    assert np.allclose(res.costs, [[0.50, 0.11, 0.21]])
    assert res.total_cost[0] == pytest.approx(0.82)
    assert res.trade_counts[0] == 3
    # pnl: 0.5*10 - 0.6*5 + 0.4*10 = 6; loss = 6 - 0.82 - 15
    assert res.loss[0] == pytest.approx(6.0 - 0.82 - 15.0)


def test_episode_zero_position_loses_payoff():
    prices = np.array([[100.0, 90.0, 130.0]])
    deltas = np.zeros((1, 2))
    contract = ehf.ContractSpec(strike=100.0, maturity_steps=2)
    res = ehf.episode_results(prices, deltas, contract, ehf.CostModel(0.05))
    assert res.loss[0] == -30.0
    assert res.total_cost[0] == 0.0
    assert res.trade_counts[0] == 0


def test_episode_out_of_money_zero_hedge_is_free():
    prices = np.array([[100.0, 95.0, 90.0]])
    res = ehf.episode_results(prices, np.zeros((1, 2)),
                              ehf.ContractSpec(100.0, 2), ehf.CostModel(0.05))
    assert res.loss[0] == 0.0


def test_termination_loss_matches_matrix_row():
    rng = np.random.default_rng(8)
    prices = 100 * np.exp(np.cumsum(rng.normal(0, 0.02, size=(4, 31)), axis=1))
    prices[:, 0] = 100.0
    deltas = rng.uniform(0, 1, size=(4, 30))
    contract = ehf.ContractSpec(100.0, 30)
    cost = ehf.CostModel(0.02)
    res = ehf.episode_results(prices, deltas, contract, cost)
    for i in range(4):
        assert ehf.termination_loss(prices[i], deltas[i], contract, cost) == \
            pytest.approx(res.loss[i], abs=1e-12)


def test_cost_scales_linearly_in_rate():
    rng = np.random.default_rng(4)
    prices = 100 * np.exp(np.cumsum(rng.normal(0, 0.03, size=(16, 31)), axis=1))
    deltas = rng.uniform(0, 1, size=(16, 30))
    contract = ehf.ContractSpec(100.0, 30)
    lo = ehf.episode_results(prices, deltas, contract, ehf.CostModel(0.02))
    hi = ehf.episode_results(prices, deltas, contract, ehf.CostModel(0.05))
    # identical up to one rounding: 0.05 = 2.5 * 0.02 only to the last ulp
    assert np.allclose(hi.costs, 2.5 * lo.costs, rtol=5e-16, atol=0)
    assert np.allclose(hi.total_cost, 2.5 * lo.total_cost, rtol=1e-16 * 30, atol=0)


def test_final_day_carries_no_liquidation_cost():
    """Costs are charged on position changes at t < n_steps only; holding to
    expiry settles the payoff without a closing trade."""
    prices = np.array([[100.0, 100.0, 200.0]])
    deltas = np.array([[1.0, 1.0]])
    res = ehf.episode_results(prices, deltas, ehf.ContractSpec(100.0, 2),
                              ehf.CostModel(0.05))
    # one trade on day 0 (buy 1 @ 100): cost 5; pnl 100; payoff 100
    assert res.trade_counts[0] == 1
    assert res.loss[0] == pytest.approx(100.0 - 5.0 - 100.0)


def test_episode_csv(tmp_path):
    prices = np.array([100.0, 110.0, 105.0])
    deltas = np.array([0.5, 0.7])
    fn = tmp_path / "episode.csv"
    ehf.write_episode_csv(fn, prices, deltas, ehf.CostModel(0.05))
    lines = fn.read_text().strip().splitlines()
    assert lines[0] == "day,price,delta,buy_sell,trading_cost"
    assert len(lines) == 3
    day0 = lines[1].split(",")
    assert float(day0[3]) == pytest.approx(50.0)
    assert float(day0[4]) == pytest.approx(2.5)
    assert "np.float64" not in lines[1]


# ---------------------------------------------------------------------------
# entropic risk
# ---------------------------------------------------------------------------

def test_entropy_risk_constant_losses():
    risk = ehf.RiskConfig(risk_aversion=0.5)
    losses = np.full(100, -7.25)
    assert ehf.entropy_risk(losses, risk) == pytest.approx(7.25, abs=1e-12)


def test_entropy_risk_two_point_oracle():
    # L in {0, -1}: rho = ln((1 + e)/2) for lambda = 1
    risk = ehf.RiskConfig(risk_aversion=1.0)
    val = ehf.entropy_risk(np.array([0.0, -1.0]), risk)
    assert val == pytest.approx(np.log((1 + np.e) / 2), abs=1e-12)


def test_entropy_risk_small_lambda_is_negative_mean():
    rng = np.random.default_rng(1)
    losses = rng.normal(-10, 3, size=500)
    val = ehf.entropy_risk(losses, ehf.RiskConfig(risk_aversion=1e-8))
    assert val == pytest.approx(-losses.mean(), abs=1e-6)


def test_entropy_risk_jensen_bound():
    rng = np.random.default_rng(2)
    losses = rng.normal(0, 5, size=300)
    for lam in (0.1, 0.5, 1.0, 2.0):
        assert ehf.entropy_risk(losses, ehf.RiskConfig(lam)) >= -losses.mean() - 1e-12


def test_entropy_risk_monotone_in_aversion():
    rng = np.random.default_rng(3)
    losses = rng.normal(-5, 4, size=400)
    vals = [ehf.entropy_risk(losses, ehf.RiskConfig(lam))
            for lam in (0.1, 0.3, 0.5, 1.0, 2.0)]
    assert np.all(np.diff(vals) > 0)


@given(st.floats(-50, 50), st.floats(0.05, 3.0))
@settings(max_examples=40, deadline=None)
def test_entropy_risk_cash_invariance(shift, lam):
    rng = np.random.default_rng(9)
    losses = rng.normal(-8, 4, size=200)
    risk = ehf.RiskConfig(lam)
    base = ehf.entropy_risk(losses, risk)
    shifted = ehf.entropy_risk(losses + shift, risk)
    assert shifted == pytest.approx(base - shift, abs=1e-10)


def test_entropy_risk_survives_extreme_losses():
    # max-shift keeps exp() in range even when lambda * loss is huge;
    # the worst outcome dominates: rho -> 4000 - ln 2
    val = ehf.entropy_risk(np.array([-4000.0, -3000.0]), ehf.RiskConfig(1.0))
    assert np.isfinite(val)
    assert val == pytest.approx(4000.0 - np.log(2), abs=1e-9)


def test_tape_entropy_risk_matches_plain():
    rng = np.random.default_rng(6)
    losses = rng.normal(-10, 3, size=64)
    tape = Tape()
    node = tape.param("l", losses)
    risk_node = tape_entropy_risk(tape, node, 0.5)
    assert risk_node.value == pytest.approx(
        ehf.entropy_risk(losses, ehf.RiskConfig(0.5)), abs=1e-12)
    # gradient: d rho / d L_i = -softmax(-lambda L)_i
    grads = tape.backward(risk_node)
    w = np.exp(-0.5 * losses - np.max(-0.5 * losses))
    assert np.allclose(grads["l"], -w / w.sum(), atol=1e-12)


# ---------------------------------------------------------------------------
# trade masks and frequency
# ---------------------------------------------------------------------------

def test_mask_day0_and_threshold():
    paths = _pathset([[100.0, 102.0, 102.5, 101.0]])
    mask = ehf.compute_trade_mask(paths, 0.01)
    # day 0 forced; day 1 sees the 2% move; day 2 sees the 0.49% move
    assert mask.tolist() == [[True, True, False]]


def test_mask_alpha_zero_trades_everywhere():
    paths = _pathset([[100.0, 101.0, 100.5, 100.5]])
    mask = ehf.compute_trade_mask(paths, 0.0)
    # a strict threshold at zero still blocks the flat 100.5 -> 100.5 move
    assert mask.tolist() == [[True, True, True]]


@given(st.floats(0, 0.1), st.floats(0, 0.1))
@settings(max_examples=30, deadline=None)
def test_mask_monotone_in_alpha(a1, a2):
    rng = np.random.default_rng(12)
    prices = 100 * np.exp(np.cumsum(rng.normal(0, 0.04, size=(8, 11)), axis=1))
    paths = _pathset(prices)
    lo, hi = min(a1, a2), max(a1, a2)
    m_lo = ehf.compute_trade_mask(paths, lo)
    m_hi = ehf.compute_trade_mask(paths, hi)
    assert np.all(m_lo | ~m_hi)  # m_hi is a subset of m_lo


def test_mask_rejects_negative_alpha(gbm_small):
    with pytest.raises(DomainError):
        ehf.compute_trade_mask(gbm_small, -0.01)


def test_check_mask_guards(gbm_small):
    good = ehf.compute_trade_mask(gbm_small, 0.02)
    assert ehf.check_mask(good, 64, 30) is good
    with pytest.raises(ShapeError):
        ehf.check_mask(good.astype(int), 64, 30)
    with pytest.raises(ShapeError):
        ehf.check_mask(good[:, :-1], 64, 30)
    bad = good.copy()
    bad[0, 0] = False
    with pytest.raises(DomainError):
        ehf.check_mask(bad, 64, 30)


def test_combine_mask_keeps_day0():
    paths = _pathset([[100.0, 103.0, 106.0, 109.0]])
    mask = ehf.compute_trade_mask(paths, 0.01)
    labels = np.array([[0, 0, 1]])
    combined = ehf.combine_mask(mask, labels)
    assert combined.tolist() == [[True, False, True]]


def test_trade_frequency_hand_oracle():
    # moves: 2%, ~0.49%, ~1.46%; alpha = 1% admits two of the three
    paths = _pathset([[100.0, 102.0, 102.5, 101.0]])
    assert ehf.trade_frequency(paths, 0.01) == pytest.approx(2.0)
    assert ehf.trade_frequency(paths, 0.0) == pytest.approx(3.0)
    assert ehf.trade_frequency(paths, 0.05) == 0.0


def test_trade_frequency_counts_all_days_not_mask(heston_small):
    """The frequency statistic covers every daily return; the mask also
    forces day 0, so at large alpha they must diverge."""
    freq = ehf.trade_frequency(heston_small, 0.5)
    per_path = ehf.mask_frequency(ehf.compute_trade_mask(heston_small, 0.5))
    assert freq < 0.05
    assert per_path >= 1.0


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------

def test_dense_policy_outputs_unit_interval(gbm_small, contract):
    policy = DensePolicy.init(ehf.PolicyConfig(arch="dense"), seed=3)
    mask = ehf.compute_trade_mask(gbm_small, 0.02)
    deltas = policy.deltas(gbm_small.prices, mask)
    assert deltas.shape == (64, 30)
    assert np.all((deltas >= 0) & (deltas <= 1))


def test_policy_freezes_on_masked_days(gbm_small):
    for arch, cls in (("dense", DensePolicy), ("gru", GRUPolicy)):
        policy = cls.init(ehf.PolicyConfig(arch=arch), seed=3)
        mask = ehf.compute_trade_mask(gbm_small, 0.03)
        deltas = policy.deltas(gbm_small.prices, mask)
        frozen = ~mask[:, 1:]
        assert np.array_equal(deltas[:, 1:][frozen], deltas[:, :-1][frozen]), arch


def test_plain_and_tape_forwards_agree(gbm_small, contract):
    """The recorded forward must produce the same deltas bit for bit; the
    scalar losses may differ by summation order only."""
    cost = ehf.CostModel(0.02)
    mask = ehf.compute_trade_mask(gbm_small, 0.01)
    for arch, cls in (("dense", DensePolicy), ("gru", GRUPolicy)):
        policy = cls.init(ehf.PolicyConfig(arch=arch), seed=5)
        plain = policy.deltas(gbm_small.prices, mask)
        tape = Tape()
        taped = policy.tape_deltas(tape, gbm_small.prices, mask)
        taped_mat = np.column_stack([d.value for d in taped])
        assert np.array_equal(plain, taped_mat), arch
        tape = Tape()
        node = episode_loss_node(tape, policy, gbm_small.prices, mask,
                                 contract, cost)
        res = ehf.episode_results(gbm_small.prices, plain, contract, cost)
        assert np.allclose(node.value, res.loss, rtol=0, atol=1e-10), arch


def test_policy_label_feature_changes_output(gbm_small):
    cfg = ehf.PolicyConfig(arch="dense", use_label=True)
    policy = DensePolicy.init(cfg, seed=3)
    mask = ehf.compute_trade_mask(gbm_small, 0.0)
    ones = np.ones((64, 30))
    zeros = np.zeros((64, 30))
    d1 = policy.deltas(gbm_small.prices, mask, labels=ones)
    d0 = policy.deltas(gbm_small.prices, mask, labels=zeros)
    assert not np.array_equal(d1, d0)


def test_bsm_policy_matches_analytics(gbm_small, contract):
    policy = ehf.make_policy(ehf.PolicyConfig(arch="bsm"), seed=0,
                             contract=contract, vol=0.2)
    mask = ehf.compute_trade_mask(gbm_small, 0.02)
    deltas = policy.deltas(gbm_small.prices, mask)
    ref = ehf.bsm_delta_matrix(gbm_small, contract, 0.2, mask=mask)
    assert np.array_equal(deltas, ref)


def test_evaluate_policy_is_pure(gbm_small, contract):
    policy = DensePolicy.init(ehf.PolicyConfig(arch="dense"), seed=1)
    mask = ehf.compute_trade_mask(gbm_small, 0.02)
    a = ehf.evaluate_policy(gbm_small, policy, mask, contract, ehf.CostModel(0.02))
    b = ehf.evaluate_policy(gbm_small, policy, mask, contract, ehf.CostModel(0.02))
    assert a.mean_loss == b.mean_loss
    assert a.std_loss == b.std_loss
    assert a.avg_trades == b.avg_trades
    assert a.n_paths == 64


def test_training_reduces_objective(heston_small, contract):
    """A few epochs on a small set must beat the untrained policy on the
    training objective; selection returns the best-validation epoch."""
    cost = ehf.CostModel(0.02)
    risk = ehf.RiskConfig(0.5)
    mask = ehf.compute_trade_mask(heston_small, 0.0)
    cfg = ehf.TrainConfig(epochs=4, batch_size=64, seed=2)
    pol_cfg = ehf.PolicyConfig(arch="dense", hidden=16)
    untrained = DensePolicy.init(pol_cfg, seed=2)
    before = ehf.entropy_risk(
        ehf.episode_results(heston_small.prices,
                            untrained.deltas(heston_small.prices, mask),
                            contract, cost).loss, risk)
    policy, log = ehf.train_policy(heston_small, contract, cost, risk,
                                   pol_cfg, mask, cfg)
    after = ehf.entropy_risk(
        ehf.episode_results(heston_small.prices,
                            policy.deltas(heston_small.prices, mask),
                            contract, cost).loss, risk)
    assert after < before
    assert log.best_epoch >= 0
    assert len(log.val_objective) == 4
    assert log.val_objective[log.best_epoch] == min(log.val_objective)


def test_training_is_deterministic(heston_small, contract):
    cost = ehf.CostModel(0.05)
    mask = ehf.compute_trade_mask(heston_small, 0.02)
    cfg = ehf.TrainConfig(epochs=2, batch_size=64, seed=9)
    pol_cfg = ehf.PolicyConfig(arch="dense", hidden=8)
    p1, _ = ehf.train_policy(heston_small, contract, cost, ehf.RiskConfig(0.5),
                             pol_cfg, mask, cfg)
    p2, _ = ehf.train_policy(heston_small, contract, cost, ehf.RiskConfig(0.5),
                             pol_cfg, mask, cfg)
    for k in p1.params:
        assert np.array_equal(p1.params[k], p2.params[k]), k


def test_masked_days_cost_exactly_zero(gbm_small, contract):
    """Frozen days produce bitwise-zero position changes, hence zero cost."""
    policy = DensePolicy.init(ehf.PolicyConfig(arch="dense"), seed=4)
    mask = ehf.compute_trade_mask(gbm_small, 0.04)
    deltas = policy.deltas(gbm_small.prices, mask)
    res = ehf.episode_results(gbm_small.prices, deltas, contract,
                              ehf.CostModel(0.05))
    frozen = ~mask
    assert np.all(res.costs[frozen] == 0.0)
    assert np.all(res.buy_sell[frozen] == 0.0)


def test_config_validation():
    with pytest.raises(DomainError):
        ehf.CostModel(-0.01)
    with pytest.raises(DomainError):
        ehf.RiskConfig(0.0)
    with pytest.raises(ehf.ConfigurationError):
        ehf.PolicyConfig(arch="transformer")
    with pytest.raises(ehf.ConfigurationError):
        ehf.TrainConfig(epochs=0)
    with pytest.raises(ehf.ConfigurationError):
        ehf.TrainConfig(val_fraction=1.5)
