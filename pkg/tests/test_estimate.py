import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ruinlab.errors import IntervalError, LevelError
from ruinlab.estimate import (
    RuinEstimate,
    estimate_exit,
    estimate_ruin,
    estimate_ruin_grid,
    gbm_passage_probability,
    horizon_sweep,
    normal_interval,
    wilson_interval,
)
from ruinlab.model import Exponential, ModelParams, Uniform
from ruinlab.sim import SimConfig

RHO08 = ModelParams(a=0.1, sigma=0.5, c=1.0, lam=1.0, claim=Uniform(2.0))


# --- intervals ----------------------------------------------------------------


def test_wilson_zero_hits():
    z = 1.96
    lo, hi = wilson_interval(0, 100, z)
    # centre and half-width coincide when p = 0
    oracle = (z * z / 200 + z * math.sqrt(z * z / 40000)) / (1 + z * z / 100)
    assert lo == 0.0
    assert hi == pytest.approx(oracle, rel=1e-12)
    assert hi == pytest.approx(0.0370, abs=5e-5)


def test_wilson_all_hits_by_symmetry():
    lo, hi = wilson_interval(100, 100, 1.96)
    assert hi == 1.0
    assert lo == pytest.approx(1 - wilson_interval(0, 100, 1.96)[1], rel=1e-12)


def test_wilson_zero_width():
    assert wilson_interval(50, 100, 0.0) == (0.5, 0.5)


@given(st.integers(1, 10**6), st.data(), st.floats(0.0, 5.0))
def test_wilson_properties(n, data, z):
    k = data.draw(st.integers(0, n))
    lo, hi = wilson_interval(k, n, z)
    assert 0.0 <= lo <= k / n <= hi <= 1.0
    lo2, hi2 = wilson_interval(n - k, n, z)
    assert lo == pytest.approx(1 - hi2, abs=1e-12)
    assert hi == pytest.approx(1 - lo2, abs=1e-12)


def test_wilson_rejects_bad_counts():
    with pytest.raises(ValueError):
        wilson_interval(5, 4)
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


def test_normal_interval_emitted_only_away_from_edges():
    assert normal_interval(9, 100) is None
    assert normal_interval(91, 100) is None
    lo, hi = normal_interval(50, 100)
    assert lo < 0.5 < hi
    est = RuinEstimate.from_counts(5, 100, horizon=1.0, level=0.0, u=1.0)
    assert est.normal_ci is None and est.p_hat == 0.05


# --- estimators ---------------------------------------------------------------


def test_no_claims_no_ruin():
    p = ModelParams(a=0.1, sigma=2.0, c=0.0, lam=0.0, claim=Uniform(1.0))
    est = estimate_ruin(p, 1.0, 0.0, SimConfig(dt=1e-2, horizon=20.0), 200, 1)
    assert est.p_hat == 0.0 and est.n_hit == 0


def test_level_must_lie_below_capital():
    cfg = SimConfig(dt=1e-2, horizon=1.0)
    with pytest.raises(LevelError):
        estimate_ruin(RHO08, 2.0, 2.0, cfg, 10, 1)
    with pytest.raises(LevelError):
        estimate_ruin(RHO08, 2.0, -0.1, cfg, 10, 1)


def test_coupled_grid_is_exactly_monotone():
    us, levels = [1.0, 2.0, 5.0, 10.0], [0.5, 0.0]
    grid = estimate_ruin_grid(RHO08, us, levels, SimConfig(dt=1e-2, horizon=100.0), 400, 3)
    for lv in levels:
        p = [grid[(u, lv)].n_hit for u in us]
        assert all(b <= a for a, b in zip(p, p[1:]))
    for u in us:
        assert grid[(u, 0.5)].n_hit >= grid[(u, 0.0)].n_hit


def test_estimate_matches_grid_entry():
    cfg = SimConfig(dt=1e-2, horizon=50.0)
    single = estimate_ruin(RHO08, 2.0, 0.0, cfg, 300, 7)
    grid = estimate_ruin_grid(RHO08, [1.0, 2.0], [0.0], cfg, 300, 7)
    assert single == grid[(2.0, 0.0)]


def test_horizon_sweep_nondecreasing():
    sweep = horizon_sweep(RHO08, 2.0, 0.0, SimConfig(dt=1e-2, horizon=1.0), [10, 100, 500], 300, 5)
    hits = [s.n_hit for s in sweep]
    assert hits == sorted(hits)
    assert sweep[-1].p_hat - sweep[0].p_hat > 0
    assert [s.horizon for s in sweep] == [10.0, 100.0, 500.0]


def test_horizon_sweep_without_claims():
    p = ModelParams(a=0.1, sigma=0.5, c=1.0, lam=0.0, claim=Uniform(2.0))
    sweep = horizon_sweep(p, 2.0, 0.0, SimConfig(dt=1e-2, horizon=1.0), [1, 5, 10], 50, 5)
    assert all(s.p_hat == 0.0 for s in sweep)


def test_horizon_sweep_matches_direct_estimate():
    cfg = SimConfig(dt=1e-2, horizon=50.0)
    sweep = horizon_sweep(RHO08, 2.0, 0.0, cfg, [20.0, 50.0], 200, 9)
    assert sweep[-1] == estimate_ruin(RHO08, 2.0, 0.0, cfg, 200, 9)


def test_estimates_do_not_depend_on_workers():
    cfg = SimConfig(dt=1e-2, horizon=50.0)
    assert estimate_ruin(RHO08, 2.0, 0.0, cfg, 64, 11, workers=1) == estimate_ruin(RHO08, 2.0, 0.0, cfg, 64, 11, workers=2)


# --- exits --------------------------------------------------------------------


def test_exit_just_above_start():
    p = ModelParams(a=0.5, sigma=3.0, c=0.0, lam=0.0, claim=Uniform(1.0))
    est = estimate_exit(p, 10.0, 1.0, 10.0 * (1 + 1e-6), SimConfig(dt=1e-3, horizon=1.0), 500, 2)
    assert est.p_exit_hi > 0.9


def test_exit_low_through_large_claims():
    p = ModelParams(a=0.1, sigma=0.1, c=0.0, lam=20.0, claim=Uniform(10.0))
    est = estimate_exit(p, 5.0, 4.0, 6.0, SimConfig(dt=1e-3, horizon=5.0), 300, 2)
    assert est.p_exit_lo > 0
    assert est.n_exit_hi + est.n_exit_lo + est.n_censored == est.n_paths


def test_exit_censored_at_tiny_horizon():
    p = ModelParams(a=0.1, sigma=0.1, c=0.0, lam=0.0, claim=Uniform(1.0))
    est = estimate_exit(p, 50.0, 1.0, 100.0, SimConfig(dt=1e-4, horizon=1e-3), 100, 2)
    assert est.p_censored == 1.0
    assert est.ci_adverse_hi[1] == 1.0


def test_exit_interval_validated():
    cfg = SimConfig(dt=1e-2, horizon=1.0)
    with pytest.raises(IntervalError):
        estimate_exit(RHO08, 5.0, 6.0, 10.0, cfg, 10, 1)
    with pytest.raises(IntervalError):
        estimate_exit(RHO08, 5.0, 1.0, math.inf, cfg, 10, 1)


# --- consistency against a closed form ------------------------------------------


def test_gbm_passage_formula_limits():
    assert gbm_passage_probability(1.0, 0.999999, 0.05, 0.3, 1.0) == pytest.approx(1.0, abs=1e-3)
    assert gbm_passage_probability(1.0, 1e-6, 0.05, 0.3, 1.0) < 1e-12
    # driftless log-price: reflection principle gives 2 Phi(b / s)
    p = gbm_passage_probability(1.0, 0.7, 0.045, 0.3, 1.0)
    assert p == pytest.approx(math.erfc(-math.log(0.7) / 0.3 / math.sqrt(2)), rel=1e-12)


@pytest.mark.slow
def test_gbm_passage_estimate_matches_closed_form():
    a, sigma, u, level, T, n = 0.05, 0.3, 1.0, 0.7, 1.0, 100_000
    p = ModelParams(a=a, sigma=sigma, c=0.0, lam=0.0, claim=Exponential(1.0))
    est = estimate_ruin(p, u, level, SimConfig(dt=1e-4, horizon=T), n, 2024)
    exact = gbm_passage_probability(u, level, a, sigma, T)
    se = math.sqrt(exact * (1 - exact) / n)
    assert abs(est.p_hat - exact) <= 4 * se
    assert np.isfinite(est.stderr)
