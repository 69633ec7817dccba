import math

import numpy as np
import pytest

from ruinlab.errors import DomainError, IntervalError, RegimeError
from ruinlab.model import Deterministic, ModelParams, Uniform, generator_apply, PowerDecay
from ruinlab.sim import SimConfig
from ruinlab.verify import (
    RHO_EQ_1,
    RHO_GT_1,
    RHO_LT_1,
    BoundReport,
    certify_generator_signs,
    check_certain_ruin,
    check_descent_consistency,
    check_exit_bound_A,
    check_exit_bound_B,
    check_markov_restart,
    check_monotone_psi,
    check_theorem_decay,
    decay_bound,
    displayed_bound,
    exit_bound_A,
    exit_bound_B,
    ks_critical_value,
    regime_of,
)

RHO3 = ModelParams(a=0.15, sigma=math.sqrt(0.1), c=2.0, lam=1.0, claim=Uniform(1.0))
RHO08 = ModelParams(a=0.1, sigma=0.5, c=1.0, lam=1.0, claim=Uniform(2.0))
RHO1 = ModelParams(a=0.5, sigma=1.0, c=1.0, lam=1.0, claim=Uniform(2.0))
RHO05 = ModelParams(a=0.25, sigma=1.0, c=1.0, lam=1.0, claim=Uniform(1.0))
RHO1_C2 = ModelParams(a=0.5, sigma=1.0, c=2.0, lam=1.0, claim=Uniform(1.0))


# --- analytic bounds ----------------------------------------------------------


def test_bound_values():
    assert decay_bound(1.0, 10.0, 3.0) == pytest.approx(0.01, rel=1e-14)
    assert decay_bound(1.0, 1.0, 3.0) == 1.0
    assert exit_bound_A(8.0, 16.0, 0.25) == pytest.approx(0.5**0.25, rel=1e-14)
    assert exit_bound_A(8.0, 8.0, 0.25) == 1.0
    assert exit_bound_B(10.0, 1e4) == pytest.approx(math.log(math.log(10)) / math.log(math.log(1e4)), rel=1e-14)
    assert exit_bound_B(10.0, 1e4) == pytest.approx(0.37561, abs=1e-4)
    assert exit_bound_B(10.0, 10.0 + 1e-9) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("n_level", [64.0, 100.0, 1e4])
def test_exit_bounds_vanish_as_level_grows(n_level):
    a = [exit_bound_A(8.0, n_level * 10**k, 0.25) for k in range(1, 5)]
    b = [exit_bound_B(9.0, n_level * 10**k) for k in range(1, 5)]
    assert all(y < x for x, y in zip(a, a[1:]))
    assert all(y < x for x, y in zip(b, b[1:]))


def test_report_verdict_directions():
    up = BoundReport("u", analytic_bound=0.5, observed=0.4, direction="upper")
    lo = BoundReport("l", analytic_bound=0.9, observed=0.95, direction="lower")
    assert up.passed and up.slack == pytest.approx(0.1)
    assert lo.passed and lo.slack == pytest.approx(0.05)
    assert not BoundReport("x", 0.5, 0.6, "upper").passed
    assert not BoundReport("c", 0.5, 0.4, "upper", conditions={"side": False}).passed
    assert "-> pass" in up.summary_line()


# --- preconditions ------------------------------------------------------------


def test_decay_check_refuses_wrong_regime():
    cfg = SimConfig(dt=1e-2, horizon=1.0)
    with pytest.raises(RegimeError):
        check_theorem_decay(RHO08, 2.0, [5.0], cfg, 10, 1)
    with pytest.raises(RegimeError):
        check_theorem_decay(RHO3, 1.0, [0.5], cfg, 10, 1)
    with pytest.raises(RegimeError):
        check_theorem_decay(RHO3.with_claim(Uniform(5.0)), 5.0, [10.0], cfg, 10, 1)


def test_exit_checks_refuse_wrong_regime():
    cfg = SimConfig(dt=1e-2, horizon=1.0)
    with pytest.raises(RegimeError):
        check_exit_bound_A(RHO3, 0.1, 8.0, 64.0, cfg, 10, 1)
    with pytest.raises(IntervalError):
        check_exit_bound_A(RHO05, 0.25, 7.0, 64.0, cfg, 10, 1)
    with pytest.raises(RegimeError):
        check_exit_bound_B(RHO08, 9.0, 100.0, cfg, 10, 1)
    with pytest.raises(DomainError):
        check_exit_bound_B(RHO1_C2, 9.0, 15.0, cfg, 10, 1)


def test_certain_ruin_refuses_no_claims_and_large_rho():
    cfg = SimConfig(dt=1e-2, horizon=1.0)
    no_claims = ModelParams(a=0.1, sigma=0.5, c=1.0, lam=0.0, claim=Uniform(2.0))
    with pytest.raises(RegimeError):
        check_certain_ruin(no_claims, [2.0], cfg, [1.0], 10, 1)
    with pytest.raises(RegimeError):
        check_certain_ruin(RHO3, [2.0], cfg, [1.0], 10, 1)


# --- Monte Carlo checks at small scale ------------------------------------------


def test_decay_check_small():
    reps = check_theorem_decay(RHO3, 1.0, [1.0, 5.0, 10.0], SimConfig(dt=1e-2, horizon=50.0), 500, 3)
    assert len(reps) == 6
    assert reps[0].analytic_bound == 1.0 and reps[0].passed
    for r in reps[2:]:
        assert r.estimate.ci_hi == r.observed
    # the level M hit count dominates the level 0 count at the same u
    assert reps[3].estimate.n_hit >= reps[2].estimate.n_hit


def test_exit_check_small():
    rep = check_exit_bound_A(RHO05, 0.25, 8.0, 64.0, SimConfig(dt=1e-2, horizon=50.0), 300, 5)
    est = rep.estimate
    assert est.lo == 8.0 and est.hi == 64.0
    assert rep.observed == est.ci_adverse_hi[1]
    assert rep.observed >= est.ci_exit_hi[1]


def test_certain_ruin_small():
    reps = check_certain_ruin(RHO08, [2.0], SimConfig(dt=1e-2, horizon=1.0), [10.0, 100.0, 500.0], 300, 7)
    names = [r.name.split("[")[0] for r in reps]
    assert names == ["certain_ruin", "cap_dominance"]
    assert reps[0].passed and reps[0].conditions["sweep_nondecreasing"]
    assert reps[1].passed and reps[1].observed <= 0


def test_monotone_psi():
    cfg = SimConfig(dt=1e-2, horizon=100.0)
    rep = check_monotone_psi(RHO08, [1.0, 2.0, 5.0, 10.0], 0.0, cfg, 300, 1)
    assert rep.passed
    assert check_monotone_psi(RHO08, [2.0], 0.0, cfg, 50, 1).passed
    dup = check_monotone_psi(RHO08, [2.0, 2.0], 0.0, cfg, 50, 1)
    assert dup.details[0] == dup.details[1]
    with pytest.raises(ValueError):
        check_monotone_psi(RHO08, [2.0, 1.0], 0.0, cfg, 10, 1)


def test_descent_consistency_first_steps():
    reps = check_descent_consistency(RHO1_C2, SimConfig(dt=1e-2, horizon=200.0), 200, 3, steps=[1, 2])
    assert [r.inputs["j"] for r in reps] == [1, 2]
    for r in reps:
        assert r.inputs["u"] > r.inputs["level"]
        assert r.passed


def test_ks_critical_value():
    # c(0.01) = 1.6276 for the asymptotic Kolmogorov distribution
    assert ks_critical_value(10**4, 10**4) == pytest.approx(1.6276 * math.sqrt(2e-4), rel=1e-3)


def test_markov_restart_lognormal_case():
    p = ModelParams(a=0.1, sigma=0.5, c=0.0, lam=0.0, claim=Uniform(1.0))
    rep = check_markov_restart(p, 5.0, 1.0, 2.0, SimConfig(dt=1e-2, horizon=3.0), 2000, 4)
    assert rep.passed
    with pytest.raises(ValueError):
        check_markov_restart(p, 5.0, 1.0, 2.0, SimConfig(dt=1e-2, horizon=3.0), 999, 4)


def test_markov_restart_at_time_zero():
    rep = check_markov_restart(RHO08, 5.0, 0.0, 1.0, SimConfig(dt=1e-2, horizon=1.0), 1000, 4)
    assert rep.passed


# --- generator signs ----------------------------------------------------------


def test_regime_classification():
    assert regime_of(RHO3) == RHO_GT_1
    assert regime_of(RHO08) == RHO_LT_1
    assert regime_of(RHO1) == RHO_EQ_1


def test_closed_form_cross_check_deterministic_claims():
    p = ModelParams(a=1.0, sigma=1.0, c=2.0, lam=1.0, claim=Deterministic(1.0))
    rep = certify_generator_signs(p, RHO_GT_1, grid=np.array([10.0]))
    assert rep.values[0] == pytest.approx(-0.02 + 1 / 90, rel=1e-10)
    # the simplified drift is -0.01, below the exact generator here
    assert rep.bound_values[0] == pytest.approx(-0.01, rel=1e-12)
    assert not rep.dominated
    assert rep.all_nonpositive and rep.bound_all_nonpositive


def test_signs_rho_below_one():
    rep = certify_generator_signs(RHO08, RHO_LT_1)
    assert len(rep.grid) == 200
    assert rep.grid[0] == pytest.approx(80.0) and rep.grid[-1] == pytest.approx(8000.0)
    assert rep.all_nonpositive and rep.bound_all_nonpositive


def test_signs_rho_one():
    rep = certify_generator_signs(RHO1, RHO_EQ_1)
    assert rep.grid[0] == 5.0
    assert rep.all_nonpositive and rep.bound_all_nonpositive


def test_signs_rho_one_bound_at_threshold():
    rep = certify_generator_signs(RHO1_C2, RHO_EQ_1, n_points=5)
    x = rep.grid[0]
    assert x == pytest.approx(8.613169, abs=1e-6)
    assert rep.bound_values[0] <= 1e-12


def test_signs_pure_diffusion_growth_bound():
    p = ModelParams(a=0.1, sigma=1.0, c=0.0, lam=0.0, claim=Uniform(1.0))
    x = np.array([5.0, 50.0])
    alpha = 0.25
    b = displayed_bound(RHO_LT_1, p, x, alpha)
    assert np.all(b < 0)
    assert b == pytest.approx(alpha * x**alpha * 0.5 * (0.2 + alpha - 1.0), rel=1e-14)


def test_signs_rho_above_one_near_threshold():
    # with Uniform(0, 1) claims the exact generator is -4/x^3 + 1/(x^2 (x - 1)),
    # positive for 1 < x < 4/3
    rep = certify_generator_signs(RHO3, RHO_GT_1)
    assert rep.grid[0] > 1.0
    for x, v in zip(rep.grid[:5], rep.values[:5]):
        closed = -4 / x**3 + 1 / (x**2 * (x - 1))
        assert v == pytest.approx(closed, rel=1e-8)
    lo, hi = rep.positive_region
    assert lo == rep.grid[0] and hi < 4 / 3
    assert np.all(rep.values[rep.grid > 4 / 3] <= 0)
    assert rep.bound_all_nonpositive


def test_signs_refuse_mismatched_regime():
    with pytest.raises(RegimeError):
        certify_generator_signs(RHO08, RHO_GT_1)


def test_signs_domain_error_propagates():
    with pytest.raises(DomainError):
        generator_apply(PowerDecay(3.0), RHO3, 1.0)
