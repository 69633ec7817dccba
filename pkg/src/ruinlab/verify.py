"""Executable checks of the decay bound, the certain-ruin results, the exit
bounds, the generator sign conditions and the Markov restart property.

Each check returns a :class:`BoundReport` (or a list of them) whose verdict
is a pure function of the inputs and the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import DomainError, IntervalError, RegimeError
from .estimate import (
    Z95,
    ExitEstimate,
    RuinEstimate,
    estimate_exit,
    estimate_ruin,
    estimate_ruin_grid,
    estimates_from_times,
)
from .model import (
    LogLog,
    ModelParams,
    PowerDecay,
    PowerGrowth,
    QuadConfig,
    TestFunction,
    cap_claims,
    claim_bound,
    default_alpha,
    descent_sequence,
    generator_apply,
    is_rho_one,
    net_profit_condition,
    rho,
    threshold_lemma_A,
    threshold_lemma_B,
)
from .rng import RngStream
from .sim import SimConfig, passage_times, run_farm, terminal_value

UPPER = "upper"
LOWER = "lower"

RHO_GT_1 = "rho_gt_1"
RHO_LT_1 = "rho_lt_1"
RHO_EQ_1 = "rho_eq_1"
REGIMES = (RHO_GT_1, RHO_LT_1, RHO_EQ_1)


@dataclass(frozen=True)
class BoundReport:
    """An observed quantity set against an analytic bound.

    ``direction`` is ``"upper"`` when the check requires observed <= bound
    and ``"lower"`` when it requires observed >= bound.  Side conditions
    (e.g. exact monotonicity of a sweep) must all hold for a pass.
    """

    name: str
    analytic_bound: float
    observed: float
    direction: str
    estimate: RuinEstimate | ExitEstimate | None = None
    inputs: dict = field(default_factory=dict)
    conditions: dict = field(default_factory=dict)
    details: tuple = ()

    @property
    def slack(self) -> float:
        if self.direction == UPPER:
            return self.analytic_bound - self.observed
        return self.observed - self.analytic_bound

    @property
    def passed(self) -> bool:
        return self.slack >= 0 and all(self.conditions.values())

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def summary_line(self) -> str:
        est = self.estimate
        if isinstance(est, RuinEstimate):
            shown = f"p_hat={est.p_hat:.6g} ci=[{est.ci_lo:.6g}, {est.ci_hi:.6g}]"
        elif isinstance(est, ExitEstimate):
            lo, hi = est.ci_adverse_hi
            shown = f"p_exit_hi={est.p_exit_hi:.6g} censored={est.p_censored:.6g} adverse_ci=[{lo:.6g}, {hi:.6g}]"
        else:
            shown = f"observed={self.observed:.6g}"
        rel = "<=" if self.direction == UPPER else ">="
        cond = "".join(f" {k}={'ok' if v else 'FAIL'}" for k, v in self.conditions.items())
        return f"{self.name}: {shown} | need {self.observed:.6g} {rel} {self.analytic_bound:.6g}{cond} -> {self.verdict}"


@dataclass(frozen=True)
class SignReport:
    regime: str
    test_function: TestFunction
    grid: np.ndarray
    values: np.ndarray
    bound_values: np.ndarray
    atol: float = 1e-12

    @property
    def all_nonpositive(self) -> bool:
        return bool(np.max(self.values) <= self.atol)

    @property
    def bound_all_nonpositive(self) -> bool:
        return bool(np.max(self.bound_values) <= self.atol)

    @property
    def dominated(self) -> bool:
        """Whether the generator sits below the simplified bound everywhere (informational)."""
        return bool(np.all(self.values <= self.bound_values + self.atol))

    @property
    def worst_point(self) -> tuple[float, float]:
        i = int(np.argmax(self.values))
        return float(self.grid[i]), float(self.values[i])

    @property
    def positive_region(self) -> tuple[float, float] | None:
        pos = self.grid[self.values > self.atol]
        return (float(pos.min()), float(pos.max())) if len(pos) else None


# ---------------------------------------------------------------------------
# analytic bounds
# ---------------------------------------------------------------------------


def decay_bound(M: float, u: float, r: float) -> float:
    return (M / u) ** (r - 1.0)


def exit_bound_A(u: float, n_level: float, alpha: float) -> float:
    return (u / n_level) ** alpha


def exit_bound_B(u: float, n_level: float) -> float:
    return math.log(math.log(u)) / math.log(math.log(n_level))


# ---------------------------------------------------------------------------
# precondition helpers (also used by the CLI to validate before computing)
# ---------------------------------------------------------------------------


def require_decay_regime(params: ModelParams, M: float, u_values: Sequence[float]) -> None:
    r = rho(params)
    if not r > 1.0:
        raise RegimeError(f"decay bound needs rho > 1, got rho = {r}")
    if not net_profit_condition(params):
        raise RegimeError(f"decay bound needs c > lam * mu, got c={params.c}, lam*mu={params.lam * params.claim.mean}")
    if not params.claim.essential_sup <= M:
        raise RegimeError(f"claims are not bounded by M={M} (essential sup {params.claim.essential_sup})")
    bad = [u for u in u_values if not u >= M]
    if bad:
        raise RegimeError(f"decay bound needs u >= M={M}, got {bad}")


def require_lemma_a(params: ModelParams, alpha: float, u: float, n_level: float) -> float:
    if not rho(params) < 1.0 or is_rho_one(params):
        raise RegimeError(f"exit bound A needs rho < 1, got rho = {rho(params)}")
    u_star = threshold_lemma_A(params, alpha)
    if not u_star <= u < n_level:
        raise IntervalError(f"need u* <= u < n_level, got u*={u_star}, u={u}, n_level={n_level}")
    return u_star


def require_lemma_b(params: ModelParams, u: float, n_level: float) -> float:
    if not is_rho_one(params):
        raise RegimeError(f"exit bound B needs rho = 1, got rho = {rho(params)}")
    if not n_level > math.exp(math.e):
        raise DomainError(f"n_level must exceed e^e = {math.exp(math.e):.4f}, got {n_level}")
    u_star = threshold_lemma_B(params)
    if not u_star <= u < n_level:
        raise IntervalError(f"need u* <= u < n_level, got u*={u_star}, u={u}, n_level={n_level}")
    return u_star


def require_certain_ruin_regime(params: ModelParams, u_values: Sequence[float]) -> None:
    if rho(params) > 1.0 and not is_rho_one(params):
        raise RegimeError(f"certain ruin needs rho <= 1, got rho = {rho(params)}")
    if not params.lam > 0:
        raise RegimeError("certain ruin needs claims (lam > 0); without them ruin is impossible")
    bad = [u for u in u_values if not u > 0]
    if bad:
        raise RegimeError(f"initial capitals must be positive, got {bad}")


# ---------------------------------------------------------------------------
# Monte Carlo checks
# ---------------------------------------------------------------------------


def check_theorem_decay(
    params: ModelParams,
    M: float,
    u_values: Sequence[float],
    cfg: SimConfig,
    n_paths: int,
    seed: int,
    workers: int | None = None,
    z: float = Z95,
) -> list[BoundReport]:
    """psi(u) and psi_M(u) against (M/u)^(rho-1), upper Wilson endpoint vs bound."""
    require_decay_regime(params, M, u_values)
    r = rho(params)
    levels = [0.0, float(M)]
    # level M < u is required by the estimator; u = M makes the bound vacuous
    grid_us = [u for u in u_values if u > M]
    ests = estimate_ruin_grid(params, grid_us, levels, cfg, n_paths, seed, workers, z) if grid_us else {}
    reports = []
    for u in u_values:
        bound = decay_bound(M, u, r)
        for lv in levels:
            est = ests.get((float(u), lv))
            observed = est.ci_hi if est is not None else 1.0
            reports.append(
                BoundReport(
                    name=f"theorem_decay[u={u:g},level={lv:g}]",
                    analytic_bound=bound,
                    observed=observed,
                    direction=UPPER,
                    estimate=est,
                    inputs={"u": u, "level": lv, "M": M, "rho": r, "horizon": cfg.horizon, "n_paths": n_paths, "seed": seed},
                )
            )
    return reports


def check_exit_bound_A(
    params: ModelParams,
    alpha: float | None,
    u: float,
    n_level: float,
    cfg: SimConfig,
    n_paths: int,
    seed: int,
    workers: int | None = None,
    z: float = Z95,
) -> BoundReport:
    """Exit-high probability from [u*, n) against (u/n)^alpha; censored paths count as exits high."""
    if alpha is None:
        alpha = default_alpha(params)
    u_star = require_lemma_a(params, alpha, u, n_level)
    est = estimate_exit(params, u, u_star, n_level, cfg, n_paths, seed, workers, z)
    return BoundReport(
        name=f"exit_bound_A[u={u:g},n={n_level:g}]",
        analytic_bound=exit_bound_A(u, n_level, alpha),
        observed=est.ci_adverse_hi[1],
        direction=UPPER,
        estimate=est,
        inputs={"u": u, "n_level": n_level, "alpha": alpha, "u_star": u_star, "horizon": cfg.horizon, "n_paths": n_paths, "seed": seed},
    )


def check_exit_bound_B(
    params: ModelParams,
    u: float,
    n_level: float,
    cfg: SimConfig,
    n_paths: int,
    seed: int,
    workers: int | None = None,
    z: float = Z95,
) -> BoundReport:
    """Exit-high probability from [u*, n) against ln ln u / ln ln n at rho = 1."""
    u_star = require_lemma_b(params, u, n_level)
    est = estimate_exit(params, u, u_star, n_level, cfg, n_paths, seed, workers, z)
    return BoundReport(
        name=f"exit_bound_B[u={u:g},n={n_level:g}]",
        analytic_bound=exit_bound_B(u, n_level),
        observed=est.ci_adverse_hi[1],
        direction=UPPER,
        estimate=est,
        inputs={"u": u, "n_level": n_level, "u_star": u_star, "horizon": cfg.horizon, "n_paths": n_paths, "seed": seed},
    )


def _ruin_pair_worker(params, capped, us, cfg, stream: RngStream):
    plain = passage_times(params, us, [0.0], cfg, stream)[:, 0]
    cap = passage_times(capped, us, [0.0], cfg, stream)[:, 0]
    return np.stack([plain, cap], axis=1)


def check_certain_ruin(
    params: ModelParams,
    u_values: Sequence[float],
    cfg: SimConfig,
    horizons: Sequence[float],
    n_paths: int,
    seed: int,
    threshold: float = 0.9,
    cap: float | None = None,
    workers: int | None = None,
    z: float = Z95,
) -> list[BoundReport]:
    """Ruin fraction near 1 for rho <= 1, plus exact capped-vs-uncapped dominance.

    For each u two reports are produced.  ``certain_ruin`` needs the lower
    Wilson endpoint at the largest horizon to reach ``threshold`` and the
    horizon sweep to be nondecreasing.  ``cap_dominance`` needs the capped
    ruin count to stay at or below the uncapped one at every horizon and
    every capped ruin to be matched by an earlier-or-equal uncapped ruin.
    """
    require_certain_ruin_regime(params, u_values)
    horizons = sorted(float(h) for h in horizons)
    if cap is None:
        cap = params.claim.mean
    capped = params.with_claim(cap_claims(params.claim, cap))
    long_cfg = SimConfig(cfg.dt, horizons[-1], cfg.scheme, cfg.watch_levels, cfg.chunk_steps)
    fn = partial(_ruin_pair_worker, params, capped, tuple(float(u) for u in u_values), long_cfg)
    times = np.stack(run_farm(fn, n_paths, seed, workers))  # (path, u, [plain, capped])
    reports = []
    for i, u in enumerate(u_values):
        plain, capt = times[:, i, 0], times[:, i, 1]
        sweep = [estimates_from_times(plain, h, 0.0, u, z) for h in horizons]
        sweep_cap = [estimates_from_times(capt, h, 0.0, u, z) for h in horizons]
        hits = [e.n_hit for e in sweep]
        final = sweep[-1]
        inputs = {"u": u, "horizons": tuple(horizons), "threshold": threshold, "cap": cap, "n_paths": n_paths, "seed": seed}
        reports.append(
            BoundReport(
                name=f"certain_ruin[u={u:g}]",
                analytic_bound=threshold,
                observed=final.ci_lo,
                direction=LOWER,
                estimate=final,
                inputs=inputs,
                conditions={"sweep_nondecreasing": all(b >= a for a, b in zip(hits, hits[1:]))},
                details=tuple(sweep),
            )
        )
        excess = max((c.n_hit - p.n_hit) / n_paths for c, p in zip(sweep_cap, sweep))
        ruined_cap = np.isfinite(capt)
        pathwise = bool(np.all(plain[ruined_cap] <= capt[ruined_cap]))
        reports.append(
            BoundReport(
                name=f"cap_dominance[u={u:g},cap={cap:g}]",
                analytic_bound=0.0,
                observed=excess,
                direction=UPPER,
                estimate=sweep_cap[-1],
                inputs=inputs,
                conditions={"pathwise_ruin_order": pathwise},
                details=tuple(sweep_cap),
            )
        )
    return reports


def check_monotone_psi(
    params: ModelParams,
    u_values: Sequence[float],
    level: float,
    cfg: SimConfig,
    n_paths: int,
    seed: int,
    workers: int | None = None,
) -> BoundReport:
    """Coupled estimates must not increase with initial capital, exactly."""
    u_values = [float(u) for u in u_values]
    if any(b < a for a, b in zip(u_values, u_values[1:])):
        raise ValueError("u_values must be sorted ascending")
    ests = estimate_ruin_grid(params, u_values, [level], cfg, n_paths, seed, workers)
    seq = [ests[(u, float(level))] for u in u_values]
    rises = [b.p_hat - a.p_hat for a, b in zip(seq, seq[1:])]
    return BoundReport(
        name=f"monotone_psi[level={level:g}]",
        analytic_bound=0.0,
        observed=max(rises, default=0.0),
        direction=UPPER,
        inputs={"u_values": tuple(u_values), "level": level, "horizon": cfg.horizon, "n_paths": n_paths, "seed": seed},
        details=tuple(seq),
    )


def check_descent_consistency(
    params: ModelParams,
    cfg: SimConfig,
    n_paths: int,
    seed: int,
    threshold: float = 0.9,
    alpha: float | None = None,
    steps: Sequence[int] | None = None,
    lift: float = 1e-6,
    workers: int | None = None,
) -> list[BoundReport]:
    """From just above K_{j-1}, the path must drop below K_j (K_0 = u*)."""
    require_certain_ruin_regime(params, [1.0])
    M = claim_bound(params)
    u_star = threshold_lemma_B(params) if is_rho_one(params) else threshold_lemma_A(params, alpha)
    levels = (u_star,) + descent_sequence(u_star, M).descent_levels
    js = range(1, len(levels)) if steps is None else steps
    reports = []
    for j in js:
        start = levels[j - 1] * (1.0 + lift) + lift
        est = estimate_ruin(params, start, levels[j], cfg, n_paths, seed + j, workers)
        reports.append(
            BoundReport(
                name=f"descent[j={j},K={levels[j]:g}]",
                analytic_bound=threshold,
                observed=est.p_hat,
                direction=LOWER,
                estimate=est,
                inputs={"j": j, "u": start, "level": levels[j], "u_star": u_star},
            )
        )
    return reports


def _restart_worker(params, x, s, t, cfg: SimConfig, stream: RngStream):
    if s > 0:
        terminal_value(params, x, SimConfig(cfg.dt, s, cfg.scheme), stream)
    seg = SimConfig(cfg.dt, t, cfg.scheme)
    restarted = terminal_value(params, x, seg, stream.fresh(1), t0=s)
    fresh = terminal_value(params, x, seg, stream.fresh(2))
    return restarted, fresh


def ks_critical_value(n: int, m: int, level: float = 0.01) -> float:
    """Asymptotic two-sample Kolmogorov-Smirnov critical value."""
    return math.sqrt(-0.5 * math.log(level / 2.0)) * math.sqrt((n + m) / (n * m))


def check_markov_restart(
    params: ModelParams,
    x: float,
    s: float,
    t: float,
    cfg: SimConfig,
    n_paths: int,
    seed: int,
    level: float = 0.01,
    workers: int | None = None,
) -> BoundReport:
    """X_{s+t} after a restart at value x at time s vs X_t from x, two-sample KS."""
    if not (x > 0 and s >= 0 and t > 0):
        raise ValueError("need x > 0, s >= 0, t > 0")
    if n_paths < 1000:
        raise ValueError("KS check needs at least 1000 paths per sample")
    pairs = np.array(run_farm(partial(_restart_worker, params, x, s, t, cfg), n_paths, seed, workers))
    a, b = pairs[:, 0], pairs[:, 1]
    stat = float(stats.ks_2samp(a, b).statistic)
    return BoundReport(
        name=f"markov_restart[x={x:g},s={s:g},t={t:g}]",
        analytic_bound=ks_critical_value(len(a), len(b), level),
        observed=stat,
        direction=UPPER,
        inputs={"x": x, "s": s, "t": t, "n_paths": n_paths, "seed": seed, "ks_level": level},
        details=(float(a.mean()), float(b.mean())),
    )


# ---------------------------------------------------------------------------
# generator sign certification
# ---------------------------------------------------------------------------


def regime_of(params: ModelParams) -> str:
    if is_rho_one(params):
        return RHO_EQ_1
    return RHO_GT_1 if rho(params) > 1.0 else RHO_LT_1


def displayed_bound(regime: str, params: ModelParams, x: np.ndarray, alpha: float | None = None) -> np.ndarray:
    """The simplified drift terms the three supermartingale arguments reduce to."""
    r, s2, c = rho(params), params.sigma**2, params.c
    x = np.asarray(x, dtype=float)
    if regime == RHO_GT_1:
        return (1.0 - r) * (c - params.lam * params.claim.mean) * x ** (-r)
    if regime == RHO_LT_1:
        return alpha * x**alpha * (0.5 * s2 * (r + alpha - 1.0) + c / x)
    lx = np.log(x)
    return (c / x - s2 / (2.0 * lx)) / lx


def certify_generator_signs(
    params: ModelParams,
    regime: str,
    alpha: float | None = None,
    n_points: int = 200,
    span: float = 100.0,
    grid: np.ndarray | None = None,
    quad: QuadConfig = QuadConfig(),
) -> SignReport:
    """Evaluate L F on a log grid from the regime's threshold to span * threshold.

    When L F is undefined at the threshold itself (x - M on the edge of F's
    domain, the rho > 1 case) the grid is taken open at its left end.
    """
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}")
    if regime_of(params) != regime:
        raise RegimeError(f"regime {regime} requested but parameters are in {regime_of(params)}")
    M = claim_bound(params)
    r = rho(params)
    if regime == RHO_GT_1:
        F, start = PowerDecay(r), M
    elif regime == RHO_LT_1:
        alpha = default_alpha(params) if alpha is None else alpha
        F, start = PowerGrowth(alpha, r), threshold_lemma_A(params, alpha)
    else:
        F, start = LogLog(), threshold_lemma_B(params)
    if grid is None:
        if start - M > F.domain_lo:
            grid = np.geomspace(start, span * start, n_points)
        else:
            grid = np.geomspace(start, span * start, n_points + 1)[1:]
    grid = np.asarray(grid, dtype=float)
    values = np.array([generator_apply(F, params, float(x), quad) for x in grid])
    return SignReport(regime, F, grid, values, displayed_bound(regime, params, grid, alpha))
