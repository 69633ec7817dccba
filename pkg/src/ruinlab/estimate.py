"""Monte Carlo estimators over path farms.

Every estimator fans paths out through :func:`ruinlab.sim.run_farm`, so a
result depends only on its inputs and master seed, never on worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .errors import IntervalError, LevelError
from .model import ModelParams
from .rng import RngStream
from .sim import SimConfig, exit_outcome, passage_times, run_farm

Z95 = NormalDist().inv_cdf(0.975)


def wilson_interval(hits: int, n: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion, clamped to [0, 1]."""
    if not (n >= 1 and 0 <= hits <= n):
        raise ValueError(f"need 0 <= hits <= n and n >= 1, got hits={hits}, n={n}")
    if z < 0:
        raise ValueError("z must be nonnegative")
    p = hits / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    lo, hi = max(0.0, center - half), min(1.0, center + half)
    # keep p inside its own interval despite rounding at the extremes
    return min(lo, p), max(hi, p)


def normal_interval(hits: int, n: int, z: float = Z95) -> tuple[float, float] | None:
    """Plain normal-approximation interval, only when 10 <= hits <= n - 10."""
    if not 10 <= hits <= n - 10:
        return None
    p = hits / n
    half = z * math.sqrt(p * (1 - p) / n)
    return max(0.0, p - half), min(1.0, p + half)


@dataclass(frozen=True)
class RuinEstimate:
    p_hat: float
    stderr: float
    ci_lo: float
    ci_hi: float
    n_paths: int
    n_hit: int
    horizon: float
    level: float
    u: float
    normal_ci: tuple[float, float] | None = None

    @classmethod
    def from_counts(cls, n_hit: int, n_paths: int, *, horizon: float, level: float, u: float, z: float = Z95):
        p = n_hit / n_paths
        lo, hi = wilson_interval(n_hit, n_paths, z)
        return cls(
            p_hat=p,
            stderr=math.sqrt(p * (1 - p) / n_paths),
            ci_lo=lo,
            ci_hi=hi,
            n_paths=n_paths,
            n_hit=n_hit,
            horizon=horizon,
            level=level,
            u=u,
            normal_ci=normal_interval(n_hit, n_paths, z),
        )


@dataclass(frozen=True)
class ExitEstimate:
    lo: float
    hi: float
    u: float
    n_paths: int
    n_exit_hi: int
    n_exit_lo: int
    n_censored: int
    horizon: float
    z: float = Z95

    def __post_init__(self):
        if self.n_exit_hi + self.n_exit_lo + self.n_censored != self.n_paths:
            raise ValueError("exit counts do not partition the paths")

    @property
    def p_exit_hi(self) -> float:
        return self.n_exit_hi / self.n_paths

    @property
    def p_exit_lo(self) -> float:
        return self.n_exit_lo / self.n_paths

    @property
    def p_censored(self) -> float:
        return self.n_censored / self.n_paths

    @property
    def ci_exit_hi(self) -> tuple[float, float]:
        return wilson_interval(self.n_exit_hi, self.n_paths, self.z)

    @property
    def ci_exit_lo(self) -> tuple[float, float]:
        return wilson_interval(self.n_exit_lo, self.n_paths, self.z)

    @property
    def ci_adverse_hi(self) -> tuple[float, float]:
        """Interval for exit-high with censored paths counted as exits high."""
        return wilson_interval(self.n_exit_hi + self.n_censored, self.n_paths, self.z)


def _passage_worker(params, us, levels, cfg, stream):
    return passage_times(params, us, levels, cfg, stream)


def passage_farm(
    params: ModelParams,
    us: Sequence[float],
    levels: Sequence[float],
    cfg: SimConfig,
    n_paths: int,
    master_seed: int,
    workers: int | None = None,
) -> np.ndarray:
    """Crossing times, shape (n_paths, len(us), len(levels)), inf where none.

    Path i uses stream (master_seed, i) for every capital, so estimates at
    different capitals are pathwise coupled.
    """
    fn = partial(_passage_worker, params, tuple(float(u) for u in us), tuple(float(l) for l in levels), cfg)
    return np.stack(run_farm(fn, n_paths, master_seed, workers))


def estimates_from_times(
    times: np.ndarray, horizon: float, level: float, u: float, z: float = Z95
) -> RuinEstimate:
    n_hit = int(np.count_nonzero(times <= horizon))
    return RuinEstimate.from_counts(n_hit, len(times), horizon=horizon, level=level, u=u, z=z)


def _check_level(u: float, level: float) -> None:
    if not 0.0 <= level < u:
        raise LevelError(f"need 0 <= level < u, got level={level}, u={u}")


def estimate_ruin(
    params: ModelParams,
    u: float,
    level: float,
    cfg: SimConfig,
    n_paths: int,
    master_seed: int,
    workers: int | None = None,
    z: float = Z95,
) -> RuinEstimate:
    """P(X drops below ``level`` before the horizon | X_0 = u)."""
    _check_level(u, level)
    times = passage_farm(params, [u], [level], cfg, n_paths, master_seed, workers)[:, 0, 0]
    return estimates_from_times(times, cfg.horizon, level, u, z)


def estimate_ruin_grid(
    params: ModelParams,
    us: Sequence[float],
    levels: Sequence[float],
    cfg: SimConfig,
    n_paths: int,
    master_seed: int,
    workers: int | None = None,
    z: float = Z95,
) -> dict[tuple[float, float], RuinEstimate]:
    """Coupled estimates for every (u, level) pair from one farm."""
    for u in us:
        for lv in levels:
            _check_level(u, lv)
    times = passage_farm(params, us, levels, cfg, n_paths, master_seed, workers)
    return {
        (float(u), float(lv)): estimates_from_times(times[:, i, j], cfg.horizon, lv, u, z)
        for i, u in enumerate(us)
        for j, lv in enumerate(levels)
    }


def horizon_sweep(
    params: ModelParams,
    u: float,
    level: float,
    cfg: SimConfig,
    horizons: Sequence[float],
    n_paths: int,
    master_seed: int,
    workers: int | None = None,
    z: float = Z95,
) -> list[RuinEstimate]:
    """Estimates at increasing horizons read off the same paths.

    One simulation per path runs to the largest horizon; hits are counted
    at each checkpoint, so the sequence is nondecreasing by construction.
    """
    horizons = [float(h) for h in horizons]
    if not horizons or any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ValueError("horizons must be nonempty and strictly increasing")
    _check_level(u, level)
    long_cfg = SimConfig(cfg.dt, horizons[-1], cfg.scheme, cfg.watch_levels, cfg.chunk_steps)
    times = passage_farm(params, [u], [level], long_cfg, n_paths, master_seed, workers)[:, 0, 0]
    return [estimates_from_times(times, h, level, u, z) for h in horizons]


def _exit_worker(params, u, lo, hi, cfg, stream: RngStream):
    return exit_outcome(params, u, lo, hi, cfg, stream)[0]


def estimate_exit(
    params: ModelParams,
    u: float,
    lo: float,
    hi: float,
    cfg: SimConfig,
    n_paths: int,
    master_seed: int,
    workers: int | None = None,
    z: float = Z95,
) -> ExitEstimate:
    """Classify each path by its first exit from [lo, hi) before the horizon."""
    if not (lo <= u < hi) or not all(map(math.isfinite, (lo, hi))):
        raise IntervalError(f"need finite lo <= u < hi, got lo={lo}, u={u}, hi={hi}")
    sides = np.array(run_farm(partial(_exit_worker, params, u, lo, hi, cfg), n_paths, master_seed, workers))
    return ExitEstimate(
        lo=lo,
        hi=hi,
        u=u,
        n_paths=n_paths,
        n_exit_hi=int(np.count_nonzero(sides == 1)),
        n_exit_lo=int(np.count_nonzero(sides == -1)),
        n_censored=int(np.count_nonzero(sides == 0)),
        horizon=cfg.horizon,
        z=z,
    )


def gbm_passage_probability(u: float, level: float, a: float, sigma: float, horizon: float) -> float:
    """P(min_{t <= T} u exp((a - sigma^2/2) t + sigma W_t) < level), closed form."""
    nu = a - 0.5 * sigma**2
    b = math.log(level / u)
    s = sigma * math.sqrt(horizon)
    phi = NormalDist().cdf
    return phi((b - nu * horizon) / s) + math.exp(2.0 * nu * b / sigma**2) * phi((b + nu * horizon) / s)
