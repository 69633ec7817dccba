"""Path simulation of the risk process with investments.

Two schemes are available.  ``exact_y`` samples the discount process

    Y_t = exp((sigma^2/2 - a) t - sigma W_t)

exactly on the grid and reconstructs the surplus through the strong
solution X_t = (u + c int_0^t Y ds - sum_{t_i <= t} Y_{t_i} xi_i) / Y_t,
with the time integral done by the trapezoid rule.  ``euler`` steps the SDE
directly.  Both use the same Brownian increments and the same claims, so a
single :class:`~ruinlab.rng.RngStream` drives either.

The grid is the union of the uniform steps and the claim arrival times.
Ruin (X < 0) is only ever declared at a claim, since the continuous part
cannot reach 0 from above when c >= 0.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np
from numba import njit

from .errors import InvalidConfig, OrderError
from .model import ClaimDistribution, ModelParams, cap_claims
from .rng import RngStream

EXACT_Y = "exact_y"
EULER = "euler"
SCHEMES = (EXACT_Y, EULER)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    horizon: float = 100.0
    scheme: str = EXACT_Y
    watch_levels: tuple[float, ...] = ()
    chunk_steps: int = 1 << 15

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise InvalidConfig(f"dt must be positive and finite, got {self.dt}")
        if not (math.isfinite(self.horizon) and self.horizon >= self.dt):
            raise InvalidConfig(f"horizon must be finite and >= dt, got {self.horizon}")
        if self.scheme not in SCHEMES:
            raise InvalidConfig(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.chunk_steps < 1:
            raise InvalidConfig("chunk_steps must be positive")
        levels = tuple(sorted({float(v) for v in self.watch_levels}, reverse=True))
        if any(lv < 0 for lv in levels):
            raise InvalidConfig("watch levels must be nonnegative")
        object.__setattr__(self, "watch_levels", levels)

    @classmethod
    def for_params(cls, params: ModelParams, horizon: float, **kw) -> "SimConfig":
        """Default step 1e-3 * min(1, 1/lam)."""
        dt = 1e-3 * min(1.0, 1.0 / params.lam) if params.lam > 0 else 1e-3
        return cls(dt=kw.pop("dt", dt), horizon=horizon, **kw)

    @property
    def n_steps(self) -> int:
        ratio = self.horizon / self.dt
        k = round(ratio)
        return int(k) if abs(ratio - k) <= 1e-9 * max(1.0, ratio) else math.ceil(ratio)


@dataclass
class PathRecord:
    times: np.ndarray
    values: np.ndarray
    is_jump: np.ndarray
    claim_sizes: np.ndarray
    jump_pre_values: np.ndarray
    ruin_time: float | None
    crossings: dict[float, float | None]
    y: np.ndarray | None = None
    v: np.ndarray | None = None

    @property
    def terminal_value(self) -> float:
        return float(self.values[-1])

    @property
    def jumps(self) -> list[tuple[float, float, float]]:
        """(time, claim size, pre-jump value) for every claim on the path."""
        idx = np.flatnonzero(self.is_jump)
        return [
            (float(self.times[i]), float(self.claim_sizes[i]), float(self.jump_pre_values[i])) for i in idx
        ]


@dataclass
class CoupledPair:
    """Two paths driven by identical randomness.

    ``initial_capital``: primary starts higher, so primary >= secondary.
    ``claim_cap``: secondary uses capped claims, so secondary >= primary.
    """

    primary_path: PathRecord
    secondary_path: PathRecord
    coupling_kind: str

    @property
    def upper(self) -> PathRecord:
        return self.primary_path if self.coupling_kind == "initial_capital" else self.secondary_path

    @property
    def lower(self) -> PathRecord:
        return self.secondary_path if self.coupling_kind == "initial_capital" else self.primary_path

    def ordering_violations(self) -> int:
        """Shared points where the dominated path sits above the dominating one."""
        up, lo = self.upper, self.lower
        n = min(len(up.times), len(lo.times))
        if not np.array_equal(up.times[:n], lo.times[:n]):
            raise AssertionError("coupled paths do not share a time grid")
        return int(np.count_nonzero(lo.values[:n] > up.values[:n]))

    def ruin_order_holds(self) -> bool:
        """Ruin of the upper path implies earlier-or-equal ruin of the lower one."""
        if self.upper.ruin_time is None:
            return True
        return self.lower.ruin_time is not None and self.lower.ruin_time <= self.upper.ruin_time


# ---------------------------------------------------------------------------
# randomness
# ---------------------------------------------------------------------------


def generate_jumps(
    lam: float, horizon: float, claim: ClaimDistribution, stream: RngStream, t0: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """Claim arrival times in (t0, t0 + horizon] and their sizes.

    Draws come in (inter-arrival, claim) pairs of uniforms and are mapped by
    inverse CDF, so a shorter horizon reproduces a prefix of a longer one.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if lam == 0.0:
        return np.empty(0), np.empty(0)
    gen = stream.jumps()
    end = t0 + horizon
    batch = max(16, int(lam * horizon * 1.05 + 4.0 * math.sqrt(lam * horizon)) + 16)
    times, sizes = [], []
    last = t0
    while True:
        u = gen.random((batch, 2))
        inter = -np.log1p(-u[:, 0]) / lam
        tt = np.cumsum(np.concatenate(([last], inter)))[1:]
        keep = int(np.searchsorted(tt, end, side="right"))
        times.append(tt[:keep])
        sizes.append(claim.quantile(u[:keep, 1]))
        if keep < batch:
            break
        last = tt[-1]
    return np.concatenate(times), np.concatenate(sizes)


# ---------------------------------------------------------------------------
# block engine
# ---------------------------------------------------------------------------


SCHEME_CODES = {EXACT_Y: 0, EULER: 1}


@dataclass
class _Block:
    times: np.ndarray
    is_jump: np.ndarray
    sizes: np.ndarray
    dt: np.ndarray
    z: np.ndarray


@njit(cache=True)
def _merge_grid(k0, k1, n_steps, step, t0, end, jt, js, j0, t_last, times, is_jump, sizes, dts):
    """Merge uniform steps k0+1..k1 with the claims that fall among them."""
    n = 0
    j = j0
    prev = t_last
    for k in range(k0 + 1, k1 + 1):
        tk = end if k == n_steps else min(t0 + k * step, end)
        while j < jt.shape[0] and jt[j] < tk:
            times[n], is_jump[n], sizes[n], dts[n] = jt[j], True, js[j], jt[j] - prev
            prev = jt[j]
            n += 1
            j += 1
        times[n], is_jump[n], sizes[n], dts[n] = tk, False, 0.0, tk - prev
        prev = tk
        n += 1
        # a claim landing exactly on a grid time follows the grid point
        while j < jt.shape[0] and jt[j] == tk:
            times[n], is_jump[n], sizes[n], dts[n] = jt[j], True, js[j], 0.0
            n += 1
            j += 1
    return n, j


def _blocks(params: ModelParams, cfg: SimConfig, stream: RngStream, t0: float = 0.0) -> Iterator[_Block]:
    jt, js = generate_jumps(params.lam, cfg.horizon, params.claim, stream, t0)
    gen = stream.brownian()
    n_steps = cfg.n_steps
    end = t0 + cfg.horizon
    t_last = t0
    k0, j0 = 0, 0
    while k0 < n_steps:
        k1 = min(k0 + cfg.chunk_steps, n_steps)
        cap = (k1 - k0) + int(np.searchsorted(jt, end, side="right")) - j0
        times, dts, sizes = np.empty(cap), np.empty(cap), np.empty(cap)
        is_jump = np.empty(cap, dtype=np.bool_)
        n, j1 = _merge_grid(k0, k1, n_steps, cfg.dt, t0, end, jt, js, j0, t_last, times, is_jump, sizes, dts)
        z = gen.standard_normal(n)
        yield _Block(times[:n], is_jump[:n], sizes[:n], dts[:n], z)
        t_last = times[n - 1]
        k0, j0 = k1, j1


# Shared state layout: carry = [W, Y at previous point, trapezoid integral of Y,
# discounted claims]; Euler keeps one running value per initial capital in xs.


@njit(cache=True)
def _passage_kernel(scheme, times, dts, z, sizes, is_jump, t0, a, sigma, c, carry, xs, us, levels, out):
    """Record first times below each level for every capital; False once all are set."""
    drift = 0.5 * sigma * sigma - a
    nu, nl = out.shape
    pending = 0
    for r in range(nu):
        for j in range(nl):
            if out[r, j] == np.inf:
                pending += 1
    w, y_prev, integral, claims = carry[0], carry[1], carry[2], carry[3]
    for k in range(times.shape[0]):
        if pending == 0:
            break
        dw = math.sqrt(dts[k]) * z[k]
        yk = 1.0
        d = 0.0
        if scheme == 0:
            w += dw
            yk = math.exp(drift * (times[k] - t0) - sigma * w)
            integral += 0.5 * dts[k] * (y_prev + yk)
            claims += yk * sizes[k]
            d = c * integral - claims
            y_prev = yk
        for r in range(nu):
            if scheme == 0:
                # u enters last so that u -> X is monotone in floating point
                x = (us[r] + d) / yk
            else:
                x = xs[r] + (a * xs[r] + c) * dts[k] + sigma * xs[r] * dw
                x = x - sizes[k]
                xs[r] = x
            for j in range(nl):
                lv = levels[j]
                if out[r, j] == np.inf and x < lv and (lv > 0.0 or is_jump[k]):
                    out[r, j] = times[k]
                    pending -= 1
    carry[0], carry[1], carry[2], carry[3] = w, y_prev, integral, claims
    return pending > 0


@njit(cache=True)
def _exit_kernel(scheme, times, dts, z, sizes, t0, a, sigma, c, carry, xs, u, lo, hi):
    """Index and side (+1 high, -1 low) of the first exit from [lo, hi); (-1, 0) if none."""
    drift = 0.5 * sigma * sigma - a
    w, y_prev, integral, claims = carry[0], carry[1], carry[2], carry[3]
    for k in range(times.shape[0]):
        dw = math.sqrt(dts[k]) * z[k]
        if scheme == 0:
            w += dw
            yk = math.exp(drift * (times[k] - t0) - sigma * w)
            integral += 0.5 * dts[k] * (y_prev + yk)
            claims += yk * sizes[k]
            d = c * integral - claims
            y_prev = yk
            x = (u + d) / yk
        else:
            x = xs[0] + (a * xs[0] + c) * dts[k] + sigma * xs[0] * dw
            x = x - sizes[k]
            xs[0] = x
        if x >= hi:
            return k, 1
        if x < lo:
            return k, -1
    carry[0], carry[1], carry[2], carry[3] = w, y_prev, integral, claims
    return -1, 0


@njit(cache=True)
def _fill_kernel(scheme, times, dts, z, sizes, t0, a, sigma, c, carry, xs, u, x_out, y_out, d_out):
    drift = 0.5 * sigma * sigma - a
    w, y_prev, integral, claims = carry[0], carry[1], carry[2], carry[3]
    for k in range(times.shape[0]):
        dw = math.sqrt(dts[k]) * z[k]
        if scheme == 0:
            w += dw
            yk = math.exp(drift * (times[k] - t0) - sigma * w)
            integral += 0.5 * dts[k] * (y_prev + yk)
            claims += yk * sizes[k]
            d = c * integral - claims
            y_prev = yk
            y_out[k] = yk
            d_out[k] = d
            x_out[k] = (u + d) / yk
        else:
            x = xs[0] + (a * xs[0] + c) * dts[k] + sigma * xs[0] * dw
            x = x - sizes[k]
            xs[0] = x
            x_out[k] = x
    carry[0], carry[1], carry[2], carry[3] = w, y_prev, integral, claims


def _new_state(us) -> tuple[np.ndarray, np.ndarray]:
    return np.array([0.0, 1.0, 0.0, 0.0]), np.array(us, dtype=float)


def _first_below(x: np.ndarray, level: float, is_jump: np.ndarray) -> int:
    """Index of the first value below ``level`` (claims only for level 0), -1 if none."""
    mask = x < level
    if level <= 0.0:
        mask &= is_jump
    i = int(np.argmax(mask))
    return i if mask[i] else -1


# ---------------------------------------------------------------------------
# public simulation API
# ---------------------------------------------------------------------------


def _record_block(params, cfg, block, t0, carry, xs, u):
    n = len(block.times)
    x, y, d = np.empty(n), np.empty(n), np.empty(n)
    _fill_kernel(
        SCHEME_CODES[cfg.scheme], block.times, block.dt, block.z, block.sizes,
        t0, params.a, params.sigma, params.c, carry, xs, float(u), x, y, d,
    )
    return x, y, d


def simulate_path(
    params: ModelParams, u: float, cfg: SimConfig, stream: RngStream, t0: float = 0.0
) -> PathRecord:
    """Simulate one path from X_{t0} = u until ruin or t0 + horizon.

    Every grid and claim point is kept.  For ``exact_y`` the record also
    carries Y and V = X Y so the strong-solution identity can be audited.
    """
    if not u >= 0:
        raise ValueError(f"initial capital must be nonnegative, got {u}")
    levels = [lv for lv in cfg.watch_levels if lv > 0.0]
    carry, xs = _new_state([u])
    parts = {k: [] for k in ("times", "values", "is_jump", "sizes", "y", "v")}
    crossings: dict[float, float | None] = {lv: None for lv in levels}
    ruin_time = None
    for block in _blocks(params, cfg, stream, t0):
        x, y, d = _record_block(params, cfg, block, t0, carry, xs, u)
        stop = len(x)
        ruin = _first_below(x, 0.0, block.is_jump)
        if ruin >= 0:
            stop = ruin + 1
            ruin_time = float(block.times[ruin])
        for lv in levels:
            if crossings[lv] is None:
                i = _first_below(x[:stop], lv, block.is_jump)
                if i >= 0:
                    crossings[lv] = float(block.times[i])
        parts["times"].append(block.times[:stop])
        parts["values"].append(x[:stop])
        parts["is_jump"].append(block.is_jump[:stop])
        parts["sizes"].append(block.sizes[:stop])
        if cfg.scheme == EXACT_Y:
            parts["y"].append(y[:stop])
            parts["v"].append(u + d[:stop])
        if ruin_time is not None:
            break
    crossings[0.0] = ruin_time
    times = np.concatenate([[t0]] + parts["times"])
    values = np.concatenate([[float(u)]] + parts["values"])
    is_jump = np.concatenate([[False]] + parts["is_jump"])
    sizes = np.concatenate([[0.0]] + parts["sizes"])
    y = v = None
    if parts["y"]:
        y = np.concatenate([[1.0]] + parts["y"])
        v = np.concatenate([[float(u)]] + parts["v"])
    return PathRecord(
        times=times,
        values=values,
        is_jump=is_jump,
        claim_sizes=sizes,
        jump_pre_values=np.where(is_jump, values + sizes, np.nan),
        ruin_time=ruin_time,
        crossings=dict(sorted(crossings.items(), reverse=True)),
        y=y,
        v=v,
    )


def simulate_coupled_initial(
    params: ModelParams, u: float, v: float, cfg: SimConfig, stream: RngStream
) -> CoupledPair:
    """Paths from u and v (u >= v) on the same Brownian motion and claims."""
    if not u >= v:
        raise OrderError(f"need u >= v, got u={u}, v={v}")
    if not v >= 0:
        raise ValueError("initial capitals must be nonnegative")
    return CoupledPair(
        simulate_path(params, u, cfg, stream), simulate_path(params, v, cfg, stream), "initial_capital"
    )


def simulate_coupled_cap(
    params: ModelParams, u: float, M: float, cfg: SimConfig, stream: RngStream
) -> CoupledPair:
    """Uncapped (primary) and capped-at-M (secondary) claims from the same draws."""
    capped = params.with_claim(cap_claims(params.claim, M))
    return CoupledPair(simulate_path(params, u, cfg, stream), simulate_path(capped, u, cfg, stream), "claim_cap")


def passage_times(
    params: ModelParams,
    us: Sequence[float],
    levels: Sequence[float],
    cfg: SimConfig,
    stream: RngStream,
    t0: float = 0.0,
) -> np.ndarray:
    """First time below each level, shape (len(us), len(levels)); inf if never.

    All initial capitals share one realisation of the randomness.  Level 0
    means ruin and is only checked at claims.  The path is abandoned once
    every level has been crossed for every capital.
    """
    us = np.asarray(us, dtype=float)
    level_arr = np.asarray(levels, dtype=float)
    out = np.full((len(us), len(level_arr)), np.inf)
    carry, xs = _new_state(us)
    code = SCHEME_CODES[cfg.scheme]
    for block in _blocks(params, cfg, stream, t0):
        more = _passage_kernel(
            code, block.times, block.dt, block.z, block.sizes, block.is_jump,
            t0, params.a, params.sigma, params.c, carry, xs, us, level_arr, out,
        )
        if not more:
            break
    return out


def exit_outcome(
    params: ModelParams, u: float, lo: float, hi: float, cfg: SimConfig, stream: RngStream
) -> tuple[int, float]:
    """First exit from [lo, hi): (+1 high | -1 low | 0 censored, time)."""
    carry, xs = _new_state([u])
    code = SCHEME_CODES[cfg.scheme]
    for block in _blocks(params, cfg, stream):
        k, side = _exit_kernel(
            code, block.times, block.dt, block.z, block.sizes,
            0.0, params.a, params.sigma, params.c, carry, xs, float(u), float(lo), float(hi),
        )
        if side:
            return int(side), float(block.times[k])
    return 0, math.inf


def terminal_value(
    params: ModelParams, u: float, cfg: SimConfig, stream: RngStream, t0: float = 0.0
) -> float:
    """Value at t0 + horizon, or the post-claim value for ruined paths."""
    return simulate_path(params, u, cfg, stream, t0).terminal_value


def write_trace(record: PathRecord, path: str | os.PathLike) -> None:
    """CSV with columns time, value, is_jump, claim_size (blank off-claim)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "value", "is_jump", "claim_size"])
        for t, x, j, s in zip(record.times, record.values, record.is_jump, record.claim_sizes):
            w.writerow([repr(float(t)), repr(float(x)), int(j), repr(float(s)) if j else ""])


# ---------------------------------------------------------------------------
# path farm
# ---------------------------------------------------------------------------


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        env = os.environ.get("RUINLAB_WORKERS")
        workers = int(env) if env else 1
    if workers < 1:
        raise InvalidConfig(f"worker count must be >= 1, got {workers}")
    return workers


def _run_block(fn, master_seed: int, epoch: int, start: int, stop: int) -> list:
    return [fn(RngStream(master_seed, i, epoch)) for i in range(start, stop)]


def run_farm(
    fn: Callable[[RngStream], object],
    n_paths: int,
    master_seed: int,
    workers: int | None = None,
    epoch: int = 0,
) -> list:
    """Evaluate ``fn`` on paths 0..n_paths-1; results are in path-index order.

    With more than one worker ``fn`` must be picklable (a module-level
    function or a functools.partial of one).
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    workers = min(resolve_workers(workers), n_paths)
    if workers == 1:
        return _run_block(fn, master_seed, epoch, 0, n_paths)
    n_blocks = workers * 4
    edges = np.linspace(0, n_paths, n_blocks + 1).astype(int)
    results: list = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_run_block, fn, master_seed, epoch, int(a), int(b))
            for a, b in zip(edges[:-1], edges[1:])
            if b > a
        ]
        for fut in futures:
            results.extend(fut.result())
    return results
