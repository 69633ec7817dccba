"""Batch front-end: ``ruinlab run <config.json> [--seed S] [--workers N] [--out DIR]``.

Exit codes: 0 when every check passes (or the experiment has no checks),
1 when any check fails, 2 on a configuration or validation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from . import estimate, model, sim, verify
from .errors import RuinlabError
from .estimate import ExitEstimate, RuinEstimate
from .verify import BoundReport, SignReport

log = logging.getLogger("ruinlab")

KINDS = (
    "simulate",
    "estimate",
    "sweep",
    "verify-theorem",
    "verify-lemma-a",
    "verify-lemma-b",
    "verify-certain-ruin",
    "certify-signs",
    "check-markov",
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(RuinlabError, ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment_id: str
    kind: str
    params: model.ModelParams
    sim: sim.SimConfig
    experiment: dict
    master_seed: int
    n_paths: int
    output_dir: Path


def fmt(x: Any) -> str:
    """Round-trip float formatting; blank for missing values."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "pass" if x else "fail"
    if isinstance(x, float):
        return repr(x)
    return str(x)


# ---------------------------------------------------------------------------
# config loading
# ---------------------------------------------------------------------------


def _load_json(path: Path) -> dict:
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        lines = text.splitlines()
        line = lines[e.lineno - 1] if 0 < e.lineno <= len(lines) else ""
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}\n    {line}\n    {' ' * (e.colno - 1)}^") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def _need(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"missing '{key}' in {where}")
    return block[key]


def parse_claim(block: dict) -> model.ClaimDistribution:
    kind = _need(block, "kind", "model.claim")
    if kind == "exponential":
        return model.Exponential(float(_need(block, "mean", "model.claim")))
    if kind == "uniform":
        return model.Uniform(float(_need(block, "hi", "model.claim")))
    if kind == "truncated_exponential":
        return model.TruncatedExponential(float(_need(block, "mean", "model.claim")), float(_need(block, "cap", "model.claim")))
    if kind == "deterministic":
        return model.Deterministic(float(_need(block, "size", "model.claim")))
    raise ConfigError(f"unknown claim kind {kind!r}")


def parse_model(block: dict) -> model.ModelParams:
    if ("sigma" in block) == ("sigma2" in block):
        raise ConfigError("model needs exactly one of 'sigma' or 'sigma2'")
    sigma = float(block["sigma"]) if "sigma" in block else math.sqrt(float(block["sigma2"]))
    return model.ModelParams(
        a=float(_need(block, "a", "model")),
        sigma=sigma,
        c=float(_need(block, "c", "model")),
        lam=float(_need(block, "lambda", "model")),
        claim=parse_claim(_need(block, "claim", "model")),
    )


def load_config(path: str | os.PathLike, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    data = _load_json(path)
    kind = _need(data, "kind", "config")
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}")
    try:
        params = parse_model(_need(data, "model", "config"))
        simb = dict(_need(data, "simulation", "config"))
        cfg = sim.SimConfig(
            dt=float(_need(simb, "dt", "simulation")),
            horizon=float(_need(simb, "horizon", "simulation")),
            scheme=simb.get("scheme", sim.EXACT_Y),
            watch_levels=tuple(simb.get("watch_levels", ())),
        )
        n_paths = int(data.get("n_paths", 1))
        if n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
    except (TypeError, ValueError) as e:
        if isinstance(e, RuinlabError):
            raise
        raise ConfigError(str(e)) from None
    return ExperimentConfig(
        experiment_id=str(data.get("experiment_id", path.stem)),
        kind=kind,
        params=params,
        sim=cfg,
        experiment=dict(data.get("experiment", {})),
        master_seed=int(seed if seed is not None else data.get("master_seed", 0)),
        n_paths=n_paths,
        output_dir=Path(out if out is not None else data.get("output_dir", f"results/{path.stem}")),
    )


# ---------------------------------------------------------------------------
# validation and execution
# ---------------------------------------------------------------------------


def validate(cfg: ExperimentConfig) -> None:
    """Check the target operation's preconditions without simulating anything."""
    p, e = cfg.params, cfg.experiment
    kind = cfg.kind
    if kind in ("simulate", "estimate", "sweep"):
        u = float(_need(e, "u", "experiment"))
        if kind != "simulate":
            lv = float(e.get("level", 0.0))
            if not 0.0 <= lv < u:
                raise ConfigError(f"LevelError: need 0 <= level < u, got level={lv}, u={u}")
        if kind == "sweep":
            hs = [float(h) for h in _need(e, "horizons", "experiment")]
            if not hs or any(b <= a for a, b in zip(hs, hs[1:])):
                raise ConfigError("horizons must be strictly increasing")
    elif kind == "verify-theorem":
        M = float(e.get("M", p.claim.essential_sup))
        verify.require_decay_regime(p, M, [float(u) for u in _need(e, "u_values", "experiment")])
    elif kind == "verify-lemma-a":
        alpha = e.get("alpha")
        if alpha is None:
            if not model.rho(p) < 1:
                raise model.RegimeError(f"exit bound A needs rho < 1, got rho = {model.rho(p)}")
            alpha = model.default_alpha(p)
        verify.require_lemma_a(p, float(alpha), float(_need(e, "u", "experiment")), float(_need(e, "n_level", "experiment")))
    elif kind == "verify-lemma-b":
        verify.require_lemma_b(p, float(_need(e, "u", "experiment")), float(_need(e, "n_level", "experiment")))
    elif kind == "verify-certain-ruin":
        verify.require_certain_ruin_regime(p, [float(u) for u in _need(e, "u_values", "experiment")])
        _need(e, "horizons", "experiment")
    elif kind == "certify-signs":
        regime = e.get("regime", verify.regime_of(p))
        if regime != verify.regime_of(p):
            raise model.RegimeError(f"regime {regime} requested but parameters are in {verify.regime_of(p)}")
        model.claim_bound(p)
    elif kind == "check-markov":
        for key in ("x", "s", "t"):
            _need(e, key, "experiment")
        if cfg.n_paths < 1000:
            raise ConfigError("check-markov needs n_paths >= 1000")


REPORT_COLUMNS = [
    "experiment_id", "name", "direction", "u", "level", "horizon", "n_paths", "n_hit",
    "p_hat", "ci_lo", "ci_hi", "analytic_bound", "observed", "slack", "verdict", "seed",
]
ESTIMATE_COLUMNS = ["experiment_id", "u", "level", "horizon", "n_paths", "n_hit", "p_hat", "ci_lo", "ci_hi", "seed"]


def _estimate_row(exp_id: str, est: RuinEstimate, seed: int) -> list:
    return [exp_id, est.u, est.level, est.horizon, est.n_paths, est.n_hit, est.p_hat, est.ci_lo, est.ci_hi, seed]


def _report_row(exp_id: str, rep: BoundReport, seed: int) -> list:
    est = rep.estimate
    u = rep.inputs.get("u")
    level = rep.inputs.get("level")
    horizon = rep.inputs.get("horizon")
    n_paths = rep.inputs.get("n_paths")
    n_hit = p_hat = ci_lo = ci_hi = None
    if isinstance(est, RuinEstimate):
        u, level, horizon, n_paths = est.u, est.level, est.horizon, est.n_paths
        n_hit, p_hat, ci_lo, ci_hi = est.n_hit, est.p_hat, est.ci_lo, est.ci_hi
    elif isinstance(est, ExitEstimate):
        u, level, horizon, n_paths = est.u, est.lo, est.horizon, est.n_paths
        n_hit, p_hat = est.n_exit_hi, est.p_exit_hi
        ci_lo, ci_hi = est.ci_adverse_hi
    return [
        exp_id, rep.name, rep.direction, u, level, horizon, n_paths, n_hit, p_hat, ci_lo, ci_hi,
        rep.analytic_bound, rep.observed, rep.slack, rep.passed, seed,
    ]


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def emit_plot_data(reports: Sequence[BoundReport], out_dir: str | os.PathLike) -> list[Path]:
    """Whitespace-separated (u, p_hat, ci_lo, ci_hi) and (u, bound) files per check and level."""
    if not reports:
        raise ValueError("emit_plot_data needs at least one report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups: dict[str, list[tuple[float, float, float, float, float]]] = {}
    for rep in reports:
        est = rep.estimate
        if isinstance(est, RuinEstimate):
            u, p, lo, hi, level = est.u, est.p_hat, est.ci_lo, est.ci_hi, est.level
        elif isinstance(est, ExitEstimate):
            (lo, hi), u, p, level = est.ci_adverse_hi, est.u, est.p_exit_hi, None
        else:
            continue
        stem = rep.name.split("[")[0] + ("" if level is None else f"_level{level:g}")
        groups.setdefault(stem, []).append((u, p, lo, hi, rep.analytic_bound))
    written = []
    for stem, rows in groups.items():
        rows.sort(key=lambda r: r[0])
        est_path, bound_path = out_dir / f"{stem}_estimate.dat", out_dir / f"{stem}_bound.dat"
        with open(est_path, "w") as fh:
            fh.write("# u p_hat ci_lo ci_hi\n")
            fh.writelines(f"{fmt(u)} {fmt(p)} {fmt(lo)} {fmt(hi)}\n" for u, p, lo, hi, _ in rows)
        with open(bound_path, "w") as fh:
            fh.write("# u analytic_bound\n")
            fh.writelines(f"{fmt(u)} {fmt(b)}\n" for u, *_, b in rows)
        written += [est_path, bound_path]
    return written


def execute(cfg: ExperimentConfig, workers: int | None = None) -> tuple[int, list[str]]:
    """Run the experiment, write its files and return (exit code, summary lines)."""
    p, e, c = cfg.params, cfg.experiment, cfg.sim
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    seed, n = cfg.master_seed, cfg.n_paths
    lines: list[str] = []
    reports: list[BoundReport] = []
    code = EXIT_OK
    results = out / "results.csv"

    if cfg.kind == "simulate":
        u = float(e["u"])
        trace_dir = out / "traces"
        if e.get("trace", True):
            trace_dir.mkdir(exist_ok=True)
        rows = []
        for i in range(n):
            rec = sim.simulate_path(p, u, c, sim.RngStream(seed, i))
            if e.get("trace", True):
                sim.write_trace(rec, trace_dir / f"path_{i}.csv")
            rows.append([cfg.experiment_id, i, u, rec.ruin_time, rec.terminal_value, int(rec.is_jump.sum()), seed])
            lines.append(f"path {i}: terminal={rec.terminal_value:.10g} ruin_time={rec.ruin_time}")
        _write_csv(results, ["experiment_id", "path_index", "u", "ruin_time", "terminal_value", "n_jumps", "seed"], rows)
    elif cfg.kind == "estimate":
        est = estimate.estimate_ruin(p, float(e["u"]), float(e.get("level", 0.0)), c, n, seed, workers)
        _write_csv(results, ESTIMATE_COLUMNS, [_estimate_row(cfg.experiment_id, est, seed)])
        lines.append(f"u={est.u:g} level={est.level:g} T={est.horizon:g}: p_hat={est.p_hat:.6g} ci=[{est.ci_lo:.6g}, {est.ci_hi:.6g}]")
    elif cfg.kind == "sweep":
        sweep = estimate.horizon_sweep(p, float(e["u"]), float(e.get("level", 0.0)), c, e["horizons"], n, seed, workers)
        _write_csv(results, ESTIMATE_COLUMNS, [_estimate_row(cfg.experiment_id, s, seed) for s in sweep])
        lines += [f"T={s.horizon:g}: p_hat={s.p_hat:.6g} ci=[{s.ci_lo:.6g}, {s.ci_hi:.6g}]" for s in sweep]
    elif cfg.kind == "certify-signs":
        rep = verify.certify_generator_signs(
            p, e.get("regime", verify.regime_of(p)), e.get("alpha"), int(e.get("n_points", 200)), float(e.get("span", 100.0))
        )
        _write_csv(out / "results.csv", ["x", "generator", "displayed_bound"], zip(rep.grid.tolist(), rep.values.tolist(), rep.bound_values.tolist()))
        x, v = rep.worst_point
        ok = rep.all_nonpositive and rep.bound_all_nonpositive
        lines.append(
            f"certify_signs[{rep.regime}]: grid=[{rep.grid[0]:.6g}, {rep.grid[-1]:.6g}] max generator={v:.6g} at x={x:.6g} "
            f"all_nonpositive={rep.all_nonpositive} bound_nonpositive={rep.bound_all_nonpositive} -> {'pass' if ok else 'fail'}"
        )
        code = EXIT_OK if ok else EXIT_FAIL
    else:
        if cfg.kind == "verify-theorem":
            M = float(e.get("M", p.claim.essential_sup))
            reports = verify.check_theorem_decay(p, M, e["u_values"], c, n, seed, workers)
        elif cfg.kind == "verify-lemma-a":
            reports = [verify.check_exit_bound_A(p, e.get("alpha"), float(e["u"]), float(e["n_level"]), c, n, seed, workers)]
        elif cfg.kind == "verify-lemma-b":
            reports = [verify.check_exit_bound_B(p, float(e["u"]), float(e["n_level"]), c, n, seed, workers)]
        elif cfg.kind == "verify-certain-ruin":
            reports = verify.check_certain_ruin(
                p, e["u_values"], c, e["horizons"], n, seed, float(e.get("threshold", 0.9)), e.get("cap"), workers
            )
        elif cfg.kind == "check-markov":
            reports = [
                verify.check_markov_restart(
                    p, float(e["x"]), float(e["s"]), float(e["t"]), c, n, seed, float(e.get("ks_level", 0.01)), workers
                )
            ]
        _write_csv(results, REPORT_COLUMNS, [_report_row(cfg.experiment_id, r, seed) for r in reports])
        lines += [r.summary_line() for r in reports]
        if any(r.estimate is not None for r in reports):
            emit_plot_data(reports, out / "plot")
        code = EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL
    return code, lines


def run(config_path: str | os.PathLike, seed: int | None = None, workers: int | None = None, out: str | None = None) -> int:
    try:
        cfg = load_config(config_path, seed, out)
        validate(cfg)
        workers = sim.resolve_workers(workers)
    except (RuinlabError, ValueError, TypeError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    started = time.time()
    try:
        code, lines = execute(cfg, workers)
    except RuinlabError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    stamp = time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started))
    header = [
        f"# {cfg.experiment_id} ({cfg.kind}) seed={cfg.master_seed} n_paths={cfg.n_paths} workers={workers}",
        f"# started {stamp}, {time.time() - started:.1f}s",
    ]
    (cfg.output_dir / "summary.txt").write_text("\n".join(header + lines) + "\n")
    for line in lines:
        print(line)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="ruinlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=None, help="override the config's master_seed")
    r.add_argument("--workers", type=int, default=None, help="worker processes (default: $RUINLAB_WORKERS or 1)")
    r.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING)
    return run(args.config, args.seed, args.workers, args.out)


if __name__ == "__main__":
    sys.exit(main())
