"""Command-line runner: Monte-Carlo batches, CSV traces and a JSON summary.

Exit codes: 0 success, 1 configuration error, 2 invariant violation,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attacks import AttackModel
from .config import (
    PRESETS,
    ConfigError,
    ScenarioConfig,
    build_attack,
    build_game,
    build_schedules,
    build_topology,
    load_config,
    load_preset,
    with_overrides,
)
from .dbrosa import run_simulation
from .metrics import COLUMNS, FitError, MetricsTrace, OracleError, phi_variation, solve_path, sublinearity_fit
from .topology import validate_redundancy

log = logging.getLogger("resilient_gne")

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_RUNTIME = 0, 1, 2, 3


@dataclass
class RunResult:
    run: int
    seed: int
    trace: np.ndarray
    violations: dict
    seconds: float


def format_csv(rows: np.ndarray) -> str:
    lines = [",".join(COLUMNS)]
    for r in rows:
        lines.append(",".join([str(int(r[0]))] + ["%.12g" % v for v in r[1:]]))
    return "\n".join(lines) + "\n"


def _run_one(args) -> RunResult:
    cfg, run, oracle = args
    topo = build_topology(cfg.topology)
    game = build_game(cfg.game, topo.cluster_sizes)
    sched = build_schedules(cfg, topo.n)
    attack: AttackModel = build_attack(cfg.attack)
    seed = cfg.base_seed + run
    tracer = MetricsTrace(game, oracle, topo.honest_mask())
    start = time.perf_counter()
    counts = run_simulation(topo, game, sched, attack, cfg.rounds, seed, [tracer], strict=cfg.strict_invariants)
    return RunResult(run, seed, tracer.array(), counts.as_dict(), time.perf_counter() - start)


def _slope(col) -> float | None:
    try:
        return sublinearity_fit(col)
    except FitError:
        return None


def run_batch(cfg: ScenarioConfig, workers: int = 1, out: Path | None = None) -> tuple[int, dict]:
    """Run all Monte-Carlo repetitions and write the artifacts; returns (exit code, summary)."""
    out = Path(cfg.output.dir if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    topo = build_topology(cfg.topology)
    game = build_game(cfg.game, topo.cluster_sizes)
    honest = topo.honest_mask()
    report = validate_redundancy(topo, cfg.topology.exhaustive_limit, seed=cfg.base_seed)
    for line in report.lines():
        log.info("%s", line)
    if not report.ok:
        log.warning("topology redundancy checks failed; results carry no resilience guarantee")

    t0 = time.perf_counter()
    oracle = solve_path(game, cfg.rounds, honest, cfg.oracle.tol, cfg.oracle.max_iter)
    oracle_seconds = time.perf_counter() - t0

    jobs = [(cfg, k, oracle) for k in range(cfg.monte_carlo_runs)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    for r in results:
        if cfg.output.per_run_csv:
            (out / f"run_{r.run:03d}.csv").write_text(format_csv(r.trace))
    mean = np.mean([r.trace for r in results], axis=0)
    (out / "mean.csv").write_text(format_csv(mean))

    violations = {k: int(sum(r.violations[k] for r in results)) for k in results[0].violations}
    ph, pb, phi = phi_variation(oracle, honest) if len(oracle) > 1 else (0.0, 0.0, 0.0)
    summary = {
        "name": cfg.name,
        "attack": cfg.attack.kind,
        "rounds": cfg.rounds,
        "runs": cfg.monte_carlo_runs,
        "base_seed": cfg.base_seed,
        "slope_regret": _slope(mean[:, COLUMNS.index("regret_cum")]),
        "slope_cv": _slope(mean[:, COLUMNS.index("cv_cum")]),
        "final_consensus_diameter": [float(r.trace[-1, COLUMNS.index("consensus_diameter")]) for r in results],
        "final_mean_dist_to_sgne": float(mean[-1, COLUMNS.index("mean_dist_to_sgne")]),
        "phi": {"honest": ph, "byzantine": pb, "total": phi},
        "oracle_max_residual": float(max(s.residual for s in oracle)),
        "initial_feasible": bool(mean[0, COLUMNS.index("cv_inc")] == 0.0),
        "invariant_violations": violations,
        "topology_checks": report.lines(),
        "wall_clock": {"oracle_s": oracle_seconds, "runs_s": [r.seconds for r in results]},
        "config": cfg.to_dict(),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=str) + "\n")
    code = EXIT_INVARIANT if sum(violations.values()) else EXIT_OK
    return code, summary


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="resilient-gne", description=__doc__.splitlines()[0])
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="scenario YAML file")
    src.add_argument("--preset", choices=PRESETS, help="shipped scenario")
    p.add_argument("--attack", help="none, gaussian, max_value, sign_flipping or sample_duplicating")
    p.add_argument("--rounds", type=int, help="horizon T")
    p.add_argument("--runs", type=int, help="Monte-Carlo repetitions")
    p.add_argument("--seed", type=int, help="base seed; run k uses seed + k")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--workers", type=int, default=1, help="parallel processes over runs")
    p.add_argument("--validate-only", action="store_true", help="load and validate, then exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else load_preset(args.preset)
        cfg = with_overrides(cfg, attack=args.attack, rounds=args.rounds, runs=args.runs, seed=args.seed, out=args.out)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.validate_only:
        print(f"{cfg.name}: ok")
        return EXIT_OK
    try:
        code, summary = run_batch(cfg, args.workers)
    except (OracleError, RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({k: summary[k] for k in ("name", "attack", "slope_regret", "slope_cv", "invariant_violations")}))
    if code == EXIT_INVARIANT:
        print("invariant violations detected", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
