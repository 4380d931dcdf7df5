"""Command-line entry point.

Exit codes: 0 success, 2 config error, 3 estimation failure, 4 singular scene.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import replace

from .config import ConfigError, ScenarioConfig, load_config
from .estimator import BlindSceneError, InitFailure
from .geometry import DegenerateGeometryError
from . import experiments

log = logging.getLogger("riscal")

EXIT_OK, EXIT_CONFIG, EXIT_ESTIMATION, EXIT_SINGULAR = 0, 2, 3, 4


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "inf"  # never emit NaN
        return repr(v)
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    w = csv.writer(buf, lineterminator="\n")
    header = list(rows[0])
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in header])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 or math.isnan(obj) else "-inf"
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def to_json(obj) -> str:
    return json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n"


def _emit(text: str, out) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v.strip()]


def _ints(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML scenario file (defaults: built-in benchmark scenario)")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--zero-noise", action="store_true", help="measurements equal the true parameters")
    common.add_argument("--full-fidelity", action="store_true", help="full sounding budget for the heat map")
    common.add_argument("--workers", type=int, help="override run.workers")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="riscal", description="RIS calibration and user positioning bounds/estimation")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("bounds-map", parents=[common], help="bounds over a grid of user positions")
    m.add_argument("--nx", type=int)
    m.add_argument("--ny", type=int)

    r = sub.add_parser("bounds-vs-ris-size", parents=[common], help="bounds versus number of RIS elements")
    r.add_argument("--sizes", type=_ints, help="comma-separated perfect squares, e.g. 100,400,900")
    r.add_argument("--variant", action="append", help="known-state variant (repeatable)")

    sub.add_parser("estimate", parents=[common], help="initialise and refine one scene, JSON output")

    mc = sub.add_parser("mc-sweep-users", parents=[common], help="Monte Carlo RMSE and bounds versus user count")
    mc.add_argument("--users", type=_ints, help="comma-separated user counts")
    mc.add_argument("--trials", type=int)

    cs = sub.add_parser("cost-surface", parents=[common], help="initialisation cost grid for one user")
    cs.add_argument("--user", type=_floats, help="x,y,z of the user (overrides the config)")
    return p


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    run = cfg.run
    if args.seed is not None:
        run = replace(run, seed=args.seed)
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be positive")
        run = replace(run, workers=args.workers)
    if args.zero_noise:
        run = replace(run, zero_noise=True)
    return replace(cfg, run=run)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _load(args)
        if args.command == "cost-surface" and args.user is not None:
            if len(args.user) != 3:
                raise ConfigError("--user needs three coordinates")
            cfg = replace(cfg, users=(replace(cfg.users[0], position=tuple(args.user)),))
        if args.command == "bounds-vs-ris-size" and args.variant:
            unknown = sorted(set(args.variant) - set(experiments.KNOWN_VARIANTS))
            if unknown:
                raise ConfigError(f"unknown variant(s): {unknown}")
        if args.command == "bounds-vs-ris-size" and args.sizes:
            if any(n < 1 or math.isqrt(n) ** 2 != n for n in args.sizes):
                raise ConfigError("--sizes entries must be perfect squares")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        return _dispatch(args, cfg)
    except (BlindSceneError, DegenerateGeometryError) as exc:
        print(f"singular scene: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except InitFailure as exc:
        print(f"estimation failure: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


def _dispatch(args, cfg: ScenarioConfig) -> int:
    zero = cfg.run.zero_noise
    if args.command == "bounds-map":
        rows = experiments.bounds_map(cfg, args.nx, args.ny, args.full_fidelity)
        log.info("%d cells, %d singular", len(rows), sum(r["singular"] for r in rows))
        _emit(rows_to_csv(rows), args.out)
        return EXIT_OK

    if args.command == "bounds-vs-ris-size":
        rows = experiments.bounds_vs_ris_size(cfg, args.sizes, args.variant)
        _emit(rows_to_csv(rows), args.out)
        return EXIT_OK

    if args.command == "mc-sweep-users":
        rows = experiments.mc_sweep_users(cfg, args.users, args.trials, zero)
        _emit(rows_to_csv(rows), args.out)
        return EXIT_OK

    if args.command == "cost-surface":
        rows, info = experiments.cost_surface_rows(cfg, zero)
        if info["ambiguous"]:
            log.warning("ambiguous cost surface: %d basins", info["basins"])
        log.info("argmin d0=%.2f m o3=%.2f deg, %d basin(s)", info["d0_hat_m"], info["o3_hat_deg"], info["basins"])
        _emit(rows_to_csv(rows), args.out)
        return EXIT_OK

    result = experiments.estimate_scene(cfg, zero)
    if result["ambiguous"]:
        log.warning("ambiguous initialisation: several cost basins, the estimate may be a mirror solution")
    _emit(to_json(result), args.out)
    return EXIT_OK if result["converged"] else EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
