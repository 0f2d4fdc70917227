#!/usr/bin/env python3
"""
QNG Depth Toolkit command line.

    python cli.py model config.json
    python cli.py depth config.json | --p1 0.1 --p2plus 1e-5 [--fiber-loss-db-per-km 0.2]
    python cli.py trajectory config.json --atten-db 0 5 10 15 --out traj.csv
    python cli.py simulate run.json --out tags.bin
    python cli.py estimate tags.bin --tau 2e-9 [--offset 20e-9]
    python cli.py sweep spec.json --out profile.csv
    python cli.py optimize spec.json --out profile.csv
    python cli.py compare cw.json pulsed.json

Results go to stdout (or --out, with a manifest written next to it); errors are
reported as JSON on stderr with a nonzero exit code.
"""
import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError
from sqlalchemy.exc import SQLAlchemyError

from config import QNG_THREADS, RECORD_RUNS, setup_logging
from depth_optimizer import SweepSpec, compare_cw_pulsed, profile_csv, refine, sweep
from errors import QngError, TimeTagFormatError, UsageError
from estimation import calibrate_offset, count_coincidences, count_coincidences_partitioned, estimate
from fock_core import ClickProbabilities, apply_loss, click_probabilities, g2, mean_photon_number
from manifest import RunManifest, json_safe, write_manifest
from run_store import RunStore
from sources import SpdcConfig, heralded_state, parse_source_config
from timetag_io import read_timetags, write_timetags
from timetag_sim import RunConfig, simulate
from witnesses import (
    DepthMethod,
    Feature,
    attenuation_trajectory,
    classify,
    depth_bisection,
    qng_depth_closed_form,
    transmittance,
    with_fiber_range,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_DOMAIN, EXIT_SCHEMA = 0, 1, 2

TRAJECTORY_COLUMNS = ("attenuation_db", "transmittance", "p1", "p2plus", "qng_border")

# Where each command's schema errors are attributed
COMMAND_MODULES = {
    "model": "sources",
    "depth": "witnesses",
    "trajectory": "witnesses",
    "simulate": "timetag_sim",
    "estimate": "estimation",
    "sweep": "depth_optimizer",
    "optimize": "depth_optimizer",
    "compare": "depth_optimizer",
    "runs": "run_store",
}


def _dumps(payload: Any) -> str:
    return json.dumps(json_safe(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _load_json(path: str) -> Dict[str, Any]:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"input file {path} not found", "cli")
    except json.JSONDecodeError as e:
        raise UsageError(f"{path} is not valid JSON: {e}", "cli")


def _source_of(data: Dict[str, Any]):
    """Configs may hold the source at top level or under "source"."""
    return parse_source_config(data["source"] if "source" in data else data)


def _model_state(data: Dict[str, Any]):
    dist = heralded_state(_source_of(data))
    return apply_loss(dist, transmittance(data.get("attenuator_db", 0.0)))


def _emit(args, command: str, text: str, config: Any, seed: Optional[int] = None, summary: Any = None) -> None:
    """Write ``text`` to --out (plus manifest) or stdout, and record the run."""
    out = getattr(args, "out", None)
    outputs: List[str] = []
    if out:
        Path(out).write_bytes(text.encode("utf-8"))
        outputs.append(str(out))
    manifest = RunManifest.build(command, config, seed=seed, outputs=outputs)
    if out:
        write_manifest(manifest, Path(out))
        logger.info(f"💾 Wrote {out}")
    else:
        sys.stdout.write(text)
    _record(manifest, summary)


def _record(manifest: RunManifest, summary: Any) -> None:
    if not RECORD_RUNS:
        return
    try:
        RunStore().record(manifest, json_safe(summary))
    except SQLAlchemyError as e:
        logger.warning(f"⚠️ Could not record run: {e}")


def cmd_model(args) -> int:
    data = _load_json(args.config)
    state = _model_state(data)
    verdict = classify(state)
    payload = {
        **click_probabilities(state).model_dump(include={"p0", "p1", "p2plus"}),
        "mean_photon_number": mean_photon_number(state),
        "g2": g2(state),
        "verdict": verdict.model_dump(),
    }
    _emit(args, "model", _dumps(payload), data, summary={"label": verdict.label})
    return EXIT_OK


def cmd_depth(args) -> int:
    if args.method == DepthMethod.CLOSED_FORM.value and args.feature != Feature.QNG.value:
        raise UsageError("the closed form only exists for the QNG depth", "cli")
    if args.config:
        data = _load_json(args.config)
        state = _model_state(data)
        method = DepthMethod(args.method or DepthMethod.BISECTION.value)
        if method == DepthMethod.BISECTION:
            report = depth_bisection(state, Feature(args.feature))
        else:
            report = qng_depth_closed_form(click_probabilities(state))
    else:
        if args.p1 is None or args.p2plus is None:
            raise UsageError("depth needs a config file or both --p1 and --p2plus", "cli")
        if args.method == DepthMethod.BISECTION.value:
            raise UsageError("bisection needs a photon-number state; pass a config file", "cli")
        data = {"p1": args.p1, "p2plus": args.p2plus}
        report = qng_depth_closed_form(ClickProbabilities.from_values(args.p1, args.p2plus))
    if args.fiber_loss_db_per_km is not None:
        report = with_fiber_range(report, args.fiber_loss_db_per_km)
    payload = {**report.model_dump(), "summary": report.describe()}
    config = {"input": data, "feature": args.feature, "method": args.method, "fiber": args.fiber_loss_db_per_km}
    _emit(args, "depth", _dumps(payload), config, summary={"depth_db": report.depth_db})
    return EXIT_OK


def cmd_trajectory(args) -> int:
    data = _load_json(args.config)
    points = attenuation_trajectory(_model_state(data), args.atten_db)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    for pt in points:
        writer.writerow([repr(pt.attenuation_db), repr(pt.transmittance), repr(pt.p1), repr(pt.p2plus),
                         repr(2.0 / 3.0 * pt.p1 ** 3)])
    _emit(args, "trajectory", buffer.getvalue(), {"input": data, "atten_db": args.atten_db})
    return EXIT_OK


def cmd_simulate(args) -> int:
    data = _load_json(args.config)
    cfg = RunConfig.model_validate(data)
    stream = simulate(cfg, workers=args.workers)
    out = Path(args.out)
    write_timetags(stream, out)
    manifest = RunManifest.build("simulate", data, seed=cfg.seed, outputs=[str(out)])
    write_manifest(manifest, out)
    summary = {"tags": len(stream), "counts": {str(k): v for k, v in stream.counts().items()}}
    sys.stdout.write(_dumps(summary))
    _record(manifest, summary)
    return EXIT_OK


def cmd_estimate(args) -> int:
    stream = read_timetags(args.tags)
    offset = args.offset if args.offset is not None else calibrate_offset(stream)
    if args.workers and args.workers > 1:
        counts = count_coincidences_partitioned(stream, args.tau, offset, workers=args.workers)
    else:
        counts = count_coincidences(stream, args.tau, offset)
    result = estimate(counts)
    config = {"tags": str(args.tags), "tau_s": args.tau, "offset_s": offset}
    _emit(args, "estimate", _dumps(result.model_dump()), config, summary=result.model_dump())
    return EXIT_OK


def _sweep_command(args, command: str) -> int:
    data = _load_json(args.spec)
    spec = SweepSpec.model_validate(data)
    result = sweep(spec, workers=args.workers)
    if command == "optimize":
        result = refine(result, spec)
    summary = result.model_dump(include={"parameter", "best_value", "best_depth_db", "boundary_flag", "refined"})
    _emit(args, command, profile_csv(result), data, summary=summary)
    if args.out:
        sys.stdout.write(_dumps(summary))
    return EXIT_OK


def cmd_sweep(args) -> int:
    return _sweep_command(args, "sweep")


def cmd_optimize(args) -> int:
    return _sweep_command(args, "optimize")


def cmd_compare(args) -> int:
    cw_data, pulsed_data = _load_json(args.cw), _load_json(args.pulsed)
    cw, pulsed = _source_of(cw_data), _source_of(pulsed_data)
    if not isinstance(cw, SpdcConfig) or not isinstance(pulsed, SpdcConfig):
        raise UsageError("compare needs two SPDC source configs", "cli")
    report = compare_cw_pulsed(cw, pulsed)
    _emit(args, "compare", _dumps(report.model_dump()), {"cw": cw_data, "pulsed": pulsed_data},
          summary={"ratio": report.ratio})
    return EXIT_OK


def cmd_runs(args) -> int:
    sys.stdout.write(_dumps(RunStore().recent(args.limit)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cli.py", description="QNG depth of heralded single-photon sources")
    parser.add_argument("--log-level", default=None, help="debug, info or warning")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", help="click probabilities and witness verdicts of a source model")
    p.add_argument("config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("depth", help="NC/QNG depth of a source model or of (p1, p2+)")
    p.add_argument("config", nargs="?")
    p.add_argument("--p1", type=float)
    p.add_argument("--p2plus", type=float)
    p.add_argument("--feature", choices=[f.value for f in Feature], default=Feature.QNG.value)
    p.add_argument("--method", choices=[m.value for m in DepthMethod])
    p.add_argument("--fiber-loss-db-per-km", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("trajectory", help="(p1, p2+) of the model state under attenuation, as CSV")
    p.add_argument("config")
    p.add_argument("--atten-db", type=float, nargs="+", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_trajectory)

    p = sub.add_parser("simulate", help="Monte Carlo time-tag stream")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="tags.bin or tags.csv")
    p.add_argument("--workers", type=int, default=QNG_THREADS)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="click probabilities from a time-tag file")
    p.add_argument("tags")
    p.add_argument("--tau", type=float, required=True, help="coincidence window (s)")
    p.add_argument("--offset", type=float, help="trigger-to-signal delay (s); calibrated when omitted")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    for name, func in (("sweep", cmd_sweep), ("optimize", cmd_optimize)):
        p = sub.add_parser(name, help=f"depth profile over one parameter{' with refinement' if name == 'optimize' else ''}")
        p.add_argument("spec")
        p.add_argument("--out")
        p.add_argument("--workers", type=int, default=QNG_THREADS)
        p.set_defaults(func=func)

    p = sub.add_parser("compare", help="cw versus pulsed SPDC minimal transmittance ratio")
    p.add_argument("cw")
    p.add_argument("pulsed")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("runs", help="recently recorded runs")
    p.add_argument("--limit", type=int, default=10)
    p.set_defaults(func=cmd_runs)
    return parser


def _fail(error: Dict[str, str], code: int) -> int:
    sys.stderr.write(json.dumps(error, sort_keys=True) + "\n")
    return code


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return args.func(args)
    except ValidationError as e:
        return _fail({"error": "ValidationError", "module": COMMAND_MODULES[args.command], "message": str(e)},
                     EXIT_SCHEMA)
    except (UsageError, TimeTagFormatError) as e:
        return _fail(e.to_dict(), EXIT_SCHEMA)
    except QngError as e:
        return _fail(e.to_dict(), EXIT_DOMAIN)


if __name__ == "__main__":
    sys.exit(main())
