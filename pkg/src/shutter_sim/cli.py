"""``shutter-sim`` command-line front end.

Exit codes: 0 success, 2 bad input, 3 simulation failure, 4 calibration
did not converge.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BenchError, Setup, build, calibrated_document, parse, parse_quantity, serialize
from .elements import ShutterParams
from .engine import sweep_delays, sweep_trigger_frequency
from .metrics import LABEL_ORDER, CalibrationError, calibrate_shutter, characterize

EXIT_OK, EXIT_INPUT, EXIT_SIMULATION, EXIT_CALIBRATION = 0, 2, 3, 4


class InputError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    bench: str
    bench_sha256: str
    seed: int
    outputs: list[str]
    version: str
    duration_s: float
    arguments: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def _fmt(x) -> str:
    return x if isinstance(x, str) else format(float(x), ".6g")


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load(path: str) -> tuple[str, Setup]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read bench file {path!r}: {exc}") from None
    try:
        return text, build(parse(text))
    except BenchError as exc:
        raise InputError(f"{path}:{exc}") from None


def _frequency_grid(args, setup: Setup) -> np.ndarray:
    if args.range is None:
        s = setup.sweep
        return np.geomspace(s.start, s.stop, s.steps)
    a, b, n = _split_range(args.range, "frequency", "Hz")
    return np.geomspace(a, b, n)


def _delay_grid(args, setup: Setup) -> np.ndarray:
    if args.range is None:
        s = setup.sweep
        n = int(np.floor(s.window / s.resolution + 1e-9))
        return np.arange(n + 1) * s.resolution
    a, b, n = _split_range(args.range, "time", "ns")
    return np.linspace(a, b, n)


def _split_range(spec: str, dimension: str, bare_unit: str) -> tuple[float, float, int]:
    parts = spec.split(":")
    if len(parts) != 3:
        raise InputError(f"--range must look like start:stop:steps, got {spec!r}")
    ends = []
    for text in parts[:2]:
        try:
            q = parse_quantity(text.strip())
        except BenchError as exc:
            raise InputError(f"--range: {exc.message}") from None
        if not q.unit:
            q = parse_quantity(text.strip() + bare_unit)
        if q.dimension != dimension:
            raise InputError(f"--range endpoint {text!r} is not a {dimension}")
        ends.append(q.to_float())
    try:
        steps = int(parts[2])
    except ValueError:
        raise InputError(f"--range steps must be an integer, got {parts[2]!r}") from None
    a, b = ends
    if steps < 2:
        raise InputError("--range needs at least 2 steps")
    if dimension == "frequency" and not 0 < a < b:
        raise InputError("--range frequencies need 0 < start < stop")
    if dimension == "time" and not 0 <= a < b:
        raise InputError("--range delays need 0 <= start < stop")
    return a, b, steps


def _emit(args, text: str, outputs: list[str]) -> None:
    if args.out is None:
        sys.stdout.write(text)
    else:
        _write_atomic(Path(args.out), text)
        outputs.append(str(args.out))


def _finish(args, bench_text: str, started: float, outputs: list[str], summary: dict) -> None:
    if args.out is None:
        print(json.dumps(summary, indent=2, sort_keys=True), file=sys.stderr)
        return
    manifest_path = Path(str(args.out) + ".manifest.json")
    manifest = RunManifest(
        command=args.command, bench=str(args.bench),
        bench_sha256=hashlib.sha256(bench_text.encode("utf-8")).hexdigest(),
        seed=args.seed, outputs=outputs + [str(manifest_path)], version=__version__,
        duration_s=round(time.perf_counter() - started, 6),
        arguments={"mode": args.mode, "range": args.range}, summary=summary)
    _write_atomic(manifest_path, json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n")


def cmd_characterize(args) -> int:
    started = time.perf_counter()
    text, setup = _load(args.bench)
    recs = characterize(setup.device, setup.cell, LABEL_ORDER, setup.trigger_frequency,
                        setup.source, setup.n_triggers, setup.warmup, args.seed)
    outputs: list[str] = []
    _emit(args, _csv_text(["polarization", "f_on", "t_on", "t_off"],
                          ((r.polarization, r.f_on, r.t_on, r.t_off) for r in recs)), outputs)
    summary = {
        "mean_f_on": float(np.mean([r.f_on for r in recs])),
        "mean_t_on": float(np.mean([r.t_on for r in recs])),
        "mean_t_off": float(np.mean([r.t_off for r in recs])),
        "trigger_frequency_hz": setup.trigger_frequency,
    }
    _finish(args, text, started, outputs, summary)
    return EXIT_OK


def cmd_sweep(args) -> int:
    started = time.perf_counter()
    text, setup = _load(args.bench)
    mode = args.mode or setup.sweep.mode
    args.mode = mode
    if mode == "frequency":
        grid = _frequency_grid(args, setup)
        res = sweep_trigger_frequency(setup.device, setup.cell, grid, setup.n_triggers,
                                      setup.warmup, setup.source, LABEL_ORDER, args.seed)
    else:
        grid = _delay_grid(args, setup)
        res = sweep_delays(setup.device, setup.cell, grid, LABEL_ORDER,
                           setup.source.intensity)
    names = list(res.metrics)
    rows = zip(res.abscissa, *(res.metrics[k] for k in names))
    outputs: list[str] = []
    _emit(args, _csv_text([res.abscissa_name] + names, rows), outputs)
    summary = {"mode": mode, "points": int(len(res.abscissa)),
               "first": {k: float(v[0]) for k, v in res.metrics.items()},
               "last": {k: float(v[-1]) for k, v in res.metrics.items()}}
    _finish(args, text, started, outputs, summary)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    started = time.perf_counter()
    text, setup = _load(args.bench)
    if setup.targets is None:
        raise InputError(f"{args.bench}: calibrate needs a 'targets' section")
    try:
        base = ShutterParams.from_device(setup.device)
    except ValueError as exc:
        raise InputError(f"{args.bench}: device cannot be calibrated: {exc}") from None
    report = sys.stdout if args.out is not None else sys.stderr
    try:
        result = calibrate_shutter(setup.targets, base, setup.cell, setup.trigger_frequency,
                                   seed=args.seed)
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        for k, v in sorted(exc.residuals.items()):
            print(f"  {k} {v:+.3e}", file=sys.stderr)
        return EXIT_CALIBRATION
    fitted = serialize(calibrated_document(parse(text), result.params))
    outputs: list[str] = []
    _emit(args, fitted, outputs)
    print("residuals:", file=report)
    for k, v in result.residuals.items():
        print(f"  {k} {v:+.3e}", file=report)
    summary = {"params": asdict(result.params), "residuals": result.residuals}
    _finish(args, text, started, outputs, summary)
    return EXIT_OK


def cmd_validate(args) -> int:
    _load(args.bench)
    print(f"{args.bench}: ok")
    return EXIT_OK


COMMANDS = {"characterize": cmd_characterize, "sweep": cmd_sweep,
            "calibrate": cmd_calibrate, "validate": cmd_validate}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shutter-sim",
                                description="Simulate a Pockels-cell optical shutter.")
    p.add_argument("command", choices=tuple(COMMANDS))
    p.add_argument("--bench", required=True, help="bench description file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output file (CSV, or bench for calibrate); stdout if omitted")
    p.add_argument("--mode", choices=("time", "frequency"), help="sweep axis")
    p.add_argument("--range", help="sweep grid start:stop:steps, e.g. 100Hz:10kHz:9")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"shutter-sim: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"shutter-sim: simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION


if __name__ == "__main__":
    sys.exit(main())
