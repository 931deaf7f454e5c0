"""Command-line front end.

Exit codes: 0 success, 2 usage, 3 input mismatch or invalid input,
4 null-set or flagged failure, 5 insufficient data.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import io as _stdio
import logging
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import io, linalg
from .dynamics import MeasurementRecord, accumulated_noise, record_continuous, record_discrete, strip_additive
from .errors import (GdqstError, InsufficientDataError, PureInconsistencyError, ReconstructionFailure,
                     ValidationError)
from .extension import extend_series_backward, extend_series_forward, recurrence_from_matrix
from .model import (GaussianChannel, random_channel, random_generator, random_invertible_channel,
                    random_setting, random_state, random_unitary_channel, validate_channel, validate_generator,
                    validate_state)
from .reconstruction import diagnose, entry_residuals, full_count, pure_count, reconstruct_full
from .tolerances import Tolerances

log = logging.getLogger("gdqst")

EXIT_OK, EXIT_USAGE, EXIT_MISMATCH, EXIT_FLAGGED, EXIT_INSUFFICIENT = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _shots(value: str):
    if value == "exact":
        return None
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("shots must be 'exact' or an integer >= 2") from None
    if n < 2:
        raise argparse.ArgumentTypeError("shots must be 'exact' or an integer >= 2")
    return n


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _times(value: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in value.split(",") if v.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError("times must be a comma-separated list of numbers") from None


def _emit(doc: dict, path: str | None) -> None:
    text = io.dumps(doc)
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _metadata(args) -> dict | None:
    if not getattr(args, "timestamp", False):
        return None
    return {"created": datetime.datetime.now(datetime.timezone.utc).isoformat()}


def _write_csv(path: str, header: list[str], rows) -> None:
    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
    if path == "-":
        sys.stdout.write(buf.getvalue())
    else:
        with open(path, "w") as fh:
            fh.write(buf.getvalue())


def _load_dynamics(path: str):
    return io.load(path, ("channel", "generator"))


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args, tol: Tolerances) -> int:
    m, seed = args.modes, args.seed
    if args.kind == "state":
        obj = random_state(m, seed, pure=args.pure)
        if not validate_state(obj, tol).valid:
            raise GdqstError("generated state failed validation")
    elif args.kind == "channel":
        maker = {"generic": random_channel, "invertible": random_invertible_channel}
        obj = random_unitary_channel(m, seed) if args.variant == "unitary" else maker[args.variant](m, seed, tol=tol)
        if not validate_channel(obj, tol).valid:
            raise GdqstError("generated channel failed validation")
    elif args.kind == "generator":
        obj = random_generator(m, seed, tol)
        if not validate_generator(obj, tol).valid:
            raise GdqstError("generated generator failed validation")
    else:
        obj = random_setting(m, seed)
    _emit(io.to_document(obj, _metadata(args)), args.output)
    return EXIT_OK


def cmd_simulate(args, tol: Tolerances) -> int:
    state = io.load(args.state, "state")
    dynamics = _load_dynamics(args.dynamics)
    setting = io.load(args.setting, "setting")
    if not state.m == dynamics.m == setting.m:
        raise ValidationError(f"mode counts disagree: state {state.m}, dynamics {dynamics.m}, setting {setting.m}")
    if isinstance(dynamics, GaussianChannel):
        if args.times is not None:
            raise UsageError("--times applies to generators; use --t0/--count for channels")
        count = args.count or full_count(state.m)
        record = record_discrete(state, dynamics, setting, args.t0, count, args.shots, args.seed)
    else:
        count = args.count or full_count(state.m)
        record = record_continuous(state, dynamics, setting, times=args.times, shots=args.shots,
                                   seed=args.seed, count=count, delta=args.delta)
    _emit(io.to_document(record, _metadata(args)), args.output)
    return EXIT_OK


def _errors_vs_truth(estimate, truth) -> dict:
    return {
        "gammaRelativeError": float(np.linalg.norm(estimate.gamma - truth.gamma) / np.linalg.norm(truth.gamma)),
        "dRelativeError": float(np.linalg.norm(estimate.d - truth.d) / max(1.0, np.linalg.norm(truth.d))),
    }


def cmd_reconstruct(args, tol: Tolerances) -> int:
    record = io.load(args.record, "record")
    dynamics = _load_dynamics(args.dynamics)
    setting = io.load(args.setting, "setting") if args.setting else record.setting
    if setting.m != record.m or dynamics.m != record.m:
        raise ValidationError(f"mode counts disagree: record {record.m}, dynamics {dynamics.m}, setting {setting.m}")
    if not np.allclose(setting.b, record.setting.b, atol=1e-12):
        raise ValidationError("setting differs from the one stored in the record")
    truth = io.load(args.truth, "state") if args.truth else None
    try:
        report = reconstruct_full(record, dynamics, record.setting, pure=args.pure, grid_step=args.grid_step,
                                  tol=tol, seed=args.seed)
    except (ReconstructionFailure, PureInconsistencyError) as exc:
        flags = dict(getattr(exc, "flags", {}) or {})
        payload = {"estimatedState": None, "residual": None, "imagResidue": None, "conditionSummary": {},
                   "flags": flags, "verdict": "NULL-SET" if flags else "FAILED", "message": str(exc)}
        report_obj = getattr(exc, "report", None)
        if report_obj is not None:
            payload["conditionSummary"] = report_obj.conditions
            payload["determinants"] = report_obj.determinants
        _emit(io.document("report", record.m, payload, _metadata(args)), args.output)
        log.error("%s", exc)
        return EXIT_FLAGGED
    doc = io.to_document(report, _metadata(args))
    if truth is not None:
        doc["payload"]["errors"] = _errors_vs_truth(report.state, truth)
    _emit(doc, args.output)
    if args.csv:
        res = entry_residuals(report.state, record, dynamics)
        rows = zip(record.times.tolist(), record.means.tolist(), record.variances.tolist(), res.tolist())
        _write_csv(args.csv, ["time", "mean", "variance", "reconstructedResidual"], rows)
    return EXIT_OK


def cmd_diagnose(args, tol: Tolerances) -> int:
    dynamics = _load_dynamics(args.dynamics)
    setting = io.load(args.setting, "setting")
    if dynamics.m != setting.m:
        raise ValidationError(f"mode counts disagree: dynamics {dynamics.m}, setting {setting.m}")
    result = diagnose(dynamics, setting, tol, grid_step=args.grid_step)
    _emit(io.to_document(result, _metadata(args)), args.output)
    return EXIT_OK if result.generic else EXIT_FLAGGED


def cmd_extend(args, tol: Tolerances) -> int:
    record = io.load(args.record, "record")
    channel = io.load(args.dynamics, "channel")
    if channel.m != record.m:
        raise ValidationError(f"mode counts disagree: record {record.m}, channel {channel.m}")
    times = record.times.astype(int)
    if np.any(np.diff(times) != 1):
        raise ValidationError("extension needs consecutive integer times")
    t0 = int(times[0])
    target = t0 if args.backward_to is None else args.backward_to
    series = strip_additive(record, channel)
    X = channel.X
    rec_a = recurrence_from_matrix(linalg.sym_kron(X, X), tol.rank)
    rec_b = recurrence_from_matrix(X, tol.rank)
    start = max(target, rec_a.j0, rec_b.j0)
    alpha = extend_series_backward(extend_series_forward(series.alpha, rec_a, args.forward, t0), rec_a, t0, start)
    beta = extend_series_backward(extend_series_forward(series.beta, rec_b, args.forward, t0), rec_b, t0, start)
    new_times = np.arange(start, start + alpha.size)
    a = record.setting.a
    offsets = np.array([a @ linalg.svec(accumulated_noise(channel, int(t))) for t in new_times])
    extended = MeasurementRecord(
        record.setting, new_times, beta, alpha + offsets, "discrete", record.shots, record.dynamics_id,
        record.convention, dict(record.provenance) | {"extendedFrom": [t0, int(times[-1])]},
    )
    _emit(io.to_document(extended, _metadata(args)), args.output)
    return EXIT_OK


def _roundtrip_trial(m: int, kind: str, pure: bool, shots, steps: int | None, seed_seq, tol: Tolerances) -> dict:
    s_state, s_dyn, s_set, s_rec, s_rest = seed_seq.spawn(5)
    state = random_state(m, s_state, pure=pure)
    setting = random_setting(m, s_set)
    count = steps or (pure_count(m) if pure else full_count(m))
    count = max(count, 2 * m)
    if kind == "discrete":
        dynamics = random_channel(m, s_dyn, tol)
        record = record_discrete(state, dynamics, setting, 0, count, shots, s_rec)
    else:
        dynamics = random_generator(m, s_dyn, tol)
        record = record_continuous(state, dynamics, setting, count=count, shots=shots, seed=s_rec)
    row = {"status": "ok", "gammaRelativeError": None, "dRelativeError": None, "residual": None,
           "condM": None, "condN": None, "condA": None, "condBdiag": None, "flags": ""}
    try:
        report = reconstruct_full(record, dynamics, pure=pure, tol=tol, seed=s_rest)
    except (ReconstructionFailure, PureInconsistencyError) as exc:
        row["status"] = "flagged"
        row["flags"] = ";".join(k for k, v in (getattr(exc, "flags", {}) or {}).items() if v)
        return row
    except InsufficientDataError:
        row["status"] = "insufficient"
        return row
    row.update(_errors_vs_truth(report.state, state))
    c = report.conditions
    row.update(residual=report.residual, condM=c.get("cov_M"), condN=c.get("cov_N"), condA=c.get("disp_A"),
               condBdiag=c.get("disp_Bdiag"), flags=";".join(k for k, v in report.flags.items() if v))
    return row


def _quantiles(values) -> dict:
    v = np.array([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return {"median": None, "p90": None, "max": None}
    return {"median": float(np.median(v)), "p90": float(np.percentile(v, 90)), "max": float(v.max())}


def cmd_roundtrip(args, tol: Tolerances) -> int:
    levels = args.shots if args.shots else [None]
    levels_out, csv_rows = [], []
    for level_index, shots in enumerate(levels):
        seeds = np.random.SeedSequence([args.seed, level_index]).spawn(args.trials)
        jobs = [(args.modes, args.kind, args.pure, shots, args.steps, ss, tol) for ss in seeds]
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as pool:
                rows = list(pool.map(_roundtrip_trial, *zip(*jobs)))
        else:
            rows = [_roundtrip_trial(*job) for job in jobs]
        for i, row in enumerate(rows):
            row["trial"] = i
            row["shots"] = "exact" if shots is None else shots
            csv_rows.append(row)
        levels_out.append({
            "shots": "exact" if shots is None else shots,
            "trials": len(rows),
            "succeeded": sum(r["status"] == "ok" for r in rows),
            "gammaRelativeError": _quantiles(r["gammaRelativeError"] for r in rows),
            "dRelativeError": _quantiles(r["dRelativeError"] for r in rows),
            "condM": _quantiles(r["condM"] for r in rows),
            "trialsDetail": rows,
        })
    payload = {"modes": args.modes, "seed": args.seed, "kind": args.kind, "pure": args.pure,
               "steps": args.steps, "levels": levels_out}
    _emit(io.document("summary", args.modes, payload, _metadata(args)), args.output)
    if args.csv:
        header = ["shots", "trial", "status", "gammaRelativeError", "dRelativeError", "residual",
                  "condM", "condN", "condA", "condBdiag", "flags"]
        _write_csv(args.csv, header, ([r[h] if r[h] is not None else "" for h in header] for r in csv_rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gdqst", description="Gaussian state tomography from a single homodyne time series.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=True):
        p.add_argument("-o", "--output", help="output file (default: stdout)")
        p.add_argument("--timestamp", action="store_true", help="add a creation time in a metadata field")
        if seed:
            p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")

    p = sub.add_parser("generate", help="write a random state, channel, generator or setting")
    p.add_argument("kind", choices=["state", "channel", "generator", "setting"])
    p.add_argument("--modes", "-m", type=_positive_int, required=True)
    p.add_argument("--pure", action="store_true", help="pure state (kind=state)")
    p.add_argument("--variant", choices=["generic", "invertible", "unitary"], default="generic",
                   help="channel ensemble (kind=channel)")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="measurement record of an evolving state")
    p.add_argument("--state", required=True)
    p.add_argument("--dynamics", required=True, help="channel or generator file")
    p.add_argument("--setting", required=True)
    p.add_argument("--count", type=_positive_int, help="number of entries (default m(2m+1))")
    p.add_argument("--t0", type=int, default=0, help="first step (channels)")
    p.add_argument("--times", type=_times, help="comma-separated sample times (generators)")
    p.add_argument("--delta", type=float, default=0.25, help="grid spacing when --times is absent (generators)")
    p.add_argument("--shots", type=_shots, default=None, help="'exact' (default) or number of shots per entry")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="estimate the initial state from a record")
    p.add_argument("--record", required=True)
    p.add_argument("--dynamics", required=True)
    p.add_argument("--setting", help="defaults to the setting stored in the record")
    p.add_argument("--pure", action="store_true", help="assume the state is pure (m(m+1) entries suffice)")
    p.add_argument("--truth", help="state file to compare against")
    p.add_argument("--grid-step", type=float, help="grid spacing for continuous records (default: sampled span)")
    p.add_argument("--csv", help="write per-entry residuals as CSV")
    common(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("diagnose", help="check dynamics and setting against known failure modes")
    p.add_argument("--dynamics", required=True)
    p.add_argument("--setting", required=True)
    p.add_argument("--grid-step", type=float, default=1.0, help="sampling step for generators (default 1)")
    common(p, seed=False)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("extend", help="extend a discrete record backward and forward in time")
    p.add_argument("--record", required=True)
    p.add_argument("--dynamics", required=True, help="channel file")
    p.add_argument("--forward", type=int, default=0, help="number of steps to append")
    p.add_argument("--backward-to", type=int, help="first step of the extended record")
    common(p, seed=False)
    p.set_defaults(func=cmd_extend)

    p = sub.add_parser("roundtrip", help="simulate-then-reconstruct experiments on random instances")
    p.add_argument("--modes", "-m", type=_positive_int, required=True)
    p.add_argument("--trials", type=_positive_int, default=10)
    p.add_argument("--kind", choices=["discrete", "continuous"], default="discrete")
    p.add_argument("--pure", action="store_true")
    p.add_argument("--steps", type=_positive_int, help="record length (default: minimal for the mode)")
    p.add_argument("--shots", type=lambda v: [_shots(x) for x in v.split(",")],
                   help="'exact' or comma-separated shot counts to sweep")
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")
    p.add_argument("--csv", help="per-trial CSV")
    common(p)
    p.set_defaults(func=cmd_roundtrip)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"gdqst: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        tol = Tolerances.from_env()
    except ValidationError as exc:
        print(f"gdqst: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args, tol)
    except UsageError as exc:
        print(f"gdqst: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InsufficientDataError as exc:
        print(f"gdqst: insufficient data: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except ReconstructionFailure as exc:
        print(f"gdqst: flagged: {exc}", file=sys.stderr)
        return EXIT_FLAGGED
    except (ValidationError, GdqstError) as exc:
        print(f"gdqst: invalid input: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except OSError as exc:
        print(f"gdqst: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
