"""Command-line interface: ``hypext {analyze,verify,extend,evolve,dump-model}``.

Exit codes: 0 pass, 1 input error, 2 analysis or verification failure,
3 simulation failure.
"""
from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, kernels
from . import io as hio
from .errors import (
    BlockMismatch,
    ComplexRoots,
    DimensionMismatch,
    HypextError,
    IllConditionedRankDecision,
    NoCoherentPulse,
    RankDeficientTimeDirection,
    SignatureError,
    SimulationBlowUp,
    SingularTimeSymbol,
    SystemDefinitionError,
    UncertifiedExtension,
    UnknownKind,
)
from .evolution import (
    GridSpec,
    constraint_monitor,
    dump_state,
    evolve,
    make_initial_data,
    measure_pulse_speed,
    refinement_study,
    write_diagnostics_csv,
)
from .extension import (
    DEFAULT_KAPPA_BOUND,
    ExtensionSpec,
    build_extended_symbol,
    check_cone_compatibility,
    check_strong_hyperbolicity,
)
from .models import MODEL_NAMES, LorentzMetric, builtin_system, characteristic_oracle, default_speeds
from .pencil import DEFAULT_TOL
from .symbol import Frame, analyze_direction, check_condition1, sample_directions, verify_condition2

EXIT_OK, EXIT_INPUT, EXIT_ANALYSIS, EXIT_SIMULATION = 0, 1, 2, 3
INPUT_ERRORS = (SystemDefinitionError, DimensionMismatch, BlockMismatch, UnknownKind, ValueError,
                OSError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive(kind):
    def parse(text):
        val = kind(text)
        if val <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return val
    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", choices=MODEL_NAMES, help="built-in system")
    src.add_argument("--system", type=Path, help="system definition JSON")
    common.add_argument("--frame", type=Path, help="frame JSON (n_cov, t_vec, k_basis)")
    common.add_argument("--tol", type=_positive(float), default=DEFAULT_TOL,
                        help="relative rank tolerance (default %(default)g)")
    common.add_argument("--samples", type=_positive(int), default=200,
                        help="deterministic sample directions (default %(default)s)")
    common.add_argument("--extra-samples", type=int, default=0,
                        help="additional random directions drawn from --seed")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, help="report path (default: stdout)")

    ext = argparse.ArgumentParser(add_help=False)
    ext.add_argument("--extension", type=Path, help="extension spec JSON")
    ext.add_argument("--speeds", type=_floats, help="cleaning speeds, one per constraint")
    ext.add_argument("--kappa-bound", type=_positive(float), default=DEFAULT_KAPPA_BOUND)

    parser = _Parser(prog="hypext", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hypext {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("analyze", parents=[common], help="Kronecker structure per direction"
                   ).set_defaults(func=cmd_analyze)
    sub.add_parser("verify", parents=[common], help="Conditions 1-3"
                   ).set_defaults(func=cmd_verify)
    sub.add_parser("extend", parents=[common, ext], help="build and certify an extension"
                   ).set_defaults(func=cmd_extend)
    sub.add_parser("dump-model", parents=[common], help="write the system as JSON"
                   ).set_defaults(func=cmd_dump_model)
    ev = sub.add_parser("evolve", parents=[common, ext], help="periodic-grid evolution")
    ev.add_argument("--grid", type=int, default=128, help="points per dimension")
    ev.add_argument("--dims", type=int, choices=(1, 2), default=1)
    ev.add_argument("--cfl", type=float, default=0.25)
    ev.add_argument("--order", type=int, choices=(2, 4), default=4)
    ev.add_argument("--tfinal", type=_positive(float), default=2 * np.pi)
    ev.add_argument("--sigma", type=float, help="constraint damping (default: the extension's damping)")
    ev.add_argument("--ic", choices=("constrained_wave", "violating_pulse"),
                    default="constrained_wave")
    ev.add_argument("--wave-vector", type=_ints, help="integer wave vector for constrained_wave")
    ev.add_argument("--amplitude", type=float)
    ev.add_argument("--width", type=_positive(float), default=0.3, help="pulse width")
    ev.add_argument("--measure-speed", action="store_true")
    ev.add_argument("--refine", type=_ints, help="grid sizes for a convergence study, e.g. 32,64,128")
    ev.add_argument("--force", action="store_true", help="run uncertified extensions")
    ev.add_argument("--csv", type=Path, help="per-step diagnostics CSV")
    ev.add_argument("--dump-state", type=Path, help="raw final state (+ .json sidecar)")
    ev.set_defaults(func=cmd_evolve)
    return parser


# --------------------------------------------------------------------------- helpers

def _source(args):
    if args.model:
        return builtin_system(args.model), LorentzMetric.minkowski()
    return hio.load_system(args.system)


def _frame(args, system) -> Frame:
    frame = hio.load_frame(args.frame) if args.frame else Frame.standard(system.n_dim)
    if frame.n_dim != system.n_dim:
        raise DimensionMismatch(f"frame is {frame.n_dim}-dimensional, system {system.n_dim}")
    return frame


def _directions(args, frame):
    return sample_directions(frame, args.samples, args.seed, args.extra_samples)


def _settings(args, **extra) -> dict:
    out = {
        "system": args.model or str(args.system),
        "frame": str(args.frame) if args.frame else "standard",
        "tolerances": {"rank": args.tol},
        "samples": args.samples,
        "extra_samples": args.extra_samples,
        "seed": args.seed,
    }
    out.update(extra)
    return out


def _emit(args, report: dict) -> None:
    text = hio.dumps(report)
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)


def _extension_spec(args, system) -> ExtensionSpec:
    if args.extension:
        return hio.load_extension(args.extension, system.n_dim)
    speeds = args.speeds
    if not speeds:
        if not args.model:
            raise SystemDefinitionError("user systems need --extension or --speeds")
        speeds = default_speeds(args.model)
    return ExtensionSpec.cleaning_speeds(speeds, system.n_dim)


# --------------------------------------------------------------------------- commands

def cmd_analyze(args) -> int:
    system, _ = _source(args)
    frame = _frame(args, system)
    rows, counts, anomalies = [], [], set()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IllConditionedRankDecision)
        for k in _directions(args, frame):
            da = analyze_direction(system, frame, k, args.tol)
            counts.append(da.counts.as_tuple())
            anomalies.update(da.anomalies)
            rows.append({
                "k": da.k.tolist(),
                "counts": dict(zip("drs", da.counts.as_tuple())),
                "eigenvalues": [{"eigenvalue": _enc(lam), "algebraic": a, "geometric": g}
                                for lam, a, g in da.eigenvalues],
                "kronecker": da.invariants.to_dict(),
                "anomalies": da.anomalies,
            })
    distinct = sorted(set(counts))
    summary = {
        "counts": [dict(zip("drs", c)) for c in distinct],
        "uniform_counts": len(distinct) == 1,
        "anomalies": sorted(anomalies),
        "ill_conditioned_decisions": len(caught),
        "verdict": "anomalous" if anomalies else "regular",
    }
    body = {"system": _system_header(system), "summary": summary, "directions": rows}
    _emit(args, hio.envelope("analyze", body, _settings(args)))
    return EXIT_ANALYSIS if anomalies else EXIT_OK


def _enc(lam):
    return float(np.real(lam)) if np.isreal(lam) else [float(np.real(lam)), float(np.imag(lam))]


def _system_header(system) -> dict:
    return {"name": system.name, "n_dim": system.n_dim, "num_vars": system.num_vars,
            "num_eqs": system.num_eqs, "num_constraints": system.num_constraints}


def cmd_verify(args) -> int:
    system, _ = _source(args)
    frame = _frame(args, system)
    try:
        c1 = check_condition1(system, frame, tol=args.tol, directions=_directions(args, frame))
        cond1 = {"passed": c1.passed, "rank_of_An": c1.rank_of_An,
                 "worst_direction": c1.failing_directions[0].tolist() if c1.failing_directions
                 else None, "num_failing": len(c1.failing_directions),
                 "evidence": c1.to_dict()}
    except RankDeficientTimeDirection as exc:
        cond1 = {"passed": False, "message": str(exc)}
    c2 = verify_condition2(system, frame, raise_on_fail=False)
    passed = cond1["passed"] and c2.passed
    body = {"system": _system_header(system), "passed": passed,
            "condition1": cond1, "condition2": c2.to_dict(),
            "condition3": {"status": system.condition3, "informational": True}}
    _emit(args, hio.envelope("verify", body, _settings(args)))
    return EXIT_OK if passed else EXIT_ANALYSIS


def _oracle_deviation(args, spec, frame, report) -> float | None:
    if not args.model or spec.mode != "covariant_metrics":
        return None
    metrics = [LorentzMetric.minkowski()] + list(spec.metrics)
    dev = 0.0
    for rec in report.records:
        expect = characteristic_oracle(args.model, metrics, frame, rec.k).speeds
        dev = max(dev, float(np.max(np.abs(np.asarray(expect) - rec.spectrum()))))
    return dev


def cmd_extend(args) -> int:
    system, metric = _source(args)
    frame = _frame(args, system)
    dirs = _directions(args, frame)
    spec = None
    try:
        spec = _extension_spec(args, system)
        ext = build_extended_symbol(system, spec, frame)
        cone = None
        if spec.mode == "covariant_metrics" and metric is not None:
            try:
                cone = check_cone_compatibility([metric, *spec.metrics], frame,
                                                directions=dirs).to_dict()
            except ComplexRoots as exc:
                cone = {"passed": False, "message": str(exc)}
        report = check_strong_hyperbolicity(ext, frame, kappa_bound=args.kappa_bound,
                                            tol=args.tol, directions=dirs)
    except (SignatureError, SingularTimeSymbol) as exc:
        body = {"system": _system_header(system),
                "extension": spec.to_dict() if spec else None, "verdict": None, "error": f"{type(exc).__name__}: {exc}"}
        _emit(args, hio.envelope("extend", body, _settings(args, kappa_bound=args.kappa_bound)))
        return EXIT_ANALYSIS
    body = {"system": _system_header(system), "extension": spec.to_dict(),
            "cone_compatibility": cone,
            "oracle_max_deviation": _oracle_deviation(args, spec, frame, report),
            **report.to_dict()}
    _emit(args, hio.envelope("extend", body, _settings(args, kappa_bound=args.kappa_bound)))
    return EXIT_OK if report.verdict == "strongly_hyperbolic" else EXIT_ANALYSIS


def cmd_evolve(args) -> int:
    system, _ = _source(args)
    frame = _frame(args, system)
    if not np.allclose(frame.n_cov, np.eye(system.n_dim)[0]):
        raise ValueError("evolution runs in the standard frame only")
    spec = _extension_spec(args, system)
    ext = build_extended_symbol(system, spec, frame)
    sigma = spec.damping if args.sigma is None else args.sigma
    if sigma < 0:
        raise ValueError("--sigma must be non-negative")
    settings = _settings(args, grid={"points": args.grid, "dims": args.dims, "cfl": args.cfl,
                                     "fd_order": args.order, "t_final": args.tfinal},
                         sigma=sigma, ic=args.ic, kernel_backend=kernels.BACKEND)
    body = {"system": _system_header(system), "extension": spec.to_dict()}
    code = EXIT_OK
    try:
        if args.refine:
            wv = args.wave_vector or ([1, 2] if args.dims == 2 else [1])
            res = refinement_study(ext, args.refine, args.dims, args.cfl, args.order, args.tfinal,
                                   wv, args.amplitude or 1.0, sigma, args.force)
            body["refinement"] = res.to_dict()
        else:
            grid = GridSpec(args.dims, args.grid, args.cfl, args.order, args.tfinal)
            params = {"width": args.width}
            if args.wave_vector:
                params["wave_vector"] = args.wave_vector
            if args.amplitude is not None:
                params["amplitude"] = args.amplitude
            s0 = make_initial_data(args.ic, ext, grid, params)
            body["initial_constraints"] = {k: v for k, v in constraint_monitor(ext, s0, grid).items()
                                           if k != "field"}
            series, final = evolve(ext, grid, s0, sigma, args.force)
            body["summary"] = series.summary()
            if args.csv:
                write_diagnostics_csv(series, args.csv)
            if args.dump_state:
                dump_state(final, args.dump_state, ext.var_names)
            if args.measure_speed:
                try:
                    body["pulse_speed"] = measure_pulse_speed(series).to_dict()
                except NoCoherentPulse as exc:
                    body["pulse_speed"] = {"error": str(exc)}
                    code = EXIT_SIMULATION
    except UncertifiedExtension as exc:
        body["error"] = str(exc)
        code = EXIT_ANALYSIS
    except SimulationBlowUp as exc:
        body["error"] = str(exc)
        body["blow_up"] = {"step": exc.step, "energy_history_tail": (exc.history or [])[-10:]}
        code = EXIT_SIMULATION
    _emit(args, hio.envelope("evolve", body, settings))
    return code


def cmd_dump_model(args) -> int:
    system, metric = _source(args)
    text = hio.dumps(hio.system_to_dict(system, metric))
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:           # --help, --version and usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (SignatureError, SingularTimeSymbol) as exc:
        print(f"hypext: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except INPUT_ERRORS as exc:
        print(f"hypext: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except HypextError as exc:
        print(f"hypext: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
