"""Command-line front end: analyze, synthesize, verify, oracle-check.

Every command reads a JSON instance file and prints a key/value report,
as ``key: value`` lines or ``key,value`` rows under ``--format csv``.
Reports are deterministic: fixed key order, fixed iteration orders, and
17-significant-digit floats, so identical invocations are byte-identical.

Exit codes: 0 controllable / verified / matching; 1 negative outcome;
2 the criterion does not apply to the instance; 3 singular Gramian;
4 target not attainable; 5 malformed controller table; 6 anything else.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .criteria import decide, gramian, gramian_oracle
from .delay import (
    input_delay_controller,
    input_delay_decide,
    input_delay_gramian,
    input_delay_gramian_oracle,
    state_delay_controller,
    state_delay_decide,
    state_delay_gramian,
    state_delay_gramian_oracle,
)
from .errors import (
    AdaptednessViolation,
    NoIntertwiner,
    SchemaError,
    SingularGramian,
    SingularPBracket,
    SingularPencil,
    StageMismatch,
    StochctrlError,
    StructureUnsupported,
    TargetNotInS,
    UnsupportedReducedStructure,
)
from .model import ProblemInstance, ValidatedSystem, parse_instance_file, validate
from .partial import output_form, partial_decide, reduced_rank_setup
from .pathspace import DEFAULT_CAP, PathTree, forward_simulate, terminal_from_map
from .synthesis import (
    FLOAT_FMT,
    controller_csv_text,
    null_controller,
    read_controller_table,
    steer_to_target,
    write_controller_csv,
)
from .transform import BsdeForm, TransformedSystem

EXIT_YES = 0
EXIT_NO = 1
EXIT_INAPPLICABLE = 2
EXIT_SINGULAR_GRAMIAN = 3
EXIT_TARGET = 4
EXIT_BAD_TABLE = 5
EXIT_ERROR = 6

_VERDICTS = {
    "full": ("exactly controllable", "not exactly controllable"),
    "partial": ("H-partially exactly controllable", "not H-partially exactly controllable"),
    "reduced": ("leading-block exactly controllable", "not leading-block exactly controllable"),
    "input-delay": ("exactly controllable (input delay)", "not shown controllable (input delay)"),
    "state-delay": ("exactly controllable (state delay)", "not shown controllable (state delay)"),
}


def _route(vs: ValidatedSystem) -> str:
    if not vs.full_rank:
        return "reduced"
    spec = vs.spec
    if spec.H is not None:
        return "partial"
    if spec.B1 is not None:
        return "input-delay"
    if spec.A1 is not None:
        return "state-delay"
    return "full"


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return FLOAT_FMT % value
    return str(value)


def _render(pairs, fmt: str) -> str:
    sep = "," if fmt == "csv" else ": "
    return "".join(f"{key}{sep}{_fmt(value)}\n" for key, value in pairs)


def _emit(text: str, out_path: str | None) -> None:
    sys.stdout.write(text)
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _matrix_pairs(name: str, M: np.ndarray):
    for i in range(M.shape[0]):
        for j in range(M.shape[1]):
            yield f"{name}_{i}_{j}", float(M[i, j])


def cmd_analyze(args) -> int:
    inst = parse_instance_file(args.instance)
    vs = validate(inst.system)
    route = _route(vs)
    N_max = args.N if args.N is not None else inst.N
    if route == "full":
        report = decide(vs, N_max=N_max)
    elif route == "partial":
        report = partial_decide(vs, N_max=N_max)
    elif route == "reduced":
        _, report = reduced_rank_setup(vs, N_max=N_max)
    elif route == "input-delay":
        report = input_delay_decide(vs, N_max=N_max)
    else:
        report = state_delay_decide(vs, N_max=N_max)
    verdict = _VERDICTS[report.kind][0 if report.controllable else 1]
    pairs = [
        ("command", "analyze"),
        ("kind", report.kind),
        ("dim", report.dim),
        ("N_max", report.N_max),
        ("verdict", verdict),
        ("witness_N", report.witness_N),
        ("gramian_rank", report.gramian_rank),
        ("rank_R", report.rank_R),
        ("span_depth", report.span_depth),
        ("criteria_agree", report.criteria_agree),
        ("transform", report.transform_source),
    ]
    pairs += [(f"min_singular_{i}", float(sv)) for i, sv in enumerate(report.min_singular)]
    pairs += list(_matrix_pairs("gramian", report.gramian))
    _emit(_render(pairs, args.format), args.out)
    return EXIT_YES if report.controllable else EXIT_NO


def _build_controller(inst: ProblemInstance, route: str, tree: PathTree, tol: float):
    spec = inst.system
    ts = TransformedSystem.build(validate(spec))
    target = None
    if inst.target is not None:
        target = terminal_from_map(tree, spec.n, inst.target)
    if route == "full":
        if target is None:
            return ts, None, null_controller(ts, tree, inst.x0)
        return ts, target, steer_to_target(ts, tree, inst.x0, target, tol=tol)
    if route == "input-delay":
        return ts, target, input_delay_controller(ts, tree, inst.x0, target, tol=tol)
    return ts, target, state_delay_controller(ts, tree, inst.x0, target, tol=tol)


def cmd_synthesize(args) -> int:
    inst = parse_instance_file(args.instance)
    vs = validate(inst.system)
    route = _route(vs)
    if route in ("partial", "reduced"):
        raise StructureUnsupported(
            "controller synthesis is only available for the full-state routes"
        )
    if inst.x0 is None:
        raise SchemaError("instance has no x0; synthesis needs an initial state")
    N = args.N if args.N is not None else inst.N
    tree = PathTree(inst.system.noise, N, cap=args.cap)
    ts, target, ctrl = _build_controller(inst, route, tree, args.tol)

    spec = inst.system
    xs = forward_simulate(tree, spec, inst.x0, ctrl.u, u1=ctrl.u1)
    final = xs.at(N + 1)
    want = target if target is not None else np.zeros(spec.n)
    deviation = float(np.abs(final - want).max())
    x0_err = float(np.abs(ctrl.solution.x0 - inst.x0).max())
    pairs = [
        ("command", "synthesize"),
        ("kind", ctrl.kind),
        ("N", N),
        ("paths", tree.n_nodes(N + 1)),
        ("x0_error", x0_err),
        ("terminal_deviation", deviation),
        ("tolerance", args.tol),
        ("gramian_min_singular", float(np.linalg.svd(ctrl.gramian, compute_uv=False)[-1])),
    ]
    if args.out:
        write_controller_csv(args.out, ctrl)
        pairs.append(("controller", args.out))
        _emit(_render(pairs, args.format), None)
    else:
        sys.stdout.write(controller_csv_text(ctrl))
    return EXIT_YES


def cmd_verify(args) -> int:
    inst = parse_instance_file(args.instance)
    vs = validate(inst.system)
    route = _route(vs)
    if route in ("partial", "reduced"):
        raise StructureUnsupported("verification applies to the full-state routes")
    if inst.x0 is None:
        raise SchemaError("instance has no x0; verification needs an initial state")
    spec = inst.system
    N = args.N if args.N is not None else inst.N
    tree = PathTree(spec.noise, N, cap=args.cap)
    m1 = spec.B1.shape[1] if spec.B1 is not None else None
    try:
        u, u1 = read_controller_table(args.controller, tree, spec.m, m1)
        xs = forward_simulate(tree, spec, inst.x0, u, u1=u1)
    except (SchemaError, AdaptednessViolation, StageMismatch) as exc:
        sys.stderr.write(f"bad controller table: {exc}\n")
        return EXIT_BAD_TABLE
    want = (
        terminal_from_map(tree, spec.n, inst.target)
        if inst.target is not None
        else np.zeros(spec.n)
    )
    deviation = float(np.abs(xs.at(N + 1) - want).max())
    ok = deviation <= args.tol
    pairs = [
        ("command", "verify"),
        ("kind", route),
        ("N", N),
        ("paths", tree.n_nodes(N + 1)),
        ("terminal_deviation", deviation),
        ("tolerance", args.tol),
        ("verdict", "ok" if ok else "failed"),
    ]
    _emit(_render(pairs, args.format), args.out)
    return EXIT_YES if ok else EXIT_NO


def cmd_oracle_check(args) -> int:
    inst = parse_instance_file(args.instance)
    vs = validate(inst.system)
    route = _route(vs)
    spec = inst.system
    N = args.N if args.N is not None else inst.N
    if route == "reduced":
        reduced, _ = reduced_rank_setup(vs)
        form = BsdeForm(C=reduced.A1, Cbar=reduced.B1, D=reduced.D1)
        closed = gramian(form, N)
        literal = gramian_oracle(form, N, spec.noise, cap=args.cap)
    else:
        ts = TransformedSystem.build(vs)
        if route == "partial":
            form = output_form(ts)
            closed = gramian(form, N)
            literal = gramian_oracle(form, N, spec.noise, cap=args.cap)
        elif route == "input-delay":
            closed = input_delay_gramian(ts.form, spec.tau, N)
            literal = input_delay_gramian_oracle(ts.form, spec.tau, N, spec.noise, cap=args.cap)
        elif route == "state-delay":
            closed = state_delay_gramian(ts.form, spec.d, N)
            literal = state_delay_gramian_oracle(ts.form, spec.d, N, spec.noise, cap=args.cap)
        else:
            closed = gramian(ts.form, N)
            literal = gramian_oracle(ts.form, N, spec.noise, cap=args.cap)
    error = float(np.linalg.norm(closed - literal))
    ok = error <= args.tol
    pairs = [
        ("command", "oracle-check"),
        ("kind", route),
        ("N", N),
        ("frobenius_error", error),
        ("tolerance", args.tol),
        ("verdict", "ok" if ok else "mismatch"),
    ]
    pairs += list(_matrix_pairs("gramian", closed))
    _emit(_render(pairs, args.format), args.out)
    return EXIT_YES if ok else EXIT_NO


def _add_common(sub, tol_default: float) -> None:
    sub.add_argument("--instance", required=True, help="path to a JSON instance file")
    sub.add_argument("--N", type=int, default=None, help="horizon override")
    sub.add_argument("--tol", type=float, default=tol_default, help="decision tolerance")
    sub.add_argument("--format", choices=("text", "csv"), default="text", help="report format")
    sub.add_argument("--cap", type=int, default=DEFAULT_CAP, help="path enumeration cap")
    sub.add_argument("--out", default=None, help="also write the report (or controller table) here")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochctrl",
        description="Exact controllability analysis for linear systems with multiplicative noise.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    _add_common(commands.add_parser("analyze", help="run both controllability criteria"), 1e-8)
    _add_common(commands.add_parser("synthesize", help="build a steering controller table"), 1e-8)
    verify = commands.add_parser("verify", help="forward-simulate a controller table")
    _add_common(verify, 1e-8)
    verify.add_argument("--controller", required=True, help="controller CSV to check")
    _add_common(commands.add_parser("oracle-check", help="compare Gramian against enumeration"), 1e-9)
    return parser


_HANDLERS = {
    "analyze": cmd_analyze,
    "synthesize": cmd_synthesize,
    "verify": cmd_verify,
    "oracle-check": cmd_oracle_check,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (
        NoIntertwiner,
        SingularPencil,
        SingularPBracket,
        StructureUnsupported,
        UnsupportedReducedStructure,
    ) as exc:
        sys.stderr.write(f"inapplicable: {exc}\n")
        return EXIT_INAPPLICABLE
    except SingularGramian as exc:
        sys.stderr.write(f"singular gramian: {exc}\n")
        return EXIT_SINGULAR_GRAMIAN
    except TargetNotInS as exc:
        sys.stderr.write(f"target not attainable: {exc}\n")
        return EXIT_TARGET
    except StochctrlError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
