"""Steering controller construction and controller table I/O.

The null controller inverts the steering Gramian once:

    v(i) = D' (C(i-1) ... C(0))' G_N^{-1} x0

with C(k) = C + w(k) Cbar evaluated on each noise history, so v(i) is
measurable at stage i - 1 as required. Solving the backward equation with
terminal 0 under this v yields states x and companions z; the absorbed
input q(k) = z(k) - Abar x(k) completes u = M [q; v]. By construction
x(0) = x0 and every noise path ends at the origin.

Arbitrary attainable terminals split into a homogeneous part (reached with
zero free input) plus a null-steering correction for the remaining initial
offset; superposition of the linear backward equation does the rest.

Controller tables serialize one row per (stage, history) with 17
significant digits, which round-trips float64 exactly.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .criteria import gramian, gramian_invertible
from .errors import DimensionMismatch, SchemaError, SingularGramian, StageMismatch, TargetNotInS
from .pathspace import (
    AdaptedProcess,
    BsdeSolution,
    PathTree,
    backward_solve,
    member_of_S,
    _terminal_array,
)
from .transform import TransformedSystem

FLOAT_FMT = "%.17g"


def stage_products(tree: PathTree, form, upto: int) -> list[np.ndarray]:
    """Per-history products C(0) ... C(k-1) for k = 0..upto.

    Entry k has shape (s^k, n, n); entry 0 is the identity.
    """
    n = form.n
    cmats = np.stack([form.C + w * form.Cbar for w in tree.support])
    prods = [np.eye(n)[None, :, :]]
    for _ in range(upto):
        prods.append(np.einsum("hab,jbc->hjac", prods[-1], cmats).reshape(-1, n, n))
    return prods


@dataclass(eq=False)
class ControllerProcess:
    """Synthesized steering inputs plus the backward solution they came from."""

    kind: str
    tree: PathTree
    x0: np.ndarray
    v: AdaptedProcess
    q: AdaptedProcess
    u: AdaptedProcess
    solution: BsdeSolution
    gramian: np.ndarray
    u1: AdaptedProcess | None = None
    target: np.ndarray | None = None  # leaf array; None steers to the origin

    @property
    def N(self) -> int:
        return self.tree.horizon


def _invert_gramian(G: np.ndarray, x0: np.ndarray, what: str) -> np.ndarray:
    ok, smin = gramian_invertible(G)
    if not ok:
        raise SingularGramian(f"{what} has min singular value {smin:.3e}; cannot invert")
    return np.linalg.solve(G, x0)


def _free_input_from_products(tree, form, prods, g) -> AdaptedProcess:
    vals, depths = {}, {}
    for k in range(tree.horizon + 1):
        y = np.einsum("hab,a->hb", prods[k], g)  # (C(k-1)...C(0))' g per history
        vals[k] = y @ form.D
        depths[k] = k
    return AdaptedProcess(tree, vals, depths)


def _assemble(ts: TransformedSystem, tree, sol: BsdeSolution, v: AdaptedProcess):
    """q from the solved pair, then u = M [q; v] stage by stage."""
    spec = ts.spec
    q_vals, u_vals, depths = {}, {}, {}
    for k in range(tree.horizon + 1):
        xk = sol.x.at(k)
        qk = sol.z.at(k) - xk @ spec.Abar.T
        vk = v.at_depth(k, k)
        q_vals[k] = qk
        u_vals[k] = np.hstack([qk, vk]) @ ts.transform.M.T
        depths[k] = k
    q = AdaptedProcess(tree, q_vals, depths)
    u = AdaptedProcess(tree, u_vals, dict(depths))
    return q, u


def null_controller(ts: TransformedSystem, tree: PathTree, x0: np.ndarray) -> ControllerProcess:
    """Steer x0 to the origin over the tree's horizon.

    Raises :class:`SingularGramian` when the Gramian at that horizon is not
    invertible at the scale-aware threshold.
    """
    form = ts.form
    N = tree.horizon
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (form.n,):
        raise DimensionMismatch(f"x0 must have length {form.n}, got {x0.shape}")
    G = gramian(form, N)
    g = _invert_gramian(G, x0, f"Gramian at N = {N}")
    prods = stage_products(tree, form, N)
    v = _free_input_from_products(tree, form, prods, g)
    sol = backward_solve(tree, form, None, v)
    q, u = _assemble(ts, tree, sol, v)
    return ControllerProcess(
        kind="null", tree=tree, x0=x0, v=v, q=q, u=u, solution=sol, gramian=G
    )


def steer_to_target(
    ts: TransformedSystem,
    tree: PathTree,
    x0: np.ndarray,
    target,
    tol: float = 1e-8,
) -> ControllerProcess:
    """Steer x0 to an attainable terminal value over the tree's horizon.

    The terminal may be a vector (constant over paths) or a full leaf
    array. Rejects terminals outside the attainable set with
    :class:`TargetNotInS`.
    """
    form = ts.form
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (form.n,):
        raise DimensionMismatch(f"x0 must have length {form.n}, got {x0.shape}")
    terminal = _terminal_array(tree, form.n, target)
    membership = member_of_S(tree, form, terminal, tol=tol)
    if not membership.member:
        raise TargetNotInS(
            f"terminal residual {membership.max_residual:.3e} exceeds tolerance {tol}"
        )
    G = gramian(form, tree.horizon)
    g = _invert_gramian(G, x0 - membership.x0, f"Gramian at N = {tree.horizon}")
    prods = stage_products(tree, form, tree.horizon)
    v = _free_input_from_products(tree, form, prods, g)
    sol = backward_solve(tree, form, terminal, v)  # superposition of both parts
    q, u = _assemble(ts, tree, sol, v)
    return ControllerProcess(
        kind="target", tree=tree, x0=x0, v=v, q=q, u=u, solution=sol, gramian=G, target=terminal
    )


def q_expanded(ts: TransformedSystem, tree: PathTree, v: AdaptedProcess) -> AdaptedProcess:
    """Absorbed input via the expanded tail sum instead of the solved pair.

    Evaluates q(k) = E[w(k) sum_{i>k} C(k+1)...C(i-1) D v(i) | stage k-1]
    - Abar x(k) literally on the tree. Exists as a cross-check of the
    primary construction; the two must agree to rounding.
    """
    form, spec = ts.form, ts.spec
    n, N, s = form.n, tree.horizon, tree.s
    cmats = np.stack([form.C + w * form.Cbar for w in tree.support])
    sol = backward_solve(tree, form, None, v)
    full = tree.n_nodes(N)

    def stage_digit(t):
        return (np.arange(full) // s ** (N - 1 - t)) % s

    # psi(j) = D v(j) + C(j) psi(j+1), evaluated at full depth N
    psi = {N + 1: np.zeros((full, n))}
    for j in range(N, 0, -1):
        vj = tree.lift(v.at_depth(j, j), j, N) @ form.D.T
        if j <= N - 1:
            rotated = np.einsum("hab,hb->ha", cmats[stage_digit(j)], psi[j + 1])
        else:
            rotated = np.zeros((full, n))
        psi[j] = vj + rotated

    out_vals, out_depths = {}, {}
    for k in range(N + 1):
        if k == N:
            q_free = np.zeros((tree.n_nodes(N), n))
        else:
            weighted = psi[k + 1] * tree.support[stage_digit(k)][:, None]
            q_free = tree.cond_expect_array(weighted, N, k)
        out_vals[k] = q_free - sol.x.at(k) @ spec.Abar.T
        out_depths[k] = k
    return AdaptedProcess(tree, out_vals, out_depths)


def write_controller_csv(dest, ctrl: ControllerProcess) -> None:
    """One row per (stage, history): stage, history, u columns, u1 columns.

    Stages appear in increasing order; for a delayed input channel the
    pre-horizon stages carry only u1 values, and trailing stages past the
    delayed channel's range leave the u1 cells empty.
    """
    close = False
    if isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__"):
        fh = open(dest, "w", encoding="utf-8", newline="")
        close = True
    else:
        fh = dest
    try:
        writer = csv.writer(fh, lineterminator="\n")
        m = ctrl.u.dim
        m1 = ctrl.u1.dim if ctrl.u1 is not None else 0
        header = ["stage", "history"] + [f"u_{i}" for i in range(m)] + [f"u1_{i}" for i in range(m1)]
        writer.writerow(header)
        stages = sorted(set(ctrl.u.stages()) | (set(ctrl.u1.stages()) if ctrl.u1 else set()))
        for stage in stages:
            has_u = stage in ctrl.u.values
            has_u1 = ctrl.u1 is not None and stage in ctrl.u1.values
            depth = max(
                ctrl.u.depth(stage) if has_u else 0,
                ctrl.u1.depth(stage) if has_u1 else 0,
            )
            u_rows = ctrl.u.at_depth(stage, depth) if has_u else None
            u1_rows = ctrl.u1.at_depth(stage, depth) if has_u1 else None
            for idx in range(ctrl.tree.n_nodes(depth)):
                label = ctrl.tree.index_label(depth, idx)
                row = [str(stage), label]
                row += [FLOAT_FMT % x for x in u_rows[idx]] if has_u else [""] * m
                row += [FLOAT_FMT % x for x in u1_rows[idx]] if has_u1 else [""] * m1
                writer.writerow(row)
    finally:
        if close:
            fh.close()


def controller_csv_text(ctrl: ControllerProcess) -> str:
    buf = io.StringIO()
    write_controller_csv(buf, ctrl)
    return buf.getvalue()


def read_controller_table(
    source, tree: PathTree, m: int, m1: int | None = None
) -> tuple[AdaptedProcess, AdaptedProcess | None]:
    """Parse a controller table back into adapted processes.

    ``m1`` must match the delayed channel width when the instance has one,
    else None. Malformed tables (wrong header, ragged stages, non-numeric
    cells, duplicate or missing histories) raise :class:`SchemaError`.
    """
    if isinstance(source, (str, bytes)) and "\n" in str(source):
        fh = io.StringIO(source)
        close = False
    elif isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        fh = open(source, "r", encoding="utf-8", newline="")
        close = True
    else:
        fh = source
        close = False
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("controller table is empty") from None
        want = ["stage", "history"] + [f"u_{i}" for i in range(m)]
        want += [f"u1_{i}" for i in range(m1)] if m1 else []
        if header != want:
            raise SchemaError(f"controller header {header!r} does not match expected {want!r}")
        u_cells: dict[int, dict[str, list[float]]] = {}
        u1_cells: dict[int, dict[str, list[float]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(want):
                raise SchemaError(f"line {lineno}: expected {len(want)} cells, got {len(row)}")
            try:
                stage = int(row[0])
            except ValueError:
                raise SchemaError(f"line {lineno}: stage {row[0]!r} is not an integer") from None
            label = row[1]
            u_part = row[2 : 2 + m]
            u1_part = row[2 + m :]
            if any(c != "" for c in u_part):
                u_cells.setdefault(stage, {})
                if label in u_cells[stage]:
                    raise SchemaError(f"line {lineno}: duplicate history {label!r} at stage {stage}")
                u_cells[stage][label] = _parse_floats(u_part, lineno)
            if m1 and any(c != "" for c in u1_part):
                u1_cells.setdefault(stage, {})
                if label in u1_cells[stage]:
                    raise SchemaError(f"line {lineno}: duplicate u1 history {label!r} at stage {stage}")
                u1_cells[stage][label] = _parse_floats(u1_part, lineno)
        missing = sorted(set(range(tree.horizon + 1)) - set(u_cells))
        if missing:
            raise SchemaError(f"controller table lacks u rows for stages {missing}")
        u = _cells_to_process(tree, u_cells, m, "u")
        u1 = _cells_to_process(tree, u1_cells, m1, "u1") if m1 else None
        return u, u1
    finally:
        if close:
            fh.close()


def _parse_floats(cells, lineno) -> list[float]:
    out = []
    for c in cells:
        try:
            out.append(float(c))
        except ValueError:
            raise SchemaError(f"line {lineno}: non-numeric cell {c!r}") from None
    return out


def _cells_to_process(tree, cells, dim, what) -> AdaptedProcess:
    if not cells:
        raise SchemaError(f"controller table has no {what} rows")
    vals, depths = {}, {}
    for stage, rows in cells.items():
        lengths = {len(label) for label in rows}
        if len(lengths) != 1:
            raise SchemaError(f"{what} stage {stage}: mixed history lengths {sorted(lengths)}")
        depth = lengths.pop()
        if depth > tree.horizon + 1:
            raise SchemaError(f"{what} stage {stage}: history length {depth} exceeds the tree")
        if len(rows) != tree.n_nodes(depth):
            raise SchemaError(
                f"{what} stage {stage}: {len(rows)} rows do not cover depth {depth} "
                f"({tree.n_nodes(depth)} nodes)"
            )
        arr = np.zeros((tree.n_nodes(depth), dim))
        for label, numbers in rows.items():
            arr[tree.label_to_index(label)] = numbers
        vals[stage] = arr
        depths[stage] = depth
    return AdaptedProcess(tree, vals, depths)
