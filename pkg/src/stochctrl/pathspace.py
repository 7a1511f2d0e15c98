"""Exact computations on the finite tree of noise histories.

A depth-k node is a history (w(0), ..., w(k-1)) encoded as an integer in
base s = |support| with the earliest stage most significant, so the
children of node h are h*s + j and truncating a history is integer
division. All expectations are finite weighted sums in a fixed order;
nothing here samples.

Stage-k values that are measurable with respect to the noise up to stage
k-1 live at depth k. An :class:`AdaptedProcess` stores each stage at its
coarsest measurable depth and never replicates values per leaf.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AdaptednessViolation,
    DimensionMismatch,
    EnumerationTooLarge,
    SchemaError,
    StageMismatch,
)
from .model import NoiseModel, SystemSpec
from .transform import BsdeForm

DEFAULT_CAP = 2**20


class PathTree:
    """All noise histories up to depth horizon + 1, with node probabilities."""

    def __init__(self, noise: NoiseModel, horizon: int, cap: int = DEFAULT_CAP):
        self.noise = noise
        self.horizon = int(horizon)
        self.s = len(noise.support)
        if self.s ** (self.horizon + 1) > cap:
            raise EnumerationTooLarge(
                f"{self.s}^{self.horizon + 1} = {self.s ** (self.horizon + 1)} leaves exceed cap {cap}"
            )
        self.support = np.asarray(noise.support, dtype=float)
        self.probs = np.asarray(noise.probs, dtype=float)
        self._node_probs = [np.array([1.0])]
        for _ in range(self.horizon + 1):
            self._node_probs.append(np.kron(self._node_probs[-1], self.probs))

    def n_nodes(self, depth: int) -> int:
        return self.s**depth

    def node_probs(self, depth: int) -> np.ndarray:
        return self._node_probs[depth]

    def histories(self, depth: int):
        """Tuples of support indices, in node-index order."""
        return itertools.product(range(self.s), repeat=depth)

    def label(self, history) -> str:
        return "".join(str(i) for i in history)

    def label_to_index(self, label: str) -> int:
        idx = 0
        for c in label:
            if not c.isdigit() or int(c) >= self.s:
                raise SchemaError(f"path label {label!r} has a digit outside 0..{self.s - 1}")
            idx = idx * self.s + int(c)
        return idx

    def index_label(self, depth: int, index: int) -> str:
        digits = []
        for _ in range(depth):
            digits.append(str(index % self.s))
            index //= self.s
        return "".join(reversed(digits))

    def lift(self, values: np.ndarray, from_depth: int, to_depth: int) -> np.ndarray:
        """Replicate coarse values onto a finer depth."""
        if to_depth < from_depth:
            raise StageMismatch(f"cannot lift from depth {from_depth} to coarser depth {to_depth}")
        if to_depth == from_depth:
            return values
        return np.repeat(values, self.s ** (to_depth - from_depth), axis=0)

    def cond_expect_array(self, values: np.ndarray, from_depth: int, to_depth: int) -> np.ndarray:
        """Average out the trailing from_depth - to_depth stages."""
        if to_depth > from_depth:
            raise StageMismatch(f"conditioning depth {to_depth} exceeds value depth {from_depth}")
        if to_depth == from_depth:
            return values.copy()
        tail = self._node_probs[from_depth - to_depth]
        shaped = values.reshape(self.s**to_depth, len(tail), -1)
        return np.einsum("hsd,s->hd", shaped, tail)

    def child_contract(self, values: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """One-stage contraction: out[h] = sum_j weights[j] * values[h*s + j]."""
        shaped = values.reshape(-1, self.s, values.shape[-1])
        return np.einsum("hjd,j->hd", shaped, weights)


@dataclass(eq=False)
class AdaptedProcess:
    """Stage-indexed node values, each stage at its own measurable depth."""

    tree: PathTree
    values: dict[int, np.ndarray]
    depths: dict[int, int]
    dim: int = field(init=False)

    def __post_init__(self):
        if set(self.values) != set(self.depths):
            raise StageMismatch("values and depths must cover the same stages")
        dims = set()
        for stage, arr in self.values.items():
            depth = self.depths[stage]
            if not 0 <= depth <= self.tree.horizon + 1:
                raise StageMismatch(f"stage {stage}: depth {depth} outside the tree")
            arr = np.asarray(arr, dtype=float)
            if arr.ndim != 2 or arr.shape[0] != self.tree.n_nodes(depth):
                raise DimensionMismatch(
                    f"stage {stage}: expected {self.tree.n_nodes(depth)} rows at depth {depth}, got {arr.shape}"
                )
            self.values[stage] = arr
            dims.add(arr.shape[1])
        if len(dims) > 1:
            raise DimensionMismatch(f"inconsistent value dimensions across stages: {sorted(dims)}")
        self.dim = dims.pop() if dims else 0

    def stages(self) -> list[int]:
        return sorted(self.values)

    def depth(self, stage: int) -> int:
        try:
            return self.depths[stage]
        except KeyError:
            raise StageMismatch(f"process has no stage {stage}") from None

    def at(self, stage: int) -> np.ndarray:
        try:
            return self.values[stage]
        except KeyError:
            raise StageMismatch(f"process has no stage {stage}") from None

    def at_depth(self, stage: int, depth: int) -> np.ndarray:
        return self.tree.lift(self.at(stage), self.depth(stage), depth)

    def value(self, stage: int, history) -> np.ndarray:
        """Value at a history of any length >= the stage's depth."""
        if isinstance(history, str):
            history = tuple(int(c) for c in history)
        depth = self.depth(stage)
        if len(history) < depth:
            raise StageMismatch(
                f"stage {stage} needs a history of length >= {depth}, got {len(history)}"
            )
        idx = 0
        for i in history[:depth]:
            idx = idx * self.tree.s + int(i)
        return self.at(stage)[idx]

    def __add__(self, other: "AdaptedProcess") -> "AdaptedProcess":
        if self.tree is not other.tree and self.tree.noise != other.tree.noise:
            raise StageMismatch("cannot add processes over different trees")
        if set(self.values) != set(other.values):
            raise StageMismatch("cannot add processes with different stage sets")
        values, depths = {}, {}
        for stage in self.values:
            depth = max(self.depth(stage), other.depth(stage))
            values[stage] = self.at_depth(stage, depth) + other.at_depth(stage, depth)
            depths[stage] = depth
        return AdaptedProcess(self.tree, values, depths)

    @classmethod
    def constant(cls, tree: PathTree, stages, vec: np.ndarray) -> "AdaptedProcess":
        vec = np.atleast_2d(np.asarray(vec, dtype=float))
        return cls(tree, {k: vec.copy() for k in stages}, {k: 0 for k in stages})


def cond_expect(p: AdaptedProcess, stage: int, to_depth: int) -> np.ndarray:
    """E[p(stage) | noise up to depth to_depth], as a node array."""
    return p.tree.cond_expect_array(p.at(stage), p.depth(stage), to_depth)


def _check_input(tree, proc, stage, want_dim, what, to_depth=None) -> np.ndarray:
    """Fetch an adapted input, policing measurability, lifted to a node array.

    ``to_depth`` is the depth of the stage consuming the value; a delayed
    input is decided at an earlier stage but enters the dynamics later.
    """
    if proc is None:
        raise StageMismatch(f"{what} is required but missing")
    depth = proc.depth(stage)
    cap = max(0, stage)
    if depth > cap:
        raise AdaptednessViolation(
            f"{what} at stage {stage} stored at depth {depth} > {cap}; not measurable in time"
        )
    arr = proc.at(stage)
    if arr.shape[1] != want_dim:
        raise DimensionMismatch(f"{what} has dimension {arr.shape[1]}, expected {want_dim}")
    return tree.lift(arr, depth, cap if to_depth is None else to_depth)


def _terminal_array(tree: PathTree, n: int, terminal) -> np.ndarray:
    N = tree.horizon
    if terminal is None:
        return np.zeros((tree.n_nodes(N + 1), n))
    arr = np.asarray(terminal, dtype=float)
    if arr.ndim == 1:
        if arr.shape != (n,):
            raise DimensionMismatch(f"terminal vector must have length {n}, got {arr.shape}")
        return np.tile(arr, (tree.n_nodes(N + 1), 1))
    if arr.shape != (tree.n_nodes(N + 1), n):
        raise DimensionMismatch(
            f"terminal must be ({tree.n_nodes(N + 1)}, {n}) at depth {N + 1}, got {arr.shape}"
        )
    return arr.copy()


def terminal_from_map(tree: PathTree, n: int, mapping: dict) -> np.ndarray:
    """Terminal node array from a {path label: vector} map covering all leaves."""
    N = tree.horizon
    want = tree.n_nodes(N + 1)
    if len(mapping) != want:
        raise SchemaError(f"terminal map must cover all {want} paths, got {len(mapping)}")
    out = np.zeros((want, n))
    seen = set()
    for label, vec in mapping.items():
        if len(label) != N + 1:
            raise SchemaError(f"terminal path label {label!r} must have length {N + 1}")
        idx = tree.label_to_index(label)
        if idx in seen:
            raise SchemaError(f"duplicate terminal path label {label!r}")
        seen.add(idx)
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (n,):
            raise DimensionMismatch(f"terminal value for {label!r} must have length {n}")
        out[idx] = vec
    return out


@dataclass(eq=False)
class BsdeSolution:
    """Solution pair of the backward equation on the tree.

    ``x`` carries stages 0..N+1 (stage k at depth k); ``z`` carries stages
    0..N and is the noise-weighted one-step conditional expectation of x.
    """

    tree: PathTree
    x: AdaptedProcess
    z: AdaptedProcess

    @property
    def x0(self) -> np.ndarray:
        return self.x.at(0)[0]


def backward_solve(
    tree: PathTree,
    form: BsdeForm,
    terminal,
    v: AdaptedProcess | None = None,
    *,
    u1: AdaptedProcess | None = None,
    tau: int | None = None,
) -> BsdeSolution:
    """Solve x(k) = E[(C + w(k) Cbar) x(k+1) | past] + D v(k) [+ D1 u1(k-tau)].

    ``terminal`` may be None (origin), an n-vector, or a full leaf array.
    ``v`` must hold stages 0..N with stage k measurable at depth <= k; the
    same applies to ``u1`` at stages -tau..N-tau (depth 0 before stage 0).
    """
    n, N, s = form.n, tree.horizon, tree.s
    if (u1 is None) != (tau is None):
        raise StageMismatch("u1 and tau must be supplied together")
    if u1 is not None and form.D1 is None:
        raise DimensionMismatch("form has no delayed input channel D1")
    cmats = np.stack([form.C + w * form.Cbar for w in tree.support])
    wprobs = tree.probs * tree.support

    x_vals = {N + 1: _terminal_array(tree, n, terminal)}
    x_depths = {N + 1: N + 1}
    z_vals, z_depths = {}, {}
    for k in range(N, -1, -1):
        xk1 = x_vals[k + 1].reshape(-1, s, n)
        xk = np.einsum("j,jab,hjb->ha", tree.probs, cmats, xk1)
        if form.m_free > 0:
            xk = xk + _check_input(tree, v, k, form.m_free, "v") @ form.D.T
        elif v is not None and v.at(k).shape[1] != 0:
            raise DimensionMismatch("v must be empty when D has no columns")
        if u1 is not None:
            xk = xk + _check_input(tree, u1, k - tau, form.D1.shape[1], "u1", to_depth=k) @ form.D1.T
        x_vals[k] = xk
        x_depths[k] = k
        z_vals[k] = np.einsum("j,hjb->hb", wprobs, xk1)
        z_depths[k] = k
    return BsdeSolution(
        tree,
        AdaptedProcess(tree, x_vals, x_depths),
        AdaptedProcess(tree, z_vals, z_depths),
    )


def backward_solve_state_delay(
    tree: PathTree,
    form: BsdeForm,
    d: int,
    terminal,
    v: AdaptedProcess | None = None,
) -> BsdeSolution:
    """Solve the backward equation with the extra drift term C1 x(k-d).

    The delayed state couples stage k to the earlier unknown x(k-d), so the
    stages cannot be peeled off one at a time; all node values are solved as
    one linear system. Pre-horizon states x(s), s < 0, are zero.
    """
    if form.C1 is None:
        raise DimensionMismatch("form has no delayed state channel C1")
    if d < 1:
        raise StageMismatch(f"state delay must be >= 1, got {d}")
    n, N, s = form.n, tree.horizon, tree.s
    cmats = np.stack([form.C + w * form.Cbar for w in tree.support])
    wprobs = tree.probs * tree.support
    terminal_arr = _terminal_array(tree, n, terminal)

    offsets, total = {}, 0
    for k in range(N + 1):
        offsets[k] = total
        total += tree.n_nodes(k) * n
    lhs = np.eye(total)
    rhs = np.zeros(total)
    for k in range(N + 1):
        nodes = tree.n_nodes(k)
        drive = np.zeros((nodes, n))
        if form.m_free > 0:
            drive = drive + _check_input(tree, v, k, form.m_free, "v") @ form.D.T
        if k == N:
            xk1 = terminal_arr.reshape(nodes, s, n)
            drive = drive + np.einsum("j,jab,hjb->ha", tree.probs, cmats, xk1)
        for h in range(nodes):
            r0 = offsets[k] + h * n
            rhs[r0 : r0 + n] = drive[h]
            if k < N:
                for j in range(s):
                    c0 = offsets[k + 1] + (h * s + j) * n
                    lhs[r0 : r0 + n, c0 : c0 + n] -= tree.probs[j] * cmats[j]
            if k - d >= 0:
                c0 = offsets[k - d] + (h // s**d) * n
                lhs[r0 : r0 + n, c0 : c0 + n] -= form.C1
    try:
        sol = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        from .errors import SingularPBracket

        raise SingularPBracket(None) from None

    x_vals = {k: sol[offsets[k] : offsets[k] + tree.n_nodes(k) * n].reshape(-1, n) for k in range(N + 1)}
    x_vals[N + 1] = terminal_arr
    x_depths = {k: k for k in range(N + 2)}
    z_vals = {
        k: np.einsum("j,hjb->hb", wprobs, x_vals[k + 1].reshape(-1, s, n)) for k in range(N + 1)
    }
    z_depths = {k: k for k in range(N + 1)}
    return BsdeSolution(
        tree,
        AdaptedProcess(tree, x_vals, x_depths),
        AdaptedProcess(tree, z_vals, z_depths),
    )


def representation_residual(sol: BsdeSolution) -> dict[int, float]:
    """Max node residual of x(k+1) = E[x(k+1) | past] + w(k) z(k), per stage."""
    tree = sol.tree
    out = {}
    for k in range(tree.horizon + 1):
        xk1 = sol.x.at(k + 1).reshape(-1, tree.s, sol.x.dim)
        xbar = np.einsum("j,hjb->hb", tree.probs, xk1)
        pred = xbar[:, None, :] + tree.support[None, :, None] * sol.z.at(k)[:, None, :]
        out[k] = float(np.abs(xk1 - pred).max()) if xk1.size else 0.0
    return out


def expected_terminal_product(tree: PathTree, form: BsdeForm, terminal: np.ndarray) -> np.ndarray:
    """E[C(0) C(1) ... C(N) xi] by direct path enumeration."""
    n, N = form.n, tree.horizon
    cmats = np.stack([form.C + w * form.Cbar for w in tree.support])
    prods = np.eye(n)[None, :, :]
    for _ in range(N + 1):
        prods = np.einsum("hab,jbc->hjac", prods, cmats).reshape(-1, n, n)
    leaf_p = tree.node_probs(N + 1)
    return np.einsum("h,hab,hb->a", leaf_p, prods, terminal)


@dataclass(eq=False)
class SMembership:
    """Outcome of the attainable-terminal test."""

    member: bool
    max_residual: float
    tol: float
    residuals: dict[int, float]
    x0: np.ndarray
    x0_product: np.ndarray | None  # None when no product formula applies
    solution: BsdeSolution


def member_of_S(tree: PathTree, form: BsdeForm, terminal, tol: float = 1e-8) -> SMembership:
    """Test whether a terminal value is attainable with zero free input.

    Solves the homogeneous backward equation from the terminal and checks
    the one-step representation residual at every node. On two-point noise
    every terminal passes; richer laws reject terminals whose dependence on
    the final noise is not affine.
    """
    n = form.n
    terminal_arr = _terminal_array(tree, n, terminal)
    sol = backward_solve(tree, form, terminal_arr, None if form.m_free == 0 else _zero_v(tree, form))
    residuals = representation_residual(sol)
    worst = max(residuals.values()) if residuals else 0.0
    scale = max(1.0, float(np.abs(terminal_arr).max()))
    return SMembership(
        member=bool(worst <= tol * scale),
        max_residual=worst,
        tol=tol,
        residuals=residuals,
        x0=sol.x0,
        x0_product=expected_terminal_product(tree, form, terminal_arr),
        solution=sol,
    )


def _zero_v(tree: PathTree, form: BsdeForm) -> AdaptedProcess:
    stages = range(tree.horizon + 1)
    return AdaptedProcess(
        tree,
        {k: np.zeros((1, form.m_free)) for k in stages},
        {k: 0 for k in stages},
    )


def forward_simulate(
    tree: PathTree,
    spec: SystemSpec,
    x0: np.ndarray,
    u: AdaptedProcess,
    *,
    u1: AdaptedProcess | None = None,
) -> AdaptedProcess:
    """Run the plant over every noise path; returns x at stages 0..N+1.

    Uses the delay channels declared on ``spec``: the delayed input needs
    ``u1`` (stages -tau..N-tau), the delayed state uses zero pre-history.
    """
    n, N = spec.n, tree.horizon
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (n,):
        raise DimensionMismatch(f"x0 must have length {n}, got {x0.shape}")
    if spec.B1 is not None and u1 is None:
        raise StageMismatch("system has a delayed input channel; u1 is required")
    xs = {0: x0[None, :].copy()}
    for k in range(N + 1):
        xk = xs[k]
        uk = _check_input(tree, u, k, spec.m, "u")
        drift = xk @ spec.A.T + uk @ spec.B.T
        if spec.B1 is not None:
            drift = drift + _check_input(tree, u1, k - spec.tau, spec.B1.shape[1], "u1", to_depth=k) @ spec.B1.T
        if spec.A1 is not None and k - spec.d >= 0:
            xkd = tree.lift(xs[k - spec.d], k - spec.d, k)
            drift = drift + xkd @ spec.A1.T
        diffusion = xk @ spec.Abar.T + uk @ spec.Bbar.T
        step = drift[:, None, :] + tree.support[None, :, None] * diffusion[:, None, :]
        xs[k + 1] = step.reshape(-1, n)
    return AdaptedProcess(tree, xs, {k: k for k in range(N + 2)})
