"""Controllability with a delayed input or a delayed state.

Both variants keep the backward-form coefficients (C, Cbar, D) and add
one channel. A delayed input contributes D1 u1(k - tau) to the backward
equation; its Gramian augments G_N with terms built from conditional
expectations of the stage products, which collapse by independence to
C^tau times an ordinary product. A delayed state adds the drift
C1 x(k - d); the deterministic P(k) iteration absorbs that coupling and
the Gramian weaves P(k) between the random stage factors.

Each Gramian has a literal path-enumeration oracle next to it. The
closed forms are derived (the collapse step is not written out in any
one place); the oracles recompute the defining expectations term by
term so the two routes can check each other.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .criteria import (
    ControllabilityReport,
    _scan_gramians,
    gramian_invertible,
    moment_step,
)
from .errors import DimensionMismatch, EnumerationTooLarge, SingularPBracket, TargetNotInS
from .model import NoiseModel, SystemSpec, ValidatedSystem, validate
from .pathspace import (
    AdaptedProcess,
    PathTree,
    SMembership,
    _terminal_array,
    _zero_v,
    backward_solve,
    backward_solve_state_delay,
    member_of_S,
    representation_residual,
)
from .synthesis import (
    ControllerProcess,
    _assemble,
    _free_input_from_products,
    _invert_gramian,
    stage_products,
)
from .transform import BsdeForm, TransformedSystem

DEFAULT_CAP = 2**20
P_RCOND = 1e-12


def _transformed(system) -> TransformedSystem:
    if isinstance(system, SystemSpec):
        system = validate(system)
    if isinstance(system, ValidatedSystem):
        system = TransformedSystem.build(system)
    return system


def _default_horizon(spec: SystemSpec) -> int:
    return spec.horizon_max if spec.horizon_max is not None else 2 * spec.n


# ---------------------------------------------------------------------------
# input delay


def _input_delay_terms(form: BsdeForm, tau: int):
    """N-th summand of the delayed-input Gramian.

    The free channel contributes Lambda^i(D D') as usual. The delayed
    channel's i-th term is E[Phi_i D1 D1' Phi_i'] with
    Phi_i = E[C(0)...C(i-1) | F(i-tau-1)]; independence collapses Phi_i
    to C(0)...C(i-tau-1) C^tau, so the term is C^i D1 D1' (C^i)' while
    i <= tau and gains one Lambda application per stage after that.
    """
    X = form.D @ form.D.T
    T = form.D1 @ form.D1.T
    i = 0
    while True:
        yield X + T
        i += 1
        X = moment_step(form.C, form.Cbar, X)
        if i <= tau:
            T = form.C @ T @ form.C.T
        else:
            T = moment_step(form.C, form.Cbar, T)


def input_delay_gramian(form: BsdeForm, tau: int, N: int) -> np.ndarray:
    """Steering Gramian of the delayed-input system over horizon N."""
    if form.D1 is None:
        raise DimensionMismatch("form has no delayed input channel D1")
    if tau < 1:
        raise ValueError(f"input delay must be >= 1, got {tau}")
    G = np.zeros((form.n, form.n))
    for _, term in zip(range(N + 1), _input_delay_terms(form, tau)):
        G += term
    return G


def input_delay_gramian_oracle(
    form: BsdeForm, tau: int, N: int, noise: NoiseModel, cap: int = DEFAULT_CAP
) -> np.ndarray:
    """Same Gramian by literal enumeration, conditional expectations and all.

    For each i the delayed term averages, over prefixes of depth
    max(0, i - tau), the squared conditional mean of the full product
    over its continuations. No collapse step is used.
    """
    if form.D1 is None:
        raise DimensionMismatch("form has no delayed input channel D1")
    n = form.n
    support = [float(w) for w in noise.support]
    probs = [float(p) for p in noise.probs]
    s = len(support)
    if s ** (N + 1) > cap:
        raise EnumerationTooLarge(f"{s}^{N + 1} paths exceed cap {cap}")
    cmats = [form.C + w * form.Cbar for w in support]
    Y = form.D1 @ form.D1.T
    G = np.zeros((n, n))
    for i in range(N + 1):
        for path in itertools.product(range(s), repeat=i):
            p = 1.0
            prod = np.eye(n)
            for j in path:
                p *= probs[j]
                prod = prod @ cmats[j]
            col = prod @ form.D
            G += p * (col @ col.T)
        depth = max(0, i - tau)
        for prefix in itertools.product(range(s), repeat=depth):
            p = 1.0
            for j in prefix:
                p *= probs[j]
            Phi = np.zeros((n, n))
            for tail in itertools.product(range(s), repeat=i - depth):
                q = 1.0
                for j in tail:
                    q *= probs[j]
                prod = np.eye(n)
                for j in prefix + tail:
                    prod = prod @ cmats[j]
                Phi += q * prod
            G += p * (Phi @ Y @ Phi.T)
    return G


def input_delay_controller(
    ts: TransformedSystem,
    tree: PathTree,
    x0: np.ndarray,
    target=None,
    tol: float = 1e-8,
) -> ControllerProcess:
    """Steer x0 to the origin (or an attainable target) despite the lag.

    The free input v follows the plain Gramian pattern; the delayed input
    at stage i - tau uses the conditional mean of the stage product,
    which is known that early. Stages i - tau < 0 are pre-horizon
    decisions; they are deterministic and carried in the output table.
    """
    spec, form = ts.spec, ts.form
    if spec.B1 is None or spec.tau is None:
        raise ValueError("system has no delayed input channel")
    tau, N = spec.tau, tree.horizon
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (form.n,):
        raise DimensionMismatch(f"x0 must have length {form.n}, got {x0.shape}")

    terminal = None
    offset = np.zeros(form.n)
    if target is not None:
        terminal = _terminal_array(tree, form.n, target)
        membership = member_of_S(tree, form, terminal, tol=tol)
        if not membership.member:
            raise TargetNotInS(
                f"terminal residual {membership.max_residual:.3e} exceeds tolerance {tol}"
            )
        offset = membership.x0

    G = input_delay_gramian(form, tau, N)
    g = _invert_gramian(G, x0 - offset, f"delayed-input Gramian at N = {N}")
    prods = stage_products(tree, form, N)
    v = _free_input_from_products(tree, form, prods, g)
    u1_vals, u1_depths = {}, {}
    for i in range(N + 1):
        depth = max(0, i - tau)
        Phi = prods[depth] @ np.linalg.matrix_power(form.C, min(i, tau))
        y = np.einsum("hab,a->hb", Phi, g)
        u1_vals[i - tau] = y @ form.D1
        u1_depths[i - tau] = depth
    u1 = AdaptedProcess(tree, u1_vals, u1_depths)
    sol = backward_solve(tree, form, terminal, v, u1=u1, tau=tau)
    q, u = _assemble(ts, tree, sol, v)
    return ControllerProcess(
        kind="input-delay",
        tree=tree,
        x0=x0,
        v=v,
        q=q,
        u=u,
        solution=sol,
        gramian=G,
        u1=u1,
        target=terminal,
    )


def input_delay_decide(
    system: SystemSpec | ValidatedSystem | TransformedSystem,
    N_max: int | None = None,
    rank_tol: float | None = None,
) -> ControllabilityReport:
    """Scan the delayed-input Gramians; a witness proves controllability.

    Only the sufficient direction is available here, so the rank-test
    fields stay None and a missing witness means "not shown".
    """
    ts = _transformed(system)
    spec = ts.spec
    if spec.B1 is None or spec.tau is None:
        raise ValueError("system has no delayed input channel")
    if N_max is None:
        N_max = _default_horizon(spec)
    G, min_sv, witness = _scan_gramians(
        _input_delay_terms(ts.form, spec.tau), spec.n, N_max, rank_tol
    )
    return ControllabilityReport(
        kind="input-delay",
        dim=spec.n,
        N_max=N_max,
        controllable=witness is not None,
        witness_N=witness,
        min_singular=tuple(min_sv),
        gramian=G,
        gramian_rank=int(np.linalg.matrix_rank(G)),
        rank_R=None,
        span_depth=None,
        criteria_agree=None,
        transform_source=ts.transform.source,
    )


# ---------------------------------------------------------------------------
# state delay


@dataclass(frozen=True, eq=False)
class PSequence:
    """Deterministic backward iteration absorbing the delayed-state drift.

    P(k) is the identity on the tail band k = N .. N-d+1 and
    [I - C P(k+1) ... C P(k+d) C1]^{-1} below it.
    """

    d: int
    N: int
    P: tuple[np.ndarray, ...]  # indices 0..N


def state_delay_P(form: BsdeForm, d: int, N: int) -> PSequence:
    """Run the backward iteration, failing loudly on a singular bracket."""
    if form.C1 is None:
        raise DimensionMismatch("form has no delayed state channel C1")
    if d < 1:
        raise ValueError(f"state delay must be >= 1, got {d}")
    n = form.n
    P: dict[int, np.ndarray] = {k: np.eye(n) for k in range(max(0, N - d + 1), N + 1)}
    for k in range(N - d, -1, -1):
        bracket = np.eye(n)
        for j in range(k + 1, k + d + 1):
            bracket = bracket @ form.C @ P[j]
        bracket = np.eye(n) - bracket @ form.C1
        svals = np.linalg.svd(bracket, compute_uv=False)
        if svals[0] == 0.0 or svals[-1] / svals[0] <= P_RCOND:
            raise SingularPBracket(k)
        P[k] = np.linalg.inv(bracket)
    return PSequence(d=d, N=N, P=tuple(P[k] for k in range(N + 1)))


def state_delay_gramian(
    form: BsdeForm, d: int, N: int, pseq: PSequence | None = None
) -> np.ndarray:
    """Steering Gramian of the delayed-state system over horizon N.

    Accumulated backward: S <- P(j)(D D' + Lambda(S))P(j)' from j = N
    down to 0, which sums the defining products exactly because the
    moment recursion is linear in its seed.
    """
    if pseq is None:
        pseq = state_delay_P(form, d, N)
    if pseq.N != N or pseq.d != d:
        raise ValueError("P-sequence was built for a different horizon or delay")
    DDt = form.D @ form.D.T
    S = np.zeros((form.n, form.n))
    for j in range(N, -1, -1):
        S = pseq.P[j] @ (DDt + moment_step(form.C, form.Cbar, S)) @ pseq.P[j].T
    return S


def state_delay_gramian_oracle(
    form: BsdeForm, d: int, N: int, noise: NoiseModel, cap: int = DEFAULT_CAP
) -> np.ndarray:
    """Same Gramian by literal enumeration of P(0)C(0)...P(j-1)C(j-1)P(j)D."""
    pseq = state_delay_P(form, d, N)
    n = form.n
    support = [float(w) for w in noise.support]
    probs = [float(p) for p in noise.probs]
    s = len(support)
    if s ** (N + 1) > cap:
        raise EnumerationTooLarge(f"{s}^{N + 1} paths exceed cap {cap}")
    cmats = [form.C + w * form.Cbar for w in support]
    G = np.zeros((n, n))
    for j in range(N + 1):
        for path in itertools.product(range(s), repeat=j):
            p = 1.0
            prod = pseq.P[0]
            for t, dig in enumerate(path):
                p *= probs[dig]
                prod = prod @ cmats[dig] @ pseq.P[t + 1]
            col = prod @ form.D
            G += p * (col @ col.T)
    return G


def _delayed_stage_products(tree: PathTree, form: BsdeForm, pseq: PSequence) -> list[np.ndarray]:
    """Per-history products P(0)C(0) ... C(j-1)P(j) for j = 0..N."""
    n = form.n
    cmats = np.stack([form.C + w * form.Cbar for w in tree.support])
    prods = [pseq.P[0][None, :, :]]
    for j in range(tree.horizon):
        grown = np.einsum("hab,jbc->hjac", prods[-1], cmats).reshape(-1, n, n)
        prods.append(grown @ pseq.P[j + 1])
    return prods


def member_of_S_state_delay(
    tree: PathTree, form: BsdeForm, d: int, terminal, tol: float = 1e-8
) -> SMembership:
    """Attainability test against the delayed homogeneous backward equation.

    Same residual method as :func:`member_of_S`, with the zero-input
    solve replaced by the delayed one. There is no product formula for
    the recovered initial state here, so that cross-check is omitted.
    """
    terminal_arr = _terminal_array(tree, form.n, terminal)
    v = None if form.m_free == 0 else _zero_v(tree, form)
    sol = backward_solve_state_delay(tree, form, d, terminal_arr, v)
    residuals = representation_residual(sol)
    worst = max(residuals.values()) if residuals else 0.0
    scale = max(1.0, float(np.abs(terminal_arr).max()))
    return SMembership(
        member=bool(worst <= tol * scale),
        max_residual=worst,
        tol=tol,
        residuals=residuals,
        x0=sol.x0,
        x0_product=None,
        solution=sol,
    )


def state_delay_controller(
    ts: TransformedSystem,
    tree: PathTree,
    x0: np.ndarray,
    target=None,
    tol: float = 1e-8,
) -> ControllerProcess:
    """Steer x0 to the origin (or an attainable target) despite the lag.

    Pre-horizon states are zero, so the P-weighted products start clean
    at stage 0. The backward solution couples stages d apart and is
    computed in one dense solve.
    """
    spec, form = ts.spec, ts.form
    if spec.A1 is None or spec.d is None:
        raise ValueError("system has no delayed state channel")
    d, N = spec.d, tree.horizon
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (form.n,):
        raise DimensionMismatch(f"x0 must have length {form.n}, got {x0.shape}")

    terminal = None
    offset = np.zeros(form.n)
    if target is not None:
        terminal = _terminal_array(tree, form.n, target)
        membership = member_of_S_state_delay(tree, form, d, terminal, tol=tol)
        if not membership.member:
            raise TargetNotInS(
                f"terminal residual {membership.max_residual:.3e} exceeds tolerance {tol}"
            )
        offset = membership.x0

    pseq = state_delay_P(form, d, N)
    G = state_delay_gramian(form, d, N, pseq)
    g = _invert_gramian(G, x0 - offset, f"delayed-state Gramian at N = {N}")
    prods = _delayed_stage_products(tree, form, pseq)
    v = _free_input_from_products(tree, form, prods, g)
    sol = backward_solve_state_delay(tree, form, d, terminal, v)
    q, u = _assemble(ts, tree, sol, v)
    return ControllerProcess(
        kind="state-delay",
        tree=tree,
        x0=x0,
        v=v,
        q=q,
        u=u,
        solution=sol,
        gramian=G,
        target=terminal,
    )


def state_delay_decide(
    system: SystemSpec | ValidatedSystem | TransformedSystem,
    N_max: int | None = None,
    rank_tol: float | None = None,
) -> ControllabilityReport:
    """Scan the delayed-state Gramians; a witness proves controllability.

    The P-sequence depends on the horizon, so each N is computed afresh
    rather than by extending a running sum. A singular bracket at any
    scanned horizon propagates; the criterion is inapplicable there.
    """
    ts = _transformed(system)
    spec = ts.spec
    if spec.A1 is None or spec.d is None:
        raise ValueError("system has no delayed state channel")
    if N_max is None:
        N_max = _default_horizon(spec)
    min_sv: list[float] = []
    witness = None
    G = np.zeros((spec.n, spec.n))
    for N in range(N_max + 1):
        G = state_delay_gramian(ts.form, spec.d, N)
        ok, smin = gramian_invertible(G, rank_tol)
        min_sv.append(smin)
        if ok and witness is None:
            witness = N
    return ControllabilityReport(
        kind="state-delay",
        dim=spec.n,
        N_max=N_max,
        controllable=witness is not None,
        witness_N=witness,
        min_singular=tuple(min_sv),
        gramian=G,
        gramian_rank=int(np.linalg.matrix_rank(G)),
        rank_R=None,
        span_depth=None,
        criteria_agree=None,
        transform_source=ts.transform.source,
    )
