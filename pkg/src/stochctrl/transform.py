"""Input reorganization and the backward (adjoint-style) form of the plant.

With rank(Bbar) = n we pick an invertible M such that Bbar M = [I 0] and
write u = M [q; v]. The q block enters the noise directly; the v block is
the genuinely free input. Substituting and inverting the drift pencil
A - L Abar yields the backward-form coefficients

    C    = (A - L Abar)^-1
    Cbar = -C L
    D    = -C F

where B M = [L F]. A state value then satisfies
x(k) = E[(C + w(k) Cbar) x(k+1) | past] + D v(k), which is the equation the
rest of the package analyzes. Delay channels transform alongside:
D1 = -C B1 and C1 = -C A1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadUserM, RankDeficient, SingularPencil
from .model import SystemSpec, ValidatedSystem, validate

USER_M_TOL = 1e-10
PENCIL_RCOND = 1e-12


def compute_M(bbar: np.ndarray, user_m: np.ndarray | None = None) -> np.ndarray:
    """Return an invertible M with Bbar M = [I 0].

    Without ``user_m`` the matrix is built by column-pivoted elimination
    (largest absolute entry in the working row), which is deterministic.
    A supplied ``user_m`` is verified against the defining identity and
    rejected with :class:`BadUserM` if it fails.
    """
    bbar = np.asarray(bbar, dtype=float)
    n, m = bbar.shape
    if m < n:
        raise RankDeficient(f"Bbar is {n} x {m}; full row rank needs m >= n")
    if user_m is not None:
        user_m = np.asarray(user_m, dtype=float)
        if user_m.shape != (m, m):
            raise BadUserM(f"M must be {m} x {m}, got {user_m.shape}")
        svals = np.linalg.svd(user_m, compute_uv=False)
        if svals[-1] <= m * np.finfo(float).eps * svals[0]:
            raise BadUserM("M is numerically singular")
        want = np.hstack([np.eye(n), np.zeros((n, m - n))])
        gap = float(np.abs(bbar @ user_m - want).max())
        if gap > USER_M_TOL:
            raise BadUserM(f"Bbar M differs from [I 0] by {gap:.3e} (tolerance {USER_M_TOL})")
        return user_m.copy()

    scale = np.linalg.norm(bbar, 2) if bbar.size else 0.0
    pivot_tol = max(n, m) * np.finfo(float).eps * scale
    T = bbar.copy()
    M = np.eye(m)
    for i in range(n):
        j = i + int(np.argmax(np.abs(T[i, i:])))
        if abs(T[i, j]) <= pivot_tol:
            raise RankDeficient(f"Bbar row {i} has no usable pivot; rank(Bbar) < {n}")
        if j != i:
            T[:, [i, j]] = T[:, [j, i]]
            M[:, [i, j]] = M[:, [j, i]]
        piv = T[i, i]
        T[:, i] /= piv
        M[:, i] /= piv
        for c in range(m):
            if c != i and T[i, c] != 0.0:
                f = T[i, c]
                T[:, c] -= f * T[:, i]
                M[:, c] -= f * M[:, i]
    return M


@dataclass(frozen=True, eq=False)
class InputTransform:
    """Invertible input reorganization u = M [q; v] with B M = [L F]."""

    M: np.ndarray
    Minv: np.ndarray
    L: np.ndarray
    F: np.ndarray
    source: str  # "user" or "constructed"

    @property
    def n(self) -> int:
        return self.L.shape[1]

    @property
    def m(self) -> int:
        return self.M.shape[0]

    @classmethod
    def from_system(cls, spec: SystemSpec) -> "InputTransform":
        M = compute_M(spec.Bbar, spec.M)
        source = "user" if spec.M is not None else "constructed"
        BM = spec.B @ M
        return cls(M=M, Minv=np.linalg.inv(M), L=BM[:, : spec.n], F=BM[:, spec.n :], source=source)


def reconstruct_u(tr: InputTransform, q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """u = M [q; v]; accepts single vectors or row-stacked batches."""
    single = np.asarray(q).ndim == 1
    q = np.atleast_2d(np.asarray(q, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    u = np.hstack([q, v]) @ tr.M.T
    return u[0] if single else u


def split_u(tr: InputTransform, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`reconstruct_u`."""
    single = np.asarray(u).ndim == 1
    u = np.atleast_2d(np.asarray(u, dtype=float))
    qv = u @ tr.Minv.T
    q, v = qv[:, : tr.n], qv[:, tr.n :]
    return (q[0], v[0]) if single else (q, v)


@dataclass(frozen=True, eq=False)
class BsdeForm:
    """Coefficients of the backward form, plus transformed delay channels."""

    C: np.ndarray
    Cbar: np.ndarray
    D: np.ndarray
    D1: np.ndarray | None = None
    C1: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.C.shape[0]

    @property
    def m_free(self) -> int:
        return self.D.shape[1]


def to_bsde(spec: SystemSpec, tr: InputTransform) -> BsdeForm:
    """Invert the drift pencil A - L Abar and assemble the backward form.

    Raises :class:`SingularPencil` when the pencil's reciprocal condition
    number falls below ``PENCIL_RCOND``.
    """
    S = spec.A - tr.L @ spec.Abar
    svals = np.linalg.svd(S, compute_uv=False)
    rcond = svals[-1] / svals[0] if svals[0] > 0 else 0.0
    if rcond <= PENCIL_RCOND:
        raise SingularPencil(
            f"A - L Abar has reciprocal condition number {rcond:.3e} (needs > {PENCIL_RCOND})"
        )
    C = np.linalg.inv(S)
    form = BsdeForm(
        C=C,
        Cbar=-C @ tr.L,
        D=-C @ tr.F,
        D1=None if spec.B1 is None else -C @ spec.B1,
        C1=None if spec.A1 is None else -C @ spec.A1,
    )
    return form


@dataclass(frozen=True, eq=False)
class TransformedSystem:
    """Validated system bundled with its transform and backward form."""

    system: ValidatedSystem
    transform: InputTransform
    form: BsdeForm

    @classmethod
    def build(cls, system: SystemSpec | ValidatedSystem) -> "TransformedSystem":
        if isinstance(system, SystemSpec):
            system = validate(system)
        if not system.full_rank:
            raise RankDeficient(
                "standard transform requires rank(Bbar) = n; use the reduced-rank route"
            )
        tr = InputTransform.from_system(system.spec)
        return cls(system=system, transform=tr, form=to_bsde(system.spec, tr))

    @property
    def spec(self) -> SystemSpec:
        return self.system.spec
