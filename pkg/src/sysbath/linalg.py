"""Dense complex linear algebra kernel.

Operators are plain ``numpy`` complex arrays.  Superoperators act on
column-stacked vectorizations, ``vec(X) = X.reshape(-1, order="F")``, so that
``vec(L X R) = (R^T kron L) vec(X)``.  This convention is used everywhere in
the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DimensionMismatch, NonHermitianInput, OddDimension


@dataclass(frozen=True)
class Tolerances:
    herm: float = 1e-10  # multiplied by the dimension
    psd: float = 1e-9
    trace: float = 1e-10

    def herm_for(self, dim: int) -> float:
        return self.herm * dim


TOL = Tolerances()


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {a.shape}")
    if a.shape[0] < 2:
        raise DimensionMismatch(f"{name} must have dimension >= 2")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def is_hermitian(m: np.ndarray, tol: float | None = None) -> bool:
    if tol is None:
        tol = TOL.herm_for(m.shape[0])
    return float(np.linalg.norm(m - m.conj().T)) <= tol * max(1.0, float(np.linalg.norm(m)))


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def check_density_matrix(rho, name: str = "rho") -> np.ndarray:
    """Validate and return ``rho`` as a density matrix (Hermitian, unit trace, PSD)."""
    r = as_matrix(rho, name)
    d = r.shape[0]
    if np.linalg.norm(r - r.conj().T) > TOL.herm_for(d):
        raise NonHermitianInput(f"{name} is not Hermitian")
    if abs(np.trace(r) - 1.0) > TOL.trace * 10:
        raise ValueError(f"{name} does not have unit trace (trace={np.trace(r).real:.3e})")
    if np.linalg.eigvalsh(hermitize(r))[0] < -TOL.psd:
        raise ValueError(f"{name} is not positive semidefinite")
    return r


@dataclass(frozen=True, eq=False)
class Superoperator:
    """A linear map on d x d matrices, stored as a d^2 x d^2 matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = m.shape[0]
        d = int(round(np.sqrt(n)))
        if m.ndim != 2 or m.shape[1] != n or d * d != n or d < 2:
            raise DimensionMismatch(f"superoperator matrix has invalid shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        d = self.dim
        return (self.matrix @ vec(x)).reshape(d, d, order="F")

    def __add__(self, other: Superoperator) -> Superoperator:
        return Superoperator(self.matrix + other.matrix)

    def __sub__(self, other: Superoperator) -> Superoperator:
        return Superoperator(self.matrix - other.matrix)

    def __mul__(self, c) -> Superoperator:
        return Superoperator(self.matrix * c)

    __rmul__ = __mul__

    def __matmul__(self, other: Superoperator) -> Superoperator:
        """Composition: ``(self @ other)(X) = self(other(X))``."""
        return Superoperator(self.matrix @ other.matrix)

    def adjoint(self) -> Superoperator:
        """Hilbert-Schmidt adjoint."""
        return Superoperator(self.matrix.conj().T)

    @classmethod
    def identity(cls, d: int) -> Superoperator:
        return cls(np.eye(d * d, dtype=complex))


def vec(x: np.ndarray) -> np.ndarray:
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int | None = None) -> np.ndarray:
    if d is None:
        d = int(round(np.sqrt(v.shape[0])))
    return np.asarray(v).reshape(d, d, order="F")


def kron(a, b) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def herm_expm(h, scale: complex) -> np.ndarray:
    """exp(scale * h) for Hermitian ``h`` via its eigendecomposition."""
    h = np.asarray(h, dtype=complex)
    if not is_hermitian(h):
        raise NonHermitianInput("herm_expm requires a Hermitian matrix")
    lam, v = np.linalg.eigh(hermitize(h))
    return (v * np.exp(scale * lam)) @ v.conj().T


def partial_trace_last_qubit(rho) -> np.ndarray:
    """Trace out the last tensor factor, assumed to be a qubit."""
    rho = np.asarray(rho, dtype=complex)
    n = rho.shape[0]
    if n % 2:
        raise OddDimension(f"dimension {n} is odd")
    d = n // 2
    return np.einsum("iaja->ij", rho.reshape(d, 2, d, 2))


def schatten_norm(m, p: Literal[1, 2, "inf"] | float = 2) -> float:
    m = np.asarray(m, dtype=complex)
    if p == 2:
        return float(np.linalg.norm(m))
    s = np.linalg.svd(m, compute_uv=False)
    if p == 1:
        return float(s.sum())
    if p in ("inf", np.inf):
        return float(s[0]) if s.size else 0.0
    raise ValueError(f"unsupported Schatten index {p!r}")


def trace_distance(a, b) -> float:
    """Trace norm of the difference (no factor 1/2)."""
    return float(np.abs(np.linalg.eigvalsh(hermitize(np.asarray(a) - np.asarray(b)))).sum())


def superop_from_left_right(l, r) -> Superoperator:
    """Superoperator of X -> l X r."""
    l = np.asarray(l, dtype=complex)
    r = np.asarray(r, dtype=complex)
    if l.shape != r.shape or l.ndim != 2 or l.shape[0] != l.shape[1]:
        raise DimensionMismatch(f"incompatible shapes {l.shape} and {r.shape}")
    return Superoperator(np.kron(r.T, l))


def left_mult(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    return np.kron(np.eye(a.shape[0]), a)


def right_mult(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    return np.kron(a.T, np.eye(a.shape[0]))


def commutator_superop(h) -> Superoperator:
    """X -> -i[h, X]."""
    return Superoperator(-1j * (left_mult(h) - right_mult(h)))


def unitary_channel(u) -> Superoperator:
    """X -> u X u^dagger."""
    u = np.asarray(u, dtype=complex)
    return Superoperator(np.kron(u.conj(), u))


def kraus_superop(kraus: np.ndarray) -> Superoperator:
    """Sum over a stack of Kraus operators, shape (n, d, d)."""
    kraus = np.asarray(kraus, dtype=complex)
    d = kraus.shape[-1]
    m = np.einsum("kab,kij->aibj", kraus.conj(), kraus).reshape(d * d, d * d)
    return Superoperator(m)


def choi_matrix(s: Superoperator) -> np.ndarray:
    """Choi matrix C = sum_ij |i><j| (input) kron S(|i><j|) (output)."""
    d = s.dim
    # column (i + j d) of S is vec(S(|i><j|)); entry (a + b d) is S(|i><j|)[a, b]
    t = s.matrix.reshape(d, d, d, d, order="F")  # indices a, b, i, j
    return t.transpose(2, 0, 3, 1).reshape(d * d, d * d)


def choi_min_eigenvalue(s: Superoperator) -> float:
    return float(np.linalg.eigvalsh(hermitize(choi_matrix(s)))[0])


def trace_preservation_error(s: Superoperator) -> float:
    """max |Tr S(E_ij) - delta_ij| over matrix units, i.e. the row-sum condition."""
    d = s.dim
    tr_row = s.matrix[:: d + 1, :].sum(axis=0)
    return float(np.max(np.abs(tr_row - vec(np.eye(d)))))


def is_cptp(s: Superoperator, psd_tol: float = 1e-8, tp_tol: float = 1e-9) -> bool:
    return choi_min_eigenvalue(s) >= -psd_tol and trace_preservation_error(s) <= tp_tol


def _batched_trace_norms(s: Superoperator, xs: np.ndarray) -> np.ndarray:
    d = s.dim
    cols = xs.transpose(0, 2, 1).reshape(len(xs), d * d).T
    out = (s.matrix @ cols).T.reshape(len(xs), d, d).transpose(0, 2, 1)
    return np.linalg.svd(out, compute_uv=False).sum(axis=1)


def induced_trace_norm(
    s: Superoperator,
    n_random: int = 200,
    seed: int = 20240601,
    refine: int = 30,
    extra: list[np.ndarray] | None = None,
) -> float:
    """Estimate of the induced trace norm sup ||S(X)||_1 / ||X||_1.

    The supremum is attained at a rank-one X = |u><v|.  Candidates are the
    matrix units |i><j|, ``n_random`` seeded random |u><v|, the matrix built
    from the top singular vector of S, and any ``extra`` inputs (normalised in
    trace norm).  The best few are then improved by an alternating ascent
    which never decreases the objective, so the estimate is a monotone lower
    bound on the exact norm.
    """
    d = s.dim
    cands = [np.eye(d, dtype=complex)[:, [i]] @ np.eye(d, dtype=complex)[[j], :]
             for i in range(d) for j in range(d)]
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(n_random, d)) + 1j * rng.normal(size=(n_random, d))
    v = rng.normal(size=(n_random, d)) + 1j * rng.normal(size=(n_random, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    cands.extend(np.einsum("ki,kj->kij", u, v.conj()))
    _, _, vh = np.linalg.svd(s.matrix)
    top = unvec(vh[0].conj(), d)
    uu, _, vvh = np.linalg.svd(top)
    cands.append(np.outer(uu[:, 0], vvh[0]))
    for x in extra or []:
        x = np.asarray(x, dtype=complex)
        nx = schatten_norm(x, 1)
        if nx > 0:
            cands.append(x / nx)
    xs = np.array(cands)
    vals = _batched_trace_norms(s, xs)
    best = float(vals.max())
    if refine <= 0:
        return best
    adj = s.adjoint()
    for k in np.argsort(vals)[::-1][:5]:
        uu, _, vvh = np.linalg.svd(xs[k])
        x = np.outer(uu[:, 0], vvh[0])
        cur = schatten_norm(s(x), 1)
        for _ in range(refine):
            y = s(x)
            a, _, bh = np.linalg.svd(y)
            w = a @ bh
            bmat = adj(w)
            p, sv, qh = np.linalg.svd(bmat)
            x = np.outer(p[:, 0], qh[0])
            new = schatten_norm(s(x), 1)
            if new <= cur * (1 + 1e-12):
                cur = max(cur, new)
                break
            cur = new
        best = max(best, cur)
    return best
