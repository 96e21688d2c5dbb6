"""Hamiltonian families, spectral data, coupling sets and fermionic helpers.

Qubit ordering: qubit 0 is the leftmost (most significant) tensor factor.
Fermionic modes are mapped with Jordan-Wigner, c_j = Z x ... x Z x a x I x ...
with a = |0><1|, so |1> is the occupied state of a mode.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateGroundState,
    DimensionMismatch,
    NonCommutingTerms,
    NonHermitianInput,
    TooManyModes,
    ZeroModePresent,
)
from .linalg import TOL, as_matrix, hermitize, is_hermitian

MAX_MODES = 7

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}


def pauli_string(s: str) -> np.ndarray:
    """Kronecker product of single-qubit Paulis, e.g. ``"ZXI"``."""
    out = np.ones((1, 1), dtype=complex)
    for ch in s.upper():
        if ch not in PAULI:
            raise ValueError(f"invalid Pauli label {ch!r} in {s!r}")
        out = np.kron(out, PAULI[ch])
    return out


def single_site(op: np.ndarray, site: int, n: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for k in range(n):
        out = np.kron(out, op if k == site else I2)
    return out


def parse_beta(beta) -> float:
    """Accept a non-negative number, ``math.inf`` or the string ``"inf"``."""
    if isinstance(beta, str):
        if beta.strip().lower() in ("inf", "infinity"):
            return math.inf
        raise ValueError(f"invalid beta {beta!r}")
    b = float(beta)
    if not b >= 0:
        raise ValueError("beta must be non-negative")
    return b


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    @property
    def gap(self) -> float:
        return float(self.eigenvalues[1] - self.eigenvalues[0])

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    def to_eigenbasis(self, a: np.ndarray) -> np.ndarray:
        v = self.eigenvectors
        return v.conj().T @ a @ v

    def from_eigenbasis(self, a: np.ndarray) -> np.ndarray:
        v = self.eigenvectors
        return v @ a @ v.conj().T

    def heisenberg(self, a: np.ndarray, t: float) -> np.ndarray:
        """e^{iHt} A e^{-iHt}."""
        ph = np.exp(1j * self.eigenvalues * t)
        return self.from_eigenbasis(ph[:, None] * self.to_eigenbasis(a) * ph.conj()[None, :])


def eigendecompose(h: np.ndarray) -> EigenDecomposition:
    lam, v = np.linalg.eigh(hermitize(h))
    lam.setflags(write=False)
    v.setflags(write=False)
    return EigenDecomposition(lam, v)


@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    kind: str
    n_qubits: int
    matrix: np.ndarray
    eig: EigenDecomposition
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _make_model(kind: str, h: np.ndarray, metadata: dict | None = None) -> HamiltonianModel:
    h = as_matrix(h, "Hamiltonian")
    d = h.shape[0]
    n = int(round(math.log2(d)))
    if 2**n != d:
        raise DimensionMismatch(f"Hamiltonian dimension {d} is not a power of two")
    if not is_hermitian(h):
        raise NonHermitianInput("Hamiltonian is not Hermitian")
    h = hermitize(h)
    h.setflags(write=False)
    return HamiltonianModel(kind, n, h, eigendecompose(h), dict(metadata or {}))


def build_single_qubit() -> HamiltonianModel:
    """The toy model H = -Z."""
    return _make_model("single_qubit", -Z)


def build_explicit(h) -> HamiltonianModel:
    return _make_model("explicit", np.asarray(h, dtype=complex))


def jordan_wigner(n_modes: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Annihilation/creation pairs (c_j, c_j^dagger) on n_modes qubits."""
    if n_modes < 1:
        raise ValueError("need at least one mode")
    if n_modes > MAX_MODES:
        raise TooManyModes(f"{n_modes} modes exceeds the cap of {MAX_MODES}")
    a = np.array([[0, 1], [0, 0]], dtype=complex)
    out = []
    for j in range(n_modes):
        c = np.ones((1, 1), dtype=complex)
        for k in range(n_modes):
            c = np.kron(c, Z if k < j else (a if k == j else I2))
        out.append((c, c.conj().T))
    return out


def build_quadratic_fermion(h) -> HamiltonianModel:
    """H = sum_ij h_ij c_i^dagger c_j in the full Fock space."""
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    if h.shape[0] != h.shape[1]:
        raise DimensionMismatch("coefficient matrix must be square")
    n = h.shape[0]
    if n > MAX_MODES:
        raise TooManyModes(f"{n} modes exceeds the cap of {MAX_MODES}")
    if not np.allclose(h, h.conj().T, atol=1e-12):
        raise NonHermitianInput("coefficient matrix is not Hermitian")
    h = hermitize(h)
    ops = jordan_wigner(n)
    H = sum(h[i, j] * ops[i][1] @ ops[j][0] for i in range(n) for j in range(n))
    if n == 1:
        H = np.asarray(H)
    lam_h = np.linalg.eigvalsh(h)
    meta = {"h": h, "h_norm": float(np.max(np.abs(lam_h))), "h_eigenvalues": lam_h, "n_modes": n}
    return _make_model("quadratic_fermion", H, meta)


def _distinct(vals: np.ndarray, tol: float) -> np.ndarray:
    vals = np.sort(vals)
    keep = [vals[0]]
    for v in vals[1:]:
        if v - keep[-1] > tol:
            keep.append(v)
    return np.array(keep)


def build_commuting_local(terms: Sequence, n_qubits: int | None = None) -> HamiltonianModel:
    """Sum of pairwise commuting local terms.

    ``terms`` holds ``(pauli_string, coefficient)`` pairs such as ``("ZZI", 1.0)``
    or ``(label, matrix)`` pairs with explicit 2^n x 2^n matrices.  The recorded
    ``delta_lambda`` is the largest gap between consecutive distinct eigenvalues
    of H_j, maximised over sites j, where H_j sums the terms acting on site j.
    """
    mats, labels, supports = [], [], []
    for t in terms:
        label, val = t
        if isinstance(val, (int, float, complex, np.number)):
            m = complex(val) * pauli_string(label)
            supp = {k for k, ch in enumerate(label.upper()) if ch != "I"}
        else:
            m = np.asarray(val, dtype=complex)
            supp = None
        mats.append(m)
        labels.append(label)
        supports.append(supp)
    if not mats:
        raise ValueError("no terms given")
    d = mats[0].shape[0]
    n = int(round(math.log2(d)))
    if n_qubits is not None and n_qubits != n:
        raise DimensionMismatch(f"terms act on {n} qubits, expected {n_qubits}")
    for m in mats:
        if m.shape != (d, d):
            raise DimensionMismatch("terms have inconsistent dimensions")
        if not is_hermitian(m):
            raise NonHermitianInput("term is not Hermitian")
    for i, j in itertools.combinations(range(len(mats)), 2):
        if np.linalg.norm(mats[i] @ mats[j] - mats[j] @ mats[i]) > 1e-10:
            raise NonCommutingTerms(i, j, labels)
    for k, supp in enumerate(supports):
        if supp is None:
            supports[k] = _matrix_support(mats[k], n)
    H = sum(mats)
    delta = 0.0
    for site in range(n):
        hj = [m for m, s in zip(mats, supports) if site in s]
        if not hj:
            continue
        ev = _distinct(np.linalg.eigvalsh(hermitize(sum(hj))), 1e-8)
        if len(ev) > 1:
            delta = max(delta, float(np.max(np.diff(ev))))
    meta = {"terms": list(zip(labels, mats)), "delta_lambda": delta}
    return _make_model("commuting_local", H, meta)


def _matrix_support(m: np.ndarray, n: int) -> set[int]:
    """Sites on which ``m`` does not act as the identity."""
    supp = set()
    for k in range(n):
        # m acts trivially on k iff it commutes with every Pauli on k
        for p in (X, Z):
            pk = single_site(p, k, n)
            if np.linalg.norm(pk @ m - m @ pk) > 1e-12:
                supp.add(k)
                break
    return supp


@dataclass(frozen=True, eq=False)
class CouplingSet:
    """Coupling operators, closed under negation.

    ``representatives`` holds one member of each {A, -A} pair; the two signs give
    identical channels and generators, so averages are taken over
    representatives only.
    """

    representatives: tuple

    @property
    def operators(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for label, a in self.representatives:
            out.append((label, a))
            out.append(("-" + label, -a))
        return out

    @property
    def norm_bound(self) -> float:
        return max(float(np.linalg.norm(a, 2)) for _, a in self.representatives)

    def __len__(self) -> int:
        return 2 * len(self.representatives)

    def is_adjoint_closed(self, tol: float = 1e-12) -> bool:
        ops = [a for _, a in self.operators]
        return all(min(np.linalg.norm(a.conj().T - b) for b in ops) <= tol for a in ops)


def coupling_set_for(model: HamiltonianModel) -> CouplingSet:
    if model.kind == "single_qubit":
        reps = [("X", X.copy())]
    elif model.kind == "quadratic_fermion":
        reps = []
        for j, (c, cd) in enumerate(jordan_wigner(model.metadata["n_modes"])):
            reps.append((f"c{j}", c))
            reps.append((f"c{j}+", cd))
    else:
        n = model.n_qubits
        reps = [(f"{p}{k}", single_site(PAULI[p], k, n)) for k in range(n) for p in "XYZ"]
    return CouplingSet(tuple(reps))


@dataclass(frozen=True, eq=False)
class BohrDecomposition:
    frequencies: np.ndarray
    components: tuple

    def component(self, gamma: float, tol: float = 1e-8) -> np.ndarray:
        for f, c in zip(self.frequencies, self.components):
            if abs(f - gamma) < tol:
                return c
        return np.zeros_like(self.components[0]) if self.components else np.zeros((0, 0))


def default_tol_bohr(eig: EigenDecomposition) -> float:
    return 1e-8 * max(1.0, eig.norm)


def bohr_groups(eig: EigenDecomposition, tol_bohr: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Group eigenvalue differences lambda_i - lambda_j into Bohr frequencies.

    Returns (frequencies, labels) with labels[i, j] indexing the frequency of
    the (i, j) eigenbasis entry.
    """
    if tol_bohr is None:
        tol_bohr = default_tol_bohr(eig)
    lam = eig.eigenvalues
    diff = lam[:, None] - lam[None, :]
    flat = diff.ravel()
    order = np.argsort(flat, kind="stable")
    labels = np.empty(flat.size, dtype=int)
    freqs: list[list[float]] = []
    prev = None
    for idx in order:
        v = flat[idx]
        if prev is None or v - prev >= tol_bohr:
            freqs.append([])
        freqs[-1].append(v)
        labels[idx] = len(freqs) - 1
        prev = v
    centers = np.array([np.mean(f) for f in freqs])
    # snap the group containing exact zero differences to 0
    centers[labels[0]] = 0.0
    return centers, labels.reshape(diff.shape)


def bohr_decompose(a, eig: EigenDecomposition, tol_bohr: float | None = None) -> BohrDecomposition:
    """Split A into components A(g) that raise the energy by g."""
    a = np.asarray(a, dtype=complex)
    if a.shape != (eig.dim, eig.dim):
        raise DimensionMismatch("operator and Hamiltonian dimensions differ")
    freqs, labels = bohr_groups(eig, tol_bohr)
    ae = eig.to_eigenbasis(a)
    scale = max(1.0, float(np.abs(ae).max()))
    fs, comps = [], []
    for k, f in enumerate(freqs):
        mask = labels == k
        blk = np.where(mask, ae, 0.0)
        if np.abs(blk).max() <= 1e-14 * scale:
            continue
        fs.append(f)
        comps.append(eig.from_eigenbasis(blk))
    return BohrDecomposition(np.array(fs), tuple(comps))


def number_operator(model: HamiltonianModel) -> np.ndarray:
    """Excitation count above the quasi-free ground state."""
    if model.kind != "quadratic_fermion":
        raise ValueError("number operator needs a quadratic_fermion model")
    h = model.metadata["h"]
    lam, u = np.linalg.eigh(h)
    if np.min(np.abs(lam)) < 1e-8:
        raise ZeroModePresent("single-particle spectrum contains a zero mode")
    ops = jordan_wigner(h.shape[0])
    cs = [c for c, _ in ops]
    d = model.dim
    N = np.zeros((d, d), dtype=complex)
    for k in range(len(lam)):
        b = sum(u[j, k].conj() * cs[j] for j in range(len(cs)))
        bd = b.conj().T
        N += bd @ b if lam[k] > 0 else b @ bd
    return hermitize(N)


def ground_state(model: HamiltonianModel, gap_tol: float = 1e-8) -> np.ndarray:
    if model.eig.gap <= gap_tol:
        raise DegenerateGroundState(f"ground state gap {model.eig.gap:.3e} below {gap_tol:g}")
    psi = model.eig.eigenvectors[:, 0]
    return np.outer(psi, psi.conj())


def thermal_state(model: HamiltonianModel, beta) -> np.ndarray:
    beta = parse_beta(beta)
    if math.isinf(beta):
        return ground_state(model)
    lam = model.eig.eigenvalues
    w = np.exp(-beta * (lam - lam[0]))
    w /= w.sum()
    v = model.eig.eigenvectors
    return hermitize((v * w) @ v.conj().T)


# ---------------------------------------------------------------------------
# model specification files


def _complex_entry(x, path: str) -> complex:
    if isinstance(x, bool):
        raise ConfigError(path, "expected a number")
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in x
    ):
        return complex(x[0], x[1])
    raise ConfigError(path, "expected a number or a [re, im] pair")


def _complex_matrix(rows, path: str) -> np.ndarray:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ConfigError(path, "expected a nested list")
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise ConfigError(path, "matrix must be square")
    return np.array([[_complex_entry(x, f"{path}[{i}][{j}]") for j, x in enumerate(r)]
                     for i, r in enumerate(rows)])


MODEL_FIELDS = {
    "single_qubit": {"kind"},
    "quadratic_fermion": {"kind", "h"},
    "commuting_local": {"kind", "n_qubits", "terms"},
    "explicit": {"kind", "matrix"},
}


def model_from_spec(spec: dict[str, Any], path: str = "model") -> HamiltonianModel:
    """Build a model from its JSON-compatible specification (see README)."""
    if not isinstance(spec, dict):
        raise ConfigError(path, "expected an object")
    kind = spec.get("kind")
    if kind not in MODEL_FIELDS:
        raise ConfigError(f"{path}.kind", f"unknown model kind {kind!r}")
    for key in spec:
        if key not in MODEL_FIELDS[kind]:
            raise ConfigError(f"{path}.{key}", "unknown field")
    try:
        if kind == "single_qubit":
            return build_single_qubit()
        if kind == "quadratic_fermion":
            if "h" not in spec:
                raise ConfigError(f"{path}.h", "missing field")
            return build_quadratic_fermion(_complex_matrix(spec["h"], f"{path}.h"))
        if kind == "explicit":
            if "matrix" not in spec:
                raise ConfigError(f"{path}.matrix", "missing field")
            return build_explicit(_complex_matrix(spec["matrix"], f"{path}.matrix"))
        terms = spec.get("terms")
        if not isinstance(terms, list) or not terms:
            raise ConfigError(f"{path}.terms", "expected a non-empty list")
        parsed = []
        for k, t in enumerate(terms):
            tp = f"{path}.terms[{k}]"
            if not isinstance(t, dict):
                raise ConfigError(tp, "expected an object")
            for key in t:
                if key not in ("pauli", "coeff"):
                    raise ConfigError(f"{tp}.{key}", "unknown field")
            p = t.get("pauli")
            if not isinstance(p, str) or not p or any(ch not in "IXYZ" for ch in p.upper()):
                raise ConfigError(f"{tp}.pauli", "expected a Pauli string over I, X, Y, Z")
            c = t.get("coeff", 1.0)
            if isinstance(c, bool) or not isinstance(c, (int, float)):
                raise ConfigError(f"{tp}.coeff", "expected a real number")
            parsed.append((p, float(c)))
        nq = spec.get("n_qubits")
        if nq is not None and (isinstance(nq, bool) or not isinstance(nq, int) or nq < 1):
            raise ConfigError(f"{path}.n_qubits", "expected a positive integer")
        lens = {len(p) for p, _ in parsed}
        if len(lens) != 1 or (nq is not None and lens != {nq}):
            raise ConfigError(f"{path}.terms", "Pauli strings must all have length n_qubits")
        return build_commuting_local(parsed, nq)
    except ConfigError:
        raise
    except (ValueError, TooManyModes) as exc:
        raise ConfigError(path, str(exc)) from exc
