"""Effective generators of the repeated channel and related Lindbladians.

Conventions
-----------
* A(t) = e^{iHt} A e^{-iHt}; the Bohr component A(xi) raises the energy by xi.
* K_T(k) = int_{-T}^{T} f(t) e^{ikt} dt, so in the eigenbasis the jump operator
  V_A(w) = int f(t) A(t) e^{-iwt} dt has entries A_ij K_T(l_i - l_j - w).
* Per bath frequency w, with ancilla populations p0 = 1/(1+e^{-beta w}) and
  p1 = 1 - p0, second-order expansion of one channel step gives

      L_w = p0 D[V_A(-w)] + p1 D[V_A(-w)^dag] - i[H_LS(w), .]
      H_LS(w) = -( p0 Im G_A(-w) + p1 Im G_{A^dag}(w) ),  Im M = (M - M^dag)/(2i)

  where G_A(w) is the ordered double integral of f f A^dag(s2) A(s1)
  e^{-iw(s1-s2)} over s2 < s1.  The generator is the g-weighted average of L_w
  over w and the coupling set.  After the average over A and A^dag this equals
  the integral of gamma(w) D[V_A(w)] with gamma(w) = (g(w)+g(-w))/(1+e^{beta w}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy.special import expit, wofz

from .channel import (
    ChannelParams,
    FilterSpec,
    FrequencyDistribution,
    bath_populations,
    gauss_legendre_panels,
    window_integral,
)
from .errors import QuadratureNoConvergence, SingularGibbsState
from .linalg import (
    Superoperator,
    commutator_superop,
    hermitize,
    left_mult,
    right_mult,
    schatten_norm,
)
from .models import (
    CouplingSet,
    EigenDecomposition,
    HamiltonianModel,
    bohr_groups,
    build_single_qubit,
    coupling_set_for,
    parse_beta,
)

TWO_PI = 2 * math.pi


@dataclass(frozen=True, eq=False)
class GeneratorBundle:
    coherent: np.ndarray
    dissipative: Superoperator
    provenance: str = "custom"

    @property
    def dim(self) -> int:
        return self.coherent.shape[0]

    @property
    def total(self) -> Superoperator:
        return commutator_superop(self.coherent) + self.dissipative

    def scaled(self, c: float) -> GeneratorBundle:
        return GeneratorBundle(self.coherent * c, self.dissipative * c, self.provenance)


# ---------------------------------------------------------------------------
# scalar weights and kernels


def gamma_weight(beta, freq: FrequencyDistribution, omega):
    beta = parse_beta(beta)
    omega = np.asarray(omega, dtype=float)
    gs = freq.density(omega) + freq.density(-omega)
    if math.isinf(beta):
        return np.where(omega < 0, gs, 0.0)
    return gs * expit(-beta * omega)


def lamb_kernel(u, v, sigma: float, T: float = math.inf, tol: float = 1e-8):
    """J(u, v) = int int_{-T <= s2 < s1 <= T} f(s1) f(s2) e^{i u s2} e^{i v s1} ds2 ds1.

    With c = (s1+s2)/2 and r = s1-s2 the inner c-integral is a Gaussian window
    integral in closed form.  For T = inf the r-integral is also closed form;
    for finite T it is done by composite Gauss-Legendre with panel doubling.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    k = u + v
    q = 0.5 * (v - u)
    if math.isinf(T):
        return sigma * math.sqrt(TWO_PI) * np.exp(-0.5 * (sigma * k) ** 2) * wofz(math.sqrt(2) * sigma * q)
    shape = k.shape
    # J depends on (k, q) only; both take few distinct values in practice
    ku, k_idx = np.unique(np.round(k.ravel(), 12), return_inverse=True)
    qu, q_idx = np.unique(np.round(q.ravel(), 12), return_inverse=True)
    pref = 1.0 / (math.sqrt(TWO_PI) * sigma)
    s = math.sqrt(2) * sigma
    R = min(2 * T, 18 * sigma)
    # oscillation rate in r: e^{iqr} and e^{-ik(T - r/2)} from the window integral
    rate = float(np.max(np.abs(qu))) + 0.5 * float(np.max(np.abs(ku))) + 1.0 / sigma
    n = max(8, int(math.ceil(R * rate / 3.0)))
    prev = None
    while n <= 1 << 16:
        r, w = gauss_legendre_panels(0.0, R, n)
        base = window_integral(T - 0.5 * r[None, :], ku[:, None], s)
        base *= pref * w * np.exp(-(r**2) / (8 * sigma**2))
        table = np.empty((len(qu), len(ku)), dtype=complex)
        for lo in range(0, len(qu), 512):
            table[lo:lo + 512] = np.exp(1j * np.outer(qu[lo:lo + 512], r)) @ base.T
        val = table[q_idx, k_idx]
        if prev is not None:
            scale = max(1.0, float(np.max(np.abs(val))))
            if np.max(np.abs(val - prev)) <= tol * scale:
                return val.reshape(shape)
        prev = val
        n *= 2
    raise QuadratureNoConvergence("Lamb-shift kernel did not converge")


# ---------------------------------------------------------------------------
# operators


def _eig_arrays(a, eig: EigenDecomposition):
    return eig.to_eigenbasis(np.asarray(a, dtype=complex)), eig.eigenvalues


def jump_operator(a, eig: EigenDecomposition, filt: FilterSpec, T: float, omega: float) -> np.ndarray:
    """V_A(w) = int_{-T}^{T} f(t) A(t) e^{-iwt} dt."""
    ae, lam = _eig_arrays(a, eig)
    kern = filt.fourier(lam[:, None] - lam[None, :] - omega, T)
    return eig.from_eigenbasis(ae * kern)


def _jumps_batch(ae: np.ndarray, lam: np.ndarray, filt: FilterSpec, T: float, omegas: np.ndarray) -> np.ndarray:
    """Eigenbasis V_A(w) for every w, shape (n, d, d)."""
    diff = lam[:, None] - lam[None, :]
    return ae[None] * filt.fourier(diff[None] - omegas[:, None, None], T)


def _lamb_J(lam: np.ndarray, sigma: float, T: float, omegas: np.ndarray) -> np.ndarray:
    """Kernel values J(l_i - l_k + w, l_k - l_j - w), shape (n, d, d, d); independent of A."""
    li = lam[:, None, None]
    lk = lam[None, :, None]
    lj = lam[None, None, :]
    om = omegas[:, None, None, None]
    return lamb_kernel((li - lk)[None] + om, (lk - lj)[None] - om, sigma, T)


def _lamb_G_from_J(ae: np.ndarray, J: np.ndarray) -> np.ndarray:
    return np.einsum("ik,kj,nikj->nij", ae.conj().T, ae, J, optimize=True)


def _lamb_G_batch(ae: np.ndarray, lam: np.ndarray, sigma: float, T: float, omegas: np.ndarray) -> np.ndarray:
    """Eigenbasis G_A(w) for every w, shape (n, d, d)."""
    return _lamb_G_from_J(ae, _lamb_J(lam, sigma, T, omegas))


def lamb_shift_G(a, eig: EigenDecomposition, filt: FilterSpec, T: float, omega: float) -> np.ndarray:
    ae, lam = _eig_arrays(a, eig)
    return eig.from_eigenbasis(_lamb_G_batch(ae, lam, filt.sigma, T, np.array([float(omega)]))[0])


def _im(m: np.ndarray) -> np.ndarray:
    return (m - np.swapaxes(m, -1, -2).conj()) / 2j


def _lamb_H_batch(ae, lam, sigma, T, omegas, p0, p1, kernels=None):
    """H_LS(w) = -(p0 Im G_A(-w) + p1 Im G_{A^dag}(w)); ``kernels`` caches (J(-w), J(w))."""
    if kernels is None:
        kernels = (_lamb_J(lam, sigma, T, -omegas), _lamb_J(lam, sigma, T, omegas))
    g_minus = _lamb_G_from_J(ae, kernels[0])
    g_dag = _lamb_G_from_J(ae.conj().T, kernels[1])
    return -(p0[:, None, None] * _im(g_minus) + p1[:, None, None] * _im(g_dag))


def lamb_shift_H(a, eig: EigenDecomposition, filt: FilterSpec, T: float, omega: float, beta) -> np.ndarray:
    """Hermitian Lamb shift of a single (A, w) sample."""
    ae, lam = _eig_arrays(a, eig)
    p0, p1 = bath_populations(beta, np.array([float(omega)]))
    h = _lamb_H_batch(ae, lam, filt.sigma, T, np.array([float(omega)]), p0, p1)[0]
    return hermitize(eig.from_eigenbasis(h))


def dissipator(v) -> Superoperator:
    v = np.asarray(v, dtype=complex)
    vv = v.conj().T @ v
    return Superoperator(np.kron(v.conj(), v) - 0.5 * (left_mult(vv) + right_mult(vv)))


def weighted_dissipator_sum(vs: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Matrix of sum_k w_k D[V_k] for a stack of operators."""
    vs = np.asarray(vs, dtype=complex)
    d = vs.shape[-1]
    jump = np.einsum("k,kab,kij->aibj", weights, vs.conj(), vs, optimize=True).reshape(d * d, d * d)
    vv = np.einsum("k,kba,kbc->ac", weights, vs.conj(), vs, optimize=True)
    return jump - 0.5 * (left_mult(vv) + right_mult(vv))


def _in_basis(s_eig: np.ndarray, eig: EigenDecomposition) -> np.ndarray:
    """Transform an eigenbasis superoperator matrix to the computational basis."""
    v = eig.eigenvectors
    w = np.kron(v.conj(), v)
    return w @ s_eig @ w.conj().T


def effective_generator(model: HamiltonianModel, params: ChannelParams,
                        T_mode: Literal["finite", "infinite"] = "finite",
                        lamb_shift: bool = True) -> GeneratorBundle:
    """Second-order generator L of one channel step, rho' = U(T) e^{alpha^2 L} U(T) rho.

    Averaged over the coupling representatives and the frequency quadrature of
    ``params`` (the same nodes the channel uses).  ``T_mode="infinite"`` gives
    the infinite-window generator.
    """
    if model.dim > 64:
        from .errors import DimensionTooLarge

        raise DimensionTooLarge(f"dimension {model.dim} exceeds 64")
    T = params.T if T_mode == "finite" else math.inf
    eig = model.eig
    lam = eig.eigenvalues
    d = model.dim
    omegas, wts = params.omega_nodes()
    p0, p1 = bath_populations(params.beta, omegas)
    reps = params.coupling.representatives
    diss = np.zeros((d * d, d * d), dtype=complex)
    coh = np.zeros((d, d), dtype=complex)
    kernels = None
    if lamb_shift:
        kernels = (_lamb_J(lam, params.sigma, T, -omegas), _lamb_J(lam, params.sigma, T, omegas))
    for _, a in reps:
        ae = eig.to_eigenbasis(a)
        v = _jumps_batch(ae, lam, params.filter, T, -omegas)
        vs = np.concatenate([v, np.swapaxes(v, 1, 2).conj()])
        cw = np.concatenate([wts * p0, wts * p1])
        keep = cw > 0
        diss += weighted_dissipator_sum(vs[keep], cw[keep])
        if lamb_shift:
            h = _lamb_H_batch(ae, lam, params.sigma, T, omegas, p0, p1, kernels)
            coh += np.einsum("n,nij->ij", wts, h)
    diss /= len(reps)
    coh /= len(reps)
    prov = "finite_T" if T_mode == "finite" else "tilde"
    return GeneratorBundle(hermitize(eig.from_eigenbasis(coh)), Superoperator(_in_basis(diss, eig)), prov)


def dissipative_gamma_form(model: HamiltonianModel, params: ChannelParams, T: float = math.inf,
                           coupling: CouplingSet | None = None) -> Superoperator:
    """E_A int gamma(w) D[V_A(w)] dw, integrated on the support of gamma.

    This is the form that appears after averaging over A and A^dag; for an
    adjoint-closed coupling set it agrees with the dissipative part of
    :func:`effective_generator`.
    """
    eig = model.eig
    lam = eig.eigenvalues
    d = model.dim
    coupling = coupling or params.coupling
    a_lo, a_hi = params.freq.support()
    lo, hi = min(-a_hi, a_lo), max(a_hi, -a_lo)
    n_panels = max(16, int(math.ceil((hi - lo) / params.resolution())))
    om, w = gauss_legendre_panels(lo, hi, n_panels)
    gam = w * gamma_weight(params.beta, params.freq, om)
    keep = gam > 0
    om, gam = om[keep], gam[keep]
    diss = np.zeros((d * d, d * d), dtype=complex)
    for _, a in coupling.representatives:
        v = _jumps_batch(eig.to_eigenbasis(a), lam, params.filter, T, om)
        diss += weighted_dissipator_sum(v, gam)
    return Superoperator(_in_basis(diss / len(coupling.representatives), eig))


def toy_generator(beta, sigma: float, freq: FrequencyDistribution, rate: float = TWO_PI) -> GeneratorBundle:
    """Closed-form single-qubit generator (H = -Z, A = X) at infinite window.

    Thermal branch: -i[H_LS, .] + rate (gamma(2) D[|1><0|] + gamma(-2) D[|0><1|]).
    Ground branch:  -i[H_LS, .] + C D[|0><1|] with C = int gamma(w) K(-2-w)^2 dw.
    ``rate`` is the Parseval constant int K^2 dk = 2 pi.  The Lamb shift is
    the infinite-window average computed numerically.
    """
    beta = parse_beta(beta)
    model = build_single_qubit()
    params = ChannelParams(0.01, 8 * sigma, FilterSpec(sigma), beta, freq, coupling_set_for(model))
    coh = effective_generator(model, params, "infinite").coherent
    # the averaged Lamb shift of the toy model is diagonal; drop rounding noise
    coh = np.diag(np.diag(coh).real).astype(complex)
    up = np.array([[0, 0], [1, 0]], dtype=complex)  # |1><0|
    down = up.T.copy()
    if math.isinf(beta):
        om, w = params.omega_nodes()
        c = float(np.sum(w * params.filter.fourier(-2.0 + om) ** 2))
        diss = dissipator(down) * c
        return GeneratorBundle(coh, diss, "toy")
    g_up = float(gamma_weight(beta, freq, 2.0))
    g_dn = float(gamma_weight(beta, freq, -2.0))
    diss = dissipator(up) * (rate * g_up) + dissipator(down) * (rate * g_dn)
    return GeneratorBundle(coh, diss, "toy")


def davies_weights(beta, freq: FrequencyDistribution, sigma: float | None = None,
                   rate: float = TWO_PI) -> Callable[[float], float]:
    """Per-frequency weights for the Davies comparison.

    Without ``sigma``: w(xi) = rate * gamma(xi), taking the mean of the one-sided
    limits where gamma jumps (the large-sigma limit of the smoothed weight).
    With ``sigma``: the smoothed weight int gamma(w) K(xi - w)^2 dw that the
    infinite-window generator assigns to the diagonal Bohr terms.
    """
    if sigma is None:
        def w(xi: float) -> float:
            h = 1e-9 * max(1.0, abs(xi))
            return rate * 0.5 * float(gamma_weight(beta, freq, xi + h) + gamma_weight(beta, freq, xi - h))
        return w
    filt = FilterSpec(sigma)
    a, b = freq.support()
    lo, hi = min(-b, a), max(b, -a)
    x, w = gauss_legendre_panels(lo, hi, max(64, int(math.ceil((hi - lo) * 4 * sigma))))
    gam = w * gamma_weight(beta, freq, x)
    return lambda xi: float(np.sum(gam * filt.fourier(xi - x) ** 2))


def davies_generator(coupling: CouplingSet, eig: EigenDecomposition,
                     weights: Callable[[float], float] | None = None,
                     tol_bohr: float | None = None) -> GeneratorBundle:
    """E_A sum_xi w(xi) D[A(xi)], averaged over the coupling set."""
    freqs, labels = bohr_groups(eig, tol_bohr)
    d = eig.dim
    wvals = np.array([1.0 if weights is None else float(weights(f)) for f in freqs])
    comps, cw = [], []
    for _, a in coupling.representatives:
        ae = eig.to_eigenbasis(a)
        for k in range(len(freqs)):
            blk = np.where(labels == k, ae, 0.0)
            if np.abs(blk).max() > 1e-14 and wvals[k] != 0:
                comps.append(blk)
                cw.append(wvals[k])
    if comps:
        diss = weighted_dissipator_sum(np.array(comps), np.array(cw)) / len(coupling.representatives)
    else:
        diss = np.zeros((d * d, d * d), dtype=complex)
    return GeneratorBundle(np.zeros((d, d), dtype=complex), Superoperator(_in_basis(diss, eig)), "davies")


def ground_truncated_jump(v, eig: EigenDecomposition, delta: float) -> np.ndarray:
    """Drop the components of V that raise the energy by at least delta/2.

    With components labelled by the energy they add, the kept part contains
    only transitions with l_i - l_j < delta/2, so it cannot excite the ground
    state.
    """
    if not delta > 0:
        raise ValueError("gap must be positive")
    lam = eig.eigenvalues
    ve = eig.to_eigenbasis(np.asarray(v, dtype=complex))
    keep = (lam[:, None] - lam[None, :]) < 0.5 * delta
    return eig.from_eigenbasis(np.where(keep, ve, 0.0))


# ---------------------------------------------------------------------------
# detailed balance


@dataclass(frozen=True)
class DetailedBalanceReport:
    """Diagnostics of the KMS-similarity transform of a generator.

    ``kms_residual`` is ||K - K^dag|| for the dissipative part (the coherent
    drift is reported separately by ``drift_commutator``);
    ``antihermitian_norm`` is the norm of the anti-Hermitian part of the
    full transform.  Norms are Hilbert-Schmidt induced (largest singular value).
    """

    kms_residual: float
    hermitian_part_gap: float
    antihermitian_norm: float
    drift_commutator: float


def _gibbs_powers(rho_beta: np.ndarray, p: float) -> np.ndarray:
    lam, v = np.linalg.eigh(hermitize(np.asarray(rho_beta, dtype=complex)))
    if lam.min() <= 1e-300:
        raise SingularGibbsState("Gibbs state is not full rank")
    return (v * lam**p) @ v.conj().T


def kms_similarity(s: Superoperator, rho_beta: np.ndarray) -> np.ndarray:
    """Matrix of X -> rho^{-1/4} S[rho^{1/4} X rho^{1/4}] rho^{-1/4}."""
    q = _gibbs_powers(rho_beta, 0.25)
    qi = _gibbs_powers(rho_beta, -0.25)
    fwd = np.kron(q.T, q)
    back = np.kron(qi.T, qi)
    return back @ s.matrix @ fwd


def _opnorm(m: np.ndarray) -> float:
    return float(np.linalg.norm(m, 2)) if m.size else 0.0


def complement_basis(rho_beta: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of the complement of vec(sqrt(rho_beta))."""
    s = _gibbs_powers(rho_beta, 0.5).reshape(-1, order="F")
    s = s / np.linalg.norm(s)
    n = s.shape[0]
    proj = np.eye(n) - np.outer(s, s.conj())
    u, sv, _ = np.linalg.svd(proj)
    return u[:, : n - 1]


def kms_transform(gen: GeneratorBundle, rho_beta) -> tuple[Superoperator, Superoperator, DetailedBalanceReport]:
    rho_beta = np.asarray(rho_beta, dtype=complex)
    if np.linalg.eigvalsh(hermitize(rho_beta)).min() <= 1e-14:
        raise SingularGibbsState("detailed-balance transform needs a full-rank Gibbs state")
    k = kms_similarity(gen.total, rho_beta)
    herm = 0.5 * (k + k.conj().T)
    anti = 0.5 * (k - k.conj().T)
    kd = kms_similarity(gen.dissipative, rho_beta)
    q = _gibbs_powers(rho_beta, 0.25)
    qi = _gibbs_powers(rho_beta, -0.25)
    hc = gen.coherent
    drift = schatten_norm(qi @ hc @ q - q @ hc @ qi, "inf")
    b = complement_basis(rho_beta)
    top = float(np.linalg.eigvalsh(hermitize(b.conj().T @ herm @ b)).max())
    report = DetailedBalanceReport(
        kms_residual=_opnorm(kd - kd.conj().T),
        hermitian_part_gap=-top,
        antihermitian_norm=_opnorm(anti),
        drift_commutator=drift,
    )
    return Superoperator(herm), Superoperator(anti), report


def r_integral(freq: FrequencyDistribution, beta, sigma: float, n_q: int = 400) -> float:
    """R = int_0^inf | int gamma(w) e^{i w sigma q} dw | e^{-q^2/8} dq."""
    a, b = freq.support()
    lo, hi = min(-b, a), max(b, -a)
    # resolve the oscillation e^{i w sigma q} up to q = 12
    n_panels = max(64, int(math.ceil((hi - lo) * sigma * 12 / 4)))
    x, w = gauss_legendre_panels(lo, hi, n_panels)
    gam = w * gamma_weight(beta, freq, x)
    q, wq = gauss_legendre_panels(0.0, 12.0, n_q // 8)
    inner = np.abs(np.exp(1j * sigma * np.outer(q, x)) @ gam)
    return float(np.sum(wq * inner * np.exp(-(q**2) / 8)))
