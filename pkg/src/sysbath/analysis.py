"""Fixed points, mixing times, contraction certificates and transfer bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonUniqueFixedPoint, SingularGibbsState, Timeout
from .lindblad import GeneratorBundle, DetailedBalanceReport, complement_basis, kms_similarity, kms_transform
from .linalg import Superoperator, hermitize, induced_trace_norm, trace_distance, vec
from .models import HamiltonianModel, ground_state, number_operator
from .rng import haar_states, named_rng


@dataclass(frozen=True, eq=False)
class FixedPointResult:
    state: np.ndarray
    eigenvalue_gap: float
    residual: float
    uniqueness_flag: bool


def fixed_point(s: Superoperator, strict: bool = False, clamp_budget: float = 1e-8) -> FixedPointResult:
    """Fixed point of a trace-preserving superoperator.

    The null vector of S - I is taken from an SVD, Hermitized and normalised;
    negative eigenvalues down to ``-clamp_budget`` are clipped.
    """
    d = s.dim
    m = s.matrix
    ev = np.linalg.eigvals(m)
    order = np.argsort(np.abs(ev - 1.0))
    n_unit = int(np.sum(np.abs(ev - 1.0) < 1e-10))
    unique = n_unit <= 1
    if strict and not unique:
        raise NonUniqueFixedPoint(f"{n_unit} eigenvalues within 1e-10 of 1")
    second = np.abs(ev[order[1]]) if len(ev) > 1 else 0.0
    _, _, vh = np.linalg.svd(m - np.eye(d * d))
    x = hermitize(vh[-1].conj().reshape(d, d, order="F"))
    tr = np.trace(x).real
    if abs(tr) < 1e-14:
        # null vector without trace (degenerate case): fall back to the
        # eigenvector closest to 1 with non-zero trace
        w, vecs = np.linalg.eig(m)
        for k in np.argsort(np.abs(w - 1.0)):
            x = hermitize(vecs[:, k].reshape(d, d, order="F"))
            tr = np.trace(x).real
            if abs(tr) > 1e-10:
                break
    x = x / tr
    lam, v = np.linalg.eigh(x)
    if lam[0] < -clamp_budget:
        raise ValueError(f"fixed point has eigenvalue {lam[0]:.3e} below the clamp budget")
    if lam[0] < 0:
        lam = np.clip(lam, 0.0, None)
        x = (v * lam) @ v.conj().T
        x = x / np.trace(x).real
    res = trace_distance(s(x), x)
    return FixedPointResult(x, float(1.0 - second), res, unique)


@dataclass(frozen=True)
class MixingReport:
    tau_mix: int
    t_mix: float
    epsilon: float
    probe_set: str
    contraction_rate: float = math.nan
    certified_tau: float = math.inf

    @property
    def alpha(self) -> float:
        return math.sqrt(self.t_mix / self.tau_mix)


def default_probes(d: int, seed: int = 0, n_haar: int = 20) -> list[np.ndarray]:
    """Computational basis states, the maximally mixed state and seeded Haar states."""
    probes = [np.diag(np.eye(d)[k]).astype(complex) for k in range(d)]
    probes.append(np.eye(d, dtype=complex) / d)
    probes.extend(haar_states(d, n_haar, named_rng(seed, "probes")))
    return probes


def _distances(vs: np.ndarray, target: np.ndarray, d: int) -> np.ndarray:
    diffs = vs.T.reshape(-1, d, d).transpose(0, 2, 1) - target[None]
    diffs = 0.5 * (diffs + diffs.conj().transpose(0, 2, 1))
    return np.abs(np.linalg.eigvalsh(diffs)).sum(axis=1)


def mixing_time_empirical(channel: Superoperator, target, epsilon: float, probes: list | None = None,
                          alpha: float = 1.0, max_steps: int = 10**6, seed: int = 0,
                          linear_steps: int = 4096, rho_beta=None) -> MixingReport:
    """Smallest t with max over probes of ||Phi^t(rho) - target||_1 <= epsilon.

    Steps are scanned one by one up to ``linear_steps``; beyond that the
    distance is assumed to be eventually non-increasing and the crossing is
    located by doubling and bisection with matrix powers.  The probe maximum is
    a lower bound for the supremum over all states.  When ``rho_beta`` is
    given the weighted contraction certificate is attached.
    """
    if not 0 < epsilon < 2:
        raise ValueError("epsilon must lie in (0, 2)")
    d = channel.dim
    target = np.asarray(target, dtype=complex)
    if probes is None:
        probes = default_probes(d, seed)
        label = f"{d} basis states, maximally mixed, 20 Haar states (seed {seed})"
    else:
        label = f"{len(probes)} supplied states"
    m = channel.matrix
    v0 = np.stack([vec(p) for p in probes], axis=1)

    rate, cert = math.nan, math.inf
    if rho_beta is not None:
        rate = weighted_contraction_rate(channel, rho_beta)
        cert = certified_mixing_bound(rate, rho_beta, epsilon)

    def report(t: int) -> MixingReport:
        return MixingReport(t, alpha**2 * t, epsilon, label, rate, cert)

    v = v0
    for t in range(1, min(linear_steps, max_steps) + 1):
        v = m @ v
        if np.max(_distances(v, target, d)) <= epsilon:
            return report(t)
    if max_steps <= linear_steps:
        raise Timeout(f"no mixing within {max_steps} steps")
    # doubling search from t = linear_steps
    powers = [m]
    p = m
    span = 1
    base_t = linear_steps
    while True:
        if base_t + span > max_steps:
            raise Timeout(f"no mixing within {max_steps} steps")
        w = p @ v
        if np.max(_distances(w, target, d)) <= epsilon:
            break
        v, base_t = w, base_t + span
        p = p @ p
        span *= 2
        powers.append(p)
    # bisection within (base_t, base_t + span]
    lo_v, lo_t = v, base_t
    k = len(powers) - 2
    while k >= 0:
        step = 1 << k
        w = powers[k] @ lo_v
        if np.max(_distances(w, target, d)) > epsilon:
            lo_v, lo_t = w, lo_t + step
        k -= 1
    return report(lo_t + 1)


def weighted_contraction_rate(channel: Superoperator, rho_beta) -> float:
    """Largest singular value of rho^{-1/4} Phi[rho^{1/4} . rho^{1/4}] rho^{-1/4}
    on the complement of sqrt(rho)."""
    rho_beta = np.asarray(rho_beta, dtype=complex)
    if np.linalg.eigvalsh(hermitize(rho_beta)).min() <= 1e-14:
        raise SingularGibbsState("weighted norm needs a full-rank Gibbs state")
    k = kms_similarity(channel, rho_beta)
    b = complement_basis(rho_beta)
    return float(np.linalg.norm(k @ b, 2))


def certified_mixing_bound(rate: float, rho_beta, epsilon: float) -> float:
    """Upper bound on tau_mix(epsilon) from the weighted contraction rate.

    ||Phi^t(rho) - rho_fix||_1 <= 2 ||rho_beta^{-1/2}|| rate^t for every state.
    """
    if not rate < 1:
        return math.inf
    lam_min = float(np.linalg.eigvalsh(hermitize(np.asarray(rho_beta, dtype=complex))).min())
    c = 2.0 / math.sqrt(lam_min)
    return max(1.0, math.ceil(math.log(c / epsilon) / -math.log(rate)))


def spectral_gap_detailed_balance(gen: GeneratorBundle, rho_beta) -> tuple[float, DetailedBalanceReport]:
    _, _, report = kms_transform(gen, rho_beta)
    return report.hermitian_part_gap, report


@dataclass(frozen=True)
class TransferBounds:
    """The three fixed-point transfer inequalities, with both sides evaluated.

    (1) ||rho1 - rho2|| <= eps + tau1(eps) ||Phi1 - Phi2||
    (2) ||rho1 - rho2|| <= eps + tau1(eps) ||Phi1(rho2) - rho2||
    (3) tau1(eps/2) ||Phi1 - Phi2|| <= eps  implies  tau2(4 eps) <= tau1(eps/2)
    """

    epsilon: float
    distance: float
    tau1: int
    channel_distance: float | None
    bound1: float | None
    residual: float
    bound2: float
    tau1_half: int | None
    tau2_4eps: int | None
    premise3: bool | None
    holds1: bool | None
    holds2: bool
    holds3: bool | None

    @property
    def all_hold(self) -> bool:
        return all(h is not False for h in (self.holds1, self.holds2, self.holds3))


def transfer_bounds(phi1: Superoperator, other, epsilon: float, tau1_mix: int | None = None,
                    probes: list | None = None, seed: int = 0) -> TransferBounds:
    """Evaluate the transfer bounds between phi1 and a second channel or a target state.

    ``other`` is either a Superoperator (all three bounds) or a state rho2
    (bound 2 only).  Mixing times not supplied are measured on ``probes``,
    to which the relevant fixed points are added.
    """
    rho1 = fixed_point(phi1).state
    d = phi1.dim
    if isinstance(other, Superoperator):
        phi2 = other
        rho2 = fixed_point(phi2).state
    else:
        phi2 = None
        rho2 = np.asarray(other, dtype=complex)
    pr = list(probes) if probes is not None else default_probes(d, seed)
    pr.append(rho2)
    if tau1_mix is None:
        tau1_mix = _tau_or_inf(phi1, rho1, epsilon, pr)
    dist = trace_distance(rho1, rho2)
    resid = trace_distance(phi1(rho2), rho2)
    b2 = epsilon + tau1_mix * resid
    if phi2 is None:
        return TransferBounds(epsilon, dist, tau1_mix, None, None, resid, b2, None, None, None,
                              None, dist <= b2 * (1 + 1e-9), None)
    diff = phi1 - phi2
    cdist = induced_trace_norm(diff, extra=[rho2, rho1 - rho2])
    b1 = epsilon + tau1_mix * cdist
    tau1_half = _tau_or_inf(phi1, rho1, epsilon / 2, pr)
    premise = tau1_half * cdist <= epsilon
    tau2 = None
    holds3 = None
    if premise and 4 * epsilon < 2:
        tau2 = _tau_or_inf(phi2, rho2, 4 * epsilon, pr)
        holds3 = tau2 <= tau1_half
    elif premise:
        tau2, holds3 = 0, True
    return TransferBounds(epsilon, dist, tau1_mix, cdist, b1, resid, b2, tau1_half, tau2, premise,
                          dist <= b1 * (1 + 1e-9), dist <= b2 * (1 + 1e-9), holds3)


def _tau_or_inf(phi: Superoperator, target, eps: float, probes) -> int:
    if eps >= 2:
        return 0
    return mixing_time_empirical(phi, target, eps, probes).tau_mix


@dataclass(frozen=True)
class NumberDecay:
    traces: np.ndarray  # Tr(rho_k N), k = 0..steps
    infidelity: np.ndarray  # 1 - <psi0|rho_k|psi0>
    distance: np.ndarray  # ||rho_k - |psi0><psi0| ||_1
    rate: float  # fitted per-step decay rate, Tr(rho_k N) ~ C (1 - rate)^k
    fidelity_lower_bound: np.ndarray = field(default=None)

    @property
    def linear_bound_holds(self) -> bool:
        return bool(np.all(self.infidelity <= self.traces + 1e-10))

    @property
    def fvdg_holds(self) -> bool:
        return bool(np.all(self.distance <= 2 * np.sqrt(np.clip(self.traces, 0, None)) + 1e-10))


def number_decay_trace(channel: Superoperator, model: HamiltonianModel, rho0, steps: int,
                       fit_from: int = 0) -> NumberDecay:
    n_op = number_operator(model)
    g = ground_state(model)
    psi = model.eig.eigenvectors[:, 0]
    rho = np.asarray(rho0, dtype=complex)
    tr, inf, dist = [], [], []
    m = channel.matrix
    v = vec(rho)
    d = model.dim
    for k in range(steps + 1):
        r = hermitize(v.reshape(d, d, order="F"))
        tr.append(float(np.trace(r @ n_op).real))
        inf.append(float(1.0 - (psi.conj() @ r @ psi).real))
        dist.append(trace_distance(r, g))
        v = m @ v
    tr = np.array(tr)
    ks = np.arange(steps + 1)[fit_from:]
    y = tr[fit_from:]
    ok = y > 1e-300
    slope = np.polyfit(ks[ok], np.log(y[ok]), 1)[0] if ok.sum() >= 2 else -math.inf
    rate = float(1.0 - math.exp(slope))
    inf = np.array(inf)
    return NumberDecay(tr, inf, np.array(dist), rate, 1.0 - tr)
