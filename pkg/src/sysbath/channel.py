"""The single-ancilla channel: exact and Trotterized per-sample evolutions and
their average over coupling operators and bath frequencies.

Joint space ordering is system x ancilla (the ancilla is the last factor).
The joint Hamiltonian is

    H_a(t) = H x I + I x (-w Z / 2) + a f(t) (A x |1><0| + A^dag x |0><1|)

and one channel application evolves the joint state from t = -T to t = T.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import expit, wofz

from .errors import DimensionTooLarge, NoConvergence
from .linalg import Superoperator, check_density_matrix, hermitize, partial_trace_last_qubit
from .models import CouplingSet, HamiltonianModel, Z, coupling_set_for, parse_beta
from .rng import named_rng

KET0BRA1 = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|
KET1BRA0 = KET0BRA1.T.copy()  # |1><0|, the bath operator B


class WeakCouplingWarning(UserWarning):
    pass


def gauss_legendre_panels(a: float, b: float, n_panels: int, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def window_integral(L, k, s):
    """Closed form of int_{-L}^{L} exp(-c^2 / s^2) cos(k c) dc for L >= 0."""
    L = np.asarray(L, dtype=float)
    k = np.asarray(k, dtype=float)
    x = L / s
    y = k * s / 2.0
    z = -y + 1j * x
    val = np.exp(-(y**2)) - np.exp(-(x**2) - 2j * x * y) * wofz(z)
    out = s * math.sqrt(math.pi) * val.real
    return np.where(L > 0, out, 0.0)


@dataclass(frozen=True)
class FilterSpec:
    """Gaussian filter f(t) = (2 pi)^(-1/4) sigma^(-1/2) exp(-t^2 / (4 sigma^2))."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def amplitude(self) -> float:
        return (2 * math.pi) ** -0.25 / math.sqrt(self.sigma)

    def __call__(self, t):
        return self.amplitude * np.exp(-np.asarray(t, dtype=float) ** 2 / (4 * self.sigma**2))

    @property
    def sup(self) -> float:
        return self.amplitude

    def fourier(self, k, T: float = math.inf):
        """K_T(k) = int_{-T}^{T} f(t) e^{ikt} dt (real since f is even).

        Evaluated in closed form through the Faddeeva function; the infinite
        window reduces to 2^(3/4) pi^(1/4) sqrt(sigma) exp(-sigma^2 k^2).
        """
        k = np.asarray(k, dtype=float)
        if math.isinf(T):
            return 2**0.75 * math.pi**0.25 * math.sqrt(self.sigma) * np.exp(-(self.sigma * k) ** 2)
        return self.amplitude * window_integral(T, k, 2 * self.sigma)

    def fourier_quadrature(self, k, T: float, tol: float = 1e-10, max_panels: int = 1 << 16):
        """K_T(k) by adaptive composite Gauss-Legendre quadrature (panel doubling)."""
        k = np.atleast_1d(np.asarray(k, dtype=float))
        L = min(T, 12 * self.sigma) if math.isfinite(T) else 12 * self.sigma
        n = 8
        prev = None
        while n <= max_panels:
            t, w = gauss_legendre_panels(0.0, L, n)
            val = 2 * (np.cos(np.outer(k, t)) * (w * self(t))).sum(axis=1)
            if prev is not None and np.max(np.abs(val - prev)) < tol:
                return val
            prev = val
            n *= 2
        from .errors import QuadratureNoConvergence

        raise QuadratureNoConvergence("filter Fourier transform did not converge")

    def l2_mass(self, T: float) -> float:
        """int_{-T}^{T} f^2 dt."""
        return math.erf(T / (math.sqrt(2) * self.sigma))


@dataclass(frozen=True)
class FrequencyDistribution:
    """Distribution g of the ancilla frequency.

    ``uniform``: g = 1/omega_max on [0, omega_max].
    ``gaussian_x``: g = exp(-(w + beta/(8 sigma^2) + omega_max)^2 / (4 omega_max / beta)) / Z.
    """

    kind: Literal["uniform", "gaussian_x"]
    omega_max: float
    beta: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if not self.omega_max > 0:
            raise ValueError("omega_max must be positive")
        if self.kind == "gaussian_x":
            if self.beta is None or self.sigma is None or not (0 < self.beta < math.inf):
                raise ValueError("gaussian_x needs finite positive beta and sigma")
        elif self.kind != "uniform":
            raise ValueError(f"unknown distribution kind {self.kind!r}")

    @classmethod
    def uniform(cls, omega_max: float) -> FrequencyDistribution:
        return cls("uniform", float(omega_max))

    @classmethod
    def gaussian_x(cls, beta: float, sigma: float, omega_max: float) -> FrequencyDistribution:
        return cls("gaussian_x", float(omega_max), float(beta), float(sigma))

    @property
    def _gauss(self) -> tuple[float, float]:
        mean = -(self.beta / (8 * self.sigma**2) + self.omega_max)
        std = math.sqrt(2 * self.omega_max / self.beta)
        return mean, std

    def density(self, omega):
        omega = np.asarray(omega, dtype=float)
        if self.kind == "uniform":
            return np.where((omega >= 0) & (omega <= self.omega_max), 1.0 / self.omega_max, 0.0)
        mean, std = self._gauss
        return np.exp(-((omega - mean) ** 2) / (2 * std**2)) / (std * math.sqrt(2 * math.pi))

    def support(self) -> tuple[float, float]:
        if self.kind == "uniform":
            return 0.0, self.omega_max
        mean, std = self._gauss
        return mean - 10 * std, mean + 10 * std

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(0.0, self.omega_max, size=n)
        mean, std = self._gauss
        return rng.normal(mean, std, size=n)

    def quadrature(self, resolution: float | None = None, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights w_k with sum_k w_k h(w_k) ~ int g(w) h(w) dw.

        Composite Gauss-Legendre on the support, at least 8 panels of ``order``
        nodes (64 nodes by default) and panels no wider than ``resolution``.
        """
        a, b = self.support()
        n_panels = 8
        if resolution is not None and resolution > 0:
            n_panels = max(n_panels, int(math.ceil((b - a) / resolution)))
        x, w = gauss_legendre_panels(a, b, n_panels, order)
        return x, w * self.density(x)


def bath_populations(beta, omega) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal (p0, p1) of the ancilla state exp(beta w Z / 2) / Z."""
    beta = parse_beta(beta)
    omega = np.asarray(omega, dtype=float)
    if math.isinf(beta):
        return np.ones_like(omega), np.zeros_like(omega)
    p0 = expit(beta * omega)
    return p0, 1.0 - p0


def bath_state(beta, omega: float) -> np.ndarray:
    p0, p1 = bath_populations(beta, omega)
    return np.diag([float(p0), float(p1)]).astype(complex)


@dataclass(frozen=True, eq=False)
class ChannelParams:
    alpha: float
    T: float
    filter: FilterSpec
    beta: float
    freq: FrequencyDistribution
    coupling: CouplingSet
    trotter_tau: float = 0.05
    sampling: tuple = ("full_average",)
    seed: int = 0
    omega_resolution: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "beta", parse_beta(self.beta))
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.T > 0 or not math.isfinite(self.T):
            raise ValueError("T must be positive and finite")
        if not self.trotter_tau > 0:
            raise ValueError("trotter_tau must be positive")
        if isinstance(self.sampling, str):
            object.__setattr__(self, "sampling", (self.sampling,))
        if self.sampling[0] not in ("full_average", "monte_carlo"):
            raise ValueError(f"unknown sampling mode {self.sampling[0]!r}")
        if self.sampling[0] == "monte_carlo" and (len(self.sampling) != 2 or int(self.sampling[1]) < 1):
            raise ValueError("monte_carlo sampling needs a positive sample count")
        strength = self.alpha * self.T * self.filter.sup * self.coupling.norm_bound
        if strength > 1.0:
            warnings.warn(f"alpha*T*sup|f|*|A| = {strength:.3g} is not small; "
                          "the weak-coupling expansion may be inaccurate", WeakCouplingWarning,
                          stacklevel=2)

    @property
    def sigma(self) -> float:
        return self.filter.sigma

    @property
    def n_steps(self) -> int:
        """Number of Trotter steps M = ceil(2T / tau)."""
        return int(math.ceil(2 * self.T / self.trotter_tau - 1e-9))

    @property
    def tau_eff(self) -> float:
        return 2 * self.T / self.n_steps

    def resolution(self) -> float:
        if self.omega_resolution is not None:
            return self.omega_resolution
        return 1.0 / (2.0 * self.sigma)

    def omega_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        return self.freq.quadrature(self.resolution())

    def replace(self, **kw) -> ChannelParams:
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", WeakCouplingWarning)
            return ChannelParams(**d)


def make_params(model: HamiltonianModel, alpha: float, sigma: float, T: float | None = None,
                beta=1.0, omega_max: float | None = None, freq: FrequencyDistribution | None = None,
                **kw) -> ChannelParams:
    """Convenience constructor with the usual defaults (T = 8 sigma, uniform g)."""
    if T is None:
        T = 8.0 * sigma
    if freq is None:
        if omega_max is None:
            omega_max = 3.0 if model.kind == "single_qubit" else default_omega_max(model)
        freq = FrequencyDistribution.uniform(omega_max)
    coupling = kw.pop("coupling", None) or coupling_set_for(model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WeakCouplingWarning)
        return ChannelParams(alpha, T, FilterSpec(sigma), beta, freq, coupling, **kw)


def default_omega_max(model: HamiltonianModel) -> float:
    if model.kind == "commuting_local":
        return 2.0 * model.metadata["delta_lambda"]
    if model.kind == "quadratic_fermion":
        return 2.0 * model.metadata["h_norm"]
    return 2.0 * model.eig.norm


# ---------------------------------------------------------------------------
# per-sample evolutions


def joint_hamiltonian(model: HamiltonianModel, params: ChannelParams, a_s, omega: float, t: float) -> np.ndarray:
    a_s = np.asarray(a_s, dtype=complex)
    d = model.dim
    h0 = np.kron(model.matrix, np.eye(2)) + np.kron(np.eye(d), -0.5 * omega * Z)
    g = np.kron(a_s, KET1BRA0) + np.kron(a_s.conj().T, KET0BRA1)
    return h0 + params.alpha * float(params.filter(t)) * g


def _joint_energies(model: HamiltonianModel, omegas: np.ndarray) -> np.ndarray:
    """Diagonal of H x I + I x (-w Z/2) in the (eigenbasis x ancilla) basis, shape (n, 2d)."""
    lam = model.eig.eigenvalues
    anc = np.array([-0.5, 0.5])
    return (lam[None, :, None] + omegas[:, None, None] * anc[None, None, :]).reshape(len(omegas), -1)


def _coupling_eig(model: HamiltonianModel, a_s) -> np.ndarray:
    ae = model.eig.to_eigenbasis(np.asarray(a_s, dtype=complex))
    return np.kron(ae, KET1BRA0) + np.kron(ae.conj().T, KET0BRA1)


def _to_computational(model: HamiltonianModel, u_eig: np.ndarray) -> np.ndarray:
    v = np.kron(model.eig.eigenvectors, np.eye(2))
    return v @ u_eig @ v.conj().T


def exact_unitaries(model: HamiltonianModel, params: ChannelParams, a_s, omegas,
                    rtol: float = 1e-12, atol: float = 1e-13) -> np.ndarray:
    """Time-ordered joint propagators U(T, -T), one per frequency, shape (n, 2d, 2d).

    Integrated in the interaction picture of H x I + H_E with an explicit
    eighth-order Runge-Kutta scheme (DOP853) with tight tolerances; all
    frequencies are propagated together.
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    n = len(omegas)
    D = 2 * model.dim
    e = _joint_energies(model, omegas)
    de = e[:, :, None] - e[:, None, :]
    g = _coupling_eig(model, a_s)
    alpha, T, filt = params.alpha, params.T, params.filter
    # the coupling is negligible outside |t| <= 12 sigma (f < 1e-15 f(0))
    t0, t1 = -min(T, 12 * filt.sigma), min(T, 12 * filt.sigma)

    def rhs(t, y):
        u = y.reshape(n, D, D)
        gt = (-1j * alpha * float(filt(t))) * g[None] * np.exp(1j * t * de)
        return np.matmul(gt, u).ravel()

    y0 = np.broadcast_to(np.eye(D, dtype=complex), (n, D, D)).ravel().copy()
    sol = solve_ivp(rhs, (t0, t1), y0, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise NoConvergence(f"reference evolution failed: {sol.message}")
    u_int = sol.y[:, -1].reshape(n, D, D)
    # undo the interaction picture: U(T,-T) = e^{-i H0 T} U_I(t1, t0) e^{-i H0 T}
    ph = np.exp(-1j * e * T)
    u_eig = ph[:, :, None] * u_int * ph[:, None, :]
    return _to_computational(model, u_eig)


def exact_unitary_midpoint(model: HamiltonianModel, params: ChannelParams, a_s, omega: float,
                           tol: float = 1e-9, h0: float | None = None) -> np.ndarray:
    """Reference propagator by midpoint-frozen exponentials with step halving.

    The step is halved until the propagators of two successive refinements
    differ by less than ``tol`` in operator norm.  Intended for short windows.
    """
    T = params.T
    h = h0 if h0 is not None else min(params.sigma / 4, 0.1)
    prev = None
    while h >= 1e-6 * params.sigma:
        m = int(math.ceil(2 * T / h))
        step = 2 * T / m
        u = np.eye(2 * model.dim, dtype=complex)
        for k in range(m):
            hm = joint_hamiltonian(model, params, a_s, omega, -T + (k + 0.5) * step)
            lam, v = np.linalg.eigh(hm)
            u = (v * np.exp(-1j * step * lam)) @ v.conj().T @ u
        if prev is not None and np.linalg.norm(u - prev, 2) < tol:
            return u
        prev = u
        h /= 2
    raise NoConvergence("step size underflow in midpoint reference evolution")


def trotter_unitaries(model: HamiltonianModel, params: ChannelParams, a_s, omegas) -> np.ndarray:
    """Products of the symmetric splitting steps U_{M-1} ... U_0, shape (n, 2d, 2d)."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    e = _joint_energies(model, omegas)
    g = _coupling_eig(model, a_s)
    gl, gv = np.linalg.eigh(g)
    M, tau, T = params.n_steps, params.tau_eff, params.T
    free = np.exp(-1j * tau * e)  # (n, 2d)
    u = np.broadcast_to(np.eye(g.shape[0], dtype=complex), (len(omegas),) + g.shape).copy()
    for m in range(M):
        theta = 0.5 * params.alpha * float(params.filter((m + 0.5) * tau - T)) * tau
        w = (gv * np.exp(-1j * theta * gl)) @ gv.conj().T
        u = np.matmul(w, free[:, :, None] * np.matmul(w, u))
    return _to_computational(model, u)


def trotter_step_unitary(model: HamiltonianModel, params: ChannelParams, a_s, omega: float, m: int) -> np.ndarray:
    tau, T = params.tau_eff, params.T
    g = np.kron(np.asarray(a_s, dtype=complex), KET1BRA0) + np.kron(np.asarray(a_s).conj().T, KET0BRA1)
    gl, gv = np.linalg.eigh(g)
    theta = 0.5 * params.alpha * float(params.filter((m + 0.5) * tau - T)) * tau
    w = (gv * np.exp(-1j * theta * gl)) @ gv.conj().T
    hl, hv = model.eig.eigenvalues, model.eig.eigenvectors
    us = (hv * np.exp(-1j * tau * hl)) @ hv.conj().T
    ue = np.diag(np.exp(1j * omega * tau * np.array([0.5, -0.5])))  # exp(i w tau Z / 2)
    return w @ np.kron(us, ue) @ w


def trotter_step(rho_joint, model: HamiltonianModel, params: ChannelParams, a_s, omega: float, m: int) -> np.ndarray:
    if not 0 <= m < params.n_steps:
        raise ValueError(f"step index {m} outside [0, {params.n_steps})")
    u = trotter_step_unitary(model, params, a_s, omega, m)
    return u @ np.asarray(rho_joint, dtype=complex) @ u.conj().T


def _propagators(model, params, a_s, omegas, variant):
    if variant == "exact":
        return exact_unitaries(model, params, a_s, omegas)
    if variant == "trotter":
        return trotter_unitaries(model, params, a_s, omegas)
    raise ValueError(f"unknown variant {variant!r}")


def _reduce(u: np.ndarray, rho: np.ndarray, p0: float, p1: float) -> np.ndarray:
    d = rho.shape[0]
    joint = np.kron(rho, np.diag([p0, p1]))
    return partial_trace_last_qubit(u @ joint @ u.conj().T).reshape(d, d)


def evolve_sample_exact(rho, model: HamiltonianModel, params: ChannelParams, a_s, omega: float,
                        method: Literal["rk", "midpoint"] = "rk") -> np.ndarray:
    """One (A, w) sample of the exact channel applied to rho."""
    rho = check_density_matrix(rho)
    if rho.shape[0] != model.dim:
        raise ValueError("state and model dimensions differ")
    if method == "midpoint":
        u = exact_unitary_midpoint(model, params, a_s, omega)
    else:
        u = exact_unitaries(model, params, a_s, [omega])[0]
    p0, p1 = bath_populations(params.beta, omega)
    return hermitize(_reduce(u, rho, float(p0), float(p1)))


def evolve_sample_trotter(rho, model: HamiltonianModel, params: ChannelParams, a_s, omega: float) -> np.ndarray:
    rho = check_density_matrix(rho)
    u = trotter_unitaries(model, params, a_s, [omega])[0]
    p0, p1 = bath_populations(params.beta, omega)
    return hermitize(_reduce(u, rho, float(p0), float(p1)))


# ---------------------------------------------------------------------------
# sample plans and averaged channels


@dataclass(frozen=True, eq=False)
class SamplePlan:
    """Weighted list of (coupling representative index, frequency) samples."""

    rep_index: np.ndarray
    omegas: np.ndarray
    weights: np.ndarray


def sample_plan(params: ChannelParams) -> SamplePlan:
    reps = params.coupling.representatives
    if params.sampling[0] == "full_average":
        x, w = params.omega_nodes()
        idx = np.repeat(np.arange(len(reps)), len(x))
        om = np.tile(x, len(reps))
        wt = np.tile(w, len(reps)) / len(reps)
        return SamplePlan(idx, om, wt)
    n = int(params.sampling[1])
    # the full coupling set is sampled (both signs) as in the physical protocol;
    # a sign flip leaves the sample channel unchanged
    full = 2 * len(reps)
    k = named_rng(params.seed, "coupling").integers(0, full, size=n)
    om = params.freq.sample(named_rng(params.seed, "omega"), n)
    return SamplePlan(k // 2, om, np.full(n, 1.0 / n))


@dataclass(frozen=True, eq=False)
class SampleUnitaries:
    """Propagators for every sample of a plan; reusable for any bath temperature."""

    plan: SamplePlan
    unitaries: np.ndarray  # (n, 2d, 2d)

    def kraus(self, beta) -> tuple[np.ndarray, np.ndarray]:
        """Kraus operators K = sqrt(p_b) <a|U|b> and their weights."""
        n, D, _ = self.unitaries.shape
        d = D // 2
        p0, p1 = bath_populations(beta, self.plan.omegas)
        blocks = self.unitaries.reshape(n, d, 2, d, 2)
        ks, ws = [], []
        for a in range(2):
            for b, pb in enumerate((p0, p1)):
                ks.append(blocks[:, :, a, :, b])
                ws.append(self.plan.weights * pb)
        return np.concatenate(ks), np.concatenate(ws)

    def superoperator(self, beta) -> Superoperator:
        ks, ws = self.kraus(beta)
        keep = ws > 0
        ks, ws = ks[keep], ws[keep]
        d = ks.shape[-1]
        m = np.einsum("k,kab,kij->aibj", ws, ks.conj(), ks, optimize=True).reshape(d * d, d * d)
        return Superoperator(m)

    def apply(self, rho, beta) -> np.ndarray:
        ks, ws = self.kraus(beta)
        out = np.einsum("k,kab,bc,kdc->ad", ws, ks, rho, ks.conj(), optimize=True)
        return hermitize(out)


def sample_unitaries(model: HamiltonianModel, params: ChannelParams, variant: str = "exact") -> SampleUnitaries:
    plan = sample_plan(params)
    reps = params.coupling.representatives
    D = 2 * model.dim
    out = np.empty((len(plan.omegas), D, D), dtype=complex)
    for r, (_, a) in enumerate(reps):
        sel = np.nonzero(plan.rep_index == r)[0]
        if len(sel):
            out[sel] = _propagators(model, params, a, plan.omegas[sel], variant)
    return SampleUnitaries(plan, out)


def apply_channel(rho, model: HamiltonianModel, params: ChannelParams,
                  variant: Literal["exact", "trotter"] = "exact") -> np.ndarray:
    rho = check_density_matrix(rho)
    return sample_unitaries(model, params, variant).apply(rho, params.beta)


def channel_superoperator(model: HamiltonianModel, params: ChannelParams,
                          variant: Literal["exact", "trotter"] = "exact") -> Superoperator:
    if model.dim > 64:
        raise DimensionTooLarge(f"dimension {model.dim} exceeds 64")
    return sample_unitaries(model, params, variant).superoperator(params.beta)


def system_rotation(model: HamiltonianModel, t: float) -> Superoperator:
    """The free evolution channel X -> e^{-iHt} X e^{iHt}."""
    lam, v = model.eig.eigenvalues, model.eig.eigenvectors
    u = (v * np.exp(-1j * t * lam)) @ v.conj().T
    return Superoperator(np.kron(u.conj(), u))
