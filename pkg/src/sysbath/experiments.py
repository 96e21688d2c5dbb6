"""Named desk-scale experiments.

Each experiment evaluates one parameter point and returns a flat dict of
metrics (scalars, or lists for series).  ``summarize`` turns the rows of a
sweep into a few aggregate numbers (fitted slopes, monotonicity flags).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
import scipy.linalg as sl

from .analysis import fixed_point, mixing_time_empirical, number_decay_trace, weighted_contraction_rate
from .channel import FrequencyDistribution, default_omega_max, make_params, sample_unitaries, system_rotation
from .lindblad import davies_generator, davies_weights, effective_generator, kms_transform
from .linalg import Superoperator, induced_trace_norm, trace_distance
from .models import HamiltonianModel, default_tol_bohr, ground_state, thermal_state

SINGLE_QUBIT = {"kind": "single_qubit"}
FERMION_2 = {"kind": "quadratic_fermion", "h": [[1.0, 0.5], [0.5, 1.5]]}
COMMUTING_2 = {"kind": "commuting_local", "n_qubits": 2,
               "terms": [{"pauli": "ZZ", "coeff": 1.0}, {"pauli": "ZI", "coeff": 0.5}]}


def build_params(model: HamiltonianModel, p: dict[str, Any], seed: int):
    """ChannelParams from a resolved parameter dict."""
    sigma = p["sigma"]
    alpha = p["alpha"] if p.get("alpha") is not None else p["alpha_sigma"] / sigma
    beta = math.inf if p["beta"] == "inf" else float(p["beta"])
    omega_max = p.get("omega_max")
    freq = None
    if p["freq"] == "gaussian_x":
        om = omega_max if omega_max is not None else default_omega_max(model)
        freq = FrequencyDistribution.gaussian_x(beta, sigma, om)
    sampling = ("full_average",) if p["sampling"] == "full_average" else ("monte_carlo", p["n_samples"])
    return make_params(model, alpha, sigma, T=p.get("T"), beta=beta, omega_max=omega_max, freq=freq,
                       trotter_tau=p["trotter_tau"], sampling=sampling, seed=seed)


def _channel(model, params, variant):
    return sample_unitaries(model, params, variant).superoperator(params.beta)


def generator_channel(model: HamiltonianModel, params, T_mode: str = "finite") -> Superoperator:
    """U(T) e^{alpha^2 L} U(T), the second-order approximation of one channel step."""
    gen = effective_generator(model, params, T_mode)
    u = system_rotation(model, params.T)
    return Superoperator(u.matrix @ sl.expm(params.alpha**2 * gen.total.matrix) @ u.matrix)


def _series(s: Superoperator, rho0: np.ndarray, total: int, metric: Callable[[np.ndarray], float],
            n_points: int = 21) -> tuple[list[int], list[float]]:
    stride = max(1, int(math.ceil(total / (n_points - 1))))
    p = np.linalg.matrix_power(s.matrix, stride)
    d = s.dim
    v = rho0.reshape(-1, order="F")
    steps, vals = [], []
    for k in range(n_points):
        steps.append(k * stride)
        vals.append(metric(v.reshape(d, d, order="F")))
        v = p @ v
    return steps, vals


def _top_state(model: HamiltonianModel) -> np.ndarray:
    psi = model.eig.eigenvectors[:, -1]
    return np.outer(psi, psi.conj())


def toy_thermal(model, p, seed):
    params = build_params(model, p, seed)
    s = _channel(model, params, p["variant"])
    rb = thermal_state(model, params.beta)
    fp = fixed_point(s)
    rep = mixing_time_empirical(s, fp.state, p["epsilon"], alpha=params.alpha, seed=seed,
                                rho_beta=rb, max_steps=p["max_steps"])
    steps, dist = _series(s, _top_state(model), rep.tau_mix, lambda r: trace_distance(r, rb))
    return {
        "alpha": params.alpha, "T": params.T,
        "fixed_point_distance": trace_distance(fp.state, rb),
        "fixed_point_residual": fp.residual,
        "eigenvalue_gap": fp.eigenvalue_gap,
        "tau_mix": rep.tau_mix, "t_mix": rep.t_mix,
        "contraction_rate": rep.contraction_rate, "certified_tau": rep.certified_tau,
        "series_steps": steps, "trace_distance_to_gibbs": dist,
    }


def toy_ground(model, p, seed):
    params = build_params(model, p, seed)
    s = _channel(model, params, p["variant"])
    psi = model.eig.eigenvectors[:, 0]
    fp = fixed_point(s)
    rep = mixing_time_empirical(s, fp.state, p["epsilon"], alpha=params.alpha, seed=seed,
                                max_steps=p["max_steps"])

    def infid(r):
        return float(1.0 - (psi.conj() @ r @ psi).real)

    steps, vals = _series(s, _top_state(model), rep.tau_mix, infid)
    return {
        "alpha": params.alpha, "T": params.T,
        "ground_infidelity": infid(fp.state),
        "fixed_point_residual": fp.residual,
        "tau_mix": rep.tau_mix, "t_mix": rep.t_mix,
        "series_steps": steps, "ground_infidelity_series": vals,
    }


def lindblad_compare(model, p, seed):
    params = build_params(model, p, seed)
    s = _channel(model, params, p["variant"])
    g = generator_channel(model, params)
    return {"alpha": params.alpha, "T": params.T,
            "channel_lindblad_distance": induced_trace_norm(s - g)}


def trotter_scaling(model, p, seed):
    params = build_params(model, p, seed)
    su_t = sample_unitaries(model, params, "trotter")
    su_e = sample_unitaries(model, params, "exact")
    diff = su_t.superoperator(params.beta) - su_e.superoperator(params.beta)
    return {"alpha": params.alpha, "tau_eff": params.tau_eff, "n_steps": params.n_steps,
            "trotter_distance": induced_trace_norm(diff)}


def fixed_point_sweep(model, p, seed):
    params = build_params(model, p, seed)
    s = _channel(model, params, p["variant"])
    fp = fixed_point(s)
    out = {"alpha": params.alpha, "T": params.T, "fixed_point_residual": fp.residual}
    if math.isinf(params.beta):
        psi = model.eig.eigenvectors[:, 0]
        out["fixed_point_distance"] = trace_distance(fp.state, np.outer(psi, psi.conj()))
    else:
        out["fixed_point_distance"] = trace_distance(fp.state, thermal_state(model, params.beta))
    return out


def fermion_ground(model, p, seed):
    params = build_params(model, p, seed)
    g = ground_state(model)
    gen = effective_generator(model, params, "infinite")
    s = _channel(model, params, p["variant"])
    fp = fixed_point(s)
    full = np.zeros((model.dim, model.dim), dtype=complex)
    full[-1, -1] = 1.0  # all modes occupied
    nd = number_decay_trace(s, model, full, p["steps"])
    return {
        "alpha": params.alpha, "T": params.T, "gap": model.eig.gap,
        "generator_ground_residual": float(np.abs(np.linalg.eigvalsh(
            0.5 * (gen.total(g) + gen.total(g).conj().T))).sum()),
        "fixed_point_infidelity": float(1.0 - np.trace(g @ fp.state).real),
        "number_rate": nd.rate,
        "linear_bound_holds": nd.linear_bound_holds,
        "fvdg_holds": nd.fvdg_holds,
        "number_trace": nd.traces.tolist(),
    }


def fermion_thermal(model, p, seed):
    params = build_params(model, p, seed)
    rb = thermal_state(model, params.beta)
    s = _channel(model, params, p["variant"])
    fp = fixed_point(s)
    gen = effective_generator(model, params, "finite")
    _, _, rep = kms_transform(gen, rb)
    return {
        "alpha": params.alpha, "T": params.T,
        "fixed_point_distance": trace_distance(fp.state, rb),
        "kms_residual": rep.kms_residual,
        "hermitian_part_gap": rep.hermitian_part_gap,
        "drift_commutator": rep.drift_commutator,
    }


def commuting_davies(model, p, seed):
    params = build_params(model, p, seed)
    rb = thermal_state(model, params.beta)
    tilde = effective_generator(model, params, "infinite")
    dav = davies_generator(params.coupling, model.eig, davies_weights(params.beta, params.freq),
                           default_tol_bohr(model.eig))
    fin = effective_generator(model, params, "finite")
    _, _, r_eff = kms_transform(fin, rb)
    _, _, r_dav = kms_transform(dav, rb)
    return {
        "davies_distance": induced_trace_norm(tilde.dissipative - dav.dissipative),
        "kms_residual_effective": r_eff.kms_residual,
        "kms_residual_davies": r_dav.kms_residual,
        "davies_gap": r_dav.hermitian_part_gap,
    }


def dbc_report(model, p, seed):
    params = build_params(model, p, seed)
    rb = thermal_state(model, params.beta)
    gen = effective_generator(model, params, "finite")
    _, _, rep = kms_transform(gen, rb)
    s = _channel(model, params, p["variant"])
    return {
        "kms_residual": rep.kms_residual,
        "hermitian_part_gap": rep.hermitian_part_gap,
        "antihermitian_norm": rep.antihermitian_norm,
        "drift_commutator": rep.drift_commutator,
        "contraction_rate": weighted_contraction_rate(s, rb),
    }


# ---------------------------------------------------------------------------
# summaries


def loglog_slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def _col(rows, key):
    return [r[key] for r in rows]


def _slope_summary(xkey: str, ykey: str):
    def f(rows):
        if not rows or xkey not in rows[0]:
            return {}
        return {f"slope_{ykey}_vs_{xkey}": loglog_slope(_col(rows, xkey), _col(rows, ykey))}
    return f


def _monotone_summary(key: str, by: str = "sigma"):
    def f(rows):
        if not rows or by not in rows[0]:
            return {}
        vals = [r[key] for r in sorted(rows, key=lambda r: r[by])]
        return {f"{key}_monotone_decreasing": bool(all(b < a for a, b in zip(vals, vals[1:])))}
    return f


def _fermion_summary(rows):
    if not rows or "sigma" not in rows[0]:
        return {}
    s2 = np.array(_col(rows, "sigma"), dtype=float) ** 2
    y = np.array(_col(rows, "generator_ground_residual"), dtype=float)
    ok = y > 0
    out = {"reference_exponent": rows[0]["gap"] ** 2 / 32}
    out["fitted_exponent"] = float(-np.polyfit(s2[ok], np.log(y[ok]), 1)[0]) if ok.sum() >= 2 else math.nan
    return out


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    run: Callable
    model: dict
    params: dict
    sweep: dict
    summarize: Callable = lambda rows: {}


EXPERIMENTS: dict[str, Experiment] = {e.name: e for e in [
    Experiment("toy-thermal", "single qubit, beta=1: fixed point vs Gibbs state, mixing time, contraction certificate",
               toy_thermal, SINGLE_QUBIT, {"alpha": 0.05, "beta": 1.0}, {"sigma": [2.0, 4.0, 8.0]},
               _monotone_summary("fixed_point_distance")),
    Experiment("toy-ground", "single qubit, beta=inf: ground-state infidelity and mixing time",
               toy_ground, SINGLE_QUBIT, {"alpha": 0.05, "beta": "inf"}, {"sigma": [2.0, 4.0, 8.0]}),
    Experiment("lindblad-compare", "distance between the channel and its second-order generator vs alpha",
               lindblad_compare, SINGLE_QUBIT, {"sigma": 2.0, "T": 12.0, "beta": 1.0},
               {"alpha": [0.2, 0.1, 0.05, 0.025]}, _slope_summary("alpha", "channel_lindblad_distance")),
    Experiment("trotter-scaling", "distance between the Trotterized and exact channel vs step size",
               trotter_scaling, SINGLE_QUBIT, {"alpha": 0.1, "sigma": 2.0, "T": 12.0, "beta": 1.0},
               {"trotter_tau": [0.2, 0.1, 0.05]}, _slope_summary("trotter_tau", "trotter_distance")),
    Experiment("fixed-point-sweep", "fixed-point error vs sigma with T = 8 sigma and alpha = 0.02/sigma",
               fixed_point_sweep, SINGLE_QUBIT, {"alpha_sigma": 0.02, "beta": 1.0}, {"sigma": [2.0, 4.0, 8.0]},
               _monotone_summary("fixed_point_distance")),
    Experiment("fermion-ground", "quadratic fermions, beta=inf: generator residual on the ground state, number decay",
               fermion_ground, FERMION_2, {"alpha": 0.05, "beta": "inf", "steps": 100},
               {"sigma": [1.0, 2.0, 3.0]}, _fermion_summary),
    Experiment("fermion-thermal", "quadratic fermions with the shifted Gaussian frequency distribution",
               fermion_thermal, FERMION_2, {"alpha": 0.05, "beta": 1.0, "freq": "gaussian_x", "omega_max": 1.0,
                                            "variant": "trotter", "trotter_tau": 0.01},
               {"sigma": [1.0, 2.0]}),
    Experiment("commuting-davies", "commuting 2-qubit model: distance to the Davies generator and KMS residuals",
               commuting_davies, COMMUTING_2, {"alpha": 0.01, "beta": 0.5}, {"sigma": [4.0, 8.0, 16.0]},
               _slope_summary("sigma", "davies_distance")),
    Experiment("dbc-report", "detailed-balance diagnostics of the effective generator",
               dbc_report, SINGLE_QUBIT, {"alpha": 0.05, "beta": 1.0}, {"sigma": [2.0, 4.0, 8.0]},
               _monotone_summary("kms_residual")),
]}
