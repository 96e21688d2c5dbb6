"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -v tests/test_acceptance.py`` (lines are printed even when
output capture is on) or directly with ``python tests/test_acceptance.py``.
"""

import math
import sys
import time

import numpy as np
import pytest

from sysbath.analysis import (
    fixed_point, mixing_time_empirical, number_decay_trace, transfer_bounds, weighted_contraction_rate,
)
from sysbath.channel import FrequencyDistribution, channel_superoperator, make_params, sample_unitaries
from sysbath.cli import load_config, run
from sysbath.experiments import EXPERIMENTS
from sysbath.lindblad import effective_generator
from sysbath.linalg import Superoperator, choi_min_eigenvalue, kraus_superop, schatten_norm, trace_preservation_error
from sysbath.models import (
    build_commuting_local, build_quadratic_fermion, build_single_qubit, ground_state, thermal_state,
)
from sysbath.rng import named_rng

TOY = build_single_qubit()
COMM2 = build_commuting_local([("ZZ", 1.0), ("ZI", 0.5)])


@pytest.fixture
def report(request):
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def emit(n: int, ok: bool, detail: str, t0: float):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  ({time.perf_counter() - t0:.1f} s)  {detail}"
        if capman is not None:
            with capman.global_and_fixture_disabled():
                print("\n" + line, flush=True)
        else:
            print(line, flush=True)
        assert ok, line

    return emit


def _run(cfg, tmp_path):
    rec = run(load_config(cfg), tmp_path)
    assert all(p["status"] == "ok" for p in rec["points"]), [p.get("error") for p in rec["points"]]
    return rec


def _metric(rec, key):
    return [p["metrics"][key] for p in rec["points"]]


def _chain(n, mu=1.5, t=0.5):
    return mu * np.eye(n) + t * (np.eye(n, k=1) + np.eye(n, k=-1))


def random_channel(d, rng, n_kraus=3):
    ks = rng.normal(size=(n_kraus, d, d)) + 1j * rng.normal(size=(n_kraus, d, d))
    m = np.einsum("kba,kbc->ac", ks.conj(), ks)
    w, v = np.linalg.eigh(m)
    return kraus_superop(ks @ (v @ np.diag(w**-0.5) @ v.conj().T))


def test_criterion_01_cptp_suite(report):
    t0 = time.perf_counter()
    f2 = build_quadratic_fermion(np.array([[1.0, 0.5], [0.5, 1.5]]))
    cases = [
        (TOY, dict(alpha=0.1, sigma=1.0, beta=1.0), "exact"),
        (TOY, dict(alpha=0.2, sigma=2.0, beta=np.inf), "trotter"),
        (TOY, dict(alpha=0.1, sigma=1.5, beta=0.0), "exact"),
        (TOY, dict(alpha=0.1, sigma=1.0, beta=1.0, sampling=("monte_carlo", 64), seed=3), "trotter"),
        (build_quadratic_fermion(np.array([[0.8]])), dict(alpha=0.1, sigma=1.0, beta=2.0), "exact"),
        (f2, dict(alpha=0.1, sigma=1.0, beta=np.inf), "exact"),
        (f2, dict(alpha=0.1, sigma=1.0, beta=1.0,
                  freq=FrequencyDistribution.gaussian_x(1.0, 1.0, 1.0)), "trotter"),
        (build_quadratic_fermion(_chain(3)), dict(alpha=0.05, sigma=1.0, beta=0.5), "trotter"),
        (COMM2, dict(alpha=0.1, sigma=1.0, beta=0.5), "exact"),
        (COMM2, dict(alpha=0.1, sigma=1.0, beta=np.inf), "trotter"),
        (build_commuting_local([("ZZI", 1.0), ("IZZ", 1.0)]), dict(alpha=0.1, sigma=1.0, beta=1.0), "trotter"),
        (build_commuting_local([("ZZII", 1.0), ("IZZI", 1.0), ("IIZZ", 0.5)]),
         dict(alpha=0.1, sigma=1.0, beta=1.0), "trotter"),
    ]
    worst_psd, worst_tp, kinds = math.inf, 0.0, set()
    for model, kw, variant in cases:
        kw = dict(kw)
        alpha, sigma = kw.pop("alpha"), kw.pop("sigma")
        s = channel_superoperator(model, make_params(model, alpha, sigma, trotter_tau=0.1, **kw), variant)
        worst_psd = min(worst_psd, choi_min_eigenvalue(s))
        worst_tp = max(worst_tp, trace_preservation_error(s))
        kinds.add((model.kind, variant))
    ok = len(cases) == 12 and worst_psd >= -1e-8 and worst_tp <= 1e-9 and len({k for k, _ in kinds}) == 3
    ok = ok and {v for _, v in kinds} == {"exact", "trotter"}
    report(1, ok, f"12 channels, min Choi eigenvalue {worst_psd:.2e}, max TP error {worst_tp:.2e}", t0)


def test_criterion_02_weak_coupling_scaling(report, tmp_path):
    t0 = time.perf_counter()
    rec = _run({"experiment": "lindblad-compare"}, tmp_path)
    slope = rec["summary"]["slope_channel_lindblad_distance_vs_alpha"]
    report(2, slope >= 3.5, f"log-log slope {slope:.3f} over alpha {rec['config']['sweep']['alpha']} (gate >= 3.5)", t0)


def test_criterion_03_trotter_scaling(report, tmp_path):
    t0 = time.perf_counter()
    rec = _run({"experiment": "trotter-scaling"}, tmp_path)
    slope = rec["summary"]["slope_trotter_distance_vs_trotter_tau"]
    report(3, slope >= 1.8, f"log-log slope {slope:.3f} over tau {rec['config']['sweep']['trotter_tau']} (gate >= 1.8)", t0)


def test_criterion_04_fixed_point_trend(report, tmp_path):
    t0 = time.perf_counter()
    rec = _run({"experiment": "fixed-point-sweep", "params": {"alpha_sigma": 0.02, "beta": 1.0},
                "sweep": {"sigma": [5.0, 10.0, 20.0]}}, tmp_path)
    d = _metric(rec, "fixed_point_distance")
    T = _metric(rec, "T")
    ok = d[0] > d[1] > d[2] and d[2] <= 0.05 and T == [40.0, 80.0, 160.0]
    report(4, ok, "||rho_fix - rho_beta||_1 at sigma 5, 10, 20: " + ", ".join(f"{x:.3e}" for x in d), t0)


def test_criterion_05_ground_state_near_fixed(report):
    t0 = time.perf_counter()
    m = build_quadratic_fermion(np.array([[1.0, 0.5], [0.5, 1.5]]))
    delta = m.eig.gap
    g = ground_state(m)
    sig = np.array([1.0, 1.5, 2.0, 2.5])
    res = []
    for s in sig:
        p = make_params(m, 0.05, float(s), beta=np.inf)
        res.append(schatten_norm(effective_generator(m, p, "infinite").total(g), 1))
    res = np.array(res)
    slope = np.polyfit(sig**2, np.log(res), 1)[0]
    ref = delta**2 / 32
    ratio = -slope / ref
    ok = bool(np.all(np.diff(res) < 0)) and slope < 0 and 1 / 3 <= ratio <= 3
    report(5, ok, f"residuals {', '.join(f'{x:.2e}' for x in res)}; fitted exponent {-slope:.4f} vs "
                  f"gap^2/32 = {ref:.4f} (ratio {ratio:.1f}, gate within x3)", t0)


def test_criterion_06_sigma_independent_mixing(report):
    t0 = time.perf_counter()
    alpha = 0.01
    out = {}
    for s in (10.0, 20.0, 40.0):
        su = sample_unitaries(TOY, make_params(TOY, alpha, s, beta=1.0), "exact")
        for beta in (1.0, np.inf):
            ch = su.superoperator(beta)
            fp = fixed_point(ch).state
            out[(s, beta)] = mixing_time_empirical(ch, fp, 0.01, alpha=alpha).t_mix
    spreads = {}
    for beta in (1.0, np.inf):
        v = [out[(s, beta)] for s in (10.0, 20.0, 40.0)]
        spreads[beta] = max(v) / min(v) - 1
    ok = all(x <= 0.2 for x in spreads.values())
    detail = "; ".join(f"beta={b}: t_mix " + ", ".join(f"{out[(s, b)]:.4f}" for s in (10.0, 20.0, 40.0))
                       + f" (spread {spreads[b]:.2%})" for b in (1.0, np.inf))
    report(6, ok, detail, t0)


def test_criterion_07_transfer_bounds(report):
    t0 = time.perf_counter()
    rng = named_rng(7, "transfer-pairs")
    bases = [
        (TOY, make_params(TOY, 0.1, 1.0, beta=1.0)),
        (TOY, make_params(TOY, 0.15, 1.5, beta=np.inf)),
        (COMM2, make_params(COMM2, 0.1, 1.0, beta=0.5, trotter_tau=0.05)),
        (COMM2, make_params(COMM2, 0.1, 1.0, beta=1.0, trotter_tau=0.05)),
    ]
    eps = 0.02
    n, violations, premise = 0, 0, 0
    for model, p in bases:
        phi1 = channel_superoperator(model, p, "trotter")
        tau1 = mixing_time_empirical(phi1, fixed_point(phi1).state, eps).tau_mix
        for _ in range(5):
            eta = 10 ** rng.uniform(-7, -3)
            psi = random_channel(model.dim, rng)
            phi2 = Superoperator((1 - eta) * phi1.matrix + eta * psi.matrix)
            tb = transfer_bounds(phi1, phi2, eps, tau1_mix=tau1)
            n += 1
            premise += bool(tb.premise3)
            violations += sum(h is False for h in (tb.holds1, tb.holds2, tb.holds3))
    ok = n == 20 and violations == 0 and premise > 0
    report(7, ok, f"{n} pairs, {violations} violations, third bound exercised on {premise} pairs", t0)


def test_criterion_08_detailed_balance(report, tmp_path):
    t0 = time.perf_counter()
    rec = _run({"experiment": "commuting-davies", "sweep": {"sigma": [4.0, 8.0, 16.0]}}, tmp_path)
    eff = _metric(rec, "kms_residual_effective")
    dav = max(_metric(rec, "kms_residual_davies"))
    ok = dav <= 1e-8 and eff[0] > eff[1] > eff[2]
    report(8, ok, f"Davies KMS residual {dav:.1e}; effective generator residual at sigma 4, 8, 16: "
                  + ", ".join(f"{x:.2e}" for x in eff), t0)


def test_criterion_09_davies_convergence(report, tmp_path):
    t0 = time.perf_counter()
    rec = _run({"experiment": "commuting-davies", "sweep": {"sigma": [4.0, 8.0, 16.0, 32.0]}}, tmp_path)
    slope = rec["summary"]["slope_davies_distance_vs_sigma"]
    d = _metric(rec, "davies_distance")
    report(9, slope <= -0.8, f"distances {', '.join(f'{x:.2e}' for x in d)}; slope {slope:.3f} (gate <= -0.8)", t0)


def test_criterion_10_number_decay(report):
    t0 = time.perf_counter()
    rates, geo = {}, True
    for n in (2, 3, 4):
        m = build_quadratic_fermion(_chain(n))
        p = make_params(m, 0.05, 3.0, beta=np.inf, trotter_tau=0.05)
        s = channel_superoperator(m, p, "trotter")
        full = np.zeros((m.dim, m.dim), dtype=complex)
        full[-1, -1] = 1.0
        nd = number_decay_trace(s, m, full, 200)
        rates[n] = nd.rate
        k = np.arange(len(nd.traces))
        fit = np.polyval(np.polyfit(k, np.log(nd.traces), 1), k)
        r2 = 1 - np.sum((np.log(nd.traces) - fit) ** 2) / np.sum((np.log(nd.traces) - np.log(nd.traces).mean()) ** 2)
        geo &= bool(np.all(np.diff(nd.traces) < 0)) and r2 > 0.999 and nd.linear_bound_holds and nd.fvdg_holds
    ratio = rates[2] / rates[4]
    ok = geo and rates[3] > 0 and 2 / 3 <= ratio <= 6
    report(10, ok, f"per-step rates N=2 {rates[2]:.3e}, N=3 {rates[3]:.3e}, N=4 {rates[4]:.3e}; "
                   f"rate(2)/rate(4) = {ratio:.2f} vs 2 for 1/N scaling", t0)


def test_criterion_11_contraction_certificate(report):
    t0 = time.perf_counter()
    rows, ok = [], True
    for alpha, sigma, beta in [(0.05, 2.0, 1.0), (0.025, 2.0, 1.0), (0.05, 4.0, 1.0), (0.1, 2.0, 0.5),
                               (0.05, 3.0, 2.0)]:
        p = make_params(TOY, alpha, sigma, beta=beta)
        s = channel_superoperator(TOY, p)
        rb = thermal_state(TOY, beta)
        rep = mixing_time_empirical(s, fixed_point(s).state, 0.01, alpha=alpha, rho_beta=rb)
        ok &= rep.contraction_rate < 1 and rep.certified_tau >= rep.tau_mix
        rows.append(f"{rep.tau_mix}<={rep.certified_tau:.0f}")
    ok &= weighted_contraction_rate(s, rb) < 1
    report(11, ok, "empirical <= certified tau_mix: " + ", ".join(rows), t0)


SMALL_SWEEPS = {
    "toy-thermal": {"sigma": [1.0, 2.0]},
    "toy-ground": {"sigma": [1.0, 2.0]},
    "lindblad-compare": {"alpha": [0.2, 0.1]},
    "trotter-scaling": {"trotter_tau": [0.2, 0.1]},
    "fixed-point-sweep": {"sigma": [1.0, 2.0]},
    "fermion-ground": {"sigma": [1.0]},
    "fermion-thermal": {"sigma": [1.0]},
    "commuting-davies": {"sigma": [1.0, 2.0]},
    "dbc-report": {"sigma": [1.0, 2.0]},
}


def test_criterion_12_determinism(report, tmp_path):
    t0 = time.perf_counter()
    same = []
    for name in EXPERIMENTS:
        cfg = {"experiment": name, "sweep": SMALL_SWEEPS[name], "seed": 1}
        a = _run(cfg, tmp_path / "a")
        b = _run(cfg, tmp_path / "b")
        same.append((tmp_path / "a" / a["csv"]).read_bytes() == (tmp_path / "b" / b["csv"]).read_bytes())
    report(12, all(same) and len(same) == 9, f"{sum(same)}/{len(same)} experiments gave identical CSV bytes", t0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
