import math

import numpy as np
import pytest
import scipy.linalg as sl

from sysbath.analysis import (
    certified_mixing_bound, default_probes, fixed_point, mixing_time_empirical, number_decay_trace,
    spectral_gap_detailed_balance, transfer_bounds, weighted_contraction_rate,
)
from sysbath.channel import FrequencyDistribution, channel_superoperator, make_params
from sysbath.errors import NonUniqueFixedPoint, SingularGibbsState, Timeout
from sysbath.lindblad import GeneratorBundle, davies_generator, davies_weights, kms_transform
from sysbath.linalg import Superoperator, herm_expm, trace_distance, unitary_channel, vec
from sysbath.models import (
    build_commuting_local, build_quadratic_fermion, build_single_qubit, coupling_set_for, number_operator,
    thermal_state,
)

rng = np.random.default_rng(33)
TOY = build_single_qubit()
U3 = FrequencyDistribution.uniform(3.0)
E = math.e
GIBBS1 = np.diag([E, 1 / E]) / (E + 1 / E)


def replacer(target):
    d = target.shape[0]
    return Superoperator(np.outer(vec(target), vec(np.eye(d)).conj()))


def toy_channel(alpha, sigma, beta=1.0, variant="exact"):
    p = make_params(TOY, alpha, sigma, beta=beta, trotter_tau=0.05)
    return channel_superoperator(TOY, p, variant), p


@pytest.fixture(scope="module")
def toy_pair():
    return toy_channel(0.05, 2.0)[0], toy_channel(0.025, 2.0)[0]


def test_fixed_point_replacer():
    r = fixed_point(replacer(GIBBS1))
    assert np.allclose(r.state, GIBBS1)
    assert np.isclose(r.eigenvalue_gap, 1) and r.uniqueness_flag and r.residual <= 1e-12


def test_fixed_point_unitary_not_unique():
    s = unitary_channel(herm_expm(np.diag([0.0, 1.0, 2.5]), -0.4j))
    with pytest.raises(NonUniqueFixedPoint):
        fixed_point(s, strict=True)
    r = fixed_point(s)
    assert not r.uniqueness_flag
    assert np.isclose(np.trace(r.state), 1) and np.linalg.eigvalsh(r.state).min() >= 0


def test_fixed_point_toy_thermal():
    s, _ = toy_channel(0.01, 6.0, variant="trotter")
    r = fixed_point(s)
    assert r.uniqueness_flag and r.residual <= 1e-8
    assert trace_distance(r.state, GIBBS1) <= 5e-2


def test_mixing_replacer_and_identity():
    s = replacer(np.eye(2) / 2)
    for eps in (0.5, 1e-3):
        assert mixing_time_empirical(s, np.eye(2) / 2, eps).tau_mix == 1
    with pytest.raises(Timeout):
        mixing_time_empirical(Superoperator.identity(2), np.eye(2) / 2, 0.1, max_steps=50)
    with pytest.raises(Timeout):
        mixing_time_empirical(Superoperator.identity(2), np.eye(2) / 2, 0.1, max_steps=10_000)
    with pytest.raises(ValueError):
        mixing_time_empirical(s, np.eye(2) / 2, 2.0)


def test_mixing_time_matches_brute_force():
    # depolarising channel: distance from a pure state is exactly p^t * 2 (d-1)/d
    p, d = 0.97, 3
    target = np.eye(d) / d
    s = Superoperator(p * np.eye(d * d) + (1 - p) * replacer(target).matrix)
    for eps in (0.5, 1e-2, 1e-4):
        expect = math.ceil(math.log(eps / (2 * (d - 1) / d)) / math.log(p))
        assert mixing_time_empirical(s, target, eps).tau_mix == expect
    # beyond the linear scan, doubling + bisection must give the same answer
    p = 0.9995
    s = Superoperator(p * np.eye(d * d) + (1 - p) * replacer(target).matrix)
    eps = 1e-3
    expect = math.ceil(math.log(eps / (2 * (d - 1) / d)) / math.log(p))
    rep = mixing_time_empirical(s, target, eps, linear_steps=64, alpha=0.1)
    assert rep.tau_mix == expect and np.isclose(rep.t_mix, 0.01 * expect)


def test_mixing_monotone_in_eps_and_probes(toy_pair):
    s = toy_pair[0]
    fp = fixed_point(s).state
    taus = [mixing_time_empirical(s, fp, e).tau_mix for e in (0.1, 0.03, 0.01)]
    assert taus[0] <= taus[1] <= taus[2]
    small = default_probes(2, 0, n_haar=3)
    big = default_probes(2, 0, n_haar=20)
    assert all(any(np.array_equal(a, b) for b in big) for a in small)
    assert (mixing_time_empirical(s, fp, 0.01, probes=small).tau_mix
            <= mixing_time_empirical(s, fp, 0.01, probes=big).tau_mix)


def test_weighted_contraction(toy_pair):
    rb = GIBBS1
    u = herm_expm(TOY.matrix, -0.7j)
    assert np.isclose(weighted_contraction_rate(unitary_channel(u), rb), 1.0)
    rates = [weighted_contraction_rate(s, rb) for s in toy_pair]
    assert all(r < 1 for r in rates)
    scaled = [(1 - r) / a**2 for r, a in zip(rates, (0.05, 0.025))]
    assert abs(scaled[0] / scaled[1] - 1) <= 0.25
    with pytest.raises(SingularGibbsState):
        weighted_contraction_rate(toy_pair[0], np.diag([1.0, 0.0]))


def test_certificate_bounds_empirical(toy_pair):
    for s in toy_pair:
        fp = fixed_point(s).state
        rep = mixing_time_empirical(s, fp, 0.01, rho_beta=GIBBS1)
        assert rep.contraction_rate < 1
        assert rep.certified_tau >= rep.tau_mix
        bound = math.log(2 * np.linalg.norm(sl.inv(sl.sqrtm(GIBBS1)), 2) / 0.01) / -math.log(rep.contraction_rate)
        assert rep.tau_mix <= bound + 1
    assert certified_mixing_bound(1.0, GIBBS1, 0.01) == math.inf


def test_contraction_of_detailed_balance_channel():
    m = build_commuting_local([("ZZ", 1.0), ("ZI", 0.5)])
    rb = thermal_state(m, 0.5)
    gen = davies_generator(coupling_set_for(m), m.eig, davies_weights(0.5, U3))
    for t in (0.1, 1.0, 5.0):
        s = Superoperator(sl.expm(t * gen.total.matrix))
        assert np.abs(s(rb) - rb).max() <= 1e-8
        assert weighted_contraction_rate(s, rb) <= 1 + 1e-9


def test_davies_gap_pinned_by_diagonalisation():
    w = davies_weights(1.0, U3)
    gen = davies_generator(coupling_set_for(TOY), TOY.eig, w)
    gap, rep = spectral_gap_detailed_balance(gen, GIBBS1)
    ev = np.sort(-np.linalg.eigvals(gen.total.matrix).real)
    assert np.isclose(ev[0], 0, atol=1e-12)
    assert np.isclose(gap, ev[1])
    rate = w(2.0) + w(-2.0)
    # populations relax at the full rate, coherences at half of it
    assert np.isclose(ev[-1], rate) and np.isclose(gap, rate / 2)
    assert np.isclose(rate, 2 * math.pi * (1 / 3))
    assert rep.kms_residual <= 1e-8


def test_gap_of_pure_drift_and_weyl():
    m = build_quadratic_fermion(np.array([[1.0, 0.3], [0.3, 1.6]]))
    rb = thermal_state(m, 1.0)
    d = m.dim
    drift = GeneratorBundle(m.matrix.astype(complex), Superoperator(np.zeros((d * d, d * d))))
    gap, rep = spectral_gap_detailed_balance(drift, rb)
    assert abs(gap) <= 1e-10
    dav = davies_generator(coupling_set_for(m), m.eig, davies_weights(1.0, FrequencyDistribution.uniform(3.0)))
    g0, _ = spectral_gap_detailed_balance(dav, rb)
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    hc = 0.05 * (a + a.conj().T)
    pert = GeneratorBundle(hc, dav.dissipative)
    g1, _ = spectral_gap_detailed_balance(pert, rb)
    herm, _, _ = kms_transform(GeneratorBundle(hc, Superoperator(np.zeros((d * d, d * d)))), rb)
    assert abs(g1 - g0) <= np.linalg.norm(herm.matrix, 2) + 1e-12
    with pytest.raises(SingularGibbsState):
        spectral_gap_detailed_balance(dav, thermal_state(m, np.inf))


def test_transfer_trivial_cases(toy_pair):
    s = toy_pair[0]
    tb = transfer_bounds(s, s, 0.05)
    assert tb.channel_distance <= 1e-12 and np.isclose(tb.bound1, 0.05)
    assert tb.all_hold
    fp = fixed_point(s).state
    tb2 = transfer_bounds(s, fp, 0.05)
    assert np.isclose(tb2.bound2, 0.05, atol=1e-9) and tb2.holds2


def test_transfer_toy_gibbs(toy_pair):
    s = toy_pair[0]
    tb = transfer_bounds(s, GIBBS1, 0.01)
    assert tb.distance <= tb.bound2
    direct = trace_distance(fixed_point(s).state, GIBBS1)
    assert np.isclose(tb.distance, direct)
    assert np.isclose(tb.residual, trace_distance(s(GIBBS1), GIBBS1))


def test_number_decay():
    m = build_quadratic_fermion(np.diag([1.0, 2.0]))
    p = make_params(m, 0.1, 4.0, beta=np.inf, trotter_tau=0.05)
    s = channel_superoperator(m, p, "trotter")
    psi0 = m.eig.eigenvectors[:, 0]
    nd = number_decay_trace(s, m, np.outer(psi0, psi0.conj()), 50)
    assert np.abs(nd.traces).max() <= 1e-8
    top = m.eig.eigenvectors[:, -1]
    nd = number_decay_trace(s, m, np.outer(top, top.conj()), 400)
    assert np.isclose(nd.traces[0], 2)
    assert np.all(np.diff(nd.traces) < 0)
    assert nd.rate > 0
    assert nd.linear_bound_holds and nd.fvdg_holds
    # cross-check of the trace series against an explicit loop
    r = np.outer(top, top.conj())
    for _ in range(7):
        r = s(r)
    assert np.isclose(np.trace(r @ number_operator(m)).real, nd.traces[7])
