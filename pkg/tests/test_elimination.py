import numpy as np
import pytest

from adelim import models, pulses
from adelim.elimination import (SIntegralSpec, commuting_limit_hamiltonian,
                                effective_hamiltonian,
                                finite_effective_matrix_fn,
                                markov_hamiltonian, paulisch_hamiltonian,
                                projector_first_order, projector_order,
                                projector_series, riccati_ode,
                                s_integral_closed, s_integral_quadrature,
                                sanz_hamiltonian, sylvester_ode,
                                validity_report)
from adelim.errors import PoleError, ValidityError
from adelim.models import (FIVE_LEVEL_DELTA, FIVE_LEVEL_OMEGA, FIVE_LEVEL_XI,
                           five_level_system)

TABLE_D = np.diag(FIVE_LEVEL_DELTA).astype(complex)
TABLE_X = np.diag(FIVE_LEVEL_XI).astype(complex)
TABLE_OM = np.array(FIVE_LEVEL_OMEGA, dtype=complex)


def const_gamma(value):
    return lambda p: value + 0.0 * np.asarray(p, dtype=float)


# ---------------------------------------------------------------------------
# S integrals


def test_box_s_vanishes_when_exponential_returns_to_one():
    sh = pulses.box(1.0, 0.0, 10.0)
    spec = SIntegralSpec(sh, sh, const_gamma(2 * np.pi))
    assert s_integral_closed(spec, 0.0, 1.0) == pytest.approx(0.0, abs=1e-14)


def test_box_s_rwa_limit():
    sh = pulses.box(1.0, 0.0, 1e7)
    spec = SIntegralSpec(sh, sh, const_gamma(100.0))
    assert s_integral_closed(spec, 0.0, 2e3, rwa=True) == pytest.approx(-0.01)


def test_sine_squared_closed_matches_quadrature_at_pulse_end():
    sh = pulses.sine_squared(1.0, 0.0, 1.0)
    spec = SIntegralSpec(sh, sh, const_gamma(50.0))
    for t in (0.37, 0.81, 1.0):
        c = s_integral_closed(spec, 0.0, t)
        q = s_integral_quadrature(spec, 0.0, t, tol=1e-13)
        assert abs(c - q) <= 1e-10 * (1 + abs(c))


def test_quadrature_zero_envelope_and_empty_interval():
    zero = pulses.sine_squared(0.0, 0.0, 1.0)
    spec = SIntegralSpec(zero, zero, const_gamma(40.0))
    assert s_integral_quadrature(spec, 0.0, 0.7) == 0.0
    sh = pulses.box(1.0, 0.0, 1.0)
    spec = SIntegralSpec(sh, sh, const_gamma(40.0))
    assert s_integral_quadrature(spec, 0.0, 0.0) == 0.0


def test_quadrature_matches_box_closed_form():
    sh = pulses.box(0.8, 0.1, 2.0)
    spec = SIntegralSpec(sh, sh, const_gamma(73.0))
    for t in (0.4, 1.3, 2.1):
        c = s_integral_closed(spec, 0.0, t)
        q = s_integral_quadrature(spec, 0.0, t, tol=1e-13)
        assert abs(c - q) <= 1e-11 * (1 + abs(c))


def test_s_integral_vectorizes_over_momentum():
    sh = pulses.sine_squared(1.0, 0.0, 1.0)
    spec = SIntegralSpec(sh, sh, lambda p: 50.0 + 3.0 * np.asarray(p))
    p = np.array([-1.0, 0.0, 2.0])
    vec = s_integral_closed(spec, p, 0.6)
    for i, pi in enumerate(p):
        assert vec[i] == pytest.approx(s_integral_closed(spec, float(pi), 0.6))


@pytest.mark.parametrize("kind,pole", [
    ("box", 0.0),
    ("sine_squared", 0.0),
    ("sine_squared", 2 * np.pi / 1.3),
    ("sine_squared", -2 * np.pi / 1.3),
    ("blackman", 4 * np.pi / 1.3),
    ("blackman", -2 * np.pi / 1.3),
])
def test_closed_form_raises_exactly_at_poles(kind, pole):
    sh = pulses.PulseShape(kind, a0=1.0, t0=0.0, duration=1.3,
                           a1=0.5, a2=0.08)
    spec = SIntegralSpec(sh, sh, const_gamma(pole))
    with pytest.raises(PoleError):
        s_integral_closed(spec, 0.0, 0.7)


def test_closed_form_clean_on_dense_sweep_between_poles():
    T = 1.3
    sh = pulses.blackman(0.42, 0.5, 0.08, 0.0, T)
    poles = np.array([0.0, 2 * np.pi / T, -2 * np.pi / T,
                      4 * np.pi / T, -4 * np.pi / T])
    sweep = np.linspace(-12.0, 12.0, 4001)
    sweep = sweep[np.min(np.abs(sweep[:, None] - poles[None, :]), axis=1) > 1e-6]
    spec = SIntegralSpec(sh, sh, lambda p: sweep)
    vals = s_integral_closed(spec, np.zeros_like(sweep), 0.7)
    assert np.all(np.isfinite(vals))


def test_rwa_request_near_envelope_bandwidth_warns():
    sh = pulses.sine_squared(1.0, 0.0, 1.0)
    spec = SIntegralSpec(sh, sh, const_gamma(8.0))  # below 10 * 2*pi/T
    with pytest.warns(UserWarning):
        s_integral_closed(spec, 0.0, 0.5, rwa=True)


# ---------------------------------------------------------------------------
# projector orders


def test_projector_zero_coupling_gives_zero():
    p1 = projector_first_order(TABLE_D, TABLE_X, np.zeros((2, 3)), 0.0, 3.0)
    assert np.linalg.norm(p1) == 0.0


def test_projector_scalar_antiderivative():
    g, om, t = 7.0, 0.3, 2.0
    p1 = projector_first_order(np.zeros((1, 1)), np.array([[g]]),
                               np.array([[om]]), 0.0, t)
    expected = -(om / g) * (1 - np.exp(-1j * g * t))
    assert p1[0, 0] == pytest.approx(expected, abs=1e-14)


def test_projector_first_order_matches_dense_sylvester():
    for t in (0.5, 2.0, 7.0):
        p1 = projector_first_order(TABLE_D, TABLE_X, TABLE_OM, 0.0, t)
        dense = sylvester_ode(TABLE_D, TABLE_X, TABLE_OM, 0.0,
                              np.array([t]), rtol=1e-12, atol=1e-14)[-1]
        assert np.abs(p1 - dense).max() < 1e-9


def test_projector_first_order_time_dependent_coupling():
    sh = pulses.sine_squared(1.0, 0.0, 1.0)

    def omega(s):
        return pulses.value_at(sh, s) * np.array([[1.0, 0.5], [0.2, 0.9]])

    t = 0.8
    p1 = projector_first_order(np.diag([0.0, 1.0]).astype(complex),
                               np.diag([20.0, 26.0]).astype(complex),
                               omega, 0.0, t, tol=1e-12)
    dense = sylvester_ode(np.diag([0.0, 1.0]), np.diag([20.0, 26.0]),
                          omega, 0.0, np.array([t]), rtol=1e-12,
                          atol=1e-14)[-1]
    assert np.abs(p1 - dense).max() < 1e-9


def test_projector_order_zero_and_two_vanish():
    fns = projector_series(TABLE_D, TABLE_X, TABLE_OM, 0.0, 2)
    p0 = projector_order(0, [], TABLE_D, TABLE_X, TABLE_OM, 0.0, 5.0)
    assert np.linalg.norm(p0) == 0.0
    p2 = projector_order(2, fns[:2], TABLE_D, TABLE_X, TABLE_OM, 0.0, 5.0)
    assert np.linalg.norm(p2) == 0.0


def test_third_order_improves_on_first_at_short_times():
    t = 1.0
    fns = projector_series(TABLE_D, TABLE_X, TABLE_OM, 0.0, 3)
    p1 = fns[1](t)
    p3 = projector_order(3, fns[:3], TABLE_D, TABLE_X, TABLE_OM, 0.0, t,
                         tol=1e-11)
    assert np.linalg.norm(p3) > 0.0
    full = riccati_ode(TABLE_D, TABLE_X, TABLE_OM, 0.0, np.array([t]))[-1]
    res1 = np.linalg.norm(full - p1)
    res3 = np.linalg.norm(full - p1 - p3)
    assert res3 < res1


def test_projector_residuals_shrink_with_coupling_order():
    # halving the coupling reduces ||P - P1|| ~ c^3 by ~8 and
    # ||P - P1 - P3|| ~ c^5 by ~32
    t = 1.0
    res = {}
    for scale in (1.0, 0.5):
        om = scale * TABLE_OM
        fns = projector_series(TABLE_D, TABLE_X, om, 0.0, 3)
        p1 = fns[1](t)
        p3 = projector_order(3, fns[:3], TABLE_D, TABLE_X, om, 0.0, t,
                             tol=1e-12)
        full = riccati_ode(TABLE_D, TABLE_X, om, 0.0, np.array([t]))[-1]
        res[scale] = (np.linalg.norm(full - p1),
                      np.linalg.norm(full - p1 - p3))
    assert res[1.0][0] / res[0.5][0] > 5.0
    assert res[1.0][1] / res[0.5][1] > 16.0


# ---------------------------------------------------------------------------
# comparison generators


def test_markov_trivial_and_scalar():
    assert np.allclose(markov_hamiltonian(TABLE_D, TABLE_X,
                                          np.zeros((2, 3))), TABLE_D)
    got = markov_hamiltonian(np.array([[0.0]]), np.array([[10.0]]),
                             np.array([[1.0]]))
    assert got[0, 0] == pytest.approx(-0.1)


def test_paulisch_scalar_value():
    got = paulisch_hamiltonian(np.array([[0.0]]), np.array([[10.0]]),
                               np.array([[1.0]]))
    assert got[0, 0] == pytest.approx(-0.1 / 1.01)
    assert np.allclose(paulisch_hamiltonian(TABLE_D, TABLE_X,
                                            np.zeros((2, 3))), TABLE_D)


def test_sanz_reduces_to_markov_at_zero_delta():
    om = np.array([[1.0, 0.3], [0.4, 0.8]])
    xi = np.diag([11.0, 13.0])
    zero = np.zeros((2, 2))
    assert np.allclose(sanz_hamiltonian(zero, xi, om),
                       markov_hamiltonian(zero, xi, om))
    assert np.allclose(sanz_hamiltonian(TABLE_D, TABLE_X, np.zeros((2, 3))),
                       TABLE_D)


def test_table_values_against_dense_arithmetic_oracle():
    xi_inv = np.diag(1.0 / np.array(FIVE_LEVEL_XI))
    hm = TABLE_D - TABLE_OM.conj().T @ xi_inv @ TABLE_OM
    a = TABLE_OM.conj().T @ xi_inv @ xi_inv @ TABLE_OM
    hp = np.linalg.inv(np.eye(3) + a) @ hm
    hs = hm - 0.5 * (a @ TABLE_D + TABLE_D @ a)
    np.testing.assert_allclose(markov_hamiltonian(TABLE_D, TABLE_X, TABLE_OM),
                               hm, atol=1e-14)
    np.testing.assert_allclose(paulisch_hamiltonian(TABLE_D, TABLE_X, TABLE_OM),
                               hp, atol=1e-14)
    np.testing.assert_allclose(sanz_hamiltonian(TABLE_D, TABLE_X, TABLE_OM),
                               hs, atol=1e-14)
    # commuting-limit formula, elementwise
    hc = TABLE_D.copy()
    for l in range(3):
        for m in range(3):
            for k in range(2):
                hc[l, m] -= (TABLE_OM.conj()[k, l] * TABLE_OM[k, m]
                             / (FIVE_LEVEL_XI[k] - FIVE_LEVEL_DELTA[m]))
    np.testing.assert_allclose(
        commuting_limit_hamiltonian(TABLE_D, TABLE_X, TABLE_OM), hc,
        atol=1e-14)


def test_commuting_limit_two_term_example():
    delta = np.zeros((2, 2))
    xi = np.array([[5.0]])
    om = np.array([[1.0 + 0.5j, 2.0]])
    got = commuting_limit_hamiltonian(delta, xi, om)
    assert got[0, 1] == pytest.approx(-np.conj(1.0 + 0.5j) * 2.0 / 5.0)
    assert got[0, 0] == pytest.approx(-abs(1.0 + 0.5j) ** 2 / 5.0)
    assert got[1, 1] == pytest.approx(-4.0 / 5.0)


def test_commuting_limit_degenerate_pair_raises():
    delta = np.diag([0.0, 5.0])
    xi = np.diag([5.0, 9.0])
    with pytest.raises(PoleError) as err:
        commuting_limit_hamiltonian(delta, xi, np.ones((2, 2)))
    assert "xi_00" in str(err.value.denominator)


def test_commuting_limit_merges_with_sanz_for_small_degenerate_delta():
    rng = np.random.default_rng(2)
    xi = np.diag([10.0, 13.0])
    om = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    norms = {}
    for eps in (0.1, 0.05, 0.025):
        delta = eps * np.linalg.norm(xi, 2) * np.eye(2)
        norms[eps] = np.linalg.norm(
            commuting_limit_hamiltonian(delta, xi, om)
            - sanz_hamiltonian(delta, xi, om), 2)
    r1 = norms[0.1] / norms[0.05]
    r2 = norms[0.05] / norms[0.025]
    assert 2.0 < r1 < 8.0
    assert 2.0 < r2 < 8.0


# ---------------------------------------------------------------------------
# validity and effective assembly


def test_validity_table_gap_is_exact():
    system = five_level_system()
    report = validity_report(system, 0.0, 4.0)
    assert report.gamma_star == 14.0
    assert report.epsilon_max == pytest.approx((23.0 + 4.1) - 14.0)
    assert report.coupling_ratio == pytest.approx(np.sqrt(9.75) / 14.0)
    assert report.smoothness == 0.0


def test_validity_fails_when_coupling_reaches_gap():
    system = five_level_system()
    system.omega_static = system.omega_static * (10 * 14.0 / np.sqrt(9.75))
    report = validity_report(system, 0.0, 4.0)
    assert report.coupling_ratio > 1.0
    assert report.verdict == "fail"


def test_validity_rubidium_raman_passes():
    spec = models.rubidium87_raman(1.0e-3, np.pi)
    report = validity_report(spec, 0.0, 1.0e-3)
    assert report.verdict == "pass"
    assert report.coupling_ratio < 0.01


def test_effective_hamiltonian_refuses_failed_validity():
    system = five_level_system()
    system.omega_static = system.omega_static * 20.0
    with pytest.raises(ValidityError):
        effective_hamiltonian(system, order=1)


def test_finite_effective_reduces_to_delta_without_coupling():
    system = five_level_system()
    system.omega_static = np.zeros((2, 3), dtype=complex)
    fn = finite_effective_matrix_fn(system, order=1)
    np.testing.assert_allclose(fn(2.2), TABLE_D, atol=1e-16)


def test_finite_effective_matches_projector_assembly():
    system = five_level_system()
    fn = finite_effective_matrix_fn(system, order=1)
    t = 1.7
    p1 = projector_first_order(TABLE_D, TABLE_X, TABLE_OM, 0.0, t)
    np.testing.assert_allclose(fn(t), TABLE_D + TABLE_OM.conj().T @ p1,
                               atol=1e-13)
    assert fn(0.0) == pytest.approx(TABLE_D)


def test_effective_first_order_nonhermiticity_is_bounded():
    spec = models.rubidium87_raman(2.0e-5, np.pi, detuning_rad_s=2.0e7,
                                   commensuration_rtol=1e-3)
    eff = effective_hamiltonian(spec, 1, "closed")
    lad = spec.default_ladder([0.0], window=(-4, 4))
    t = 1.1e-5
    H = eff.block.to_matrix(lad, 0, t)
    rel = np.linalg.norm(H - H.conj().T, 2) / np.linalg.norm(H, 2)
    assert rel > 0.0  # genuinely not hermitian at first order
    assert rel <= 3.0 * eff.validity.coupling_ratio


def test_torosov_route_matches_first_order_projector():
    # two-level system with commuting scalar entries and a pulsed coupling:
    # the interaction-picture memory integral equals P1 applied to any state
    sh = pulses.sine_squared(0.8, 0.0, 1.0)
    delta, xi = 1.3, 21.0
    t = 0.9
    p1 = projector_first_order(np.array([[delta]]), np.array([[xi]]),
                               lambda s: np.array([[pulses.value_at(sh, s)]]),
                               0.0, t, tol=1e-12)[0, 0]
    s_grid = np.linspace(0.0, t, 200_001)
    vals = pulses.evaluate(sh, s_grid)
    oracle = -1j * np.trapezoid(
        vals * np.exp(-1j * (xi - delta) * (t - s_grid)), s_grid)
    assert p1 == pytest.approx(oracle, abs=1e-9)


def test_quadrature_s_mode_matches_closed_assembly():
    spec = models.rubidium87_raman(2.0e-5, np.pi, detuning_rad_s=2.0e7,
                                   commensuration_rtol=1e-3)
    lad = spec.default_ladder([0.4], window=(-2, 2))
    t = 1.3e-5
    closed = effective_hamiltonian(spec, 1, "closed").block.to_matrix(lad, 0, t)
    quad = effective_hamiltonian(spec, 1, "quadrature",
                                 quadrature_tol=1e-12).block.to_matrix(lad, 0, t)
    assert np.abs(closed - quad).max() <= 1e-8 * (1 + np.abs(closed).max())


def test_com_systems_are_first_order_only():
    spec = models.rubidium87_raman(1.0e-3, np.pi)
    with pytest.raises(ValueError):
        effective_hamiltonian(spec, order=2)


def test_finite_system_supports_higher_orders():
    system = five_level_system()
    fn1 = finite_effective_matrix_fn(system, 1)
    fn3 = finite_effective_matrix_fn(system, 3)
    t = 1.0
    assert np.linalg.norm(fn3(t) - fn1(t)) > 1e-4   # third order contributes
