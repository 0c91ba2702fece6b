import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edil.model import (
    S0,
    DegenerateCharacteristicError,
    ModelParams,
    PressureLaw,
    VacuumError,
    assemble_matrices,
    b_coefficient,
    count_incoming_characteristics,
    from_diagonal,
    nonlinear_terms,
    physical_to_scaled,
    pressure_props,
    scaled_to_physical,
    to_diagonal,
    wedge_map,
)

H = math.sqrt(2) / 2
CUBIC = PressureLaw(3.0, 1.0 / 3.0)
QUADRATIC = PressureLaw(2.0, 1.0)


def fd_pressure_derivative(law, rho_hat, h=1e-5):
    p = lambda x: pressure_props(law, x)[0]  # noqa: E731
    return (p(rho_hat + h) - p(rho_hat - h)) / (2 * h)


# --- pressure and B -------------------------------------------------------------


def test_pressure_props_cubic_at_one():
    p, dp = pressure_props(CUBIC, 1.0)
    assert p == pytest.approx(1 / 3, abs=1e-15)
    assert dp == pytest.approx(1.0, abs=1e-15)
    assert fd_pressure_derivative(CUBIC, 1.0) == pytest.approx(dp, rel=1e-9)


def test_pressure_props_quadratic():
    assert pressure_props(QUADRATIC, 1.0)[1] == 2.0


@pytest.mark.parametrize("law", [CUBIC, QUADRATIC, PressureLaw(1.4, 2.5)])
def test_sound_speed_is_slope_at_one(law):
    assert pressure_props(law, 1.0)[1] == pytest.approx(law.r**2, rel=1e-15)


@pytest.mark.parametrize("rho_hat", [0.0, -0.5])
def test_pressure_rejects_vacuum(rho_hat):
    with pytest.raises(VacuumError):
        pressure_props(CUBIC, rho_hat)


def test_pressure_law_validation():
    with pytest.raises(ValueError):
        PressureLaw(1.0, 1.0)
    with pytest.raises(ValueError):
        PressureLaw(2.0, 0.0)


def b_oracle(law, rho):
    """B from a finite-difference P' instead of the closed form."""
    return law.r2 - fd_pressure_derivative(law, 1 + rho) / (1 + rho)


@pytest.mark.parametrize(
    "law, rho, expected",
    [(CUBIC, 0.0, 0.0), (CUBIC, 0.1, -0.1), (QUADRATIC, 0.5, 0.0), (PressureLaw(1.4, 2.5), 0.0, 0.0)],
)
def test_b_coefficient_examples(law, rho, expected):
    assert b_coefficient(law, rho) == pytest.approx(expected, abs=1e-14)
    assert b_oracle(law, rho) == pytest.approx(expected, abs=1e-8)


def test_b_coefficient_vacuum_guard():
    with pytest.raises(VacuumError):
        b_coefficient(CUBIC, -0.95)


@settings(max_examples=50, deadline=None)
@given(gamma=st.floats(1.05, 4.0), kappa=st.floats(0.1, 3.0))
def test_b_lipschitz_near_zero(gamma, kappa):
    law = PressureLaw(gamma, kappa)
    rho = np.linspace(-0.5, 0.5, 201)
    b = b_coefficient(law, rho)
    # |dB/drho| = r^2 |gamma - 2| rho_hat^(gamma - 3), maximized at an end of [0.5, 1.5]
    lip = law.r2 * abs(gamma - 2) * max(0.5 ** (gamma - 3), 1.5 ** (gamma - 3))
    assert b_coefficient(law, 0.0) == 0.0
    assert np.all(np.abs(b) <= lip * np.abs(rho) + 1e-14)


# --- matrices -------------------------------------------------------------------


def test_matrices_example():
    m = assemble_matrices(ModelParams(0.5, 0.4, CUBIC))
    np.testing.assert_allclose(m.s1, np.diag([0.6, -1.4, -0.4]), atol=1e-12)
    np.testing.assert_allclose(S0 @ m.a1 @ S0, m.s1, atol=1e-15)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(m.a2)), [-1, 0, 1], atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(s=st.floats(-3, 3), r2=st.floats(0.1, 4), k=st.floats(0.01, 5))
def test_matrices_match_closed_forms(s, r2, k):
    law = PressureLaw(2.0, r2 / 2.0)
    r = law.r
    m = assemble_matrices(ModelParams(k, s, law))
    np.testing.assert_allclose(m.s0 @ m.s0, np.eye(3), atol=1e-14)
    np.testing.assert_array_equal(m.s0, m.s0.T)
    np.testing.assert_allclose(m.s1, np.diag([-s + r, -s - r, -s]), atol=1e-12)
    s2 = np.array([[0, 0, H * r], [0, 0, H * r], [H * r, H * r, 0]])
    s3 = np.array([[k / 2, -k / 2, 0], [-k / 2, k / 2, 0], [0, 0, k]])
    np.testing.assert_allclose(m.s2, s2, atol=1e-12)
    np.testing.assert_allclose(m.s3, s3, atol=1e-12)
    np.testing.assert_array_equal(m.a1, m.a1.T)
    np.testing.assert_array_equal(m.a2, m.a2.T)
    np.testing.assert_array_equal(m.a3, np.diag([0, k, k]))


# --- boundary counting ----------------------------------------------------------


@pytest.mark.parametrize("s, expected", [(0.4, 1), (-0.5, 2), (1.5, 0), (-1.5, 3)])
def test_count_incoming(s, expected):
    count, combos = count_incoming_characteristics(ModelParams(1.0, s, CUBIC))
    assert count == expected == len(combos)


def test_incoming_combination_is_rho_plus_u1():
    _, (combo,) = count_incoming_characteristics(ModelParams(1.0, 0.4, CUBIC))
    np.testing.assert_allclose(combo / combo[0], [1.0, 1.0, 0.0])


@pytest.mark.parametrize("s", [0.0, 1.0, -1.0, 1e-12])
def test_count_rejects_degenerate(s):
    with pytest.raises(DegenerateCharacteristicError):
        count_incoming_characteristics(ModelParams(1.0, s, CUBIC))


@settings(max_examples=200, deadline=None)
@given(s=st.floats(-5, 5), r2=st.floats(0.05, 6))
def test_count_matches_eigensolver(s, r2):
    params = ModelParams(1.0, s, PressureLaw(2.0, r2 / 2))
    eig = np.linalg.eigvals(assemble_matrices(params).a1).real
    if np.min(np.abs(eig)) < 1e-8:
        return
    count, _ = count_incoming_characteristics(params)
    assert count == int(np.sum(eig > 0))


def test_solver_regime():
    ModelParams.solver(1.0, 0.5)
    ModelParams(1.0, 1.5)  # analyzer accepts any s
    for s in (0.0, 1.0, 1.5, -0.2):
        with pytest.raises(ValueError, match="0 < s < r"):
            ModelParams.solver(1.0, s)
    with pytest.raises(ValueError):
        ModelParams(0.0, 0.4)


# --- transforms -----------------------------------------------------------------


def test_to_diagonal_examples():
    np.testing.assert_allclose(to_diagonal([1.0, 1.0, 0.0]), [math.sqrt(2), 0, 0], atol=1e-15)
    np.testing.assert_array_equal(to_diagonal([0.0, 0.0, 0.0]), [0, 0, 0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
def test_diagonal_round_trip(w):
    w = np.array(w)
    v = to_diagonal(w)
    np.testing.assert_allclose(from_diagonal(v), w, atol=1e-14 * (1 + np.abs(w).max()))
    assert np.linalg.norm(v) == pytest.approx(np.linalg.norm(w), rel=1e-14, abs=1e-100)


def test_physical_scaled_examples():
    p = ModelParams(1.0, 0.4, CUBIC)
    np.testing.assert_allclose(physical_to_scaled(1.0, [0.0, 0.0], p), [0, 0, 0], atol=1e-16)
    np.testing.assert_allclose(physical_to_scaled(1.1, [0.5, 0.0], p), [0.1, 0.5, 0.0], atol=1e-15)
    with pytest.raises(VacuumError):
        physical_to_scaled(0.0, [0.0, 0.0], p)


@settings(max_examples=100, deadline=None)
@given(rho=st.floats(0.2, 5), u1=st.floats(-3, 3), u2=st.floats(-3, 3), r2=st.floats(0.1, 4))
def test_physical_scaled_round_trip(rho, u1, u2, r2):
    p = ModelParams(1.0, 0.1, PressureLaw(2.0, r2 / 2))
    back_rho, back_u = scaled_to_physical(physical_to_scaled(rho, [u1, u2], p), p)
    assert back_rho == pytest.approx(rho, abs=1e-14)
    np.testing.assert_allclose(back_u, [u1, u2], atol=1e-14)


@pytest.mark.parametrize("x_tilde, t, s, expected", [(1.0, 0.0, 0.4, 1.0), (2.0, 2.0, 0.5, 1.0)])
def test_wedge_map(x_tilde, t, s, expected):
    assert wedge_map(x_tilde, t, ModelParams(1.0, s)) == expected


@pytest.mark.parametrize("t", [0.0, 0.3, 7.0])
def test_wedge_map_boundary_locus(t):
    p = ModelParams(1.0, 0.4)
    assert wedge_map(p.s * t, t, p) == 0.0


# --- nonlinear terms ------------------------------------------------------------


def h_conservative_oracle(law, rho_f, u1_f, u2_f, x0, y0, h=1e-4):
    """H from conservative differences of analytic fields (divergence of rho*u)."""
    r = law.r

    def d(f, dx, dy):
        return (f(x0 + dx * h, y0 + dy * h) - f(x0 - dx * h, y0 - dy * h)) / (2 * h)

    rho, u1, u2 = rho_f(x0, y0), u1_f(x0, y0), u2_f(x0, y0)
    b = law.r2 - fd_pressure_derivative(law, 1 + rho) / (1 + rho)
    h1 = -r * (d(lambda x, y: rho_f(x, y) * u1_f(x, y), 1, 0) + d(lambda x, y: rho_f(x, y) * u2_f(x, y), 0, 1))
    h2 = -r * (u1 * d(u1_f, 1, 0) + u2 * d(u1_f, 0, 1)) + b / r * d(rho_f, 1, 0)
    h3 = -r * (u1 * d(u2_f, 1, 0) + u2 * d(u2_f, 0, 1)) + b / r * d(rho_f, 0, 1)
    return np.array([h1, h2, h3])


def test_nonlinear_terms_example():
    grad = np.zeros((3, 2))
    grad[0, 0] = 1.0
    h = nonlinear_terms([0.1, 0.2, 0.0], grad, CUBIC)
    np.testing.assert_allclose(h, [-0.2, -0.1, 0.0], atol=1e-15)
    oracle = h_conservative_oracle(CUBIC, lambda x, y: 0.1 + x, lambda x, y: 0.2 + 0 * x, lambda x, y: 0 * x, 0.0, 0.0)
    np.testing.assert_allclose(oracle, [-0.2, -0.1, 0.0], atol=1e-7)


def test_nonlinear_terms_general_point():
    law = PressureLaw(1.4, 1.2)
    rho_f = lambda x, y: 0.05 * np.sin(x + 2 * y)  # noqa: E731
    u1_f = lambda x, y: 0.1 * np.cos(x * y) + 0.02 * x  # noqa: E731
    u2_f = lambda x, y: -0.07 * np.sin(3 * x - y)  # noqa: E731
    x0, y0 = 0.3, -0.7
    hh = 1e-6
    w = np.array([rho_f(x0, y0), u1_f(x0, y0), u2_f(x0, y0)])
    grad = np.array([[(f(x0 + hh, y0) - f(x0 - hh, y0)) / (2 * hh), (f(x0, y0 + hh) - f(x0, y0 - hh)) / (2 * hh)]
                     for f in (rho_f, u1_f, u2_f)])
    np.testing.assert_allclose(nonlinear_terms(w, grad, law), h_conservative_oracle(law, rho_f, u1_f, u2_f, x0, y0),
                               atol=1e-8)


def test_nonlinear_terms_vanish_at_rest():
    np.testing.assert_array_equal(nonlinear_terms([0.3, 0.0, 0.0], np.zeros((3, 2)), CUBIC), 0.0)


def test_nonlinear_terms_zero_density_drops_b():
    grad = np.random.default_rng(1).normal(size=(3, 2))
    grad[0] = 0.0
    w = np.array([0.0, 0.3, -0.2])
    h = nonlinear_terms(w, grad, QUADRATIC)
    r = QUADRATIC.r
    assert h[1] == pytest.approx(-r * (w[1] * grad[1, 0] + w[2] * grad[1, 1]))
    assert h[2] == pytest.approx(-r * (w[1] * grad[2, 0] + w[2] * grad[2, 1]))


def test_nonlinear_terms_vacuum_guard():
    with pytest.raises(VacuumError):
        nonlinear_terms([-0.95, 0, 0], np.zeros((3, 2)), CUBIC)


def test_nonlinear_terms_are_quadratic():
    rng = np.random.default_rng(7)
    w, grad = rng.normal(size=3), rng.normal(size=(3, 2))
    for law in (CUBIC, PressureLaw(1.4, 2.0)):
        eps = np.array([1e-2, 1e-3, 1e-4])
        norms = np.array([np.linalg.norm(nonlinear_terms(e * w, e * grad, law)) for e in eps])
        orders = np.diff(np.log(norms)) / np.diff(np.log(eps))
        assert np.all(orders >= 1.9)
