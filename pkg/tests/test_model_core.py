import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadbayes.datagen import DEFAULT_MOTOR, simulate_im_trajectory, voltage_disturbance
from loadbayes.model_core import (ImCoefficients, ImInput, ImPhysicalParams, ImRegressionData, ImState,
                                  ModelDomainError, ZipParams, ZipSeries, build_im_regression,
                                  build_zip_series, im_coefficients_from_physical, im_derivatives,
                                  im_equilibrium, im_stator_currents, simulate_im, zip_power)

pos = st.floats(0.01, 5.0)
coef = st.floats(-3.0, 3.0)


def motor(**kw):
    base = dict(rs=0.03, xs=0.1, xm=3.0, rr=0.02, xr=0.1, h=0.5)
    base.update(kw)
    return ImPhysicalParams(**base)


# --- ZIP ---------------------------------------------------------------------

def test_zip_power_at_reference_is_p0():
    params = ZipParams.from_triple((0.2, 0.3, 0.5), p0=7.5, v0=1.3)
    assert zip_power(params, 1.3) == 7.5


def test_zip_power_example_values():
    assert zip_power(ZipParams.from_triple((0.25, 0.25, 0.5)), 1.0) == 1.0
    assert zip_power(ZipParams.from_triple((1, 0, 0), p0=2.0), 1.1) == pytest.approx(2.42, abs=1e-12)


def test_zip_reactive_path():
    params = ZipParams.from_triple((1, 0, 0), (0, 0, 1), p0=1.0, q0=3.0)
    assert zip_power(params, 0.5, "reactive") == 3.0
    assert zip_power(params, 0.5) == 0.25


def test_zip_power_rejects_nonpositive_voltage():
    params = ZipParams.from_triple((0.25, 0.25, 0.5))
    with pytest.raises(ModelDomainError):
        zip_power(params, 0.0)
    with pytest.raises(ModelDomainError):
        zip_power(params, np.array([1.0, -0.1]))


def test_zip_params_invariants():
    with pytest.raises(ModelDomainError):
        ZipParams(0.5, 0.5, 0.5, 0.3, 0.3, 0.4, normalized=True)
    with pytest.raises(ModelDomainError):
        ZipParams(0.2, 0.3, 0.5, v0=0.0)
    raw = ZipParams.from_triple((0.5, 0.5, 0.5))
    assert not raw.normalized


@settings(max_examples=200, deadline=None)
@given(a1=coef, a2=coef, p0=st.floats(0.1, 100), v0=st.floats(0.5, 1.5))
def test_normalized_zip_returns_p0_at_v0(a1, a2, p0, v0):
    params = ZipParams.from_triple((a1, a2, 1.0 - a1 - a2), p0=p0, v0=v0)
    assert zip_power(params, v0) == pytest.approx(p0, rel=1e-12, abs=1e-12)


# --- motor coefficients ------------------------------------------------------

def test_coefficients_from_default_motor():
    c = im_coefficients_from_physical(DEFAULT_MOTOR)
    assert DEFAULT_MOTOR.t_open == pytest.approx(129.87, rel=1e-12)
    assert c.beta1 == pytest.approx(-0.0077, rel=1e-3)
    assert c.beta3 == -25.0


def test_coefficient_definitions():
    p = motor()
    c = im_coefficients_from_physical(p)
    t_open = (p.xr + p.xm) / p.rr
    x = p.xs + p.xm
    xp = p.xs + p.xm * p.xr / (p.xm + p.xr)
    assert c.beta1 == pytest.approx(-1 / t_open)
    assert c.beta2 == pytest.approx(-(x - xp) / t_open)
    assert c.beta3 == pytest.approx(-1 / (2 * p.h))
    assert c.alpha_b == pytest.approx(p.rs / (p.rs ** 2 + xp ** 2))
    assert c.alpha_c == pytest.approx(xp / (p.rs ** 2 + xp ** 2))


def test_vanishing_reactance_limit():
    c = im_coefficients_from_physical(motor(rs=1.0, xs=1e-12, xm=1e-12, xr=1e-12))
    assert c.alpha_b == pytest.approx(1.0, abs=1e-9)
    assert c.alpha_c == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(rs=pos, xs=pos, xm=pos, rr=pos, xr=pos, h=pos)
def test_stator_coefficient_identity(rs, xs, xm, rr, xr, h):
    p = ImPhysicalParams(rs, xs, xm, rr, xr, h)
    c = im_coefficients_from_physical(p)
    assert c.alpha_b * p.rs + c.alpha_c * p.x_transient == pytest.approx(1.0, rel=1e-12)


def test_physical_param_invariants():
    with pytest.raises(ModelDomainError):
        motor(rs=0.0)
    with pytest.raises(ModelDomainError):
        motor(a=0.5, b=0.2, c=0.2)
    with pytest.raises(ModelDomainError):
        ImCoefficients(1, 1, 1, 0.0, 0.0)


# --- stator currents and derivatives -----------------------------------------

def test_currents_vanish_when_voltage_equals_flux():
    assert im_stator_currents(ImState(0.1, 0.9, 1.0), ImInput(0.1, 0.9), motor()) == (0.0, 0.0)


def test_currents_without_stator_resistance():
    p = motor(rs=1e-15)
    s, u = ImState(0.1, 0.8, 0.97), ImInput(0.3, 0.95)
    i_d, i_q = im_stator_currents(s, u, p)
    assert i_d == pytest.approx((u.uq - s.eq) / p.x_transient, rel=1e-9)
    assert i_q == pytest.approx(-(u.ud - s.ed) / p.x_transient, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(ed=coef, eq=coef, dd=coef, dq=coef, k=st.floats(-4, 4))
def test_currents_linear_in_voltage_gap(ed, eq, dd, dq, k):
    p = motor()
    s = ImState(ed, eq, 1.0)
    base = np.array(im_stator_currents(s, ImInput(ed + dd, eq + dq), p))
    scaled = np.array(im_stator_currents(s, ImInput(ed + k * dd, eq + k * dq), p))
    assert np.allclose(scaled, k * base, rtol=1e-9, atol=1e-9)
    neg = np.array(im_stator_currents(s, ImInput(ed - dd, eq - dq), p))
    assert np.allclose(neg, -base, rtol=1e-9, atol=1e-12)


def test_equilibrium_derivatives_vanish():
    eq_state = im_equilibrium(DEFAULT_MOTOR, *voltage_disturbance(0.0))
    d = im_derivatives(eq_state, ImInput(*voltage_disturbance(0.0)), DEFAULT_MOTOR)
    assert np.max(np.abs(d)) < 1e-9
    assert 0 < eq_state.omega < 1


def test_speed_derivative_sign_follows_torque_balance():
    p = DEFAULT_MOTOR
    for ud, uq in [(0.0, 1.0), (0.05, 0.9), (-0.1, 1.05)]:
        s = ImState(0.0, 0.9, 1.0)
        i_d, i_q = im_stator_currents(s, ImInput(ud, uq), p)
        t_e = s.ed * i_d + s.eq * i_q
        t_m = p.t0
        assert np.sign(im_derivatives(s, ImInput(ud, uq), p)[2]) == np.sign(t_e - t_m)


def test_doubling_inertia_halves_acceleration():
    s, u = ImState(0.05, 0.85, 0.97), ImInput(0.0, 1.0)
    a = im_derivatives(s, u, motor(h=0.4))[2]
    b = im_derivatives(s, u, motor(h=0.8))[2]
    assert b == pytest.approx(a / 2, rel=1e-12)


# --- ZipSeries ---------------------------------------------------------------

def test_build_zip_series_examples():
    s = build_zip_series([0.97], [2.5], 0.97, 2.5)
    assert s.x.tolist() == [1.0] and s.y.tolist() == [1.0]
    s = build_zip_series([1.0, 3.0], [1.0, 1.0], 2.0, 1.0)
    assert s.x.tolist() == [0.5, 1.5]
    assert s.n == 2


@pytest.mark.parametrize("args", [([], [], 1.0, 1.0), ([1.0], [1.0, 2.0], 1.0, 1.0),
                                  ([1.0], [1.0], 1.0, 0.0), ([1.0], [1.0], 0.0, 1.0)])
def test_build_zip_series_errors(args):
    with pytest.raises(ValueError):
        build_zip_series(*args)


def test_zip_series_requires_positive_voltage():
    with pytest.raises(ValueError):
        ZipSeries(np.array([1.0, 0.0]), np.array([1.0, 1.0]))


# --- regression data ---------------------------------------------------------

def test_constant_trajectory_has_zero_fd_targets():
    states = np.tile([0.02, 0.9, 0.98], (10, 1))
    inputs = np.tile([0.0, 1.0], (10, 1))
    d = build_im_regression(states, inputs, DEFAULT_MOTOR, 0.1, "finite_difference")
    # exact in the interior; the one-sided end stencil leaves rounding residue
    for y in (d.y_ed, d.y_eq, d.y_omega):
        assert np.all(y[1:-1] == 0)
        assert np.max(np.abs(y)) < 1e-12


def test_recorded_mode_matches_pointwise_derivatives(rng):
    states = np.column_stack([rng.uniform(-0.2, 0.2, 20), rng.uniform(0.8, 1.0, 20), rng.uniform(0.9, 1, 20)])
    inputs = np.column_stack([rng.uniform(-0.1, 0.1, 20), rng.uniform(0.9, 1.05, 20)])
    d = build_im_regression(states, inputs, DEFAULT_MOTOR, 0.01, "recorded")
    for k in range(20):
        ref = im_derivatives(ImState(*states[k]), ImInput(*inputs[k]), DEFAULT_MOTOR)
        assert (d.y_ed[k], d.y_eq[k], d.y_omega[k]) == ref


def test_recorded_mode_satisfies_regression_equations():
    p = motor(h=0.3)
    _, states, inputs = simulate_im_trajectory(p, t_end=5.0, dt=0.01)
    d = build_im_regression(states, inputs, p, 0.01, "recorded")
    for block in d.residuals(im_coefficients_from_physical(p)):
        assert np.max(np.abs(block)) < 1e-10


def test_short_trajectory_rejected():
    with pytest.raises(ValueError):
        build_im_regression(np.zeros((2, 3)) + [0, 1, 1], np.zeros((2, 2)) + [0, 1],
                            DEFAULT_MOTOR, 0.1, "finite_difference")


def test_finite_differences_converge_at_second_order():
    """Halving dt cuts the finite-difference error by about four."""
    p = DEFAULT_MOTOR
    errors = []
    for dt in (0.08, 0.04, 0.02, 0.01):
        _, states, inputs = simulate_im_trajectory(p, t_end=40.0, dt=dt)
        fd = build_im_regression(states, inputs, p, dt, "finite_difference")
        rec = build_im_regression(states, inputs, p, dt, "recorded")
        errors.append(max(np.max(np.abs(fd.y_ed - rec.y_ed)), np.max(np.abs(fd.y_eq - rec.y_eq)),
                          np.max(np.abs(fd.y_omega - rec.y_omega))))
    ratios = np.array(errors[:-1]) / np.array(errors[1:])
    assert np.all(np.diff(errors) < 0)
    assert np.all((ratios > 3.0) & (ratios < 5.0)), ratios


def test_regression_data_length_check():
    a = np.ones(3)
    with pytest.raises(ValueError):
        ImRegressionData(a, a, a, a, a, a, a, a, a, a, a, np.ones(4))


def test_simulator_step_halving_gives_up():
    p = motor()

    def wild(t):
        return (np.inf, np.inf)

    from loadbayes.model_core import IntegrationError
    with pytest.raises(IntegrationError), np.errstate(invalid="ignore"):
        simulate_im(p, (0.0, 0.9, 0.98), wild, 0.1, 0.01, max_halvings=2)
