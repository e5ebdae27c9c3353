"""Synthetic measurement generators for the ZIP and induction-motor fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model_core import (ImCoefficients, ImPhysicalParams, ImRegressionData, ZipSeries,
                         build_im_regression, im_equilibrium, simulate_im)
from .samplers import rng_stream

# Reference coefficients for the motor experiments (all positive, as listed).
REFERENCE_COEFFICIENTS = ImCoefficients(beta1=0.0077, beta2=0.018, beta3=25.0, alpha_b=0.20, alpha_c=0.80)

# A motor with T' = 129.87 and H = 0.02, i.e. |beta1| = 0.0077 and |beta3| = 25.
DEFAULT_MOTOR = ImPhysicalParams(rs=0.03, xs=0.1, xm=3.0, rr=3.1 / 129.87, xr=0.1, h=0.02,
                                 a=1.0, b=0.0, c=0.0, t0=0.6)


def synthetic_zip_series(active=(3.0, -5.0, 3.0), tau: float = 0.2, n: int = 1000,
                         seed: int = 0, x_low: float = 0.05, x_high: float = 20.0) -> ZipSeries:
    """y = a1 x^2 + a2 x + a3 + N(0, 1/tau) with x ~ U(x_low, x_high)."""
    rng = rng_stream(seed)
    a1, a2, a3 = active
    x = rng.uniform(x_low, x_high, n)
    y = a1 * x * x + a2 * x + a3
    if np.isfinite(tau):
        y = y + rng.normal(0.0, 1.0 / np.sqrt(tau), n)
    return ZipSeries(x, y)


@dataclass(frozen=True)
class ImSamplingLaw:
    """Random laws for regression-mode motor data.

    E'd ~ U(ed), E'q ~ U(eq), omega ~ U(omega), and the bus voltage is the
    flux plus a U(gap) offset on each axis.
    """

    ed: tuple = (-0.3, 0.3)
    eq: tuple = (0.7, 1.0)
    omega: tuple = (0.9, 1.0)
    gap: tuple = (-0.3, 0.3)
    t0: float = 1.0


def _noisy(rng, clean: np.ndarray, frac: float) -> np.ndarray:
    if frac <= 0:
        return clean.copy()
    return clean + rng.normal(0.0, frac * float(np.std(clean)), clean.size)


def synthetic_im_regression(coef: ImCoefficients = REFERENCE_COEFFICIENTS, noise: float = 0.01,
                            n: int = 2000, seed: int = 0,
                            law: ImSamplingLaw = ImSamplingLaw()) -> ImRegressionData:
    """States and inputs drawn from ``law``; targets from the five regression
    equations plus Gaussian noise with std ``noise`` times each clean target's std.
    """
    rng = rng_stream(seed)
    ed = rng.uniform(*law.ed, n)
    eq = rng.uniform(*law.eq, n)
    omega = rng.uniform(*law.omega, n)
    ud = ed + rng.uniform(*law.gap, n)
    uq = eq + rng.uniform(*law.gap, n)
    a, b = ud - ed, uq - eq
    i_d = coef.alpha_b * a + coef.alpha_c * b
    i_q = coef.alpha_b * b - coef.alpha_c * a
    slip = omega - 1.0
    clean = {
        "y_ed": coef.beta1 * ed + coef.beta2 * i_q - slip * eq,
        "y_eq": coef.beta1 * eq - coef.beta2 * i_d + slip * ed,
        "y_omega": coef.beta3 * (omega ** 2 * law.t0 - (ed * i_d + eq * i_q)),
        "y_id": i_d,
        "y_iq": i_q,
    }
    noisy = {k: _noisy(rng, v, noise) for k, v in clean.items()}
    return ImRegressionData(ed, eq, i_d, i_q, ud, uq, omega, t0=law.t0,
                            meta={"mode": "regression", "noise": noise, "seed": seed}, **noisy)


def voltage_disturbance(t, u0: float = 1.0, depth: float = 0.15, t_on: float = 20.0,
                        t_off: float = 60.0, ramp: float = 2.0, wobble: float = 0.02,
                        period: float = 15.0):
    """Bus voltage (Ud, Uq): a smooth sag of ``depth`` between t_on and t_off
    (tanh edges of width ``ramp``) plus a slow wobble in magnitude and angle.
    """
    sag = 0.5 * depth * (np.tanh((t - t_on) / ramp) - np.tanh((t - t_off) / ramp))
    mag = u0 - sag + wobble * np.sin(2 * np.pi * t / period)
    ang = 0.05 * np.sin(2 * np.pi * t / (2.3 * period))
    return mag * np.sin(ang), mag * np.cos(ang)


def simulate_im_trajectory(p: ImPhysicalParams = DEFAULT_MOTOR, t_end: float = 100.0,
                           dt: float = 0.01, voltage=voltage_disturbance):
    """RK4 trajectory starting from the pre-disturbance equilibrium.

    Returns (times, states (n, 3), inputs (n, 2)).
    """
    ud0, uq0 = voltage(0.0)
    x0 = im_equilibrium(p, ud0, uq0)
    times, states = simulate_im(p, x0, voltage, t_end, dt)
    inputs = np.array([voltage(t) for t in times])
    return times, states, inputs


def im_trajectory_regression(p: ImPhysicalParams = DEFAULT_MOTOR, t_end: float = 100.0,
                             dt: float = 0.01, noise: float = 0.0, seed: int = 0,
                             derivative_mode: str = "finite_difference"):
    """Trajectory-mode data: simulate, then build (optionally noisy) regression targets."""
    times, states, inputs = simulate_im_trajectory(p, t_end, dt)
    data = build_im_regression(states, inputs, p, dt, derivative_mode)
    if noise > 0:
        rng = rng_stream(seed)
        for name in ("y_ed", "y_eq", "y_omega", "y_id", "y_iq"):
            setattr(data, name, _noisy(rng, getattr(data, name), noise))
    data.meta.update({"mode": "trajectory", "noise": noise, "seed": seed})
    return times, states, inputs, data
