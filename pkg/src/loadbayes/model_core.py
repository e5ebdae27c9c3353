"""ZIP and induction-motor load equations.

Everything here is per-unit and pure. The induction motor is the third-order
model with rotor flux linkages (E'd, E'q) and speed omega as states and the
stator currents given algebraically by the bus voltage.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal, NamedTuple

import numpy as np

NORMALIZED_TOL = 1e-9


class ModelDomainError(ValueError):
    """Raised when a model is evaluated outside its domain."""


@dataclass(frozen=True)
class ZipParams:
    """Six ZIP coefficients plus the reference operating point.

    ``alpha1..3`` weight V^2, V and 1 for active power, ``alpha4..6`` the same
    terms for reactive power. ``normalized`` asserts both triples sum to one.
    """

    alpha1: float
    alpha2: float
    alpha3: float
    alpha4: float = 0.0
    alpha5: float = 0.0
    alpha6: float = 1.0
    p0: float = 1.0
    q0: float = 0.0
    v0: float = 1.0
    normalized: bool = False

    def __post_init__(self):
        if not self.v0 > 0:
            raise ModelDomainError(f"v0 must be positive, got {self.v0}")
        if self.normalized:
            if abs(self.alpha1 + self.alpha2 + self.alpha3 - 1.0) > NORMALIZED_TOL:
                raise ModelDomainError("active ZIP coefficients do not sum to 1")
            if abs(self.alpha4 + self.alpha5 + self.alpha6 - 1.0) > NORMALIZED_TOL:
                raise ModelDomainError("reactive ZIP coefficients do not sum to 1")

    @classmethod
    def from_triple(cls, active, reactive=None, *, p0=1.0, q0=0.0, v0=1.0):
        """Build params from an active triple; reactive defaults to the same shape."""
        a1, a2, a3 = (float(a) for a in active)
        a4, a5, a6 = (float(a) for a in (reactive if reactive is not None else active))
        normalized = (abs(a1 + a2 + a3 - 1.0) <= NORMALIZED_TOL
                      and abs(a4 + a5 + a6 - 1.0) <= NORMALIZED_TOL)
        return cls(a1, a2, a3, a4, a5, a6, p0=p0, q0=q0, v0=v0, normalized=normalized)

    @property
    def active(self) -> tuple[float, float, float]:
        return (self.alpha1, self.alpha2, self.alpha3)

    @property
    def reactive(self) -> tuple[float, float, float]:
        return (self.alpha4, self.alpha5, self.alpha6)

    def with_coefficients(self, active, reactive=None) -> "ZipParams":
        """Same reference point, new coefficient triples."""
        return ZipParams.from_triple(active, reactive, p0=self.p0, q0=self.q0, v0=self.v0)

    def with_reference(self, **changes) -> "ZipParams":
        return replace(self, **changes)


def zip_power(params: ZipParams, v, which: Literal["active", "reactive"] = "active"):
    """Power drawn by a ZIP load at voltage ``v`` (scalar or array)."""
    v_arr = np.asarray(v, dtype=float)
    if np.any(~(v_arr > 0)):
        raise ModelDomainError("ZIP load evaluated at non-positive voltage")
    vbar = v_arr / params.v0
    if which == "active":
        base, (c2, c1, c0) = params.p0, params.active
    elif which == "reactive":
        base, (c2, c1, c0) = params.q0, params.reactive
    else:
        raise ValueError(f"which must be 'active' or 'reactive', got {which!r}")
    out = base * ((c2 * vbar + c1) * vbar + c0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ImPhysicalParams:
    rs: float
    xs: float
    xm: float
    rr: float
    xr: float
    h: float
    a: float = 1.0
    b: float = 0.0
    c: float = 0.0
    t0: float = 1.0

    def __post_init__(self):
        for name in ("rs", "xs", "xm", "rr", "xr", "h"):
            if not getattr(self, name) > 0:
                raise ModelDomainError(f"{name} must be positive")
        if abs(self.a + self.b + self.c - 1.0) > NORMALIZED_TOL:
            raise ModelDomainError("torque coefficients a+b+c must equal 1")

    @property
    def t_open(self) -> float:
        """Rotor open-circuit time constant T' (per-unit time)."""
        return (self.xr + self.xm) / self.rr

    @property
    def x_sync(self) -> float:
        return self.xs + self.xm

    @property
    def x_transient(self) -> float:
        return self.xs + self.xm * self.xr / (self.xm + self.xr)


@dataclass(frozen=True)
class ImCoefficients:
    """Regression-space IM coefficients (the quantities the sampler estimates)."""

    beta1: float
    beta2: float
    beta3: float
    alpha_b: float
    alpha_c: float

    NAMES = ("beta1", "beta2", "beta3", "alpha_b", "alpha_c")

    def __post_init__(self):
        if self.alpha_b ** 2 + self.alpha_c ** 2 <= 0:
            raise ModelDomainError("alpha_b and alpha_c cannot both be zero")

    def as_array(self) -> np.ndarray:
        return np.array([self.beta1, self.beta2, self.beta3, self.alpha_b, self.alpha_c])


class ImState(NamedTuple):
    ed: float
    eq: float
    omega: float


class ImInput(NamedTuple):
    ud: float
    uq: float


def im_coefficients_from_physical(p: ImPhysicalParams) -> ImCoefficients:
    t_open = p.t_open
    xp = p.x_transient
    den = p.rs ** 2 + xp ** 2
    return ImCoefficients(
        beta1=-1.0 / t_open,
        beta2=-(p.x_sync - xp) / t_open,
        beta3=-1.0 / (2.0 * p.h),
        alpha_b=p.rs / den,
        alpha_c=xp / den,
    )


def im_stator_currents(state: ImState, inp: ImInput, p: ImPhysicalParams):
    """Stator currents (Id, Iq) from the algebraic network equations."""
    xp = p.x_transient
    den = p.rs ** 2 + xp ** 2
    dd = inp.ud - state.ed
    dq = inp.uq - state.eq
    i_d = (p.rs * dd + xp * dq) / den
    i_q = (p.rs * dq - xp * dd) / den
    return i_d, i_q


def mechanical_torque(omega, p: ImPhysicalParams):
    return (p.a * omega ** 2 + p.b * omega + p.c) * p.t0


def im_derivatives(state: ImState, inp: ImInput, p: ImPhysicalParams):
    """Right-hand side (dE'd/dt, dE'q/dt, domega/dt) of the third-order motor model."""
    ed, eq, omega = state
    i_d, i_q = im_stator_currents(state, inp, p)
    t_open = p.t_open
    dx = p.x_sync - p.x_transient
    ded = -(ed + dx * i_q) / t_open - (omega - 1.0) * eq
    deq = -(eq - dx * i_d) / t_open + (omega - 1.0) * ed
    t_e = ed * i_d + eq * i_q
    domega = -(mechanical_torque(omega, p) - t_e) / (2.0 * p.h)
    return ded, deq, domega


@dataclass(frozen=True)
class ZipSeries:
    """Normalized ZIP measurements: x = V/V0, y = P/P0."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("x and y must be 1-d arrays of equal length")
        if x.size < 1:
            raise ValueError("a ZipSeries needs at least one sample")
        if np.any(~(x > 0)):
            raise ValueError("normalized voltages must be positive")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.x.size)


def build_zip_series(v, p, v0: float, p0: float) -> ZipSeries:
    v = np.asarray(v, dtype=float)
    p = np.asarray(p, dtype=float)
    if v.shape != p.shape:
        raise ValueError(f"length mismatch: {v.shape} vs {p.shape}")
    if v.size == 0:
        raise ValueError("empty measurement arrays")
    if not v0 > 0:
        raise ValueError("v0 must be positive")
    if p0 == 0:
        raise ValueError("p0 must be nonzero")
    return ZipSeries(v / v0, p / p0)


IM_FIELDS = ("ed", "eq", "id", "iq", "ud", "uq", "omega",
             "y_ed", "y_eq", "y_omega", "y_id", "y_iq")


@dataclass
class ImRegressionData:
    """Per-sample arrays feeding the IM regression equations.

    ``y_ed`` pairs with dE'd/dt and ``y_eq`` with dE'q/dt. ``t0`` is the
    mechanical torque base used in the speed equation.
    """

    ed: np.ndarray
    eq: np.ndarray
    id: np.ndarray
    iq: np.ndarray
    ud: np.ndarray
    uq: np.ndarray
    omega: np.ndarray
    y_ed: np.ndarray
    y_eq: np.ndarray
    y_omega: np.ndarray
    y_id: np.ndarray
    y_iq: np.ndarray
    t0: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = None
        for name in IM_FIELDS:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 1:
                raise ValueError(f"{name} must be 1-d")
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise ValueError(f"{name} has length {arr.size}, expected {n}")
            setattr(self, name, arr)
        if not n:
            raise ValueError("ImRegressionData needs at least one sample")

    @property
    def n(self) -> int:
        return int(self.ed.size)

    @property
    def torque_gap(self) -> np.ndarray:
        """omega^2 T0 - (E'd Id + E'q Iq), the multiplier of beta3."""
        return self.omega ** 2 * self.t0 - (self.ed * self.id + self.eq * self.iq)

    def residuals(self, coef: ImCoefficients):
        """Residuals of the five regression equations at ``coef``.

        Returns (flux residuals of both axes concatenated, speed residuals,
        current residuals of both axes concatenated).
        """
        slip = self.omega - 1.0
        r_ed = self.y_ed - (coef.beta1 * self.ed + coef.beta2 * self.iq - slip * self.eq)
        r_eq = self.y_eq - (coef.beta1 * self.eq - coef.beta2 * self.id + slip * self.ed)
        r_w = self.y_omega - coef.beta3 * self.torque_gap
        dd = self.ud - self.ed
        dq = self.uq - self.eq
        r_id = self.y_id - (coef.alpha_b * dd + coef.alpha_c * dq)
        r_iq = self.y_iq - (coef.alpha_b * dq - coef.alpha_c * dd)
        return np.concatenate([r_ed, r_eq]), r_w, np.concatenate([r_id, r_iq])


def build_im_regression(states, inputs, p: ImPhysicalParams, dt: float,
                        derivative_mode: Literal["recorded", "finite_difference"] = "recorded"
                        ) -> ImRegressionData:
    """Turn a sampled trajectory into regression targets.

    ``states`` is an (n, 3) array of (E'd, E'q, omega) and ``inputs`` an
    (n, 2) array of (Ud, Uq), sampled every ``dt``. In ``recorded`` mode the
    derivative targets come from the model right-hand side at each sample; in
    ``finite_difference`` mode from central differences (one-sided, second
    order, at the ends).
    """
    states = np.asarray(states, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    if states.ndim != 2 or states.shape[1] != 3:
        raise ValueError("states must have shape (n, 3)")
    if inputs.shape != (states.shape[0], 2):
        raise ValueError("inputs must have shape (n, 2) matching states")
    n = states.shape[0]
    ed, eq, omega = states.T
    ud, uq = inputs.T
    st = ImState(ed, eq, omega)
    inp = ImInput(ud, uq)
    i_d, i_q = im_stator_currents(st, inp, p)
    if derivative_mode == "recorded":
        if n < 1:
            raise ValueError("empty trajectory")
        y_ed, y_eq, y_w = im_derivatives(st, inp, p)
    elif derivative_mode == "finite_difference":
        if n < 3:
            raise ValueError("finite differences need at least 3 samples")
        if not dt > 0:
            raise ValueError("dt must be positive")
        y_ed, y_eq, y_w = np.gradient(states, dt, axis=0, edge_order=2).T
    else:
        raise ValueError(f"unknown derivative_mode {derivative_mode!r}")
    return ImRegressionData(ed, eq, i_d, i_q, ud, uq, omega,
                            np.array(y_ed, dtype=float), np.array(y_eq, dtype=float),
                            np.array(y_w, dtype=float), i_d, i_q, t0=p.t0,
                            meta={"derivative_mode": derivative_mode, "dt": dt})


def rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + h / 2, y + h / 2 * k1)
    k3 = f(t + h / 2, y + h / 2 * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


class IntegrationError(RuntimeError):
    pass


def simulate_im(p: ImPhysicalParams, x0, voltage, t_end: float, dt: float,
                max_halvings: int = 6):
    """Integrate the motor model with fixed-step RK4.

    ``voltage(t)`` returns (Ud, Uq). The output is sampled every ``dt``; if a
    step produces non-finite states or omega <= 0 the internal step is halved
    up to ``max_halvings`` times before giving up with IntegrationError.

    Returns (times, states) with states of shape (n, 3).
    """
    n_steps = int(round(t_end / dt))
    if n_steps < 1:
        raise ValueError("t_end must cover at least one step")

    def rhs(t, y):
        ud, uq = voltage(t)
        return np.array(im_derivatives(ImState(*y), ImInput(ud, uq), p))

    times = dt * np.arange(n_steps + 1)
    out = np.empty((n_steps + 1, 3))
    y = np.asarray(x0, dtype=float)
    out[0] = y
    for k in range(n_steps):
        for halving in range(max_halvings + 1):
            sub = 2 ** halving
            h = dt / sub
            y_try = y
            for j in range(sub):
                y_try = rk4_step(rhs, times[k] + j * h, y_try, h)
            if np.all(np.isfinite(y_try)) and y_try[2] > 0:
                break
        else:
            raise IntegrationError(f"integration unstable at t={times[k]:.6g}")
        y = y_try
        out[k + 1] = y
    return times, out


def im_equilibrium(p: ImPhysicalParams, ud: float, uq: float, guess=(0.0, 0.9, 0.98)):
    """Steady state of the motor under constant bus voltage (root of the RHS)."""
    from scipy.optimize import fsolve

    def f(y):
        return im_derivatives(ImState(*y), ImInput(ud, uq), p)

    sol, info, ier, msg = fsolve(f, np.asarray(guess, dtype=float), full_output=True, xtol=1e-13)
    if ier != 1:
        raise RuntimeError(f"equilibrium search failed: {msg}")
    return ImState(*sol)
