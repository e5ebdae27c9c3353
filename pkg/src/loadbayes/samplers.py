"""Metropolis-Hastings and Gibbs samplers for ZIP and induction-motor loads.

Every Gibbs conditional goes through two kernels: a normal coefficient update
for residual equations that are linear in one coefficient, and a gamma update
for a noise precision. The model-specific samplers only decide which arrays
play the role of feature, offset and target.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .model_core import ImRegressionData, ZipSeries

log = logging.getLogger(__name__)


class SamplerError(RuntimeError):
    pass


def rng_stream(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator.

    Normal draws use numpy's ziggurat, gamma draws Marsaglia-Tsang, uniforms
    the 53-bit double conversion; all are platform independent for a fixed
    numpy major version.
    """
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True)
class NormalPrior:
    mu: float = 0.0
    tau: float = 1e-4

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"prior precision must be positive, got {self.tau}")

    def logpdf(self, x):
        return 0.5 * math.log(self.tau / (2 * math.pi)) - 0.5 * self.tau * (np.asarray(x) - self.mu) ** 2

    def sample(self, rng):
        return float(rng.normal(self.mu, 1.0 / math.sqrt(self.tau)))


@dataclass(frozen=True)
class GammaPrior:
    """Gamma prior in shape/rate form."""

    alpha: float = 0.01
    beta: float = 0.01

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("gamma shape and rate must be positive")


@dataclass
class CoefficientView:
    """Residual equations y_t = c * f_t + g_t + noise, linear in one coefficient c."""

    features: np.ndarray
    offsets: np.ndarray
    targets: np.ndarray
    precision: float

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.offsets = np.asarray(self.offsets, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if not (self.features.shape == self.offsets.shape == self.targets.shape):
            raise ValueError("features, offsets and targets must have equal length")
        if not self.precision > 0:
            raise ValueError("noise precision must be positive")


class NormalDraw(NamedTuple):
    value: float
    mu: float
    tau: float


class GammaDraw(NamedTuple):
    value: float
    alpha: float
    beta: float


def normal_posterior(prior: NormalPrior, view: CoefficientView) -> tuple[float, float]:
    f = view.features
    sff = float(f @ f)
    sfr = float(f @ (view.targets - view.offsets))
    tau_post = prior.tau + view.precision * sff
    mu_post = (prior.tau * prior.mu + view.precision * sfr) / tau_post
    if not (math.isfinite(tau_post) and math.isfinite(mu_post)):
        raise SamplerError("non-finite posterior moments in coefficient update")
    return mu_post, tau_post


def conjugate_normal_update(prior: NormalPrior, view: CoefficientView, rng) -> NormalDraw:
    """Draw a coefficient from its normal full conditional."""
    mu_post, tau_post = normal_posterior(prior, view)
    return NormalDraw(float(rng.normal(mu_post, 1.0 / math.sqrt(tau_post))), mu_post, tau_post)


def gamma_posterior(prior: GammaPrior, residuals) -> tuple[float, float]:
    r = np.asarray(residuals, dtype=float)
    if not np.all(np.isfinite(r)):
        raise SamplerError("non-finite residuals in precision update")
    return prior.alpha + 0.5 * r.size, prior.beta + 0.5 * float(r @ r)


def gamma_precision_update(prior: GammaPrior, residuals, rng) -> GammaDraw:
    """Draw a noise precision from its gamma full conditional (shape/rate)."""
    a, b = gamma_posterior(prior, residuals)
    value = float(rng.gamma(a, 1.0 / b))
    # Gamma(a<<1) can underflow to 0; keep the precision strictly positive.
    value = max(value, np.finfo(float).tiny)
    return GammaDraw(value, a, b)


@dataclass
class Chain:
    names: tuple
    draws: np.ndarray
    n_iter: int
    burn_in: int = 0
    thinning: int = 1
    seed: int | None = None
    acceptance_rate: float | None = None
    derived: tuple = ()
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.names = tuple(self.names)
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim != 2 or self.draws.shape[1] != len(self.names):
            raise ValueError("draws must be (n_kept, n_params)")

    @property
    def n_kept(self) -> int:
        return int(self.draws.shape[0])

    def __getitem__(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]

    def means(self) -> dict:
        return {n: float(m) for n, m in zip(self.names, self.draws.mean(axis=0))}


def _kept_indices(n_iter: int, burn_in: int, thinning: int) -> int:
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    if not 0 <= burn_in < n_iter:
        raise ValueError("burn_in must lie in [0, n_iter)")
    if thinning < 1:
        raise ValueError("thinning must be at least 1")
    return (n_iter - burn_in) // thinning


def _keep(i: int, burn_in: int, thinning: int, n_keep: int) -> int:
    """Slot for iteration ``i`` in the kept array, or -1."""
    k, rem = divmod(i - burn_in, thinning)
    if i < burn_in or rem or k >= n_keep:
        return -1
    return k


# --------------------------------------------------------------------------
# Metropolis-Hastings


def metropolis_hastings(log_target: Callable[[float], float], init: float, n_iter: int,
                        rng, *, step: float = 0.5, proposal: str = "random_walk",
                        proposal_mean: float = 1.0, proposal_std: float = 1.0,
                        burn_in: int = 0, thinning: int = 1):
    """Scalar MH chain.

    ``random_walk`` proposes N(current, step^2); ``independent`` proposes
    N(proposal_mean, proposal_std^2) and includes the proposal-density
    correction. A candidate is accepted when log u < log r for u ~ U[0, 1],
    which accepts every candidate with log r > 0.

    Returns (kept draws, acceptance rate).
    """
    n_keep = _kept_indices(n_iter, burn_in, thinning)
    if proposal not in ("random_walk", "independent"):
        raise ValueError(f"unknown proposal {proposal!r}")
    current = float(init)
    lp_current = log_target(current)
    z = rng.standard_normal(n_iter)
    u = rng.random(n_iter)
    log_u = np.log(u, out=np.full(n_iter, -np.inf), where=u > 0)
    trace = np.empty(n_iter)
    accepted = 0

    if proposal == "random_walk":
        steps = (step * z).tolist()
        for i, lu in enumerate(log_u.tolist()):
            cand = current + steps[i]
            lp_cand = log_target(cand)
            if lp_cand - lp_current > lu:
                current, lp_current = cand, lp_cand
                accepted += 1
            trace[i] = current
    else:
        cands = proposal_mean + proposal_std * z
        log_q = (-0.5 * ((cands - proposal_mean) / proposal_std) ** 2).tolist()
        lq_current = -0.5 * ((current - proposal_mean) / proposal_std) ** 2
        for i, (cand, lq, lu) in enumerate(zip(cands.tolist(), log_q, log_u.tolist())):
            lp_cand = log_target(cand)
            # Hastings correction for a proposal that ignores the current state
            if lp_cand - lp_current + lq_current - lq > lu:
                current, lp_current, lq_current = cand, lp_cand, lq
                accepted += 1
            trace[i] = current
    out = trace[burn_in::thinning][:n_keep].copy()
    return out, accepted / n_iter


ZIP_TERMS = {"impedance": 2, "current": 1, "power": 0}


def ols_noise_precision(f: np.ndarray, y: np.ndarray) -> float:
    """Plug-in noise precision from a one-coefficient least-squares fit."""
    sff = float(f @ f)
    c = float(f @ y) / sff if sff > 0 else 0.0
    r = y - c * f
    dof = max(y.size - 1, 1)
    var = float(r @ r) / dof
    return 1.0 / max(var, 1e-300)


def single_term_log_posterior(data: ZipSeries, term: str, prior: NormalPrior, noise_precision: float):
    """log prior + Gaussian log likelihood for y = c * x^k, as a function of c."""
    f = data.x ** ZIP_TERMS[term]
    sff = float(f @ f)
    sfy = float(f @ data.y)
    syy = float(data.y @ data.y)
    tau = noise_precision

    def log_post(c):
        return -0.5 * prior.tau * (c - prior.mu) ** 2 - 0.5 * tau * (syy - 2.0 * c * sfy + c * c * sff)

    return log_post


def mh_single_param(data: ZipSeries, term: str = "current", prior: NormalPrior | None = None,
                    n_iter: int = 10000, seed: int = 0, *, proposal: str = "random_walk",
                    step: float = 0.5, proposal_mean: float = 1.0, proposal_std: float = 1.0,
                    noise_precision: float | None = None, init: float | str = "prior",
                    burn_in: int = 0, thinning: int = 1) -> Chain:
    """MH for a one-term ZIP load, e.g. P = P0 * alpha2 * V/V0 for ``term='current'``.

    The noise precision is held fixed; when not given it is the plug-in value
    from a least-squares fit of the same term.
    """
    if term not in ZIP_TERMS:
        raise ValueError(f"term must be one of {sorted(ZIP_TERMS)}")
    prior = prior or NormalPrior()
    rng = rng_stream(seed)
    f = data.x ** ZIP_TERMS[term]
    tau = ols_noise_precision(f, data.y) if noise_precision is None else float(noise_precision)
    log_post = single_term_log_posterior(data, term, prior, tau)
    theta0 = prior.sample(rng) if init == "prior" else float(init)
    draws, acc = metropolis_hastings(log_post, theta0, n_iter, rng, step=step, proposal=proposal,
                                     proposal_mean=proposal_mean, proposal_std=proposal_std,
                                     burn_in=burn_in, thinning=thinning)
    name = {"impedance": "alpha1", "current": "alpha2", "power": "alpha3"}[term]
    chain = Chain((name,), draws[:, None], n_iter, burn_in, thinning, seed, acceptance_rate=acc)
    if acc < 0.05 or acc > 0.95:
        chain.warnings.append(f"MH acceptance rate {acc:.3f} outside [0.05, 0.95]; consider another step size")
    return chain


# --------------------------------------------------------------------------
# Gibbs: ZIP


def _init_coefficients(init, priors: Sequence[NormalPrior], rng, lsq=None) -> list[float]:
    """Starting coefficients: ``"prior"`` draws, ``"zeros"``, ``"lsq"`` (the
    least-squares point, via the ``lsq`` callable) or explicit values.
    """
    if init is None or (isinstance(init, str) and init == "prior"):
        return [p.sample(rng) for p in priors]
    if isinstance(init, str) and init == "zeros":
        return [0.0] * len(priors)
    if isinstance(init, str) and init == "lsq":
        if lsq is None:
            raise ValueError("least-squares start not available for this sampler")
        return [float(v) for v in lsq()]
    if isinstance(init, str):
        raise ValueError(f"unknown init {init!r}")
    vals = [float(v) for v in init]
    if len(vals) != len(priors):
        raise ValueError(f"init needs {len(priors)} values")
    return vals


def zip2_views(data: ZipSeries, a1: float, a2: float, tau: float):
    """Coefficient views for alpha1 and alpha2 when alpha3 = 1 - alpha1 - alpha2."""
    x, y = data.x, data.y
    v1 = CoefficientView(x * x - 1.0, a2 * x + 1.0 - a2, y, tau)
    v2 = CoefficientView(x - 1.0, a1 * x * x + 1.0 - a1, y, tau)
    return v1, v2


def zip3_views(data: ZipSeries, a1: float, a2: float, a3: float, tau: float):
    x, y = data.x, data.y
    x2 = x * x
    return (CoefficientView(x2, a2 * x + a3, y, tau),
            CoefficientView(x, a1 * x2 + a3, y, tau),
            CoefficientView(np.ones_like(x), a1 * x2 + a2 * x, y, tau))


def _lstsq(columns, target) -> np.ndarray:
    return np.linalg.lstsq(np.column_stack(columns), target, rcond=None)[0]


def _zip_identifiability(data: ZipSeries) -> list[str]:
    if np.ptp(data.x) == 0:
        return ["non-identifiable: all normalized voltages identical"]
    return []


def gibbs_zip2(data: ZipSeries, priors=None, n_iter: int = 10000, burn_in: int = 2000,
               thinning: int = 1, seed: int = 0, init=None) -> Chain:
    """Gibbs sampler for (alpha1, alpha2, tau) with alpha3 = 1 - alpha1 - alpha2.

    ``priors`` is (NormalPrior, NormalPrior, GammaPrior). The returned chain
    carries alpha3 as a derived column.
    """
    if data.n < 3:
        raise ValueError("gibbs_zip2 needs at least 3 samples")
    p1, p2, pg = priors if priors is not None else (NormalPrior(), NormalPrior(), GammaPrior())
    n_keep = _kept_indices(n_iter, burn_in, thinning)
    rng = rng_stream(seed)
    x, y = data.x, data.y
    x2m1, xm1 = x * x - 1.0, x - 1.0
    a1, a2 = _init_coefficients(init, (p1, p2), rng,
                                lambda: _lstsq((x2m1, xm1), y - 1.0))

    def resid(a1, a2):
        return y - (a1 * x2m1 + a2 * xm1 + 1.0)

    tau = gamma_precision_update(pg, resid(a1, a2), rng).value
    out = np.empty((n_keep, 4))
    for i in range(n_iter):
        a1 = conjugate_normal_update(p1, CoefficientView(x2m1, a2 * x + 1.0 - a2, y, tau), rng).value
        a2 = conjugate_normal_update(p2, CoefficientView(xm1, a1 * x * x + 1.0 - a1, y, tau), rng).value
        tau = gamma_precision_update(pg, resid(a1, a2), rng).value
        k = _keep(i, burn_in, thinning, n_keep)
        if k >= 0:
            out[k] = (a1, a2, 1.0 - a1 - a2, tau)
    chain = Chain(("alpha1", "alpha2", "alpha3", "tau"), out, n_iter, burn_in, thinning, seed,
                  derived=("alpha3",))
    chain.warnings.extend(_zip_identifiability(data))
    return chain


def gibbs_zip3(data: ZipSeries, priors=None, n_iter: int = 10000, burn_in: int = 2000,
               thinning: int = 1, seed: int = 0, normalize: bool = False, init=None) -> Chain:
    """Gibbs sampler for unconstrained (alpha1, alpha2, alpha3, tau).

    With ``normalize`` a derived column ``alpha3_normalized = 1 - alpha1 -
    alpha2`` is appended; the raw alpha3 draws are kept.
    """
    if data.n < 4:
        raise ValueError("gibbs_zip3 needs at least 4 samples")
    p1, p2, p3, pg = priors if priors is not None else (NormalPrior(), NormalPrior(), NormalPrior(), GammaPrior())
    n_keep = _kept_indices(n_iter, burn_in, thinning)
    rng = rng_stream(seed)
    x, y = data.x, data.y
    x2 = x * x
    ones = np.ones_like(x)
    a1, a2, a3 = _init_coefficients(init, (p1, p2, p3), rng, lambda: _lstsq((x2, x, ones), y))
    tau = gamma_precision_update(pg, y - (a1 * x2 + a2 * x + a3), rng).value
    out = np.empty((n_keep, 4))
    for i in range(n_iter):
        a1 = conjugate_normal_update(p1, CoefficientView(x2, a2 * x + a3, y, tau), rng).value
        a2 = conjugate_normal_update(p2, CoefficientView(x, a1 * x2 + a3, y, tau), rng).value
        a3 = conjugate_normal_update(p3, CoefficientView(ones, a1 * x2 + a2 * x, y, tau), rng).value
        tau = gamma_precision_update(pg, y - (a1 * x2 + a2 * x + a3), rng).value
        k = _keep(i, burn_in, thinning, n_keep)
        if k >= 0:
            out[k] = (a1, a2, a3, tau)
    names = ("alpha1", "alpha2", "alpha3", "tau")
    derived = ()
    if normalize:
        out = np.column_stack([out, 1.0 - out[:, 0] - out[:, 1]])
        names += ("alpha3_normalized",)
        derived = ("alpha3_normalized",)
    chain = Chain(names, out, n_iter, burn_in, thinning, seed, derived=derived)
    chain.warnings.extend(_zip_identifiability(data))
    return chain


# --------------------------------------------------------------------------
# Gibbs: induction motor

IM_NAMES = ("beta1", "beta2", "beta3", "alpha_b", "alpha_c", "tau_E", "tau_omega", "tau_I")


class ImViews:
    """Feature/offset/target arrays for the five IM coefficients.

    Flux equations stack the d-axis and q-axis residuals; current equations
    stack the Id and Iq residuals. Offsets are linear in the other
    coefficients so they are assembled from precomputed pieces.
    """

    def __init__(self, data: ImRegressionData):
        d = data
        slip = d.omega - 1.0
        self.y_flux = np.concatenate([d.y_ed, d.y_eq])
        self.f_beta1 = np.concatenate([d.ed, d.eq])
        self.f_beta2 = np.concatenate([d.iq, -d.id])
        self.known_flux = np.concatenate([-slip * d.eq, slip * d.ed])
        self.y_omega = d.y_omega
        self.f_beta3 = d.torque_gap
        a = d.ud - d.ed
        b = d.uq - d.eq
        self.y_cur = np.concatenate([d.y_id, d.y_iq])
        self.f_alpha_b = np.concatenate([a, b])
        self.f_alpha_c = np.concatenate([b, -a])
        self._zeros_w = np.zeros_like(d.y_omega)

    def beta1(self, beta2, tau_e):
        return CoefficientView(self.f_beta1, beta2 * self.f_beta2 + self.known_flux, self.y_flux, tau_e)

    def beta2(self, beta1, tau_e):
        return CoefficientView(self.f_beta2, beta1 * self.f_beta1 + self.known_flux, self.y_flux, tau_e)

    def beta3(self, tau_w):
        return CoefficientView(self.f_beta3, self._zeros_w, self.y_omega, tau_w)

    def alpha_b(self, alpha_c, tau_i):
        return CoefficientView(self.f_alpha_b, alpha_c * self.f_alpha_c, self.y_cur, tau_i)

    def alpha_c(self, alpha_b, tau_i):
        return CoefficientView(self.f_alpha_c, alpha_b * self.f_alpha_b, self.y_cur, tau_i)

    def flux_residuals(self, beta1, beta2):
        return self.y_flux - (beta1 * self.f_beta1 + beta2 * self.f_beta2 + self.known_flux)

    def speed_residuals(self, beta3):
        return self.y_omega - beta3 * self.f_beta3

    def current_residuals(self, alpha_b, alpha_c):
        return self.y_cur - (alpha_b * self.f_alpha_b + alpha_c * self.f_alpha_c)

    def lsq(self):
        b12 = _lstsq((self.f_beta1, self.f_beta2), self.y_flux - self.known_flux)
        b3 = _lstsq((self.f_beta3,), self.y_omega)
        abc = _lstsq((self.f_alpha_b, self.f_alpha_c), self.y_cur)
        return (*b12, *b3, *abc)

    def rank_warnings(self) -> list[str]:
        out = []
        for label, cols in (("beta1/beta2", (self.f_beta1, self.f_beta2)),
                            ("beta3", (self.f_beta3,)),
                            ("alpha_b/alpha_c", (self.f_alpha_b, self.f_alpha_c))):
            m = np.column_stack(cols)
            if np.linalg.matrix_rank(m) < m.shape[1]:
                out.append(f"non-identifiable: rank-deficient features for {label}")
        return out


def gibbs_im(data: ImRegressionData, priors=None, n_iter: int = 10000, burn_in: int = 2000,
             thinning: int = 1, seed: int = 0, init=None) -> Chain:
    """Gibbs sampler over (beta1, beta2, beta3, alpha_b, alpha_c, tau_E, tau_omega, tau_I).

    ``priors`` is five NormalPriors followed by three GammaPriors.
    """
    if data.n < 6:
        raise ValueError("gibbs_im needs at least 6 samples")
    if priors is None:
        priors = (NormalPrior(),) * 5 + (GammaPrior(),) * 3
    pb1, pb2, pb3, pab, pac, pge, pgw, pgi = priors
    n_keep = _kept_indices(n_iter, burn_in, thinning)
    rng = rng_stream(seed)
    v = ImViews(data)
    b1, b2, b3, ab, ac = _init_coefficients(init, (pb1, pb2, pb3, pab, pac), rng, v.lsq)
    t_e = gamma_precision_update(pge, v.flux_residuals(b1, b2), rng).value
    t_w = gamma_precision_update(pgw, v.speed_residuals(b3), rng).value
    t_i = gamma_precision_update(pgi, v.current_residuals(ab, ac), rng).value
    out = np.empty((n_keep, 8))
    for i in range(n_iter):
        b1 = conjugate_normal_update(pb1, v.beta1(b2, t_e), rng).value
        b2 = conjugate_normal_update(pb2, v.beta2(b1, t_e), rng).value
        b3 = conjugate_normal_update(pb3, v.beta3(t_w), rng).value
        ab = conjugate_normal_update(pab, v.alpha_b(ac, t_i), rng).value
        ac = conjugate_normal_update(pac, v.alpha_c(ab, t_i), rng).value
        t_e = gamma_precision_update(pge, v.flux_residuals(b1, b2), rng).value
        t_w = gamma_precision_update(pgw, v.speed_residuals(b3), rng).value
        t_i = gamma_precision_update(pgi, v.current_residuals(ab, ac), rng).value
        k = _keep(i, burn_in, thinning, n_keep)
        if k >= 0:
            out[k] = (b1, b2, b3, ab, ac, t_e, t_w, t_i)
    chain = Chain(IM_NAMES, out, n_iter, burn_in, thinning, seed)
    chain.warnings.extend(v.rank_warnings())
    return chain
