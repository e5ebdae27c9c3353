"""Chain summaries, diagnostics and the generate -> fit -> replay pipeline."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import dataio
from .datagen import REFERENCE_COEFFICIENTS, im_trajectory_regression, synthetic_im_regression, synthetic_zip_series
from .feeder import ScenarioConfig, load_feeder_table, replay_compare, run_zip_scenario
from .model_core import ImCoefficients, ImRegressionData, ZipParams, ZipSeries, zip_power
from .samplers import (ZIP_TERMS, Chain, GammaPrior, NormalPrior, gibbs_im, gibbs_zip2,
                       gibbs_zip3, mh_single_param)

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1


# --------------------------------------------------------------------------
# Summaries and diagnostics


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Normalized autocorrelation of a 1-d series (FFT based)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n]
    if acov[0] <= 0:
        return np.concatenate([[1.0], np.zeros(n - 1)])
    return acov / acov[0]


def effective_sample_size(x: np.ndarray) -> float:
    """ESS with the autocorrelation sum truncated at the first negative pair."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or np.ptp(x) == 0:
        return float(n)
    rho = autocorrelation(x)
    total = 0.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair < 0:
            break
        total += pair
    tau_int = 2.0 * total - 1.0
    return float(n / max(tau_int, 1.0 / n))


def mcse(x: np.ndarray) -> float:
    """Monte-Carlo standard error of the mean."""
    x = np.asarray(x, dtype=float)
    return float(np.std(x, ddof=1) / np.sqrt(effective_sample_size(x))) if x.size > 1 else float("inf")


@dataclass(frozen=True)
class ParamSummary:
    mean: float
    std: float
    median: float
    q05: float
    q95: float
    ess: float

    @property
    def interval(self) -> tuple[float, float]:
        return (self.q05, self.q95)


@dataclass
class PosteriorSummary:
    params: dict  # name -> ParamSummary

    def __getitem__(self, name) -> ParamSummary:
        return self.params[name]

    def means(self) -> dict:
        return {k: v.mean for k, v in self.params.items()}

    def to_dict(self) -> dict:
        return {k: asdict(v) for k, v in self.params.items()}


def summarize(chain: Chain) -> PosteriorSummary:
    if chain.n_kept == 0:
        raise ValueError("cannot summarize an empty chain")
    out = {}
    for j, name in enumerate(chain.names):
        d = chain.draws[:, j]
        q05, med, q95 = np.quantile(d, [0.05, 0.5, 0.95])
        out[name] = ParamSummary(float(np.mean(d)), float(np.std(d)), float(med),
                                 float(q05), float(q95), effective_sample_size(d))
    return PosteriorSummary(out)


def split_rhat(draws: np.ndarray) -> float:
    """Split-chain potential scale reduction for an (m chains, n draws) array."""
    draws = np.asarray(draws, dtype=float)
    m, n = draws.shape
    half = n // 2
    if half < 2:
        raise ValueError("chains too short for split R-hat")
    parts = np.vstack([draws[:, :half], draws[:, n - half:]])
    means = parts.mean(axis=1)
    w = parts.var(axis=1, ddof=1).mean()
    b = half * means.var(ddof=1)
    if w == 0:
        return 1.0 if b == 0 else float("inf")
    var_plus = (half - 1) / half * w + b / half
    return float(np.sqrt(var_plus / w))


@dataclass
class ConvergenceResult:
    passed: bool
    rhat: dict
    threshold: float


def convergence_check(chains, threshold: float = 1.05) -> ConvergenceResult:
    chains = list(chains)
    if len(chains) < 2:
        raise ValueError("convergence_check needs at least two chains")
    first = chains[0]
    for c in chains[1:]:
        if c.names != first.names or c.draws.shape != first.draws.shape:
            raise ValueError("chains must share parameter names and shape")
    stacked = np.stack([c.draws for c in chains])  # (m, n, k)
    rhat = {name: split_rhat(stacked[:, :, j]) for j, name in enumerate(first.names)}
    return ConvergenceResult(all(v < threshold for v in rhat.values()), rhat, threshold)


# --------------------------------------------------------------------------
# Objective


def fit_objective(params: ZipParams, v, p=None, q=None) -> float:
    """Mean over samples of (P_meas - P_model)^2 + (Q_meas - Q_model)^2.

    Either series may be omitted; at least one is required.
    """
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValueError("empty measurement series")
    if p is None and q is None:
        raise ValueError("need P and/or Q measurements")
    total = np.zeros(v.size)
    if p is not None:
        total += (np.asarray(p, dtype=float) - zip_power(params, v, "active")) ** 2
    if q is not None:
        total += (np.asarray(q, dtype=float) - zip_power(params, v, "reactive")) ** 2
    return float(total.mean())


def im_fit_objective(data: ImRegressionData, coef: ImCoefficients) -> float:
    """Mean squared residual over the five motor regression equations."""
    r = np.concatenate(data.residuals(coef))
    return float(np.mean(r * r))


# --------------------------------------------------------------------------
# Experiments

ZIP_MODELS = ("zip1-mh", "zip2", "zip3")
MODELS = ZIP_MODELS + ("im",)
KINDS = ("zip-synthetic", "feeder", "im-regression", "im-trajectory")


class ExperimentError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class ExperimentSpec:
    kind: str = "zip-synthetic"
    model: str = "zip2"
    seed: int = 2024
    n_iter: int = 10000
    burn_in: int = 2000
    thinning: int = 1
    n_chains: int = 1
    init: str = "prior"
    normalize: bool = False
    priors: dict = field(default_factory=dict)  # name -> [mu, tau] or [alpha, beta]
    # zip-synthetic
    active: tuple = (3.0, -5.0, 3.0)
    tau: float = 0.2
    n_points: int = 1000
    # feeder
    law: str = "uniform:0.01,4.5"
    n_runs: int = 1000
    measured_bus: int = 17
    true_coefficients: tuple = (0.25, 0.25, 0.5)
    rating_kw: float = 100.0
    rating_kvar: float = 60.0
    replay: bool = True
    compare_with: list = field(default_factory=list)  # extra triples replayed against the truth
    # motor
    noise: float = 0.01
    im_coefficients: tuple = tuple(float(v) for v in REFERENCE_COEFFICIENTS.as_array())
    # single-term MH
    term: str = "current"
    mh_step: float = 0.5
    mh_proposal: str = "random_walk"
    threads: int = 1

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ExperimentError("validate", f"unknown kind {self.kind!r}")
        if self.model not in MODELS:
            raise ExperimentError("validate", f"unknown model {self.model!r}")
        if self.kind.startswith("im") != (self.model == "im"):
            raise ExperimentError("validate", f"model {self.model} does not fit data kind {self.kind}")
        if self.n_runs < 1:
            raise ExperimentError("validate", "n_runs must be at least 1")
        if self.n_points < 1:
            raise ExperimentError("validate", "n_points must be at least 1")
        if self.n_chains < 1:
            raise ExperimentError("validate", "n_chains must be at least 1")
        if not 0 <= self.burn_in < self.n_iter or self.thinning < 1:
            raise ExperimentError("validate", "need 0 <= burn_in < n_iter and thinning >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ExperimentError("validate", f"unknown descriptor keys {sorted(unknown)}")
        spec = cls(**d)
        for name in ("active", "true_coefficients", "im_coefficients"):
            setattr(spec, name, tuple(float(v) for v in getattr(spec, name)))
        spec.compare_with = [tuple(float(v) for v in t) for t in spec.compare_with]
        return spec

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        d["compare_with"] = [list(t) for t in self.compare_with]
        return d

    def scenario(self) -> ScenarioConfig:
        return ScenarioConfig(self.law, n_runs=self.n_runs, measured_bus=self.measured_bus,
                              zip_coefficients=tuple(self.true_coefficients), rating_kw=self.rating_kw,
                              rating_kvar=self.rating_kvar, seed=self.seed, threads=self.threads)


def build_priors(model: str, overrides: dict | None = None):
    """Default priors for a model with per-name overrides."""
    overrides = overrides or {}
    if model == "zip2":
        names, kinds = ("alpha1", "alpha2", "tau"), "NNG"
    elif model == "zip3":
        names, kinds = ("alpha1", "alpha2", "alpha3", "tau"), "NNNG"
    elif model == "im":
        names, kinds = ("beta1", "beta2", "beta3", "alpha_b", "alpha_c", "tau_E", "tau_omega", "tau_I"), "NNNNNGGG"
    elif model == "zip1-mh":
        names, kinds = ("coef",), "N"
    else:
        raise ValueError(f"unknown model {model!r}")
    bad = set(overrides) - set(names)
    if bad:
        raise ValueError(f"unknown prior names for {model}: {sorted(bad)}")
    out = []
    for name, kind in zip(names, kinds):
        args = overrides.get(name)
        cls = NormalPrior if kind == "N" else GammaPrior
        out.append(cls(*map(float, args)) if args is not None else cls())
    return tuple(out)


def fit_model(model: str, data, *, n_iter=10000, burn_in=2000, thinning=1, seed=0, n_chains=1,
              init="prior", normalize=False, priors=None, term="current", mh_step=0.5,
              mh_proposal="random_walk") -> list[Chain]:
    """Run ``n_chains`` chains of the chosen sampler with seeds seed, seed+1, ..."""
    pri = build_priors(model, priors)
    chains = []
    for k in range(n_chains):
        s = seed + k
        if model == "zip1-mh":
            c = mh_single_param(data, term, pri[0], n_iter, s, step=mh_step, proposal=mh_proposal,
                                burn_in=burn_in, thinning=thinning, init=_mh_init(init, data, term))
        elif model == "zip2":
            c = gibbs_zip2(data, pri, n_iter, burn_in, thinning, s, init=init)
        elif model == "zip3":
            c = gibbs_zip3(data, pri, n_iter, burn_in, thinning, s, normalize=normalize, init=init)
        elif model == "im":
            c = gibbs_im(data, pri, n_iter, burn_in, thinning, s, init=init)
        else:
            raise ValueError(f"unknown model {model!r}")
        chains.append(c)
    return chains


def _mh_init(init, data: ZipSeries, term: str):
    if init == "prior":
        return "prior"
    if init == "zeros":
        return 0.0
    if init == "lsq":
        f = data.x ** ZIP_TERMS[term]
        return float(f @ data.y / (f @ f))
    return float(init)


def point_estimate(model: str, summary: PosteriorSummary, normalize: bool = True):
    """Active ZIP triple implied by posterior means (normalized for zip3 when asked)."""
    m = summary.means()
    if model == "zip2":
        return (m["alpha1"], m["alpha2"], 1.0 - m["alpha1"] - m["alpha2"])
    if model == "zip3":
        if normalize:
            return (m["alpha1"], m["alpha2"], 1.0 - m["alpha1"] - m["alpha2"])
        return (m["alpha1"], m["alpha2"], m["alpha3"])
    raise ValueError(f"no ZIP triple for model {model}")


@dataclass
class FitReport:
    model: str
    summary: PosteriorSummary
    objective: float
    config: dict
    seed: int
    n_kept: int
    warnings: list = field(default_factory=list)
    acceptance_rate: float | None = None
    replay: dict | None = None
    convergence: dict | None = None
    estimate: list | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "model": self.model,
            "seed": self.seed,
            "n_kept": self.n_kept,
            "estimate": self.estimate,
            "objective": self.objective,
            "acceptance_rate": self.acceptance_rate,
            "summary": self.summary.to_dict(),
            "replay": self.replay,
            "convergence": self.convergence,
            "warnings": list(self.warnings),
            "config": self.config,
        }

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8", newline="\n")


def read_report(path) -> dict:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if d.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema {d.get('schema_version')}")
    return d


def make_report(model: str, chains: list[Chain], data, config: dict, seed: int,
                normalize: bool = False, replay: dict | None = None) -> FitReport:
    chain = chains[0]
    summ = summarize(chain)
    warnings = list(chain.warnings)
    estimate = None
    if model in ("zip2", "zip3"):
        estimate = list(point_estimate(model, summ, normalize=normalize))
        raw = (summ.means()["alpha1"], summ.means()["alpha2"],
               summ.means()["alpha3"] if model == "zip3" else estimate[2])
        obj = fit_objective(ZipParams.from_triple(raw), data.x, data.y)
    elif model == "zip1-mh":
        c = summ.means()[chain.names[0]]
        k = ZIP_TERMS[config.get("term", "current")]
        coefs = [0.0, 0.0, 0.0]
        coefs[2 - k] = c
        estimate = coefs
        obj = fit_objective(ZipParams.from_triple(coefs), data.x, data.y)
    else:
        m = summ.means()
        coef = ImCoefficients(*(m[n] for n in ImCoefficients.NAMES))
        estimate = [m[n] for n in ImCoefficients.NAMES]
        obj = im_fit_objective(data, coef)
    convergence = None
    if len(chains) > 1:
        cc = convergence_check(chains)
        convergence = {"passed": cc.passed, "threshold": cc.threshold, "rhat": cc.rhat}
        if not cc.passed:
            warnings.append("convergence check failed (split R-hat above threshold)")
    return FitReport(model, summ, obj, config, seed, chain.n_kept, warnings,
                     chain.acceptance_rate, replay, convergence, estimate)


def run_experiment(spec: ExperimentSpec, out_dir=None) -> FitReport:
    """Generate data, fit, summarize and (for feeder data) replay.

    When ``out_dir`` is given the dataset, sample dump, replay table and
    report are written there. Data use ``spec.seed``; chain k uses
    ``spec.seed + 1 + k``.
    """
    spec.validate()
    out = dataio.ensure_dir(out_dir) if out_dir is not None else None

    try:
        scenario = None
        if spec.kind == "zip-synthetic":
            data = synthetic_zip_series(spec.active, spec.tau, spec.n_points, spec.seed)
        elif spec.kind == "feeder":
            topo = load_feeder_table()
            scenario = spec.scenario()
            result = run_zip_scenario(topo, scenario)
            if result.series is None:
                raise ExperimentError("generate", "every power-flow run failed")
            data = result.series
            if out is not None:
                dataio.write_scenario_log(result, out / "scenario_log.csv")
        elif spec.kind == "im-regression":
            data = synthetic_im_regression(ImCoefficients(*spec.im_coefficients), spec.noise,
                                           spec.n_points, spec.seed)
        else:
            _, _, _, data = im_trajectory_regression(noise=spec.noise, seed=spec.seed)
    except ExperimentError:
        raise
    except Exception as exc:
        raise ExperimentError("generate", str(exc)) from exc
    if out is not None:
        if isinstance(data, ZipSeries):
            dataio.write_zip_series(data, out / "data.csv")
        else:
            dataio.write_im_regression(data, out / "data.csv")

    try:
        chains = fit_model(spec.model, data, n_iter=spec.n_iter, burn_in=spec.burn_in,
                           thinning=spec.thinning, seed=spec.seed + 1, n_chains=spec.n_chains,
                           init=spec.init, normalize=spec.normalize, priors=spec.priors,
                           term=spec.term, mh_step=spec.mh_step, mh_proposal=spec.mh_proposal)
    except Exception as exc:
        raise ExperimentError("fit", str(exc)) from exc

    report = make_report(spec.model, chains, data, spec.to_dict(), spec.seed,
                         normalize=spec.normalize or spec.model == "zip3")

    if spec.kind == "feeder" and spec.replay and spec.model in ("zip2", "zip3"):
        try:
            topo = load_feeder_table()
            truth = tuple(spec.true_coefficients)
            rep = replay_compare(topo, scenario, truth, tuple(report.estimate))
            replay = {"estimated": rep.summary(), "compare_with": []}
            if out is not None:
                dataio.write_replay(rep, out / "replay.csv")
            for k, triple in enumerate(spec.compare_with):
                other = replay_compare(topo, scenario, truth, tuple(triple))
                replay["compare_with"].append({"coefficients": list(triple), **other.summary()})
                if out is not None:
                    dataio.write_replay(other, out / f"replay_compare_{k + 1}.csv")
            report.replay = replay
        except Exception as exc:
            raise ExperimentError("replay", str(exc)) from exc

    if out is not None:
        dataio.write_samples(chains[0], out / "samples.csv")
        report.write(out / "report.json")
    return report
