import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from loadbayes import dataio
from loadbayes.datagen import REFERENCE_COEFFICIENTS, synthetic_im_regression, synthetic_zip_series
from loadbayes.inference import (ExperimentError, ExperimentSpec, build_priors, convergence_check,
                                 effective_sample_size, fit_model, fit_objective, make_report,
                                 read_report, run_experiment, split_rhat, summarize)
from loadbayes.model_core import ZipParams
from loadbayes.samplers import Chain, gibbs_zip2


def chain_of(values, name="theta"):
    values = np.asarray(values, dtype=float)
    return Chain((name,), values[:, None], values.size)


# --- summaries ---------------------------------------------------------------

def test_constant_chain_summary():
    s = summarize(chain_of(np.full(500, 2.5)))["theta"]
    assert s.std == 0.0 and s.mean == 2.5 and s.interval == (2.5, 2.5)


def test_iid_normal_summary():
    s = summarize(chain_of(np.random.default_rng(1).standard_normal(100_000)))["theta"]
    assert abs(s.mean) < 0.02 and abs(s.std - 1) < 0.02
    assert s.ess > 50_000


def test_empty_chain_rejected():
    with pytest.raises(ValueError):
        summarize(Chain(("a",), np.empty((0, 1)), 0))


def test_ess_of_correlated_series_is_smaller():
    rng = np.random.default_rng(2)
    e = rng.standard_normal(20_000)
    ar = np.empty_like(e)
    ar[0] = e[0]
    for t in range(1, e.size):
        ar[t] = 0.9 * ar[t - 1] + e[t]
    ess = effective_sample_size(ar)
    # AR(1) with rho=0.9 has ESS about n (1-rho)/(1+rho)
    assert ess == pytest.approx(20_000 * 0.1 / 1.9, rel=0.3)


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.integers(5, 200), elements=st.floats(-1e3, 1e3)), st.randoms())
def test_summary_is_permutation_invariant(x, rnd):
    perm = list(range(x.size))
    rnd.shuffle(perm)
    a = summarize(chain_of(x))["theta"]
    b = summarize(chain_of(x[perm]))["theta"]
    assert a.mean == pytest.approx(b.mean, rel=1e-12, abs=1e-9)
    assert (a.median, a.q05, a.q95) == (b.median, b.q05, b.q95)
    assert a.std == pytest.approx(b.std, rel=1e-9, abs=1e-9)
    assert a.q05 <= a.median <= a.q95


# --- convergence -------------------------------------------------------------

def test_identical_chains_pass():
    c = chain_of(np.random.default_rng(3).standard_normal(2000))
    res = convergence_check([c, c])
    assert res.passed and res.rhat["theta"] == pytest.approx(1.0, abs=0.01)


def test_separated_chains_fail():
    rng = np.random.default_rng(4)
    a = chain_of(rng.normal(0, 0.1, 1000))
    b = chain_of(rng.normal(5, 0.1, 1000))
    res = convergence_check([a, b])
    assert not res.passed and res.rhat["theta"] > 10


def test_mismatched_chains_rejected():
    with pytest.raises(ValueError):
        convergence_check([chain_of(np.zeros(10)), chain_of(np.zeros(12))])
    with pytest.raises(ValueError):
        convergence_check([chain_of(np.zeros(10))])


def test_split_rhat_detects_drift():
    trend = np.linspace(0, 10, 1000)
    assert split_rhat(np.vstack([trend, trend])) > 1.5


def test_quadratic_benchmark_four_seeds_converge():
    data = synthetic_zip_series(n=1000, seed=2024)
    res = convergence_check([gibbs_zip2(data, seed=s) for s in range(4)], threshold=1.05)
    assert res.passed, res.rhat


# --- fit objective -----------------------------------------------------------

def test_objective_zero_at_generating_params():
    params = ZipParams.from_triple((0.3, 0.2, 0.5), p0=2.0, q0=1.0, v0=0.95)
    v = np.linspace(0.8, 1.05, 40)
    from loadbayes.model_core import zip_power
    p, q = zip_power(params, v), zip_power(params, v, "reactive")
    assert fit_objective(params, v, p, q) == 0.0
    assert fit_objective(params, v, p) == 0.0


def test_objective_approaches_noise_variance():
    params = ZipParams.from_triple((0.3, 0.2, 0.5))
    rng = np.random.default_rng(6)
    v = rng.uniform(0.8, 1.1, 200_000)
    from loadbayes.model_core import zip_power
    p = zip_power(params, v) + rng.normal(0, 0.1, v.size)
    assert fit_objective(params, v, p) == pytest.approx(0.01, rel=0.02)


@settings(max_examples=100, deadline=None)
@given(st.tuples(*[st.floats(-1, 1)] * 3))
def test_true_params_never_lose_on_clean_data(delta):
    truth = ZipParams.from_triple((0.25, 0.25, 0.5))
    other = ZipParams.from_triple(tuple(a + d for a, d in zip(truth.active, delta)))
    v = np.linspace(0.7, 1.1, 30)
    from loadbayes.model_core import zip_power
    p = zip_power(truth, v)
    assert fit_objective(truth, v, p) <= fit_objective(other, v, p) + 1e-12


def test_objective_needs_data():
    params = ZipParams.from_triple((0.3, 0.2, 0.5))
    with pytest.raises(ValueError):
        fit_objective(params, np.array([]), np.array([]))
    with pytest.raises(ValueError):
        fit_objective(params, np.ones(3))


# --- priors and fitting --------------------------------------------------------

def test_prior_overrides():
    pri = build_priors("zip2", {"alpha1": [0.5, 10.0], "tau": [2.0, 3.0]})
    assert (pri[0].mu, pri[0].tau) == (0.5, 10.0)
    assert (pri[2].alpha, pri[2].beta) == (2.0, 3.0)
    assert (pri[1].mu, pri[1].tau) == (0.0, 1e-4)
    with pytest.raises(ValueError):
        build_priors("zip2", {"alpha9": [0, 1]})


def test_multi_chain_fit_records_convergence():
    data = synthetic_zip_series(n=300, seed=1)
    chains = fit_model("zip2", data, n_iter=3000, burn_in=500, seed=10, n_chains=3)
    assert [c.seed for c in chains] == [10, 11, 12]
    rep = make_report("zip2", chains, data, {}, 10)
    assert rep.convergence["passed"] and set(rep.convergence["rhat"]) == {"alpha1", "alpha2", "alpha3", "tau"}
    assert rep.objective >= 0


def test_zip1_report_places_coefficient():
    rng = np.random.default_rng(0)
    x = rng.uniform(0.8, 1.2, 100)
    from loadbayes.model_core import ZipSeries
    data = ZipSeries(x, x + rng.normal(0, 0.02, 100))
    chains = fit_model("zip1-mh", data, n_iter=4000, burn_in=500, seed=1, init="lsq", mh_step=0.005)
    rep = make_report("zip1-mh", chains, data, {"term": "current"}, 1)
    assert rep.estimate[0] == 0.0 and rep.estimate[2] == 0.0
    assert rep.estimate[1] == pytest.approx(1.0, abs=0.02)
    assert rep.acceptance_rate is not None


# --- experiments -----------------------------------------------------------------

def test_zero_runs_fail_validation(tmp_path):
    spec = ExperimentSpec(kind="feeder", model="zip3", n_runs=0)
    with pytest.raises(ExperimentError) as err:
        run_experiment(spec, tmp_path / "out")
    assert err.value.stage == "validate"
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("bad", [dict(kind="weather"), dict(model="zip9"),
                                 dict(kind="im-regression", model="zip2"), dict(burn_in=20000)])
def test_descriptor_validation(bad):
    with pytest.raises(ExperimentError):
        ExperimentSpec(**bad).validate()


def test_unknown_descriptor_key():
    with pytest.raises(ExperimentError):
        ExperimentSpec.from_dict({"kind": "feeder", "colour": "red"})


def test_descriptor_round_trip():
    spec = ExperimentSpec(kind="feeder", model="zip3", compare_with=[(0.8, 0.1, 0.1)])
    again = ExperimentSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert again == spec


def test_experiment_is_reproducible(tmp_path):
    spec = dict(kind="zip-synthetic", model="zip2", n_points=200, n_iter=1500, burn_in=300, seed=5)
    run_experiment(ExperimentSpec.from_dict(spec), tmp_path / "a")
    run_experiment(ExperimentSpec.from_dict(spec), tmp_path / "b")
    for name in ("report.json", "samples.csv", "data.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rep = read_report(tmp_path / "a" / "report.json")
    assert rep["schema_version"] == 1 and rep["config"]["seed"] == 5
    assert rep["objective"] >= 0


def test_im_experiment_recovers_coefficients(tmp_path):
    spec = ExperimentSpec(kind="im-regression", model="im", noise=0.01, n_points=1000,
                          n_iter=3000, burn_in=500)
    rep = run_experiment(spec, tmp_path)
    for est, true in zip(rep.estimate, REFERENCE_COEFFICIENTS.as_array()):
        assert est == pytest.approx(true, rel=0.01)
    back = dataio.read_im_regression(tmp_path / "data.csv")
    assert back.n == 1000


# --- file formats -------------------------------------------------------------------

def test_zip_series_round_trip(tmp_path):
    s = synthetic_zip_series(n=50, seed=3)
    dataio.write_zip_series(s, tmp_path / "z.csv")
    back = dataio.read_zip_series(tmp_path / "z.csv")
    assert back.x.tobytes() == s.x.tobytes() and back.y.tobytes() == s.y.tobytes()


def test_im_regression_round_trip(tmp_path):
    d = synthetic_im_regression(REFERENCE_COEFFICIENTS, 0.01, 40, seed=3)
    dataio.write_im_regression(d, tmp_path / "im.csv")
    back = dataio.read_im_regression(tmp_path / "im.csv")
    for name in ("ed", "y_omega", "y_iq"):
        assert getattr(back, name).tobytes() == getattr(d, name).tobytes()
    assert back.t0 == d.t0


def test_samples_round_trip(tmp_path):
    c = gibbs_zip2(synthetic_zip_series(n=30, seed=1), n_iter=200, burn_in=50, seed=1)
    dataio.write_samples(c, tmp_path / "s.csv")
    header, body = dataio.read_samples(tmp_path / "s.csv")
    assert tuple(header) == c.names and body.tobytes() == c.draws.tobytes()


@pytest.mark.parametrize("content", ["", "x,y\n1,abc\n", "v,p\n1,2\n", "x,y\n1,2\n3\n"])
def test_malformed_files_raise(tmp_path, content):
    path = tmp_path / "bad.csv"
    path.write_text(content)
    with pytest.raises(dataio.DataFormatError):
        dataio.read_zip_series(path)


def test_missing_file_raises():
    with pytest.raises(dataio.DataFormatError):
        dataio.read_zip_series("/nonexistent/data.csv")
