"""Command-line driver: ``loadbayes {gen-zip,gen-im,fit,replay,run}``.

Exit codes: 0 ok, 2 bad flags, 3 simulation divergence, 4 unreadable or
malformed data, 5 non-identifiable data. The summary line goes to stdout,
diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import dataio
from .datagen import DEFAULT_MOTOR, REFERENCE_COEFFICIENTS, im_trajectory_regression, synthetic_im_regression
from .feeder import (MultiplierLaw, PowerFlowDivergence, ScenarioConfig, load_feeder_table, replay_compare,
                     run_zip_scenario)
from .inference import ExperimentError, ExperimentSpec, fit_model, make_report, run_experiment
from .model_core import ImCoefficients, ImPhysicalParams, IntegrationError, ModelDomainError

log = logging.getLogger("loadbayes")

DEFAULT_SEED = 2024
EXIT_OK, EXIT_FLAGS, EXIT_DIVERGED, EXIT_DATA, EXIT_NONIDENT = 0, 2, 3, 4, 5


class CliExit(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def default_seed() -> int:
    env = os.environ.get("LOADBAYES_SEED")
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise CliExit(EXIT_FLAGS, f"LOADBAYES_SEED must be an integer, got {env!r}")


def floats(n: int):
    def parse(text: str):
        try:
            vals = tuple(float(t) for t in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
        if len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
        return vals
    return parse


def law_arg(text: str) -> MultiplierLaw:
    try:
        return MultiplierLaw.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def prior_arg(text: str):
    try:
        name, vals = text.split("=", 1)
        a, b = (float(t) for t in vals.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"prior must look like NAME=A,B, got {text!r}")
    return name.strip(), [a, b]


def _scenario_flags(p: argparse.ArgumentParser):
    p.add_argument("--law", type=law_arg, default=MultiplierLaw("uniform", 0.01, 4.5),
                   help="normal:MU,SIGMA or uniform:LO,HI (default uniform:0.01,4.5)")
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--bus", type=int, default=17, help="measured bus id, 0-based table numbering")
    p.add_argument("--rating-kw", type=float, default=100.0)
    p.add_argument("--rating-kvar", type=float, default=60.0)
    p.add_argument("--replace-load", action="store_true",
                   help="the ZIP load replaces the bus's native load instead of adding to it")
    p.add_argument("--feeder", default="embedded", help="feeder CSV path or 'embedded'")
    p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loadbayes", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file of flag defaults; explicit flags win")
        p.add_argument("--seed", type=int, default=None,
                       help=f"RNG seed (default $LOADBAYES_SEED or {DEFAULT_SEED})")
        p.add_argument("--out", default=".", help="output directory")

    g = sub.add_parser("gen-zip", help="randomized feeder runs measured at the ZIP bus")
    common(g)
    _scenario_flags(g)
    g.add_argument("--true", type=floats(3), default=(0.25, 0.25, 0.5), help="ZIP triple a1,a2,a3")
    g.add_argument("--max-failures", type=int, default=None,
                   help="failed runs tolerated before exit 3 (default 10%% of runs)")

    m = sub.add_parser("gen-im", help="synthetic induction-motor regression data")
    common(m)
    m.add_argument("--mode", choices=("regression", "trajectory"), default="regression")
    m.add_argument("--noise", type=float, default=0.01, help="noise std as a fraction of each target's std")
    m.add_argument("--n", type=int, default=2000, help="samples (regression mode)")
    m.add_argument("--coef", type=floats(5), default=tuple(float(v) for v in REFERENCE_COEFFICIENTS.as_array()),
                   help="beta1,beta2,beta3,alpha_b,alpha_c (regression mode)")
    for name in ("rs", "xs", "xm", "rr", "xr", "h", "t0"):
        m.add_argument(f"--{name}", type=float, default=getattr(DEFAULT_MOTOR, name))
    m.add_argument("--t-end", type=float, default=100.0)
    m.add_argument("--dt", type=float, default=0.01)
    m.add_argument("--derivatives", choices=("finite_difference", "recorded"), default="finite_difference")

    f = sub.add_parser("fit", help="run a sampler on a data file")
    common(f)
    f.add_argument("--model", choices=("zip1-mh", "zip2", "zip3", "im"), required=True)
    f.add_argument("--data", required=True)
    f.add_argument("--iters", type=int, default=10000)
    f.add_argument("--burn", type=int, default=2000)
    f.add_argument("--thin", type=int, default=1)
    f.add_argument("--chains", type=int, default=1)
    f.add_argument("--init", default="prior", help="prior | zeros | lsq")
    f.add_argument("--normalize", action="store_true")
    f.add_argument("--prior", type=prior_arg, action="append", default=[],
                   help="NAME=MU,TAU or NAME=ALPHA,BETA; repeatable")
    f.add_argument("--term", choices=("impedance", "current", "power"), default="current")
    f.add_argument("--step", type=float, default=0.5)
    f.add_argument("--proposal", choices=("random_walk", "independent"), default="random_walk")

    r = sub.add_parser("replay", help="compare measured-bus voltage under two ZIP triples")
    common(r)
    _scenario_flags(r)
    r.add_argument("--true", type=floats(3), required=True)
    r.add_argument("--est", type=floats(3), required=True)

    e = sub.add_parser("run", help="run a full experiment from a JSON descriptor")
    e.add_argument("descriptor")
    e.add_argument("--out", default=".")
    e.add_argument("--seed", type=int, default=None)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    cfg_path = getattr(args, "config", None)
    if not cfg_path:
        return args
    try:
        cfg = json.loads(Path(cfg_path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        parser.error(f"cannot read config {cfg_path}: {exc}")
    if not isinstance(cfg, dict):
        parser.error("config file must hold a JSON object")
    # re-parse with config values as defaults so explicit flags still win
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, val in cfg.items():
        dest = key.replace("-", "_")
        if dest not in known:
            parser.error(f"unknown config key {key!r}")
        action = known[dest]
        if action.type is not None and isinstance(val, (str, int, float)):
            try:
                val = action.type(str(val) if not isinstance(val, str) else val)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                parser.error(f"config key {key!r}: {exc}")
        elif isinstance(val, list) and action.type is not None and action.dest in ("true", "est", "coef"):
            val = tuple(float(v) for v in val)
        defaults[dest] = val
    subparser.set_defaults(**defaults)
    for action in subparser._actions:
        if action.dest in defaults:
            action.required = False
    return parser.parse_args(argv)


def _scenario(args, true) -> ScenarioConfig:
    if args.runs < 1:
        raise CliExit(EXIT_FLAGS, "--runs must be at least 1")
    return ScenarioConfig(args.law, n_runs=args.runs, measured_bus=args.bus,
                          zip_coefficients=tuple(true), rating_kw=args.rating_kw,
                          rating_kvar=args.rating_kvar, augment=not args.replace_load,
                          seed=args.seed, threads=max(1, args.threads))


def _feeder(args):
    try:
        topo = load_feeder_table(args.feeder)
    except (OSError, ValueError) as exc:
        raise CliExit(EXIT_DATA, f"cannot load feeder: {exc}")
    if not 0 <= args.bus < topo.n_bus or args.bus == topo.slack_bus:
        raise CliExit(EXIT_FLAGS, f"--bus must be a non-slack bus in 0..{topo.n_bus - 1}")
    return topo


def cmd_gen_zip(args) -> int:
    topo = _feeder(args)
    cfg = _scenario(args, args.true)
    try:
        result = run_zip_scenario(topo, cfg)
    except PowerFlowDivergence as exc:
        raise CliExit(EXIT_DIVERGED, f"base case failed: {exc}")
    out = dataio.ensure_dir(args.out)
    dataio.write_scenario_log(result, out / "scenario_log.csv")
    budget = args.max_failures if args.max_failures is not None else cfg.n_runs // 10
    if result.series is not None:
        dataio.write_zip_series(result.series, out / "zip_series.csv")
    ok = result.v_pu[result.converged]
    vmin = float(ok.min()) if ok.size else float("nan")
    vmax = float(ok.max()) if ok.size else float("nan")
    print(f"runs={cfg.n_runs} failures={result.n_failed} v0={result.v0:.6f} "
          f"v_min={vmin:.6f} v_max={vmax:.6f} range={vmax - vmin:.6f}")
    if result.series is None or result.n_failed > budget:
        raise CliExit(EXIT_DIVERGED, f"{result.n_failed} power-flow runs failed (budget {budget})")
    return EXIT_OK


def cmd_gen_im(args) -> int:
    out = dataio.ensure_dir(args.out)
    if args.noise < 0:
        raise CliExit(EXIT_FLAGS, "--noise must be non-negative")
    if args.mode == "regression":
        if args.n < 6:
            raise CliExit(EXIT_FLAGS, "--n must be at least 6")
        try:
            coef = ImCoefficients(*args.coef)
        except ModelDomainError as exc:
            raise CliExit(EXIT_FLAGS, str(exc))
        data = synthetic_im_regression(coef, args.noise, args.n, args.seed)
    else:
        try:
            p = ImPhysicalParams(rs=args.rs, xs=args.xs, xm=args.xm, rr=args.rr, xr=args.xr,
                                 h=args.h, t0=args.t0)
        except ModelDomainError as exc:
            raise CliExit(EXIT_FLAGS, str(exc))
        if not (args.dt > 0 and args.t_end > 2 * args.dt):
            raise CliExit(EXIT_FLAGS, "need dt > 0 and t-end > 2 dt")
        try:
            times, states, inputs, data = im_trajectory_regression(
                p, args.t_end, args.dt, args.noise, args.seed, args.derivatives)
        except (IntegrationError, RuntimeError) as exc:
            raise CliExit(EXIT_DIVERGED, f"integration failed: {exc}")
        dataio.write_trajectory(times, states, inputs, out / "trajectory.csv")
    dataio.write_im_regression(data, out / "im_regression.csv")
    print(f"mode={args.mode} samples={data.n} noise={args.noise:g}")
    return EXIT_OK


def _load_fit_data(model: str, path: str):
    try:
        if model == "im":
            return dataio.read_im_regression(path)
        return dataio.read_zip_series(path)
    except (dataio.DataFormatError, ValueError) as exc:
        raise CliExit(EXIT_DATA, str(exc))


def cmd_fit(args) -> int:
    data = _load_fit_data(args.model, args.data)
    minimum = {"zip1-mh": 1, "zip2": 3, "zip3": 4, "im": 6}[args.model]
    if data.n < minimum:
        raise CliExit(EXIT_DATA, f"{args.model} needs at least {minimum} samples, got {data.n}")
    if args.init not in ("prior", "zeros", "lsq"):
        raise CliExit(EXIT_FLAGS, "--init must be prior, zeros or lsq")
    priors = dict(args.prior)
    try:
        chains = fit_model(args.model, data, n_iter=args.iters, burn_in=args.burn, thinning=args.thin,
                           seed=args.seed, n_chains=args.chains, init=args.init,
                           normalize=args.normalize, priors=priors, term=args.term,
                           mh_step=args.step, mh_proposal=args.proposal)
    except ValueError as exc:
        raise CliExit(EXIT_FLAGS, str(exc))
    config = {"model": args.model, "data": args.data, "iters": args.iters, "burn": args.burn,
              "thin": args.thin, "chains": args.chains, "init": args.init,
              "normalize": args.normalize, "priors": priors, "term": args.term,
              "step": args.step, "proposal": args.proposal}
    report = make_report(args.model, chains, data, config, args.seed,
                         normalize=args.normalize or args.model == "zip3")
    out = dataio.ensure_dir(args.out)
    dataio.write_samples(chains[0], out / "samples.csv")
    report.write(out / "report.json")
    for w in report.warnings:
        log.warning(w)
    est = ",".join(f"{v:.6g}" for v in report.estimate)
    print(f"model={args.model} kept={report.n_kept} estimate={est} objective={report.objective:.6g}")
    if any(w.startswith("non-identifiable") for w in report.warnings):
        raise CliExit(EXIT_NONIDENT, "data do not identify the model")
    return EXIT_OK


def cmd_replay(args) -> int:
    topo = _feeder(args)
    cfg = _scenario(args, args.true)
    try:
        result = replay_compare(topo, cfg, args.true, args.est)
    except PowerFlowDivergence as exc:
        raise CliExit(EXIT_DIVERGED, f"base case failed: {exc}")
    out = dataio.ensure_dir(args.out)
    dataio.write_replay(result, out / "replay.csv")
    if not result.valid.any():
        raise CliExit(EXIT_DIVERGED, "every replay run failed")
    s = result.summary()
    print(f"runs={s['runs']} excluded={s['excluded']} max_dv={s['max_dv']:.6e} mean_dv={s['mean_dv']:.6e}")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        desc = json.loads(Path(args.descriptor).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise CliExit(EXIT_DATA, f"cannot read descriptor: {exc}")
    try:
        spec = ExperimentSpec.from_dict(desc)
        if args.seed is not None:
            spec.seed = args.seed
        report = run_experiment(spec, args.out)
    except ExperimentError as exc:
        code = EXIT_FLAGS if exc.stage == "validate" else EXIT_DIVERGED if exc.stage == "generate" else EXIT_DATA
        raise CliExit(code, str(exc))
    except TypeError as exc:
        raise CliExit(EXIT_FLAGS, f"bad descriptor: {exc}")
    est = ",".join(f"{v:.6g}" for v in report.estimate)
    extra = ""
    if report.replay:
        extra = f" max_dv={report.replay['estimated']['max_dv']:.6e}"
    print(f"model={spec.model} kept={report.n_kept} estimate={est}{extra}")
    return EXIT_OK


COMMANDS = {"gen-zip": cmd_gen_zip, "gen-im": cmd_gen_im, "fit": cmd_fit,
            "replay": cmd_replay, "run": cmd_run}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:  # argparse reports flag errors with code 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.seed is None:
            args.seed = default_seed()
        return COMMANDS[args.command](args)
    except CliExit as exc:
        print(f"loadbayes: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
