"""33-bus radial feeder, backward/forward sweep power flow and ZIP scenarios."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .model_core import ZipParams, ZipSeries, build_zip_series, zip_power

log = logging.getLogger(__name__)

FEEDER_HEADER = ("line", "from", "to", "r_ohm", "x_ohm", "p_kw", "q_kvar")

# 33-bus test feeder; load columns belong to the receiving bus.
EMBEDDED_FEEDER_CSV = """\
line,from,to,r_ohm,x_ohm,p_kw,q_kvar
1,0,1,0.0922,0.0477,100,60
2,1,2,0.493,0.2511,90,40
3,2,3,0.366,0.1864,120,80
4,3,4,0.3811,0.1941,60,30
5,4,5,0.819,0.707,60,20
6,5,6,0.1872,0.6188,200,100
7,6,7,1.7114,1.2531,200,100
8,7,8,1.03,0.74,60,20
9,8,9,1.04,0.74,60,20
10,9,10,0.1966,0.065,45,30
11,10,11,0.3744,0.1238,60,35
12,11,12,1.468,1.155,60,35
13,12,13,0.5416,0.7129,120,80
14,13,14,0.591,0.526,60,10
15,14,15,0.7463,0.545,60,20
16,15,16,1.289,1.721,60,20
17,16,17,0.732,0.574,90,40
18,1,18,0.164,0.1565,90,40
19,18,19,1.5042,1.3554,90,40
20,19,20,0.4095,0.4787,90,40
21,20,21,0.7089,0.9373,90,40
22,2,22,0.4512,0.3083,90,50
23,22,23,0.898,0.7091,420,200
24,23,24,0.896,0.7011,420,200
25,5,25,0.203,0.1034,60,25
26,25,26,0.2842,0.1447,60,25
27,26,27,1.059,0.9337,60,20
28,27,28,0.8042,0.7006,120,70
29,28,29,0.5075,0.2585,200,600
30,29,30,0.9744,0.963,150,70
31,30,31,0.3105,0.3619,210,100
32,31,32,0.341,0.5302,60,40
"""


class FeederError(ValueError):
    """Malformed or non-radial feeder description."""


class PowerFlowDivergence(RuntimeError):
    """Voltage collapse or non-finite iterate during the sweep."""


class Line(NamedTuple):
    number: int
    from_bus: int
    to_bus: int
    r_ohm: float
    x_ohm: float


@dataclass
class FeederTopology:
    lines: list[Line]
    loads_kw: np.ndarray      # (n_bus,) active load per bus
    loads_kvar: np.ndarray    # (n_bus,) reactive load per bus
    slack_bus: int = 0
    base_kv: float = 12.66
    base_mva: float = 10.0

    def __post_init__(self):
        self.loads_kw = np.asarray(self.loads_kw, dtype=float)
        self.loads_kvar = np.asarray(self.loads_kvar, dtype=float)
        n = self.n_bus
        if self.loads_kvar.shape != (n,):
            raise FeederError("load arrays must have one entry per bus")
        if len(self.lines) != n - 1:
            raise FeederError(f"a radial feeder with {n} buses needs {n - 1} lines, got {len(self.lines)}")
        for ln in self.lines:
            if ln.r_ohm < 0:
                raise FeederError(f"line {ln.number} has negative resistance")
            if not (0 <= ln.from_bus < n and 0 <= ln.to_bus < n) or ln.from_bus == ln.to_bus:
                raise FeederError(f"line {ln.number} has invalid endpoints")
        self._build_tree()

    @property
    def n_bus(self) -> int:
        return int(self.loads_kw.size)

    @property
    def z_base(self) -> float:
        return self.base_kv ** 2 / self.base_mva

    @property
    def kw_base(self) -> float:
        return self.base_mva * 1000.0

    def _build_tree(self):
        n = self.n_bus
        adj: dict[int, list[tuple[int, int]]] = {b: [] for b in range(n)}
        for k, ln in enumerate(self.lines):
            adj[ln.from_bus].append((ln.to_bus, k))
            adj[ln.to_bus].append((ln.from_bus, k))
        parent = np.full(n, -1)
        branch_z = np.zeros(n, dtype=complex)
        seen = {self.slack_bus}
        order = [self.slack_bus]
        i = 0
        while i < len(order):
            bus = order[i]
            i += 1
            for nb, k in adj[bus]:
                if nb == parent[bus]:
                    continue
                if nb in seen:
                    raise FeederError("feeder contains a cycle")
                seen.add(nb)
                parent[nb] = bus
                ln = self.lines[k]
                branch_z[nb] = complex(ln.r_ohm, ln.x_ohm) / self.z_base
                order.append(nb)
        if len(seen) != n:
            missing = sorted(set(range(n)) - seen)
            raise FeederError(f"buses not reachable from slack: {missing}")
        self.parent = parent
        self.order = np.array(order)
        # path[k, b] = 1 when the branch feeding bus b lies on the slack->k path
        path = np.zeros((n, n))
        for k in range(n):
            b = k
            while b != self.slack_bus:
                path[k, b] = 1.0
                b = parent[b]
        self.path = path
        self.branch_z = branch_z

    def path_to(self, bus: int) -> list[int]:
        """Buses from the slack to ``bus`` inclusive."""
        out = [bus]
        while out[-1] != self.slack_bus:
            out.append(int(self.parent[out[-1]]))
        return out[::-1]


def _parse_feeder_csv(text: str, **kwargs) -> FeederTopology:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != FEEDER_HEADER:
        raise FeederError(f"expected header {','.join(FEEDER_HEADER)}, got {reader.fieldnames}")
    lines = []
    to_loads = {}
    try:
        for row in reader:
            ln = Line(int(row["line"]), int(row["from"]), int(row["to"]),
                      float(row["r_ohm"]), float(row["x_ohm"]))
            lines.append(ln)
            if ln.to_bus in to_loads:
                raise FeederError(f"bus {ln.to_bus} is fed by more than one line")
            to_loads[ln.to_bus] = (float(row["p_kw"]), float(row["q_kvar"]))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, FeederError):
            raise
        raise FeederError(f"malformed feeder row: {exc}") from exc
    if not lines:
        raise FeederError("feeder file has no lines")
    n_bus = 1 + max(max(ln.from_bus, ln.to_bus) for ln in lines)
    p = np.zeros(n_bus)
    q = np.zeros(n_bus)
    for bus, (pk, qk) in to_loads.items():
        p[bus], q[bus] = pk, qk
    return FeederTopology(lines, p, q, **kwargs)


def load_feeder_table(source: str | Path = "embedded", **kwargs) -> FeederTopology:
    """Load the embedded 33-bus feeder or a CSV with the same schema."""
    if str(source) == "embedded":
        return _parse_feeder_csv(EMBEDDED_FEEDER_CSV, **kwargs)
    path = Path(source)
    return _parse_feeder_csv(path.read_text(encoding="utf-8"), **kwargs)


def write_feeder_csv(topo: FeederTopology, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FEEDER_HEADER)
        for ln in topo.lines:
            w.writerow([ln.number, ln.from_bus, ln.to_bus, repr(ln.r_ohm), repr(ln.x_ohm),
                        repr(float(topo.loads_kw[ln.to_bus])), repr(float(topo.loads_kvar[ln.to_bus]))])


@dataclass(frozen=True)
class ZipAttachment:
    """A ZIP load hung on ``bus``; p0/q0 in kW/kvar, v0 in p.u."""

    bus: int
    params: ZipParams

    def power_pu(self, v_mag, kw_base: float) -> complex:
        p = zip_power(self.params, v_mag, "active")
        q = zip_power(self.params, v_mag, "reactive")
        return complex(p, q) / kw_base


@dataclass
class PowerFlowSolution:
    v_mag: np.ndarray
    v_ang: np.ndarray
    converged: bool
    iterations: int
    max_mismatch: float
    slack_power: complex = 0j
    load_power: complex = 0j
    attachment_power: dict = field(default_factory=dict)

    @property
    def losses(self) -> complex:
        return self.slack_power - self.load_power


def solve_power_flow(topo: FeederTopology, load_multipliers=None,
                     attachments: Sequence[ZipAttachment] = (), slack_v: float = 1.0,
                     tol: float = 1e-8, max_iter: int = 100) -> PowerFlowSolution:
    """Backward/forward sweep on the radial feeder.

    Constant-PQ loads are scaled by ``load_multipliers`` (one per bus); each
    attached ZIP load is re-evaluated at the latest voltage magnitude every
    iteration. Convergence is declared when the largest voltage update falls
    below ``tol``. Returns converged=False after ``max_iter`` sweeps; raises
    PowerFlowDivergence on collapse.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    n = topo.n_bus
    mult = np.ones(n) if load_multipliers is None else np.asarray(load_multipliers, dtype=float)
    if mult.shape != (n,):
        raise ValueError(f"need {n} load multipliers, got {mult.shape}")
    s_const = mult * (topo.loads_kw + 1j * topo.loads_kvar) / topo.kw_base
    kw_base = topo.kw_base

    def injections(v):
        s = s_const.copy()
        for att in attachments:
            s[att.bus] += att.power_pu(abs(v[att.bus]), kw_base)
        return s

    v = np.full(n, complex(slack_v))
    path = topo.path
    z = topo.branch_z
    delta = np.inf
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        s = injections(v)
        i_load = np.conj(s / v)
        j_branch = path.T @ i_load              # backward: sum of downstream currents
        v_new = slack_v - path @ (z * j_branch)  # forward: accumulate drops
        mag = np.abs(v_new)
        if not np.all(np.isfinite(v_new)) or mag.min() < 1e-3 or mag.max() > 10.0 * abs(slack_v):
            raise PowerFlowDivergence(f"voltage collapse after {it} sweeps")
        delta = float(np.max(np.abs(v_new - v)))
        v = v_new
        if delta < tol:
            converged = True
            break

    s = injections(v)
    i_load = np.conj(s / v)
    att_power = {att.bus: att.power_pu(abs(v[att.bus]), kw_base) for att in attachments}
    return PowerFlowSolution(
        v_mag=np.abs(v), v_ang=np.angle(v), converged=converged, iterations=it,
        max_mismatch=delta, slack_power=complex(slack_v * np.conj(i_load.sum())),
        load_power=complex(s.sum()), attachment_power=att_power,
    )


@dataclass(frozen=True)
class MultiplierLaw:
    kind: str  # "normal" or "uniform"
    a: float   # mean / lower bound
    b: float   # std / upper bound

    def __post_init__(self):
        if self.kind == "normal":
            if not self.b > 0:
                raise ValueError("normal law needs a positive std")
        elif self.kind == "uniform":
            if self.a > self.b:
                raise ValueError("uniform law needs lo <= hi")
        else:
            raise ValueError(f"unknown multiplier law {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "MultiplierLaw":
        """Parse ``normal:MU,SIGMA`` or ``uniform:LO,HI``."""
        try:
            kind, args = text.split(":", 1)
            a, b = (float(t) for t in args.split(","))
        except ValueError as exc:
            raise ValueError(f"cannot parse multiplier law {text!r}") from exc
        return cls(kind.strip().lower(), a, b)

    def __str__(self) -> str:
        return f"{self.kind}:{self.a:g},{self.b:g}"

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "normal":
            return rng.normal(self.a, self.b, size)
        if self.a == self.b:
            return np.full(size, self.a)
        return rng.uniform(self.a, self.b, size)


@dataclass
class ScenarioConfig:
    law: MultiplierLaw
    n_runs: int = 1000
    measured_bus: int = 17
    zip_coefficients: tuple = (0.25, 0.25, 0.5)
    reactive_coefficients: tuple | None = None  # None: mirror the active triple
    rating_kw: float = 100.0
    rating_kvar: float = 60.0
    augment: bool = True          # add to the bus's own load rather than replace it
    seed: int = 2024
    min_multiplier: float = 1e-6
    slack_v: float = 1.0
    tol: float = 1e-8
    max_iter: int = 100
    threads: int = 1

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be at least 1")
        if isinstance(self.law, str):
            self.law = MultiplierLaw.parse(self.law)


@dataclass
class ScenarioResult:
    series: ZipSeries | None
    v0: float
    p0_kw: float
    v_pu: np.ndarray           # per run, NaN where failed
    p_pu: np.ndarray
    converged: np.ndarray
    baseline_v_pu: np.ndarray  # measured-bus voltage without the ZIP attachment

    @property
    def n_failed(self) -> int:
        return int(np.count_nonzero(~self.converged))

    @property
    def voltage_range(self) -> float:
        ok = self.v_pu[self.converged]
        return float(ok.max() - ok.min()) if ok.size else float("nan")

    def log_rows(self):
        for k in range(self.v_pu.size):
            yield (k + 1, self.v_pu[k], self.p_pu[k], bool(self.converged[k]))


def draw_multipliers(topo: FeederTopology, cfg: ScenarioConfig) -> np.ndarray:
    """(n_runs, n_bus) load multipliers; a pure function of the config."""
    rng = np.random.default_rng(cfg.seed)
    m = cfg.law.draw(rng, (cfg.n_runs, topo.n_bus))
    return np.maximum(m, cfg.min_multiplier)


def _base_loads(topo: FeederTopology, cfg: ScenarioConfig) -> FeederTopology:
    if cfg.augment:
        return topo
    p = topo.loads_kw.copy()
    q = topo.loads_kvar.copy()
    p[cfg.measured_bus] = q[cfg.measured_bus] = 0.0
    return FeederTopology(list(topo.lines), p, q, topo.slack_bus, topo.base_kv, topo.base_mva)


def reference_voltage(topo: FeederTopology, cfg: ScenarioConfig, params: ZipParams) -> float:
    """Measured-bus voltage at unit multipliers with the attachment connected.

    A normalized ZIP load draws its rating at V = V0, so V0 is found by fixed
    point: solve with the load at V0, update V0 to the solved voltage.
    """
    v0 = solve_power_flow(topo, attachments=(), slack_v=cfg.slack_v, tol=cfg.tol,
                          max_iter=cfg.max_iter).v_mag[cfg.measured_bus]
    for _ in range(100):
        att = ZipAttachment(cfg.measured_bus, params.with_reference(v0=v0))
        v_new = solve_power_flow(topo, attachments=(att,), slack_v=cfg.slack_v,
                                 tol=cfg.tol * 1e-2, max_iter=cfg.max_iter).v_mag[cfg.measured_bus]
        if abs(v_new - v0) < 1e-13:
            return float(v_new)
        v0 = float(v_new)
    return v0


def attachment_params(cfg: ScenarioConfig, active=None, v0: float = 1.0) -> ZipParams:
    active = cfg.zip_coefficients if active is None else active
    reactive = cfg.reactive_coefficients if cfg.reactive_coefficients is not None else active
    return ZipParams.from_triple(active, reactive, p0=cfg.rating_kw, q0=cfg.rating_kvar, v0=v0)


def _run_all(topo, cfg, multipliers, attachment):
    atts = () if attachment is None else (attachment,)

    def one(m):
        try:
            sol = solve_power_flow(topo, m, atts, slack_v=cfg.slack_v, tol=cfg.tol,
                                   max_iter=cfg.max_iter)
        except PowerFlowDivergence:
            return np.nan, np.nan, False
        p = sol.attachment_power[attachment.bus].real if attachment is not None else np.nan
        return sol.v_mag[cfg.measured_bus], p, sol.converged

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            rows = list(ex.map(one, multipliers))
    else:
        rows = [one(m) for m in multipliers]
    v = np.array([r[0] for r in rows], dtype=float)
    p = np.array([r[1] for r in rows], dtype=float)
    ok = np.array([r[2] for r in rows], dtype=bool)
    v[~ok] = np.nan
    p[~ok] = np.nan
    return v, p, ok


def run_zip_scenario(topo: FeederTopology, cfg: ScenarioConfig) -> ScenarioResult:
    """Randomize all loads, measure V and P of the ZIP attachment at the measured bus."""
    net = _base_loads(topo, cfg)
    params = attachment_params(cfg)
    v0 = reference_voltage(net, cfg, params)
    att = ZipAttachment(cfg.measured_bus, params.with_reference(v0=v0))
    mult = draw_multipliers(net, cfg)
    v, p, ok = _run_all(net, cfg, mult, att)
    baseline, _, _ = _run_all(net, cfg, mult, None)
    if not ok.all():
        log.warning("%d of %d power-flow runs failed and were excluded", (~ok).sum(), ok.size)
    p0_pu = cfg.rating_kw / topo.kw_base
    series = build_zip_series(v[ok], p[ok], v0, p0_pu) if ok.any() else None
    return ScenarioResult(series, v0, cfg.rating_kw, v, p, ok, baseline)


@dataclass
class ReplayResult:
    delta_v: np.ndarray    # |Va - Vb| per run, NaN where either failed
    v_a: np.ndarray
    v_b: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.delta_v)

    @property
    def max(self) -> float:
        return float(np.max(self.delta_v[self.valid]))

    @property
    def mean(self) -> float:
        return float(np.mean(self.delta_v[self.valid]))

    @property
    def n_excluded(self) -> int:
        return int(np.count_nonzero(~self.valid))

    def summary(self) -> dict:
        return {"max_dv": self.max, "mean_dv": self.mean, "runs": int(self.delta_v.size),
                "excluded": self.n_excluded}


def replay_compare(topo: FeederTopology, cfg: ScenarioConfig, params_a, params_b) -> ReplayResult:
    """Re-solve the scenario's runs with two ZIP coefficient sets.

    ``params_a``/``params_b`` are ZipParams or active triples; the rating and
    reference voltage come from ``cfg`` so only the voltage shape differs.
    Both sets see identical multiplier draws.
    """
    net = _base_loads(topo, cfg)

    def as_params(pa):
        if isinstance(pa, ZipParams):
            return attachment_params(cfg, pa.active).with_coefficients(pa.active, pa.reactive)
        return attachment_params(cfg, tuple(pa))

    pa, pb = as_params(params_a), as_params(params_b)
    v0 = reference_voltage(net, cfg, attachment_params(cfg))
    mult = draw_multipliers(net, cfg)
    va, _, ok_a = _run_all(net, cfg, mult, ZipAttachment(cfg.measured_bus, pa.with_reference(v0=v0)))
    vb, _, ok_b = _run_all(net, cfg, mult, ZipAttachment(cfg.measured_bus, pb.with_reference(v0=v0)))
    dv = np.abs(va - vb)
    dv[~(ok_a & ok_b)] = np.nan
    return ReplayResult(dv, va, vb)
