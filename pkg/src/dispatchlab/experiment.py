"""Configuration-driven Monte Carlo experiments.

A run expands the sweep into points, draws the same scenario seeds at every
point, dispatches, prices and settles each (point, sigma, scenario) under
every enabled policy, checks the invariants, and writes plot-ready CSV
tables.  Results are sorted before writing, so the output does not depend on
the order in which parallel workers finish.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .checks import CheckTally, check_one_shot, check_rolling
from .dispatch import HOLD, SHRINK, GeneratorSpec, RollingConfig, check_generators, one_shot, run_rolling
from .errors import ConfigError, InvalidInputError, SolverError
from .network import Network
from .optimizer import DEFAULT_TOL
from .pricing import POLICIES, price_schedules
from .scenarios import (DemandScenario, SweepPoint, SweepSpec, build_sweep, default_profile,
                        generate_scenario, load_profile_csv)
from .settlement import SETTLEMENT_TOL, policy_price_series, price_volatility, settle

SCHEMA_VERSION = "dispatchlab-experiment/1"

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVARIANT = 0, 1, 2, 3

_num = {"type": "number"}
_ramp = {"type": ["number", "null"], "minimum": 0}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "dispatchlab experiment configuration",
    "description": "All power quantities are MW over one-hour intervals (MW and MWh coincide); "
                   "prices are $/MWh, ramp limits MW/h.",
    "type": "object",
    "required": ["schema", "network", "generators", "rolling", "scenario", "policies"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "network": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "buses": {"type": "array", "items": {"type": ["string", "integer"]}, "minItems": 1},
                "shift_factors": {"type": "array", "items": {"type": "array", "items": _num}},
                "line_limits": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "reference_bus": {"type": ["string", "integer"]},
                "lines": {"type": "array", "items": {
                    "type": "object", "required": ["from", "to", "limit"], "additionalProperties": False,
                    "properties": {"from": {"type": ["string", "integer"]}, "to": {"type": ["string", "integer"]},
                                   "limit": {"type": ["number", "null"], "minimum": 0}}}},
            },
        },
        "generators": {"type": "array", "minItems": 1, "items": {
            "type": "object", "required": ["id", "bus", "marginal_cost", "capacity"],
            "additionalProperties": False,
            "properties": {
                "id": {"type": "string"}, "bus": {"type": ["string", "integer"]},
                "marginal_cost": _num, "quadratic_cost": {"type": "number", "minimum": 0},
                "capacity": {"type": "number", "minimum": 0},
                "ramp_up": _ramp, "ramp_down": _ramp,
                "revealed_ramp_up": _ramp, "revealed_ramp_down": _ramp,
            }}},
        "rolling": {
            "type": "object", "required": ["horizon", "window"], "additionalProperties": False,
            "properties": {
                "horizon": {"type": "integer", "minimum": 1},
                "window": {"type": "integer", "minimum": 1},
                "mode": {"enum": ["rolling", "one_shot"]},
                "initial_dispatch": {"type": ["array", "null"], "items": _num},
                "end_of_horizon": {"enum": [SHRINK, HOLD]},
                "slack_enabled": {"type": "boolean"},
                "slack_penalty": {"type": "number", "exclusiveMinimum": 0},
            }},
        "scenario": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "profile": {"type": "string"},
                "default_profile": {"type": "object", "additionalProperties": False,
                                    "properties": {"base": _num, "swing": _num}},
                "bus_shares": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
                "demand": {"type": "array", "items": {"type": "array", "items": {"type": "number", "minimum": 0}}},
                "demand_std": {"type": "number", "minimum": 0},
                "sigmas": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
                "count": {"type": "integer", "minimum": 1},
                "base_seed": {"type": "integer", "minimum": 0},
            }},
        "sweep": {"type": ["object", "null"], "required": ["kind", "grid"], "additionalProperties": False,
                  "properties": {
                      "kind": {"enum": ["ramp_path", "revelation", "sigma", "line_capacity"]},
                      "grid": {"type": "array", "minItems": 1},
                      "fixed": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
                      "target": {"type": ["string", "integer", "null"]},
                  }},
        "policies": {"type": "array", "minItems": 1, "uniqueItems": True, "items": {"enum": list(POLICIES)}},
        "settlement": {"type": "object", "additionalProperties": False, "properties": {
            "loc_ramp_basis": {"enum": ["revealed", "true"]},
            "pmp_lookback": {"type": ["integer", "null"], "minimum": 1},
        }},
        "checks": {"type": "boolean"},
        "output_dir": {"type": "string"},
        "tolerances": {"type": "object", "additionalProperties": False, "properties": {
            "kkt": {"type": "number", "exclusiveMinimum": 0},
            "settlement": {"type": "number", "exclusiveMinimum": 0},
        }},
    },
}


# ----------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    network: Network
    generators: tuple
    rolling: RollingConfig
    mode: str
    mean_profile: np.ndarray | None
    explicit_demand: np.ndarray | None
    demand_std: float
    sigmas: list
    scenario_count: int
    base_seed: int
    sweep: SweepSpec | None
    policies: tuple
    loc_basis: str = "revealed"
    pmp_lookback: int | None = None
    checks: bool = True
    output_dir: str = "out"
    settlement_tol: float = SETTLEMENT_TOL
    fingerprint: str = ""
    source: dict = field(default_factory=dict, repr=False)

    def points(self) -> list[SweepPoint]:
        if self.sweep is None:
            seeds = [(self.base_seed, i) for i in range(self.scenario_count)]
            return [SweepPoint("base", None, self.generators, self.network, None, seeds)]
        spec = replace(self.sweep, scenario_count=self.scenario_count, base_seed=self.base_seed)
        return build_sweep(spec, self.generators, self.network)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, base_seed=int(seed))


def _line_of(text: str, key) -> int | None:
    if key is None or text is None:
        return None
    needle = f'"{key}"'
    pos = text.find(needle)
    return text.count("\n", 0, pos) + 1 if pos >= 0 else None


def _field_path(err) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def _last_key(err):
    keys = [p for p in err.absolute_path if isinstance(p, str)]
    return keys[-1] if keys else None


def _build_network(block: dict) -> Network:
    if not block or (not block.get("lines") and not block.get("shift_factors")):
        buses = block.get("buses", ["1"]) if block else ["1"]
        if len(buses) != 1:
            raise ConfigError("a network without lines or shift factors must have one bus", "network")
        return Network.single_bus(str(buses[0]))
    if "shift_factors" in block:
        buses = [str(b) for b in block.get("buses", [])] or None
        S = np.asarray(block["shift_factors"], dtype=float)
        return Network(S, np.asarray(block.get("line_limits", []), dtype=float), tuple(buses or ()))
    if "reference_bus" not in block:
        raise ConfigError("a line list needs a reference_bus", "network.reference_bus")
    lines = [(str(ln["from"]), str(ln["to"])) for ln in block["lines"]]
    limits = [1e6 if ln["limit"] is None else ln["limit"] for ln in block["lines"]]
    buses = [str(b) for b in block["buses"]] if "buses" in block else None
    return Network.radial(lines, str(block["reference_bus"]), limits, buses)


def _ramp_value(v):
    return np.inf if v is None else float(v)


def _build_generators(items, network: Network) -> tuple:
    gens = []
    for it in items:
        up = _ramp_value(it.get("ramp_up"))
        dn = _ramp_value(it["ramp_down"]) if "ramp_down" in it else up
        gens.append(GeneratorSpec(
            id=it["id"], bus=network.bus_index(it["bus"]), marginal_cost=float(it["marginal_cost"]),
            capacity=float(it["capacity"]), ramp_up=up, ramp_down=dn,
            quadratic_cost=float(it.get("quadratic_cost", 0.0)),
            revealed_ramp_up=it.get("revealed_ramp_up"),
            revealed_ramp_down=it.get("revealed_ramp_down", it.get("revealed_ramp_up"))))
    check_generators(gens, network)
    return tuple(gens)


def _profile(block: dict, network: Network, T: int, base_dir: Path) -> np.ndarray:
    if "profile" in block:
        path = base_dir / block["profile"]
        if not path.exists():
            raise ConfigError(f"profile file {path} does not exist", "scenario.profile")
        prof = load_profile_csv(path, network.bus_labels)
    else:
        opts = block.get("default_profile", {})
        shape = default_profile(T, opts.get("base", 60.0), opts.get("swing", 40.0))[:, 0]
        shares = block.get("bus_shares")
        if shares is None:
            w = np.full(network.num_buses, 1.0 / network.num_buses)
        else:
            w = np.zeros(network.num_buses)
            for b, s in shares.items():
                w[network.bus_index(b)] = s
        prof = shape[:, None] * w[None, :]
    if prof.shape[0] < T:
        raise ConfigError(f"profile covers {prof.shape[0]} hours, horizon is {T}", "scenario.profile")
    return prof[:T]


def parse_config(data: dict, text: str | None = None, base_dir=".") -> ExperimentConfig:
    """Validate and assemble a configuration document."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, _field_path(e), _line_of(text, _last_key(e)))
    base_dir = Path(base_dir)
    try:
        network = _build_network(data["network"])
        generators = _build_generators(data["generators"], network)
        r = data["rolling"]
        T, W = r["horizon"], r["window"]
        if W > T:
            raise ConfigError(f"window {W} exceeds horizon {T}", "rolling.window", _line_of(text, "window"))
        tol = data.get("tolerances", {})
        rolling = RollingConfig(T, W, r.get("initial_dispatch"), r.get("end_of_horizon", SHRINK),
                                r.get("slack_enabled", False), r.get("slack_penalty", 10_000.0),
                                tol.get("kkt", DEFAULT_TOL))
        mode = r.get("mode", "rolling")
        sc = data["scenario"]
        explicit = None
        profile = None
        if "demand" in sc:
            explicit = np.asarray(sc["demand"], dtype=float)
            if explicit.ndim != 2 or explicit.shape != (T, network.num_buses):
                raise ConfigError(f"demand must be {T} rows of {network.num_buses} buses", "scenario.demand",
                                  _line_of(text, "demand"))
        else:
            profile = _profile(sc, network, T, base_dir)
        sweep = None
        if data.get("sweep"):
            s = data["sweep"]
            sweep = SweepSpec(s["kind"], list(s["grid"]), dict(s.get("fixed", {})), s.get("target"))
        policies = tuple(data["policies"])
        if mode == "one_shot" and set(policies) & {"PMP", "CMP"}:
            raise ConfigError("PMP and CMP need rolling mode", "policies", _line_of(text, "policies"))
        sigmas = [float(x) for x in sc.get("sigmas", [0.0])]
        if explicit is not None and any(s > 0 for s in sigmas):
            raise ConfigError("an explicit demand trace has perfect forecasts; sigmas must be 0",
                              "scenario.sigmas", _line_of(text, "sigmas"))
        st = data.get("settlement", {})
        canon = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return ExperimentConfig(
            network=network, generators=generators, rolling=rolling, mode=mode, mean_profile=profile,
            explicit_demand=explicit, demand_std=float(sc.get("demand_std", 0.04)), sigmas=sigmas,
            scenario_count=1 if explicit is not None else int(sc.get("count", 100)),
            base_seed=int(sc.get("base_seed", 0)), sweep=sweep, policies=policies,
            loc_basis=st.get("loc_ramp_basis", "revealed"), pmp_lookback=st.get("pmp_lookback"),
            checks=bool(data.get("checks", True)), output_dir=data.get("output_dir", "out"),
            settlement_tol=float(tol.get("settlement", SETTLEMENT_TOL)),
            fingerprint=hashlib.sha256(canon.encode()).hexdigest()[:16], source=data)
    except ConfigError:
        raise
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno) from exc
    return parse_config(data, text, path.parent)


# ----------------------------------------------------------------------------
# simulation


@dataclass
class Task:
    point: SweepPoint
    point_index: int
    sigma: float
    scenario_index: int
    seed: tuple

    @property
    def key(self):
        return (self.point_index, self.sigma, self.scenario_index)


@dataclass
class RunRecord:
    point: str
    point_index: int
    sigma: float
    scenario: int
    seed: tuple
    reports: dict
    price_series: dict
    price_rows: list
    dispatch_rows: list
    tally: CheckTally
    slack_used: bool
    clamped: bool

    @property
    def key(self):
        return (self.point_index, self.sigma, self.scenario)


def make_scenario(cfg: ExperimentConfig, sigma: float, seed) -> DemandScenario:
    if cfg.explicit_demand is not None:
        return DemandScenario.perfect(cfg.explicit_demand, cfg.rolling.window)
    return generate_scenario(seed, cfg.mean_profile, cfg.demand_std, sigma, cfg.rolling.window)


def simulate(cfg: ExperimentConfig, task: Task) -> RunRecord:
    """Dispatch, price, settle and check one (point, sigma, scenario)."""
    pt = task.point
    scen = make_scenario(cfg, task.sigma, task.seed)
    coords = dict(point=pt.label, sigma=task.sigma, scenario=task.scenario_index)
    try:
        if cfg.mode == "one_shot":
            traj = one_shot(scen.actual, pt.network, pt.generators, cfg.rolling)
        else:
            traj = run_rolling(scen, pt.network, pt.generators, cfg.rolling)
        schedules = price_schedules(traj, cfg.policies, cfg.pmp_lookback)
        reports = {p: settle(traj, s, loc_basis=cfg.loc_basis, tolerance=cfg.rolling.tolerance)
                   for p, s in schedules.items()}
        tally = CheckTally()
        if cfg.checks:
            check_rolling(reports, tally)
            if traj.kind == "one_shot" and cfg.rolling.initial_dispatch is None:
                check_one_shot(traj, tally, cfg.loc_basis)
    except SolverError as exc:
        raise exc.with_context(**coords)
    labels = pt.network.bus_labels
    price_rows = [row for s in schedules.values() for row in s.to_rows(pt.generators, labels)]
    return RunRecord(pt.label, task.point_index, task.sigma, task.scenario_index, tuple(task.seed), reports,
                     {p: policy_price_series(s) for p, s in schedules.items()}, price_rows,
                     traj.to_rows(), tally, traj.slack_used, scen.clamped)


def _simulate_star(args):
    return simulate(*args)


def build_tasks(cfg: ExperimentConfig) -> list[Task]:
    tasks = []
    for pi, pt in enumerate(cfg.points()):
        sigmas = [pt.sigma] if pt.sigma is not None else cfg.sigmas
        for sigma in sigmas:
            for si, seed in enumerate(pt.seeds):
                tasks.append(Task(pt, pi, float(sigma), si, seed))
    return tasks


def run_batch(cfg: ExperimentConfig, jobs: int = 1) -> list[RunRecord]:
    tasks = build_tasks(cfg)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_simulate_star, [(cfg, t) for t in tasks], chunksize=4))
    else:
        records = [simulate(cfg, t) for t in tasks]
    return sorted(records, key=lambda r: r.key)


# ----------------------------------------------------------------------------
# aggregation and output


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def _groups(records):
    out = {}
    for r in records:
        out.setdefault((r.point_index, r.point, r.sigma), []).append(r)
    return out


def aggregate(records: list[RunRecord], policies, base_seed: int) -> dict:
    """Mean tables across scenarios plus the raw per-scenario rows."""
    tables = {k: [] for k in ("loc_vs_sweep", "iso_surplus", "consumer_payment", "generator_profit",
                              "volatility", "settlement_raw", "generator_raw", "prices_raw", "dispatch_raw")}
    for r in records:
        prov = {"policy": "", "sweep_point": r.point, "sigma": r.sigma, "scenario": r.scenario,
                "seed": f"{r.seed[0]}:{r.seed[1]}"}
        for p, rep in r.reports.items():
            row = dict(prov, policy=p)
            row.update({k: v for k, v in rep.summary_row().items() if k != "policy"})
            row["iso_surplus_excl_rent"] = rep.iso_surplus - rep.congestion_rent
            row["slack_used"] = int(r.slack_used)
            row["degenerate"] = int(rep.degenerate)
            tables["settlement_raw"].append(row)
            for i, gid in enumerate(rep.generator_ids):
                tables["generator_raw"].append(dict(prov, policy=p, generator=gid, revenue=rep.revenue[i],
                                                    loc=rep.loc[i], cost=rep.true_cost[i], profit=rep.profit[i]))
        for row in r.price_rows:
            tables["prices_raw"].append(dict(prov, **row))
        for row in r.dispatch_rows:
            tables["dispatch_raw"].append(dict(prov, policy="R-ED", **row))

    for (pi, label, sigma), group in sorted(_groups(records).items(), key=lambda kv: kv[0][:1] + kv[0][2:]):
        prov = {"sweep_point": label, "sigma": sigma, "scenario": "mean", "seed": f"{base_seed}:*"}
        n = len(group)
        for p in policies:
            reps = [g.reports[p] for g in group]
            loc_m, loc_se = _mean_se([x.total_loc for x in reps])
            cost_m, _ = _mean_se([x.total_cost for x in reps])
            tables["loc_vs_sweep"].append(dict(prov, policy=p, n=n, mean_total_loc=loc_m, se_total_loc=loc_se,
                                               mean_generation_cost=cost_m))
            iso_m, iso_se = _mean_se([x.iso_surplus for x in reps])
            iso_x, _ = _mean_se([x.iso_surplus - x.congestion_rent for x in reps])
            ms_m, _ = _mean_se([x.merchandising_surplus for x in reps])
            cr_m, _ = _mean_se([x.congestion_rent for x in reps])
            tables["iso_surplus"].append(dict(prov, policy=p, n=n, mean_iso_surplus=iso_m, se_iso_surplus=iso_se,
                                              mean_iso_surplus_excl_rent=iso_x, mean_merchandising_surplus=ms_m,
                                              mean_congestion_rent=cr_m))
            pay_m, pay_se = _mean_se([x.adjusted_consumer_payment for x in reps])
            pay_x, _ = _mean_se([x.adjusted_consumer_payment + x.congestion_rent for x in reps])
            tables["consumer_payment"].append(dict(prov, policy=p, n=n, mean_consumer_payment=pay_m,
                                                   se_consumer_payment=pay_se,
                                                   mean_consumer_payment_excl_rent=pay_x))
            for i, gid in enumerate(reps[0].generator_ids):
                pm, pse = _mean_se([x.profit[i] for x in reps])
                lm, _ = _mean_se([x.loc[i] for x in reps])
                rm, _ = _mean_se([x.revenue[i] for x in reps])
                tables["generator_profit"].append(dict(prov, policy=p, generator=gid, n=n, mean_profit=pm,
                                                       se_profit=pse, mean_loc=lm, mean_revenue=rm))
            if n >= 2:
                vol = price_volatility(np.array([g.price_series[p] for g in group]))
                for t, v in enumerate(vol.hourly):
                    tables["volatility"].append(dict(prov, policy=p, hour=t + 1, normalized_std=v,
                                                     flagged=int(vol.flagged[t])))
                tables["volatility"].append(dict(prov, policy=p, hour="avg", normalized_std=vol.average,
                                                 flagged=int(vol.flagged.any())))
    return tables


_MONEY = {"demand_payment", "generator_payment", "total_loc", "merchandising_surplus", "congestion_rent",
          "ramping_surplus", "iso_surplus", "consumer_payment", "generation_cost", "total_profit",
          "iso_surplus_excl_rent", "revenue", "loc", "cost", "profit", "mean_total_loc", "se_total_loc",
          "mean_generation_cost", "mean_iso_surplus", "se_iso_surplus", "mean_iso_surplus_excl_rent",
          "mean_merchandising_surplus", "mean_congestion_rent", "mean_consumer_payment", "se_consumer_payment",
          "mean_consumer_payment_excl_rent", "mean_profit", "se_profit", "mean_loc", "mean_revenue"}


def _fmt(key, v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        x = float(v)
        if np.isnan(x):
            return "nan"
        if np.isinf(x):
            return "inf" if x > 0 else "-inf"
        if key in _MONEY:
            return f"{x:.2f}".replace("-0.00", "0.00")
        s = f"{x:.10g}"
        return "0" if s == "-0" else s
    return str(v)


def write_table(path: Path, rows: list[dict], header_lines=()):
    buf = io.StringIO()
    for h in header_lines:
        buf.write(f"# {h}\n")
    if rows:
        cols = list(rows[0].keys())
        for r in rows[1:]:
            for k in r:
                if k not in cols:
                    cols.append(k)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(c, r.get(c, "")) for c in cols])
    path.write_text(buf.getvalue())


@dataclass
class RunResult:
    exit_code: int
    records: list
    tally: CheckTally
    out_dir: Path | None
    message: str = ""


def run(cfg: ExperimentConfig, out_dir=None, jobs: int = 1, timestamp: bool = True) -> RunResult:
    """Run the full experiment and write the report bundle."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / "PARTIAL"
    marker.write_text("run did not complete\n")
    try:
        records = run_batch(cfg, jobs)
    except SolverError as exc:
        marker.write_text(f"solver failure: {exc}\n")
        return RunResult(EXIT_SOLVER, [], CheckTally(), out, str(exc))
    tally = CheckTally()
    for r in records:
        tally.merge(r.tally)
    tables = aggregate(records, cfg.policies, cfg.base_seed)
    header = [f"dispatchlab {__version__} schema={SCHEMA_VERSION} config={cfg.fingerprint} seed={cfg.base_seed}"]
    if timestamp:
        header.insert(0, "generated " + datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"))
    for name, rows in tables.items():
        write_table(out / f"{name}.csv", rows, header)
    lines = tally.lines(cfg.settlement_tol)
    (out / "checks.txt").write_text("\n".join(lines) + "\n")
    marker.unlink()
    ok = tally.all_passed(cfg.settlement_tol)
    return RunResult(EXIT_OK if ok else EXIT_INVARIANT, records, tally, out, "\n".join(lines))


# ----------------------------------------------------------------------------
# verification


def random_instance(rng: np.random.Generator, max_generators: int = 4, max_horizon: int = 6):
    """Small random market: generators, network, demand trace and rolling settings."""
    N = int(rng.integers(1, max_generators + 1))
    T = int(rng.integers(2, max_horizon + 1))
    W = int(rng.integers(1, T + 1))
    kind = rng.choice(["single", "two_bus", "three_bus"])
    if kind == "single":
        net = Network.single_bus()
    elif kind == "two_bus":
        net = Network.radial([("1", "2")], "2", [float(rng.uniform(10, 80))])
    else:
        net = Network.radial([("1", "2"), ("3", "2")], "2",
                             [float(rng.uniform(10, 80)), float(rng.uniform(10, 80))])
    M = net.num_buses
    gens = []
    for i in range(N):
        ramp = float(rng.uniform(5, 60)) if rng.random() < 0.8 else np.inf
        gens.append(GeneratorSpec(f"G{i + 1}", int(rng.integers(0, M)), float(rng.uniform(5, 80)),
                                  float(rng.uniform(40, 150)), ramp, quadratic_cost=0.0))
    cap_total = sum(g.capacity for g in gens)
    demand = rng.uniform(0.1, 0.6, size=(T, M)) * cap_total / M
    sigma = float(rng.choice([0.0, 0.006, 0.06]))
    return net, tuple(gens), demand, T, W, sigma


def verify_instance(net, gens, demand, W, sigma, seed, tally: CheckTally, slack_penalty=10_000.0):
    """Rolling checks on a forecast-perturbed run, one-shot checks on the perfect-forecast run."""
    T = demand.shape[0]
    scen = generate_scenario(seed, demand, 0.0, sigma, W)
    cfg = RollingConfig(T, W, slack_enabled=True, slack_penalty=slack_penalty)
    traj = run_rolling(scen, net, gens, cfg)
    reports = {p: settle(traj, s) for p, s in price_schedules(traj).items()}
    check_rolling(reports, tally)
    shot = one_shot(demand, net, gens, RollingConfig(T, T, slack_enabled=True, slack_penalty=slack_penalty))
    check_one_shot(shot, tally)


def verify(cfg: ExperimentConfig, random_instances: int = 50, scenarios_per_point: int = 2,
           seed: int | None = None) -> tuple[int, CheckTally, list[str]]:
    """Invariant battery on the configured instance and a randomized bank."""
    seed = cfg.base_seed if seed is None else seed
    tally = CheckTally()
    try:
        small = replace(cfg, scenario_count=min(cfg.scenario_count, scenarios_per_point), checks=True)
        for rec in run_batch(small):
            tally.merge(rec.tally)
        if cfg.rolling.initial_dispatch is None:
            for pt in small.points():
                demand = cfg.explicit_demand if cfg.explicit_demand is not None else cfg.mean_profile
                shot = one_shot(demand, pt.network, pt.generators, replace(cfg.rolling))
                check_one_shot(shot, tally, cfg.loc_basis)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 7919])))
        for k in range(random_instances):
            net, gens, demand, T, W, sigma = random_instance(rng)
            verify_instance(net, gens, demand, W, sigma, (seed, k), tally)
    except SolverError as exc:
        return EXIT_SOLVER, tally, [f"solver failure: {exc}"]
    lines = tally.lines(cfg.settlement_tol)
    return (EXIT_OK if tally.all_passed(cfg.settlement_tol) else EXIT_INVARIANT), tally, lines


def schema_text() -> str:
    return json.dumps(CONFIG_SCHEMA, indent=2, sort_keys=False)
