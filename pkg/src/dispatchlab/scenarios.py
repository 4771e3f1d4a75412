"""Demand scenarios, rolling forecasts and parameter sweeps.

Random streams: every scenario is identified by ``(base_seed, index)`` and
draws from ``PCG64(SeedSequence([base_seed, index]))``, split into two child
streams (actual demand, forecast revisions).  Scenario ``index`` therefore
produces the same actual demand trace whatever the forecast-error level,
window size or generator parameters, which is what makes sweep points
directly comparable (common random numbers).

Forecast model.  With ``e_j`` i.i.d. ``N(0, sigma_abs^2)`` revealed at time
``j``, the forecast of interval ``s`` issued at ``t`` is

    d_hat[s | t] = d[s] + e[t+1] + ... + e[s]

so the binding-interval forecast is exact, the error at lead ``k`` has
variance ``k sigma_abs^2``, and consecutive vintages differ by one draw.
``sigma_abs = sigma * mean`` of the bus's mean profile over the horizon.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

SWEEP_KINDS = ("ramp_path", "revelation", "sigma", "line_capacity")

# effectively uncongested line
NO_LIMIT = 1e6


def rng_streams(base_seed: int, index: int):
    ss = np.random.SeedSequence([int(base_seed), int(index)])
    demand_ss, forecast_ss = ss.spawn(2)
    return np.random.Generator(np.random.PCG64(demand_ss)), np.random.Generator(np.random.PCG64(forecast_ss))


@dataclass
class DemandScenario:
    """Actual demand (T x M) and the triangular forecast array.

    ``forecasts[t-1, k]`` is the forecast of interval ``t+k`` made at ``t``
    (NaN past the horizon).  ``increments[j-1]`` is the revision revealed at
    interval ``j``.
    """

    actual: np.ndarray
    forecasts: np.ndarray
    increments: np.ndarray
    mean_profile: np.ndarray | None = None
    sigma: float = 0.0
    seed: tuple | None = None
    clamped: bool = False

    @property
    def horizon(self) -> int:
        return self.actual.shape[0]

    @property
    def max_lead(self) -> int:
        return self.forecasts.shape[1]

    @property
    def errors(self) -> np.ndarray:
        """``forecasts - actual`` aligned by target interval (T x W x M)."""
        T, W, M = self.forecasts.shape
        out = np.full((T, W, M), np.nan)
        for k in range(W):
            out[:T - k, k] = self.forecasts[:T - k, k] - self.actual[k:]
        return out

    def forecast(self, t: int, target: int) -> np.ndarray:
        k = target - t
        if not 0 <= k < self.max_lead or target > self.horizon:
            raise InvalidInputError(f"no forecast of interval {target} issued at {t}")
        return self.forecasts[t - 1, k]

    def window_forecast(self, t: int, length: int, hold: bool = False) -> np.ndarray:
        """Forecasts for ``t .. t+length-1``; past T the last forecast is held when ``hold``."""
        T = self.horizon
        rows = []
        for target in range(t, t + length):
            if target > T:
                if not hold:
                    raise InvalidInputError(f"window at t={t} runs past the horizon")
                target = T
            rows.append(self.forecast(t, target))
        return np.array(rows)

    @classmethod
    def perfect(cls, actual, max_lead: int | None = None) -> "DemandScenario":
        actual = np.asarray(actual, dtype=float)
        if actual.ndim == 1:
            actual = actual[:, None]
        T, M = actual.shape
        W = T if max_lead is None else max_lead
        fc = np.full((T, W, M), np.nan)
        for k in range(W):
            fc[:T - k, k] = actual[k:]
        return cls(actual, fc, np.zeros((T, M)), actual.copy(), 0.0)


def generate_scenario(seed, mean_profile, demand_std_fraction: float, sigma: float, W: int) -> DemandScenario:
    """Draw one demand trace and its rolling forecasts.

    ``seed`` is ``(base_seed, index)`` or a bare int (index 0).  Negative
    draws are clamped to zero and flagged.
    """
    if sigma < 0 or demand_std_fraction < 0:
        raise InvalidInputError("sigma and demand_std_fraction must be >= 0")
    base, index = (seed, 0) if np.isscalar(seed) else tuple(seed)
    mean = np.asarray(mean_profile, dtype=float)
    if mean.ndim == 1:
        mean = mean[:, None]
    T, M = mean.shape
    if not 1 <= W <= T:
        raise InvalidInputError(f"need 1 <= W <= T, got W={W}, T={T}")
    demand_rng, forecast_rng = rng_streams(base, index)

    actual = mean * (1.0 + demand_std_fraction * demand_rng.standard_normal((T, M)))
    clamped = bool(np.any(actual < 0))
    actual = np.maximum(actual, 0.0)

    sigma_abs = sigma * mean.mean(axis=0)
    increments = forecast_rng.standard_normal((T, M)) * sigma_abs
    increments[0] = 0.0  # nothing is revealed before the first interval
    cum = np.cumsum(increments, axis=0)
    fc = np.full((T, W, M), np.nan)
    for k in range(W):
        fc[:T - k, k] = actual[k:] + cum[k:] - cum[:T - k]
    fc[:, 0] = actual  # exact, no round-off from the cumulative sums
    neg = fc < 0
    if np.any(neg):
        clamped = True
        fc = np.where(neg, 0.0, fc)
    return DemandScenario(actual, fc, increments, mean, sigma, (base, index), clamped)


# ----------------------------------------------------------------------------
# profiles


def default_profile(T: int = 24, base: float = 100.0, swing: float = 60.0) -> np.ndarray:
    """Synthetic two-peak daily load shape (T x 1), MW.

    Trough before dawn, a morning shoulder and an evening peak.
    """
    h = np.arange(T) * 24.0 / T
    morning = np.exp(-0.5 * ((h - 9.0) / 2.5) ** 2)
    evening = np.exp(-0.5 * ((h - 19.0) / 2.5) ** 2)
    shape = 0.7 * morning + 1.0 * evening
    return (base + swing * shape)[:, None]


def load_profile_csv(path, bus_labels: Sequence[str]) -> np.ndarray:
    """Read a mean profile with columns ``hour, bus, MW`` into (T x M)."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append((int(rec["hour"]), str(rec["bus"]).strip(), float(rec["MW"])))
    if not rows:
        raise InvalidInputError(f"{path}: empty profile")
    hours = sorted({h for h, _, _ in rows})
    index = {str(b): m for m, b in enumerate(bus_labels)}
    out = np.zeros((len(hours), len(bus_labels)))
    hpos = {h: k for k, h in enumerate(hours)}
    for h, b, mw in rows:
        if b not in index:
            raise InvalidInputError(f"{path}: unknown bus {b!r}")
        out[hpos[h], index[b]] = mw
    return out


def write_scenario_csv(path, scenarios: Sequence[DemandScenario], bus_labels: Sequence[str]):
    """``scenario, t, bus, actual, f1 .. f{W-1}`` (forecast at lead k issued at t)."""
    W = max(s.max_lead for s in scenarios)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "t", "bus", "actual"] + [f"f{k}" for k in range(1, W)])
        for si, s in enumerate(scenarios):
            for t in range(s.horizon):
                for m, lab in enumerate(bus_labels):
                    fc = [repr(float(s.forecasts[t, k, m])) if k < s.max_lead else "" for k in range(1, W)]
                    w.writerow([si, t + 1, lab, repr(float(s.actual[t, m]))] + fc)


# ----------------------------------------------------------------------------
# sweeps


@dataclass
class SweepSpec:
    """One experiment axis.

    grid entries by kind:
      ramp_path      {"label": "A", "ramps": {"G2": 20, "G3": 20}}  (true limits, up = down)
      revelation     revealed limit of ``target`` (a generator id)
      sigma          forecast-error level (fraction of mean demand)
      line_capacity  limit of physical line ``target`` (None = uncongested)
    ``fixed`` sets true ramp limits ({gen_id: MW/h}) for every point.
    """

    kind: str
    grid: list
    fixed: dict = field(default_factory=dict)
    target: object = None
    scenario_count: int = 100
    base_seed: int = 0

    def __post_init__(self):
        if self.kind not in SWEEP_KINDS:
            raise InvalidInputError(f"unknown sweep kind {self.kind!r}")
        if not self.grid:
            raise InvalidInputError("sweep grid is empty")
        if self.scenario_count < 1:
            raise InvalidInputError("scenario_count must be >= 1")
        if self.kind in ("revelation", "line_capacity") and self.target is None:
            raise InvalidInputError(f"{self.kind} sweep needs a target")
        for v in self.grid:
            if self.kind == "ramp_path":
                if not isinstance(v, dict) or "ramps" not in v:
                    raise InvalidInputError("ramp_path grid entries need a 'ramps' mapping")
                if any(r is None or r < 0 for r in v["ramps"].values()):
                    raise InvalidInputError("ramp limits must be >= 0")
            elif self.kind == "line_capacity":
                if v is not None and v < 0:
                    raise InvalidInputError("line capacities must be >= 0")
            elif v is None or v < 0:
                raise InvalidInputError(f"{self.kind} grid values must be >= 0")


@dataclass
class SweepPoint:
    label: str
    value: object
    generators: tuple
    network: object
    sigma: float | None   # None: use the experiment's sigma list
    seeds: list


def _fmt_value(v):
    if v is None:
        return "inf"
    return f"{float(v):g}"


def _apply_ramps(generators, ramps: dict):
    known = {g.id for g in generators}
    for gid in ramps:
        if gid not in known:
            raise InvalidInputError(f"unknown generator {gid!r} in sweep")
    return tuple(g.with_ramps(float(ramps[g.id])) if g.id in ramps else g for g in generators)


def build_sweep(spec: SweepSpec, generators, network) -> list[SweepPoint]:
    """Expand a sweep into fully specified points sharing the same scenario seeds."""
    seeds = [(spec.base_seed, i) for i in range(spec.scenario_count)]
    base = _apply_ramps(tuple(generators), spec.fixed)
    points = []
    for n, v in enumerate(spec.grid):
        gens, net, sigma = base, network, None
        if spec.kind == "ramp_path":
            label = str(v.get("label", chr(ord("A") + n)))
            gens = _apply_ramps(base, v["ramps"])
        elif spec.kind == "revelation":
            if spec.target not in {g.id for g in base}:
                raise InvalidInputError(f"unknown generator {spec.target!r} in revelation sweep")
            label = f"{spec.target}={_fmt_value(v)}"
            gens = tuple(g.with_revealed(float(v)) if g.id == spec.target else g for g in base)
        elif spec.kind == "sigma":
            label = f"sigma={_fmt_value(v)}"
            sigma = float(v)
        else:
            line = int(spec.target)
            if not 0 <= 2 * line < network.num_rows:
                raise InvalidInputError(f"line {line} does not exist")
            label = f"L{line}={_fmt_value(v)}"
            net = network.with_line_limit(line, NO_LIMIT if v is None else float(v))
        points.append(SweepPoint(label, v, gens, net, sigma, list(seeds)))
    return points


def default_ramp_path(low: float = 20.0, high: float = 100.0, points: int = 8,
                      generators=("G2", "G3"), capacity_scale: float | None = None) -> list:
    """Monotone path A, B, ... from tight to loose ramp limits.

    ``capacity_scale`` appends a final point where the swept units can ramp
    over their whole capacity.
    """
    grid = []
    for k, r in enumerate(np.linspace(low, high, points)):
        grid.append({"label": chr(ord("A") + k), "ramps": {g: float(r) for g in generators}})
    if capacity_scale is not None:
        grid.append({"label": chr(ord("A") + points - 1) + "+",
                     "ramps": {g: float(capacity_scale) for g in generators}})
    return grid
