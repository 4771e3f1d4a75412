"""Price systems derived from a rolling dispatch trajectory.

LMP and TLMP are read off the dispatch duals.  PMP and CMP each solve a
separate pricing program per binding interval.  MLMP settles every interval
once per window that contains it, paying each advisory price on the change
in advisory quantity.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dispatch import RollingTrajectory, build_program, unpack
from .errors import InvalidInputError, SolverError
from .optimizer import solve

POLICIES = ("LMP", "TLMP", "PMP", "CMP", "MLMP")


@dataclass
class PriceSchedule:
    """Per-policy prices over the horizon.

    ``generator_price[t, i]`` is the price paid to generator i (at its own
    bus).  The energy/congestion/ramping split is filled for LMP and TLMP.
    For MLMP the binding prices are the R-LMP values and payments go through
    the advisory ledger instead (see ``mlmp_revenue``).
    """

    policy: str
    demand_price: np.ndarray                 # (T, M)
    generator_price: np.ndarray              # (T, N)
    energy: np.ndarray | None = None         # (T,)
    congestion: np.ndarray | None = None     # (T, M)
    ramping: np.ndarray | None = None        # (T, N)
    degenerate: np.ndarray | None = None     # (T,)
    ledger: dict | None = field(default=None, repr=False)

    @property
    def horizon(self) -> int:
        return self.demand_price.shape[0]

    def to_rows(self, generators, bus_labels):
        rows = []
        for t in range(self.horizon):
            for m, lab in enumerate(bus_labels):
                rows.append({
                    "policy": self.policy, "t": t + 1, "bus": lab, "who": "DEMAND",
                    "price": self.demand_price[t, m],
                    "energy": self.energy[t] if self.energy is not None else "",
                    "congestion": self.congestion[t, m] if self.congestion is not None else "",
                    "ramping": "",
                })
            for i, g in enumerate(generators):
                rows.append({
                    "policy": self.policy, "t": t + 1, "bus": bus_labels[g.bus], "who": g.id,
                    "price": self.generator_price[t, i],
                    "energy": self.energy[t] if self.energy is not None else "",
                    "congestion": self.congestion[t, g.bus] if self.congestion is not None else "",
                    "ramping": self.ramping[t, i] if self.ramping is not None else "",
                })
        return rows


def _gen_buses(traj):
    return np.array([g.bus for g in traj.generators], dtype=int)


def _check_duals(traj):
    if np.any(~np.isfinite(traj.lam)):
        raise InvalidInputError("trajectory is missing balance duals")


def lmp_prices(traj: RollingTrajectory) -> PriceSchedule:
    _check_duals(traj)
    congestion = -(traj.phi @ traj.network.shift_factors)
    demand = traj.lam[:, None] + congestion
    buses = _gen_buses(traj)
    return PriceSchedule("LMP", demand, demand[:, buses].copy(), traj.lam.copy(), congestion,
                         np.zeros((traj.horizon, len(buses))), traj.degenerate.copy())


def tlmp_prices(traj: RollingTrajectory) -> PriceSchedule:
    """Generator-specific prices: bus LMP plus the change in net ramping dual."""
    lmp = lmp_prices(traj)
    dmu_next = traj.mu_up_next - traj.mu_dn_next
    dmu_prev = traj.mu_up_prev - traj.mu_dn_prev
    ramping = dmu_next - dmu_prev
    buses = _gen_buses(traj)
    gen = traj.lam[:, None] + lmp.congestion[:, buses] + ramping
    return PriceSchedule("TLMP", lmp.demand_price, gen, lmp.energy, lmp.congestion, ramping,
                         lmp.degenerate)


def _bus_price(win, k):
    return win.bus_prices[k].copy()


# ----------------------------------------------------------------------------
# price-preserving pricing


def pmp_prices(t: int, past_prices, forecasts, network, generators, config, lookback: int | None = None):
    """Price of binding interval ``t`` under price-preserving pricing.

    Variables cover every interval from the start of the lookback to the end
    of the window.  Past intervals carry generation and ramp constraints and
    earn ``past_prices`` (one bus-price row per past interval, oldest first);
    balance and line rows apply to the window only.  Returns (bus prices,
    degenerate flag).
    """
    forecasts = np.atleast_2d(np.asarray(forecasts, dtype=float))
    past_prices = np.asarray(past_prices, dtype=float).reshape(-1, network.num_buses)
    if past_prices.shape[0] != t - 1:
        raise InvalidInputError(f"PMP at t={t} needs {t - 1} past price rows, got {past_prices.shape[0]}")
    start = 1 if lookback is None else max(1, t - lookback)
    past = past_prices[start - 1:]
    P = past.shape[0]
    buses = np.array([g.bus for g in generators], dtype=int)
    extra = np.zeros((P + forecasts.shape[0], len(generators)))
    extra[:P] = -past[:, buses]
    demand = [None] * P + list(forecasts)
    prev = config.initial_dispatch if start == 1 else None
    prog, lay = build_program(generators, network, demand, prev,
                              slack_penalty=config.slack_penalty if config.slack_enabled else None,
                              extra_cost=extra, name=f"PMP t={t}")
    try:
        sol = solve(prog, config.tolerance)
    except SolverError as exc:
        raise exc.with_context(policy="PMP", t=t)
    win = unpack(sol, lay, network, generators, t, demand)
    return _bus_price(win, P), win.degenerate


def pmp_schedule(traj: RollingTrajectory, lookback: int | None = None) -> PriceSchedule:
    T, M = traj.horizon, traj.network.num_buses
    prices = np.zeros((T, M))
    degenerate = np.zeros(T, dtype=bool)
    if traj.kind != "rolling":
        raise InvalidInputError("PMP is defined on rolling trajectories")
    for t in range(1, T + 1):
        win = traj.windows[t - 1]
        prices[t - 1], degenerate[t - 1] = pmp_prices(t, prices[:t - 1], win.forecasts, traj.network,
                                                      traj.generators, traj.config, lookback)
    return PriceSchedule("PMP", prices, prices[:, _gen_buses(traj)].copy(), degenerate=degenerate)


# ----------------------------------------------------------------------------
# constraint-preserving pricing


def cmp_prices(t: int, traj: RollingTrajectory, forecasts, network, generators, config):
    """Price of binding interval ``t`` under constraint-preserving pricing.

    The window program is re-solved with the dispatch's boundary ramp duals
    charged on the binding-interval output and the boundary tied to the
    realized dispatch at ``t-1``.  Returns (bus prices, degenerate flag).
    """
    forecasts = np.atleast_2d(np.asarray(forecasts, dtype=float))
    adjust = np.zeros((forecasts.shape[0], len(generators)))
    adjust[0] = traj.mu_up_prev[t - 1] - traj.mu_dn_prev[t - 1]
    prev = traj.dispatch[t - 2] if t > 1 else config.initial_dispatch
    prog, lay = build_program(generators, network, list(forecasts), prev,
                              slack_penalty=config.slack_penalty if config.slack_enabled else None,
                              extra_cost=adjust, name=f"CMP t={t}")
    try:
        sol = solve(prog, config.tolerance)
    except SolverError as exc:
        raise exc.with_context(policy="CMP", t=t)
    win = unpack(sol, lay, network, generators, t, list(forecasts))
    return _bus_price(win, 0), win.degenerate


def cmp_schedule(traj: RollingTrajectory) -> PriceSchedule:
    if traj.kind != "rolling":
        raise InvalidInputError("CMP is defined on rolling trajectories")
    T, M = traj.horizon, traj.network.num_buses
    prices = np.zeros((T, M))
    degenerate = np.zeros(T, dtype=bool)
    for t in range(1, T + 1):
        prices[t - 1], degenerate[t - 1] = cmp_prices(t, traj, traj.windows[t - 1].forecasts,
                                                      traj.network, traj.generators, traj.config)
    return PriceSchedule("CMP", prices, prices[:, _gen_buses(traj)].copy(), degenerate=degenerate)


# ----------------------------------------------------------------------------
# multi-settlement


def _telescope(prices, quantities) -> float:
    total, settled = 0.0, 0.0
    for p, q in zip(prices, quantities):
        total += p * (q - settled)
        settled = q
    return total


def mlmp_revenue(ledger: dict, generator_index: int, bus: int, t_star: int) -> float:
    """Deviation-settled revenue of one generator for interval ``t_star``.

    Settlements are taken in window order; the earliest available window
    acts as the first settlement.
    """
    entries = ledger.get(t_star) or []
    if not entries:
        raise InvalidInputError(f"no advisory settlements for interval {t_star}")
    return _telescope([e.bus_price[bus] for e in entries], [e.dispatch[generator_index] for e in entries])


def mlmp_demand_payment(ledger: dict, bus: int, t_star: int) -> float:
    entries = ledger.get(t_star) or []
    if not entries:
        raise InvalidInputError(f"no advisory settlements for interval {t_star}")
    return _telescope([e.bus_price[bus] for e in entries], [e.demand[bus] for e in entries])


def pre_binding_dispatch(ledger: dict, generator_index: int, t_star: int) -> float:
    """Quantity settled before the binding settlement (0 if there was none)."""
    entries = ledger.get(t_star) or []
    if not entries:
        raise InvalidInputError(f"no advisory settlements for interval {t_star}")
    return float(entries[-2].dispatch[generator_index]) if len(entries) > 1 else 0.0


def mlmp_schedule(traj: RollingTrajectory) -> PriceSchedule:
    lmp = lmp_prices(traj)
    return PriceSchedule("MLMP", lmp.demand_price, lmp.generator_price, degenerate=lmp.degenerate,
                         ledger=traj.ledger)


def price_schedules(traj: RollingTrajectory, policies=POLICIES, pmp_lookback: int | None = None) -> dict:
    out = {}
    for p in policies:
        if p == "LMP":
            out[p] = lmp_prices(traj)
        elif p == "TLMP":
            out[p] = tlmp_prices(traj)
        elif p == "PMP":
            out[p] = pmp_schedule(traj, pmp_lookback)
        elif p == "CMP":
            out[p] = cmp_schedule(traj)
        elif p == "MLMP":
            out[p] = mlmp_schedule(traj)
        else:
            raise InvalidInputError(f"unknown policy {p!r}")
    return out
