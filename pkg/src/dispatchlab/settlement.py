"""Money flows and incentive metrics for a priced dispatch trajectory.

Lost opportunity cost (LOC) of a generator at prices ``pi`` and dispatch
``g`` is the best self-scheduled profit at ``pi`` minus the profit of ``g``
at ``pi``.  The self-schedule respects capacity and ramp limits but has no
tie to any initial output.

Emergency slack injections, when enabled and used, are settled at the
demand price of their bus and reported as ``slack_payment``; they count on
the supply side of every identity below.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dispatch import GeneratorSpec, RollingTrajectory
from .errors import InvalidInputError, SolverError
from .optimizer import DEFAULT_TOL, ConvexProgram, solve
from .pricing import (PriceSchedule, lmp_prices, mlmp_demand_payment, mlmp_revenue, pre_binding_dispatch,
                      tlmp_prices)

# relative tolerance of settlement identities
SETTLEMENT_TOL = 1e-6


def self_schedule(prices, generator: GeneratorSpec, basis: str = "revealed",
                  offset=None, tolerance: float = DEFAULT_TOL):
    """Profit-maximizing schedule at fixed prices.

    Maximizes ``sum(prices * (p - offset)) - cost(p)`` over capacity and ramp
    limits.  Returns (optimal profit, schedule).
    """
    prices = np.asarray(prices, dtype=float).reshape(-1)
    T = prices.shape[0]
    up, dn = generator.ramps(basis)
    rows, rhs, labels = [], [], []
    for t in range(T - 1):
        if np.isfinite(up):
            row = np.zeros(T)
            row[t + 1], row[t] = 1.0, -1.0
            rows.append(row), rhs.append(up), labels.append(f"ramp_up[{t}]")
        if np.isfinite(dn):
            row = np.zeros(T)
            row[t], row[t + 1] = 1.0, -1.0
            rows.append(row), rhs.append(dn), labels.append(f"ramp_dn[{t}]")
    prog = ConvexProgram(
        cost_linear=generator.marginal_cost - prices,
        cost_quadratic=np.full(T, generator.quadratic_cost),
        A_ub=np.array(rows).reshape(-1, T), b_ub=np.array(rhs),
        lower=np.zeros(T), upper=np.full(T, generator.capacity),
        ub_labels=labels, name=f"self-schedule {generator.id}")
    try:
        sol = solve(prog, tolerance)
    except SolverError as exc:
        raise exc.with_context(generator=generator.id)
    shift = 0.0 if offset is None else float(np.dot(prices, np.asarray(offset, dtype=float)))
    return -sol.objective - shift, sol.x


def dispatch_profit(prices, dispatch, generator: GeneratorSpec) -> float:
    prices = np.asarray(prices, dtype=float)
    dispatch = np.asarray(dispatch, dtype=float)
    return float(prices @ dispatch - generator.cost(dispatch).sum())


def loc(prices, dispatch, generator: GeneratorSpec, basis: str = "revealed",
        tolerance: float = DEFAULT_TOL) -> float:
    prices = np.asarray(prices, dtype=float).reshape(-1)
    dispatch = np.asarray(dispatch, dtype=float).reshape(-1)
    if prices.shape != dispatch.shape:
        raise InvalidInputError("prices and dispatch differ in length")
    best, _ = self_schedule(prices, generator, basis, tolerance=tolerance)
    return best - dispatch_profit(prices, dispatch, generator)


def loc_mlmp(pre_binding, lmp, dispatch, generator: GeneratorSpec, basis: str = "revealed",
             tolerance: float = DEFAULT_TOL) -> float:
    """LOC under multi-settlement pricing, computed on the deviation-priced problem.

    The generator only controls its binding output, settled at the binding
    price against the pre-binding quantity ``pre_binding``.
    """
    lmp = np.asarray(lmp, dtype=float).reshape(-1)
    pre_binding = np.asarray(pre_binding, dtype=float).reshape(-1)
    dispatch = np.asarray(dispatch, dtype=float).reshape(-1)
    best, _ = self_schedule(lmp, generator, basis, offset=pre_binding, tolerance=tolerance)
    surplus = float(lmp @ (dispatch - pre_binding) - generator.cost(dispatch).sum())
    return best - surplus


class SurplusSplit(NamedTuple):
    merchandising_surplus: float
    congestion_rent: float
    ramping_surplus: float


class RevenueGap(NamedTuple):
    direct: float
    formula: float


def congestion_rent(traj: RollingTrajectory) -> float:
    return float((traj.phi @ traj.network.line_limits).sum()) if traj.network.num_rows else 0.0


def ramping_surplus(traj: RollingTrajectory) -> float:
    """Sum of ramp duals times ramp limits over the ties into each binding interval."""
    total = 0.0
    for i, g in enumerate(traj.generators):
        up, dn = g.ramps("revealed")
        if np.isfinite(up):
            total += up * traj.mu_up_prev[:, i].sum()
        if np.isfinite(dn):
            total += dn * traj.mu_dn_prev[:, i].sum()
    return float(total)


def generator_revenues(traj: RollingTrajectory, schedule: PriceSchedule) -> np.ndarray:
    if schedule.policy == "MLMP":
        return np.array([sum(mlmp_revenue(traj.ledger, i, g.bus, t) for t in range(1, traj.horizon + 1))
                         for i, g in enumerate(traj.generators)])
    return (schedule.generator_price * traj.dispatch).sum(axis=0)


def demand_payment(traj: RollingTrajectory, schedule: PriceSchedule) -> float:
    if schedule.policy == "MLMP":
        return float(sum(mlmp_demand_payment(traj.ledger, m, t)
                         for t in range(1, traj.horizon + 1) for m in range(traj.network.num_buses)))
    return float((schedule.demand_price * traj.actual_demand).sum())


def slack_payment(traj: RollingTrajectory, schedule: PriceSchedule) -> float:
    return float((schedule.demand_price * traj.net_slack).sum())


def surplus_decomposition(traj: RollingTrajectory, schedule: PriceSchedule) -> SurplusSplit:
    if schedule.demand_price.shape != traj.actual_demand.shape:
        raise InvalidInputError("price schedule and demand differ in shape")
    ms = (demand_payment(traj, schedule) - generator_revenues(traj, schedule).sum()
          - slack_payment(traj, schedule))
    return SurplusSplit(float(ms), congestion_rent(traj), ramping_surplus(traj))


def revenue_gap(traj: RollingTrajectory, generator_index: int, tlmp: PriceSchedule | None = None,
                lmp: PriceSchedule | None = None, tol: float = 1e-9) -> RevenueGap:
    """LMP revenue minus TLMP revenue of one generator on a one-shot run.

    Raises when the initial boundary carries a ramp dual, since the
    dual-sum formula assumes relaxed end conditions.
    """
    i = generator_index
    if traj.kind != "one_shot":
        raise InvalidInputError("revenue gap is defined for one-shot trajectories")
    b_up, b_dn = traj.mu_up_prev[0, i], traj.mu_dn_prev[0, i]
    if abs(b_up) > tol or abs(b_dn) > tol:
        raise InvalidInputError(f"boundary ramp duals are nonzero ({b_up:g}, {b_dn:g})")
    lmp = lmp or lmp_prices(traj)
    tlmp = tlmp or tlmp_prices(traj)
    g = traj.dispatch[:, i]
    direct = float(lmp.generator_price[:, i] @ g - tlmp.generator_price[:, i] @ g)
    up, dn = traj.generators[i].ramps("revealed")
    win = traj.windows[0]
    formula = 0.0
    if np.isfinite(up):
        formula += up * win.mu_up[:, i].sum()
    if np.isfinite(dn):
        formula += dn * win.mu_dn[:, i].sum()
    return RevenueGap(direct, float(formula))


# ----------------------------------------------------------------------------
# reports


@dataclass
class SettlementReport:
    policy: str
    generator_ids: tuple
    revenue: np.ndarray
    loc: np.ndarray
    true_cost: np.ndarray
    demand_payment: float
    slack_payment: float
    merchandising_surplus: float
    congestion_rent: float
    ramping_surplus: float
    exclude_congestion_rent: bool = False
    loc_identity: np.ndarray | None = None   # MLMP: LOC under R-LMP for the identity check
    degenerate: bool = False
    slack_used: bool = False
    extras: dict = field(default_factory=dict)

    @property
    def profit(self) -> np.ndarray:
        return self.revenue + self.loc - self.true_cost

    @property
    def generator_payment(self) -> float:
        return float(self.revenue.sum() + self.slack_payment)

    @property
    def total_loc(self) -> float:
        return float(self.loc.sum())

    @property
    def iso_surplus(self) -> float:
        return self.demand_payment - self.generator_payment - self.total_loc

    @property
    def adjusted_consumer_payment(self) -> float:
        return consumer_payment(self.demand_payment, self.iso_surplus, self.congestion_rent,
                                self.exclude_congestion_rent)

    @property
    def total_profit(self) -> float:
        return float(self.profit.sum())

    @property
    def total_cost(self) -> float:
        return float(self.true_cost.sum())

    def summary_row(self) -> dict:
        return {
            "policy": self.policy,
            "demand_payment": self.demand_payment,
            "generator_payment": self.generator_payment,
            "total_loc": self.total_loc,
            "merchandising_surplus": self.merchandising_surplus,
            "congestion_rent": self.congestion_rent,
            "ramping_surplus": self.ramping_surplus,
            "iso_surplus": self.iso_surplus,
            "consumer_payment": self.adjusted_consumer_payment,
            "generation_cost": self.total_cost,
            "total_profit": self.total_profit,
        }


def consumer_payment(demand_paid: float, iso_surplus: float, rent: float, exclude_congestion_rent: bool) -> float:
    """Demand payment net of the ISO surplus rebated to demand.

    With ``exclude_congestion_rent`` the congestion rent stays with the ISO
    (for transmission rights holders) instead of being rebated.
    """
    return demand_paid - (iso_surplus - (rent if exclude_congestion_rent else 0.0))


def consumer_and_profit(report: SettlementReport, exclude_congestion_rent: bool) -> dict:
    pay = consumer_payment(report.demand_payment, report.iso_surplus, report.congestion_rent,
                           exclude_congestion_rent)
    return {"consumer_payment": pay, "profit": report.profit.copy(), "total_profit": report.total_profit}


def settle(traj: RollingTrajectory, schedule: PriceSchedule, *, loc_basis: str = "revealed",
           exclude_congestion_rent: bool = False, tolerance: float = DEFAULT_TOL) -> SettlementReport:
    gens = traj.generators
    revenue = generator_revenues(traj, schedule)
    true_cost = traj.generation_cost()
    if schedule.policy == "MLMP":
        lmp = schedule.generator_price
        pre = np.array([[pre_binding_dispatch(traj.ledger, i, t) for i in range(len(gens))]
                        for t in range(1, traj.horizon + 1)])
        locs = np.array([loc_mlmp(pre[:, i], lmp[:, i], traj.dispatch[:, i], g, loc_basis, tolerance)
                         for i, g in enumerate(gens)])
        identity = np.array([loc(lmp[:, i], traj.dispatch[:, i], g, loc_basis, tolerance)
                             for i, g in enumerate(gens)])
    else:
        locs = np.array([loc(schedule.generator_price[:, i], traj.dispatch[:, i], g, loc_basis, tolerance)
                         for i, g in enumerate(gens)])
        identity = None
    split = surplus_decomposition(traj, schedule)
    deg = schedule.degenerate
    return SettlementReport(
        policy=schedule.policy, generator_ids=tuple(g.id for g in gens), revenue=revenue, loc=locs,
        true_cost=true_cost, demand_payment=demand_payment(traj, schedule),
        slack_payment=slack_payment(traj, schedule), merchandising_surplus=split.merchandising_surplus,
        congestion_rent=split.congestion_rent, ramping_surplus=split.ramping_surplus,
        exclude_congestion_rent=exclude_congestion_rent, loc_identity=identity,
        degenerate=bool(deg is not None and np.any(deg)), slack_used=traj.slack_used)


# ----------------------------------------------------------------------------
# volatility


class Volatility(NamedTuple):
    hourly: np.ndarray      # (T,) normalized std, NaN where the mean is ~0
    average: float          # mean over hours with a defined value
    flagged: np.ndarray     # (T,) True where the division guard fired


def price_volatility(prices, eps: float = 1e-9) -> Volatility:
    """Normalized price dispersion across scenarios.

    ``prices`` is (scenarios, T) or (scenarios, T, K) for K price series
    (buses, or demand plus generator prices); series are normalized one by
    one and then averaged.  Uses the population standard deviation.  A
    series whose mean is within ``eps`` of zero is left out of its hour and
    the hour is flagged; an hour with no usable series is NaN.
    """
    p = np.asarray(prices, dtype=float)
    if p.ndim == 2:
        p = p[:, :, None]
    if p.ndim != 3 or p.shape[0] < 2:
        raise InvalidInputError("price volatility needs at least two scenarios")
    mean = p.mean(axis=0)
    std = p.std(axis=0)
    small = np.abs(mean) <= eps
    ratio = std / np.where(small, 1.0, np.abs(mean))
    defined = ~small
    count = defined.sum(axis=1)
    hourly = np.full(p.shape[1], np.nan)
    hourly[count > 0] = (np.where(defined, ratio, 0.0).sum(axis=1)[count > 0] / count[count > 0])
    flagged = small.any(axis=1)
    avg = float(np.nanmean(hourly)) if np.any(count > 0) else float("nan")
    return Volatility(hourly, avg, flagged)


def policy_price_series(schedule: PriceSchedule) -> np.ndarray:
    """(T, K) series entering the volatility metric for one run."""
    if schedule.policy == "TLMP":
        return np.hstack([schedule.demand_price, schedule.generator_price])
    return schedule.demand_price
