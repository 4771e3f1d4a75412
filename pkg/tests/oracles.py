"""Independent reference solutions for the test suite.

Every program here is written directly in cvxpy and solved with the
CLARABEL interior-point solver, so nothing is shared with the package's
HiGHS/cvxopt path.  Interior-point duals are accurate to roughly 1e-7, so
comparisons against these oracles use tolerances of that order.
"""
from __future__ import annotations

import cvxpy as cp
import numpy as np

from dispatchlab.dispatch import GeneratorSpec
from dispatchlab.network import Network

SOLVER = "CLARABEL"

# criterion number -> (passed, detail); filled by test_acceptance, printed by conftest
ACCEPTANCE: dict = {}


def _solve(problem):
    problem.solve(solver=SOLVER)
    if problem.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"oracle failed: {problem.status}")
    return problem.value


def window(generators, network: Network, demand, prev=None, extra_cost=None, past=0, past_prices=None):
    """Look-ahead dispatch LP with optional past intervals that have no balance rows.

    ``demand`` holds one bus-demand row per window interval.  ``past`` extra
    intervals precede the window; generator i at past interval k earns
    ``past_prices[k, bus_i]``.  Returns a dict with dispatch ``g`` (all
    intervals), the balance duals ``lam``, line duals ``phi`` and the bus
    prices of the window intervals.
    """
    demand = np.atleast_2d(np.asarray(demand, dtype=float))
    L, M = demand.shape
    N = len(generators)
    H = past + L
    S, c = network.shift_factors, network.line_limits
    inc = np.zeros((M, N))
    for i, gen in enumerate(generators):
        inc[gen.bus, i] = 1.0
    g = cp.Variable((H, N))
    cost = 0
    for i, gen in enumerate(generators):
        cost += gen.marginal_cost * cp.sum(g[:, i]) + gen.quadratic_cost * cp.sum_squares(g[:, i])
    if extra_cost is not None:
        cost += cp.sum(cp.multiply(np.asarray(extra_cost, dtype=float), g))
    if past:
        pp = np.asarray(past_prices, dtype=float).reshape(past, M)
        cost -= cp.sum(cp.multiply(pp @ inc, g[:past]))
    cons = [g >= 0]
    caps = np.array([gen.capacity for gen in generators])
    cons.append(g <= np.tile(caps, (H, 1)))
    balance, lines = [], []
    for k in range(L):
        row = g[past + k]
        bal = cp.sum(row) == demand[k].sum()
        balance.append(bal)
        cons.append(bal)
        if S.shape[0]:
            flow = S @ (inc @ row - demand[k]) <= c
            lines.append(flow)
            cons.append(flow)
    for i, gen in enumerate(generators):
        up, dn = gen.market_ramp_up, gen.market_ramp_down
        if H > 1:
            if np.isfinite(up):
                cons.append(g[1:, i] - g[:-1, i] <= up)
            if np.isfinite(dn):
                cons.append(g[:-1, i] - g[1:, i] <= dn)
        if prev is not None:
            if np.isfinite(up):
                cons.append(g[0, i] - prev[i] <= up)
            if np.isfinite(dn):
                cons.append(prev[i] - g[0, i] <= dn)
    prob = cp.Problem(cp.Minimize(cost), cons)
    value = _solve(prob)
    # cvxpy reports equality duals with the opposite sign
    lam = -np.array([float(b.dual_value) for b in balance])
    phi = np.array([np.asarray(f.dual_value, dtype=float) for f in lines]) if lines else np.zeros((L, 0))
    prices = lam[:, None] - phi @ S if S.shape[0] else np.repeat(lam[:, None], M, axis=1)
    return {"g": np.asarray(g.value), "lam": lam, "phi": phi, "prices": prices, "objective": value}


def self_schedule_profit(prices, generator: GeneratorSpec, basis: str = "revealed") -> float:
    """max_p sum(prices * p) - cost(p) over capacity and ramp limits, no initial tie."""
    prices = np.asarray(prices, dtype=float)
    T = prices.shape[0]
    up, dn = generator.ramps(basis)
    p = cp.Variable(T)
    cons = [p >= 0, p <= generator.capacity]
    if T > 1 and np.isfinite(up):
        cons.append(p[1:] - p[:-1] <= up)
    if T > 1 and np.isfinite(dn):
        cons.append(p[:-1] - p[1:] <= dn)
    profit = prices @ p - generator.marginal_cost * cp.sum(p) - generator.quadratic_cost * cp.sum_squares(p)
    return float(_solve(cp.Problem(cp.Maximize(profit), cons)))


def brute_force_self_schedule(prices, capacity, ramp, marginal_cost, grid_step=1.0) -> float:
    """Exhaustive dynamic program over an integer output grid (linear cost only)."""
    prices = np.asarray(prices, dtype=float)
    levels = np.arange(0.0, capacity + grid_step / 2, grid_step)
    best = (prices[0] - marginal_cost) * levels
    for t in range(1, prices.shape[0]):
        reach = np.abs(levels[:, None] - levels[None, :]) <= ramp + 1e-9
        prior = np.where(reach, best[:, None], -np.inf).max(axis=0)
        best = prior + (prices[t] - marginal_cost) * levels
    return float(best.max())


def m1_generators():
    return (GeneratorSpec("G1", 0, 10.0, 200.0, 20.0),
            GeneratorSpec("G2", 0, 30.0, 200.0, 200.0))


M1_DEMAND = np.array([[100.0], [150.0]])


def m2_case():
    net = Network.radial([("1", "2")], "2", [60.0])
    gens = (GeneratorSpec("G1", 0, 10.0, 200.0), GeneratorSpec("G2", 1, 30.0, 200.0))
    return net, gens, np.array([[0.0, 100.0]])
