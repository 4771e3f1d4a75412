"""Rolling-window economic dispatch over a DC network.

At each time ``t`` a look-ahead window ``t .. t+W-1`` is solved against the
demand forecasts available at ``t``; only the first (binding) interval is
executed.  Every window's full primal/dual record is kept, because the
pricing policies need both the binding duals and the advisory values of the
later intervals.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, SolverError
from .network import Network
from .optimizer import DEFAULT_TOL, ConvexProgram, KKTResiduals, solve

SHRINK = "shrink_window"
HOLD = "hold_forecast"


@dataclass(frozen=True)
class GeneratorSpec:
    """One generating unit.

    ``revealed_ramp_*`` are the limits the unit reports to the market; when
    set they replace the true limits in clearing, pricing and the boundary
    constraints.  Infinite ramp limits mean "no ramp constraint".
    """

    id: str
    bus: int
    marginal_cost: float
    capacity: float
    ramp_up: float = np.inf
    ramp_down: float | None = None
    quadratic_cost: float = 0.0
    revealed_ramp_up: float | None = None
    revealed_ramp_down: float | None = None

    def __post_init__(self):
        if self.ramp_down is None:
            object.__setattr__(self, "ramp_down", self.ramp_up)
        if self.capacity < 0:
            raise InvalidInputError(f"{self.id}: capacity must be >= 0")
        if self.quadratic_cost < 0:
            raise InvalidInputError(f"{self.id}: quadratic cost must be >= 0")
        for name in ("ramp_up", "ramp_down", "revealed_ramp_up", "revealed_ramp_down"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise InvalidInputError(f"{self.id}: {name} must be >= 0")

    @property
    def market_ramp_up(self) -> float:
        return self.ramp_up if self.revealed_ramp_up is None else self.revealed_ramp_up

    @property
    def market_ramp_down(self) -> float:
        return self.ramp_down if self.revealed_ramp_down is None else self.revealed_ramp_down

    def ramps(self, basis: str = "revealed") -> tuple[float, float]:
        if basis == "true":
            return self.ramp_up, self.ramp_down
        return self.market_ramp_up, self.market_ramp_down

    def cost(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        return self.marginal_cost * g + self.quadratic_cost * g * g

    def with_ramps(self, up, down=None) -> "GeneratorSpec":
        return replace(self, ramp_up=up, ramp_down=up if down is None else down)

    def with_revealed(self, up, down=None) -> "GeneratorSpec":
        return replace(self, revealed_ramp_up=up, revealed_ramp_down=up if down is None else down)


@dataclass(frozen=True)
class RollingConfig:
    horizon: int
    window: int
    initial_dispatch: np.ndarray | None = None
    end_of_horizon: str = SHRINK
    slack_enabled: bool = False
    slack_penalty: float = 10_000.0
    tolerance: float = DEFAULT_TOL

    def __post_init__(self):
        if self.horizon < 1 or not 1 <= self.window <= self.horizon:
            raise InvalidInputError(f"need 1 <= W <= T, got T={self.horizon}, W={self.window}")
        if self.end_of_horizon not in (SHRINK, HOLD):
            raise InvalidInputError(f"unknown end_of_horizon rule {self.end_of_horizon!r}")
        if self.initial_dispatch is not None:
            object.__setattr__(self, "initial_dispatch",
                               np.asarray(self.initial_dispatch, dtype=float).reshape(-1))


def check_generators(generators: Sequence[GeneratorSpec], network: Network):
    if not generators:
        raise InvalidInputError("at least one generator is required")
    ids = [g.id for g in generators]
    if len(set(ids)) != len(ids):
        raise InvalidInputError("generator ids must be unique")
    for g in generators:
        if not 0 <= g.bus < network.num_buses:
            raise InvalidInputError(f"{g.id}: bus index {g.bus} outside network")


# ----------------------------------------------------------------------------
# program assembly


@dataclass
class _Layout:
    L: int
    N: int
    M: int
    slack: bool
    balance_row: np.ndarray   # (L,) eq row or -1
    line_rows: np.ndarray     # (L, R) ub rows or -1
    up_rows: np.ndarray       # (L-1, N) ub rows or -1
    dn_rows: np.ndarray
    bup_rows: np.ndarray      # (N,) boundary rows or -1
    bdn_rows: np.ndarray

    def g(self, k, i):
        return k * self.N + i

    @property
    def n_gen_vars(self):
        return self.L * self.N

    def shed(self, k, m):
        return self.n_gen_vars + k * self.M + m

    def spill(self, k, m):
        return self.n_gen_vars + self.L * self.M + k * self.M + m


def build_program(generators, network: Network, demand, prev_dispatch=None, *,
                  slack_penalty: float | None = None, extra_cost=None, ramp_basis="revealed",
                  name="window"):
    """Assemble the multi-interval dispatch program.

    ``demand`` is a length-L sequence of per-bus vectors; an entry of None
    marks an interval with generation constraints only (no balance or line
    rows), which is how the price-preserving pricing model treats the past.
    ``extra_cost`` (L x N) adds linear terms to individual dispatch variables.
    """
    L, N, M = len(demand), len(generators), network.num_buses
    S, c = network.shift_factors, network.line_limits
    R = network.num_rows
    slack = slack_penalty is not None
    n = L * N + (2 * L * M if slack else 0)
    lay = _Layout(L, N, M, slack, np.full(L, -1), np.full((L, R), -1), np.full((max(L - 1, 0), N), -1),
                  np.full((max(L - 1, 0), N), -1), np.full(N, -1), np.full(N, -1))

    cost = np.zeros(n)
    quad = np.zeros(n)
    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    mc = np.array([g.marginal_cost for g in generators], dtype=float)
    qc = np.array([g.quadratic_cost for g in generators], dtype=float)
    cap = np.array([g.capacity for g in generators], dtype=float)
    ramps = np.array([g.ramps(ramp_basis) for g in generators], dtype=float).reshape(N, 2)
    incidence = bus_incidence(generators, network)

    for k in range(L):
        cost[k * N:(k + 1) * N] = mc
        quad[k * N:(k + 1) * N] = qc
        upper[k * N:(k + 1) * N] = cap
    if extra_cost is not None:
        cost[:L * N] += np.asarray(extra_cost, dtype=float).reshape(L * N)
    if slack:
        cost[L * N:] = slack_penalty

    eq_rows, eq_rhs, eq_lab = [], [], []
    ub_rows, ub_rhs, ub_lab = [], [], []

    for k, d in enumerate(demand):
        if d is None:
            if slack:
                upper[lay.shed(k, 0):lay.shed(k, 0) + M] = 0.0
                upper[lay.spill(k, 0):lay.spill(k, 0) + M] = 0.0
            continue
        d = np.asarray(d, dtype=float).reshape(M)
        inj = np.zeros((M, n))          # bus injection as a function of x
        inj[:, k * N:(k + 1) * N] = incidence
        if slack:
            inj[np.arange(M), [lay.shed(k, m) for m in range(M)]] = 1.0
            inj[np.arange(M), [lay.spill(k, m) for m in range(M)]] = -1.0
        lay.balance_row[k] = len(eq_rows)
        eq_rows.append(inj.sum(axis=0))
        eq_rhs.append(d.sum())
        eq_lab.append(f"balance[{k}]")
        if R:
            lay.line_rows[k] = np.arange(len(ub_rows), len(ub_rows) + R)
            ub_rows.extend(S @ inj)
            ub_rhs.extend(c + S @ d)
            ub_lab.extend(f"line[{k},{r}]" for r in range(R))

    for k in range(L - 1):
        for i in range(N):
            up, dn = ramps[i]
            if np.isfinite(up):
                row = np.zeros(n)
                row[lay.g(k + 1, i)], row[lay.g(k, i)] = 1.0, -1.0
                lay.up_rows[k, i] = len(ub_rows)
                ub_rows.append(row), ub_rhs.append(up), ub_lab.append(f"ramp_up[{k},{generators[i].id}]")
            if np.isfinite(dn):
                row = np.zeros(n)
                row[lay.g(k, i)], row[lay.g(k + 1, i)] = 1.0, -1.0
                lay.dn_rows[k, i] = len(ub_rows)
                ub_rows.append(row), ub_rhs.append(dn), ub_lab.append(f"ramp_dn[{k},{generators[i].id}]")

    if prev_dispatch is not None:
        prev = np.asarray(prev_dispatch, dtype=float).reshape(N)
        for i in range(N):
            up, dn = ramps[i]
            if np.isfinite(up):
                row = np.zeros(n)
                row[lay.g(0, i)] = 1.0
                lay.bup_rows[i] = len(ub_rows)
                ub_rows.append(row), ub_rhs.append(up + prev[i]), ub_lab.append(f"boundary_up[{generators[i].id}]")
            if np.isfinite(dn):
                row = np.zeros(n)
                row[lay.g(0, i)] = -1.0
                lay.bdn_rows[i] = len(ub_rows)
                ub_rows.append(row), ub_rhs.append(dn - prev[i]), ub_lab.append(f"boundary_dn[{generators[i].id}]")

    var_labels = [f"g[{k},{generators[i].id}]" for k in range(L) for i in range(N)]
    if slack:
        var_labels += [f"shed[{k},{m}]" for k in range(L) for m in range(M)]
        var_labels += [f"spill[{k},{m}]" for k in range(L) for m in range(M)]
    prog = ConvexProgram(cost, quad,
                         np.array(eq_rows).reshape(-1, n), np.array(eq_rhs),
                         np.array(ub_rows).reshape(-1, n), np.array(ub_rhs),
                         lower, upper, eq_lab, ub_lab, var_labels, name)
    return prog, lay


def _pick(values, rows):
    rows = np.asarray(rows)
    out = np.zeros(rows.shape)
    mask = rows >= 0
    out[mask] = values[rows[mask]]
    return out


@dataclass
class WindowSolution:
    """Primal/dual record of one look-ahead window.

    Interval-indexed arrays have ``L`` rows (window length).  ``mu_up[k]``
    prices the ramp constraint between window intervals k and k+1;
    ``mu_up_boundary`` prices the tie to the previous realized dispatch.
    """

    t: int
    dispatch: np.ndarray
    bus_generation: np.ndarray
    shed: np.ndarray
    spill: np.ndarray
    forecasts: np.ndarray
    lam: np.ndarray
    phi: np.ndarray
    mu_up: np.ndarray
    mu_dn: np.ndarray
    mu_up_boundary: np.ndarray
    mu_dn_boundary: np.ndarray
    rho_up: np.ndarray
    rho_dn: np.ndarray
    objective: float
    bus_prices: np.ndarray
    degenerate: bool = False
    kkt: KKTResiduals | None = None

    @property
    def length(self) -> int:
        return self.dispatch.shape[0]

    @property
    def intervals(self) -> np.ndarray:
        return np.arange(self.t, self.t + self.length)

    @property
    def slack_used(self) -> bool:
        return bool(np.any(self.shed > 1e-9) or np.any(self.spill > 1e-9))


def unpack(sol, lay: _Layout, network: Network, generators, t: int, demand) -> WindowSolution:
    L, N, M = lay.L, lay.N, lay.M
    x = sol.x
    g = x[:L * N].reshape(L, N)
    if lay.slack:
        shed = x[L * N:L * N + L * M].reshape(L, M)
        spill = x[L * N + L * M:].reshape(L, M)
    else:
        shed = np.zeros((L, M))
        spill = np.zeros((L, M))
    lam = np.where(lay.balance_row >= 0, _pick(sol.eq_duals, lay.balance_row), np.nan)
    phi = _pick(sol.ineq_duals, lay.line_rows) if network.num_rows else np.zeros((L, 0))
    prices = lam[:, None] - phi @ network.shift_factors
    fc = np.array([np.full(M, np.nan) if d is None else np.asarray(d, float) for d in demand])
    return WindowSolution(
        t=t, dispatch=g, bus_generation=g @ bus_incidence(generators, network).T,
        shed=shed, spill=spill, forecasts=fc, lam=lam, phi=phi,
        mu_up=_pick(sol.ineq_duals, lay.up_rows), mu_dn=_pick(sol.ineq_duals, lay.dn_rows),
        mu_up_boundary=_pick(sol.ineq_duals, lay.bup_rows), mu_dn_boundary=_pick(sol.ineq_duals, lay.bdn_rows),
        rho_up=sol.upper_duals[:L * N].reshape(L, N), rho_dn=sol.lower_duals[:L * N].reshape(L, N),
        objective=sol.objective, bus_prices=prices, degenerate=sol.degenerate, kkt=sol.kkt)


def solve_window(t: int, prev_dispatch, forecasts, network: Network,
                 generators: Sequence[GeneratorSpec], config: RollingConfig) -> WindowSolution:
    """Solve the look-ahead dispatch whose binding interval is ``t`` (1-based).

    ``prev_dispatch`` None relaxes the boundary ramp constraints.
    """
    forecasts = np.atleast_2d(np.asarray(forecasts, dtype=float))
    if forecasts.ndim != 2 or forecasts.shape[1] != network.num_buses or forecasts.shape[0] < 1:
        raise InvalidInputError(f"forecasts must be (L x {network.num_buses}), got {forecasts.shape}")
    if np.any(~np.isfinite(forecasts)):
        raise InvalidInputError(f"window at t={t} has missing forecasts")
    prog, lay = build_program(generators, network, list(forecasts), prev_dispatch,
                              slack_penalty=config.slack_penalty if config.slack_enabled else None,
                              name=f"window t={t}")
    try:
        sol = solve(prog, config.tolerance)
    except SolverError as exc:
        raise exc.with_context(t=t)
    return unpack(sol, lay, network, generators, t, list(forecasts))


def bus_incidence(generators, network) -> np.ndarray:
    """(M x N) 0/1 matrix mapping generator outputs to bus generation."""
    inc = np.zeros((network.num_buses, len(generators)))
    for i, g in enumerate(generators):
        inc[g.bus, i] = 1.0
    return inc


# ----------------------------------------------------------------------------
# trajectories


@dataclass
class AdvisoryEntry:
    window_t: int
    dispatch: np.ndarray     # (N,) advisory dispatch for the target interval
    bus_price: np.ndarray    # (M,) advisory LMP
    demand: np.ndarray       # (M,) forecast used for the target interval


@dataclass
class RollingTrajectory:
    """Realized outcome of a rolling (or one-shot) dispatch run.

    ``pricing_index[t-1] = (w, k)``: binding interval t is priced by offset k
    of ``windows[w]``.  Rolling runs use (t-1, 0); a one-shot run has one
    window and uses (0, t-1).
    """

    generators: tuple
    network: Network
    config: RollingConfig
    actual_demand: np.ndarray
    windows: list
    pricing_index: list
    kind: str = "rolling"
    ledger: dict = field(default_factory=dict)

    def __post_init__(self):
        T, N = len(self.pricing_index), len(self.generators)
        M, R = self.network.num_buses, self.network.num_rows
        self.dispatch = np.zeros((T, N))
        self.bus_generation = np.zeros((T, M))
        self.shed = np.zeros((T, M))
        self.spill = np.zeros((T, M))
        self.lam = np.zeros(T)
        self.phi = np.zeros((T, R))
        self.bus_prices = np.zeros((T, M))
        self.mu_up_prev = np.zeros((T, N))
        self.mu_dn_prev = np.zeros((T, N))
        self.mu_up_next = np.zeros((T, N))
        self.mu_dn_next = np.zeros((T, N))
        self.degenerate = np.zeros(T, dtype=bool)
        for t, (w, k) in enumerate(self.pricing_index):
            win = self.windows[w]
            self.dispatch[t] = win.dispatch[k]
            self.bus_generation[t] = win.bus_generation[k]
            self.shed[t], self.spill[t] = win.shed[k], win.spill[k]
            self.lam[t] = win.lam[k]
            self.phi[t] = win.phi[k]
            self.bus_prices[t] = win.bus_prices[k]
            if k == 0:
                self.mu_up_prev[t] = win.mu_up_boundary
                self.mu_dn_prev[t] = win.mu_dn_boundary
            else:
                self.mu_up_prev[t] = win.mu_up[k - 1]
                self.mu_dn_prev[t] = win.mu_dn[k - 1]
            if k < win.length - 1:
                self.mu_up_next[t] = win.mu_up[k]
                self.mu_dn_next[t] = win.mu_dn[k]
            self.degenerate[t] = win.degenerate

    @property
    def horizon(self) -> int:
        return len(self.pricing_index)

    @property
    def slack_used(self) -> bool:
        return bool(np.any(self.shed > 1e-9) or np.any(self.spill > 1e-9))

    @property
    def net_slack(self) -> np.ndarray:
        return self.shed - self.spill

    def generation_cost(self) -> np.ndarray:
        """True generation cost per generator over the horizon."""
        return np.array([g.cost(self.dispatch[:, i]).sum() for i, g in enumerate(self.generators)])

    def total_cost(self) -> float:
        pen = self.config.slack_penalty if self.slack_used else 0.0
        return float(self.generation_cost().sum() + pen * (self.shed.sum() + self.spill.sum()))

    def boundary_prices(self):
        """Boundary ramping prices (mu_down, mu_up) that tie t-1 to t."""
        return self.mu_dn_prev, self.mu_up_prev

    def to_rows(self):
        """One row per generator-interval, for CSV output."""
        rows = []
        for t in range(self.horizon):
            for i, g in enumerate(self.generators):
                rows.append({
                    "t": t + 1, "bus": self.network.bus_labels[g.bus], "id": g.id,
                    "g": self.dispatch[t, i], "lambda": self.lam[t],
                    "bus_price": self.bus_prices[t, g.bus],
                    "mu_up": self.mu_up_prev[t, i], "mu_down": self.mu_dn_prev[t, i],
                    "slack": int(self.slack_used), "degenerate": int(self.degenerate[t]),
                })
        return rows


def _window_demand(scenario, t, L, config):
    return scenario.window_forecast(t, L, hold=config.end_of_horizon == HOLD)


def _initial(config, generators):
    if config.initial_dispatch is None:
        return None
    g0 = config.initial_dispatch
    if g0.shape != (len(generators),):
        raise InvalidInputError(f"initial_dispatch needs {len(generators)} entries")
    for value, gen in zip(g0, generators):
        if not -1e-9 <= value <= gen.capacity + 1e-9:
            raise InvalidInputError(f"{gen.id}: initial dispatch {value} outside [0, capacity]")
    return g0


def run_rolling(scenario, network: Network, generators: Sequence[GeneratorSpec],
                config: RollingConfig) -> RollingTrajectory:
    """Rolling-window dispatch over ``config.horizon`` intervals."""
    generators = tuple(generators)
    check_generators(generators, network)
    T, W = config.horizon, config.window
    actual = np.asarray(scenario.actual, dtype=float)
    if actual.shape[0] < T:
        raise InvalidInputError(f"scenario covers {actual.shape[0]} intervals, horizon is {T}")
    prev = _initial(config, generators)
    windows = []
    ledger = {t: [] for t in range(1, T + 1)}
    for t in range(1, T + 1):
        L = W if config.end_of_horizon == HOLD else min(W, T - t + 1)
        d_hat = _window_demand(scenario, t, L, config)
        win = solve_window(t, prev, d_hat, network, generators, config)
        windows.append(win)
        prev = win.dispatch[0]
        for k in range(win.length):
            target = t + k
            if target > T:
                break
            ledger[target].append(AdvisoryEntry(t, win.dispatch[k].copy(), win.bus_prices[k].copy(),
                                                win.forecasts[k].copy()))
    return RollingTrajectory(generators, network, config, actual[:T].copy(), windows,
                             [(t, 0) for t in range(T)], "rolling", ledger)


def one_shot(actual_demand, network: Network, generators: Sequence[GeneratorSpec],
             config: RollingConfig | None = None) -> RollingTrajectory:
    """Single window ``W = T`` with perfect forecasts."""
    generators = tuple(generators)
    check_generators(generators, network)
    actual = np.atleast_2d(np.asarray(actual_demand, dtype=float))
    if actual.shape[1] != network.num_buses and actual.shape[0] == network.num_buses:
        actual = actual.T
    T = actual.shape[0]
    if config is None:
        config = RollingConfig(T, T)
    else:
        config = replace(config, horizon=T, window=T)
    prev = _initial(config, generators)
    win = solve_window(1, prev, actual, network, generators, config)
    ledger = {t + 1: [AdvisoryEntry(1, win.dispatch[t].copy(), win.bus_prices[t].copy(), actual[t].copy())]
              for t in range(T)}
    return RollingTrajectory(generators, network, config, actual.copy(), [win],
                             [(0, t) for t in range(T)], "one_shot", ledger)
