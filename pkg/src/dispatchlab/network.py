"""DC network model: shift factors, directed line limits and branch flows.

All power quantities are MW over one-hour intervals, so MW and MWh are
numerically interchangeable throughout the package.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .errors import InvalidInputError, UnsupportedTopologyError


@dataclass(frozen=True)
class Network:
    """Shift-factor matrix ``S`` (2B x M) and per-direction limits ``c`` (2B).

    Each physical line contributes two rows, one per flow direction, so a
    symmetric limit is written twice.  ``B = 0`` is the uncongested case.
    """

    shift_factors: np.ndarray
    line_limits: np.ndarray
    bus_labels: tuple = field(default=())

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.shift_factors, dtype=float))
        c = np.asarray(self.line_limits, dtype=float).reshape(-1)
        if S.size == 0:
            ncols = S.shape[1] if S.ndim == 2 and S.shape[1] > 0 else len(self.bus_labels)
            S = np.zeros((0, max(ncols, 1)))
        if S.shape[0] != c.shape[0]:
            raise InvalidInputError(
                f"shift_factors has {S.shape[0]} rows but line_limits has {c.shape[0]} entries")
        if np.any(c < 0):
            raise InvalidInputError("line_limits must be non-negative")
        labels = tuple(self.bus_labels) or tuple(str(m + 1) for m in range(S.shape[1]))
        if len(labels) != S.shape[1]:
            raise InvalidInputError(
                f"{len(labels)} bus labels for a shift-factor matrix with {S.shape[1]} columns")
        S.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "shift_factors", S)
        object.__setattr__(self, "line_limits", c)
        object.__setattr__(self, "bus_labels", labels)

    @property
    def num_buses(self) -> int:
        return self.shift_factors.shape[1]

    @property
    def num_rows(self) -> int:
        """Number of directed line constraints (2B)."""
        return self.shift_factors.shape[0]

    @property
    def congestable(self) -> bool:
        return self.num_rows > 0

    def bus_index(self, label) -> int:
        key = str(label)
        for m, lab in enumerate(self.bus_labels):
            if str(lab) == key:
                return m
        raise InvalidInputError(f"unknown bus {label!r}")

    @classmethod
    def single_bus(cls, label="1") -> "Network":
        return cls(np.zeros((0, 1)), np.zeros(0), (str(label),))

    @classmethod
    def radial(cls, lines, reference_bus, limits, buses=None) -> "Network":
        """Tree network from ``(from, to)`` pairs and one limit per line."""
        buses = list(buses) if buses is not None else _collect_buses(lines, reference_bus)
        S = radial_shift_factors(lines, reference_bus, buses)
        limits = np.asarray(limits, dtype=float).reshape(-1)
        if limits.shape[0] != len(lines):
            raise InvalidInputError(f"{len(lines)} lines but {limits.shape[0]} limits")
        return cls(S, np.repeat(limits, 2), tuple(str(b) for b in buses))

    def with_line_limit(self, line: int, limit: float) -> "Network":
        """Copy with both directions of physical line ``line`` set to ``limit``."""
        c = np.array(self.line_limits)
        c[2 * line: 2 * line + 2] = limit
        return Network(np.array(self.shift_factors), c, self.bus_labels)


@dataclass(frozen=True)
class Injection:
    generation_by_bus: np.ndarray
    demand_by_bus: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.generation_by_bus, dtype=float).reshape(-1)
        d = np.asarray(self.demand_by_bus, dtype=float).reshape(-1)
        if q.shape != d.shape:
            raise InvalidInputError("generation and demand vectors differ in length")
        if np.any(d < 0):
            raise InvalidInputError("demand must be non-negative")
        object.__setattr__(self, "generation_by_bus", q)
        object.__setattr__(self, "demand_by_bus", d)

    @property
    def net(self) -> np.ndarray:
        return self.generation_by_bus - self.demand_by_bus


def branch_flows(network: Network, inj: Injection) -> np.ndarray:
    """Directed branch flows ``z = S (q - d)``."""
    if inj.generation_by_bus.shape[0] != network.num_buses:
        raise InvalidInputError(
            f"injection has {inj.generation_by_bus.shape[0]} buses, network has {network.num_buses}")
    return network.shift_factors @ inj.net


def _collect_buses(lines, reference_bus) -> list:
    seen = []
    for a, b in lines:
        for x in (a, b):
            if x not in seen:
                seen.append(x)
    if reference_bus not in seen:
        seen.append(reference_bus)
    return seen


def radial_shift_factors(topology: Sequence[tuple], reference_bus: Hashable,
                         buses: Sequence[Hashable] | None = None) -> np.ndarray:
    """Shift factors of a tree network by the cut-set argument.

    Removing line (a, b) splits the tree in two; the flow a->b equals the net
    injection on whichever side does not hold the reference bus (negated when
    that is b's side).  Rows come in (+a->b, -a->b) pairs, one pair per line,
    in the order given.  Columns follow ``buses``.
    """
    buses = list(buses) if buses is not None else _collect_buses(topology, reference_bus)
    index = {b: k for k, b in enumerate(buses)}
    if reference_bus not in index:
        raise InvalidInputError(f"reference bus {reference_bus!r} is not a network bus")
    for a, b in topology:
        if a not in index or b not in index:
            raise InvalidInputError(f"line ({a!r}, {b!r}) references an unknown bus")
        if a == b:
            raise UnsupportedTopologyError(f"self-loop at bus {a!r}")
    M = len(buses)
    if len(topology) != M - 1:
        kind = "cyclic" if len(topology) >= M else "disconnected"
        raise UnsupportedTopologyError(
            f"{kind} topology: {len(topology)} lines over {M} buses (a tree needs {M - 1})")

    adj = defaultdict(list)
    for k, (a, b) in enumerate(topology):
        adj[index[a]].append((index[b], k))
        adj[index[b]].append((index[a], k))

    def side(start, banned_line):
        stack, seen = [start], {start}
        while stack:
            u = stack.pop()
            for v, k in adj[u]:
                if k != banned_line and v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    if len(side(index[reference_bus], -1)) != M:
        raise UnsupportedTopologyError("disconnected topology")

    ref = index[reference_bus]
    S = np.zeros((2 * len(topology), M))
    for k, (a, b) in enumerate(topology):
        a_side = side(index[a], k)
        if ref in a_side:
            row = np.zeros(M)
            row[list(side(index[b], k))] = -1.0
        else:
            row = np.zeros(M)
            row[list(a_side)] = 1.0
        S[2 * k] = row
        S[2 * k + 1] = -row
    S[:, ref] = 0.0
    return S + 0.0  # normalise -0.0
