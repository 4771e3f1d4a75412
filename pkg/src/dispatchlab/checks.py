"""Invariant battery over settled runs.

Every check returns a scale-relative violation: 0 when the identity holds
exactly, compared against ``SETTLEMENT_TOL``.  Scales are ``1 + |x|`` of the
natural magnitude of each identity, noted per check.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dispatch import RollingTrajectory
from .pricing import lmp_prices, tlmp_prices
from .settlement import SETTLEMENT_TOL, SettlementReport, revenue_gap, settle

CHECK_NAMES = (
    "tlmp_zero_loc",          # LOC under TLMP vanishes for every generator
    "lmp_surplus_is_rent",    # LMP merchandising surplus equals congestion rent
    "tlmp_surplus_split",     # one-shot TLMP surplus equals ramping surplus plus rent
    "revenue_gap",            # one-shot LMP minus TLMP revenue equals the ramp-dual sum
    "mlmp_loc_identity",      # multi-settlement LOC equals LOC under LMP
    "one_shot_lmp_zero_loc",  # one-shot LMP with perfect forecasts needs no uplift
    "loc_nonnegative",        # LOC never negative beyond tolerance
)


@dataclass
class CheckTally:
    """Running maximum violation per check."""

    worst: dict = field(default_factory=lambda: {k: 0.0 for k in CHECK_NAMES})
    count: dict = field(default_factory=lambda: {k: 0 for k in CHECK_NAMES})

    def add(self, name: str, violation: float):
        self.count[name] += 1
        v = float(violation)
        if not np.isfinite(v):
            v = np.inf
        self.worst[name] = max(self.worst[name], v)

    def merge(self, other: "CheckTally"):
        for k in CHECK_NAMES:
            self.count[k] += other.count[k]
            self.worst[k] = max(self.worst[k], other.worst[k])

    def passed(self, name: str, tol: float = SETTLEMENT_TOL) -> bool:
        return self.worst[name] <= tol

    def all_passed(self, tol: float = SETTLEMENT_TOL) -> bool:
        return all(self.passed(k, tol) for k in CHECK_NAMES if self.count[k])

    def lines(self, tol: float = SETTLEMENT_TOL) -> list[str]:
        out = []
        for k in CHECK_NAMES:
            if not self.count[k]:
                out.append(f"SKIP {k:24s} (no applicable runs)")
                continue
            tag = "PASS" if self.passed(k, tol) else "FAIL"
            out.append(f"{tag} {k:24s} max violation {self.worst[k]:.3e} over {self.count[k]} runs")
        return out


def _loc_scale(report: SettlementReport) -> np.ndarray:
    return 1.0 + np.abs(report.profit)


def check_rolling(reports: dict, tally: CheckTally):
    """Checks that hold on any rolling run, whatever the forecasts."""
    if "TLMP" in reports:
        r = reports["TLMP"]
        tally.add("tlmp_zero_loc", np.max(np.abs(r.loc) / _loc_scale(r)))
    if "LMP" in reports:
        r = reports["LMP"]
        # scale: the money that crosses the market in the run
        scale = 1.0 + abs(r.demand_payment) + abs(r.congestion_rent)
        tally.add("lmp_surplus_is_rent", max(abs(r.merchandising_surplus - r.congestion_rent),
                                             max(0.0, -r.merchandising_surplus)) / scale)
    if "MLMP" in reports and reports["MLMP"].loc_identity is not None:
        r = reports["MLMP"]
        tally.add("mlmp_loc_identity", np.max(np.abs(r.loc - r.loc_identity) / (1.0 + np.abs(r.loc_identity))))
    for r in reports.values():
        tally.add("loc_nonnegative", np.max(np.maximum(0.0, -r.loc) / _loc_scale(r)))


def check_one_shot(traj: RollingTrajectory, tally: CheckTally, loc_basis: str = "revealed"):
    """Checks specific to one-shot dispatch with perfect forecasts and a relaxed start."""
    lmp, tlmp = lmp_prices(traj), tlmp_prices(traj)
    r_lmp = settle(traj, lmp, loc_basis=loc_basis)
    r_tlmp = settle(traj, tlmp, loc_basis=loc_basis)
    scale = 1.0 + abs(r_tlmp.demand_payment)
    split = r_tlmp.ramping_surplus + r_tlmp.congestion_rent
    tally.add("tlmp_surplus_split", max(abs(r_tlmp.merchandising_surplus - split),
                                        max(0.0, -r_tlmp.ramping_surplus),
                                        max(0.0, -r_tlmp.congestion_rent)) / scale)
    for i in range(len(traj.generators)):
        gap = revenue_gap(traj, i, tlmp, lmp)
        tally.add("revenue_gap", max(abs(gap.direct - gap.formula), max(0.0, -gap.direct)) / (1.0 + abs(gap.formula)))
    tally.add("one_shot_lmp_zero_loc", np.max(np.abs(r_lmp.loc) / _loc_scale(r_lmp)))
    tally.add("tlmp_zero_loc", np.max(np.abs(r_tlmp.loc) / _loc_scale(r_tlmp)))
    for r in (r_lmp, r_tlmp):
        tally.add("loc_nonnegative", np.max(np.maximum(0.0, -r.loc) / _loc_scale(r)))
    return r_lmp, r_tlmp
