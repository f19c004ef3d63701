"""Tracking error metrics and KF/PF comparison tables.

Errors are per frame and signed (estimate minus truth). Verdicts compare
RMSE, which has the units of the measurement resolution: two trackers are
indistinguishable on a variable when their RMSEs differ by at most that
resolution (1 px for rho, 1 degree for theta).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .simulator import GroundTruthTrajectory

RESOLUTION = {"rho": 1.0, "theta": 1.0}
VARIABLES = ("rho", "theta")


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class TrackRecord:
    """Per-frame estimated states ``(n, 4)`` from one tracker on one lane."""

    states: np.ndarray
    tracker: str
    scenario: str
    side: str = "left"
    seed: int | None = None

    def __post_init__(self):
        arr = np.asarray(self.states, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise ValueError(f"states must have shape (n, 4), got {arr.shape}")
        object.__setattr__(self, "states", arr)

    @classmethod
    def from_states(cls, states, tracker, scenario, side="left", seed=None) -> "TrackRecord":
        arr = np.array([s.as_array() if hasattr(s, "as_array") else s for s in states], dtype=float).reshape(-1, 4)
        return cls(arr, tracker, scenario, side, seed)

    def __len__(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class ErrorReport:
    scenario: str
    side: str
    tracker: str
    rho_errors: np.ndarray
    theta_errors: np.ndarray
    seed: int | None = None

    def errors(self, variable: str) -> np.ndarray:
        return self.rho_errors if variable == "rho" else self.theta_errors

    def mse(self, variable: str) -> float:
        e = self.errors(variable)
        return math.fsum(e * e) / len(e)

    def rmse(self, variable: str) -> float:
        return math.sqrt(self.mse(variable))

    @property
    def mse_rho(self) -> float:
        return self.mse("rho")

    @property
    def mse_theta(self) -> float:
        return self.mse("theta")


def mse(track: TrackRecord, truth, side: str | None = None) -> ErrorReport:
    """Signed per-frame errors of ``track`` against ``truth``.

    ``truth`` is a GroundTruthTrajectory (the lane is ``side`` or the track's
    side) or an ``(n, 4)`` state array.
    """
    side = side or track.side
    ref = truth.lanes[side] if isinstance(truth, GroundTruthTrajectory) else np.asarray(truth, dtype=float)
    if len(ref) != len(track.states):
        raise LengthMismatch(f"track has {len(track.states)} frames, truth has {len(ref)}")
    if len(ref) == 0:
        raise LengthMismatch("empty track")
    d = track.states - ref
    return ErrorReport(track.scenario, side, track.tracker, d[:, 0].copy(), d[:, 2].copy(), track.seed)


def verdict(rmse: float, other: float, resolution: float) -> str:
    if rmse < other - resolution:
        return "better"
    if rmse > other + resolution:
        return "worse"
    return "indistinguishable"


@dataclass(frozen=True)
class ComparisonRow:
    scenario: str
    side: str
    variable: str
    tracker: str
    mse: float  # mean over seeds
    rmse: float  # sqrt of the mean MSE
    verdict: str
    n_seeds: int
    mse_min: float
    mse_max: float

    @property
    def label(self) -> str:
        return f"{self.variable}_{self.side}"


def compare(reports) -> list[ComparisonRow]:
    """Side-by-side rows per (scenario, side, variable, tracker).

    Reports for the same tracker (several seeds) are pooled by averaging MSE.
    Each tracker's verdict is against the best RMSE among the other trackers
    on the same lane and variable.
    """
    groups: dict[tuple, list[ErrorReport]] = {}
    for r in reports:
        groups.setdefault((r.scenario, r.side, r.tracker), []).append(r)
    rows = []
    lanes = list(dict.fromkeys((s, side) for s, side, _ in groups))
    for scenario, side in lanes:
        trackers = [t for s, sd, t in groups if (s, sd) == (scenario, side)]
        for var in VARIABLES:
            stats = {}
            for t in trackers:
                vals = [r.mse(var) for r in groups[(scenario, side, t)]]
                m = math.fsum(vals) / len(vals)
                stats[t] = (m, math.sqrt(m), len(vals), min(vals), max(vals))
            for t in trackers:
                m, rm, n, lo, hi = stats[t]
                others = [stats[o][1] for o in trackers if o != t]
                v = verdict(rm, min(others), RESOLUTION[var]) if others else "indistinguishable"
                rows.append(ComparisonRow(scenario, side, var, t, m, rm, v, n, lo, hi))
    return rows


def report_csv(rows) -> str:
    out = io.StringIO()
    out.write("scenario,variable,tracker,mse,rmse,verdict\n")
    for r in rows:
        out.write(f"{r.scenario},{r.label},{r.tracker},{r.mse!r},{r.rmse!r},{r.verdict}\n")
    return out.getvalue()


def report_table(rows) -> str:
    """Aligned text table: one line per scenario and variable, trackers as columns."""
    trackers = list(dict.fromkeys(r.tracker for r in rows))
    keyed = {(r.scenario, r.label, r.tracker): r for r in rows}
    header = ["scenario", "variable", *(f"{t} mse" for t in trackers), *(f"{t} rmse" for t in trackers), "verdict"]
    body = []
    for scenario, label in dict.fromkeys((r.scenario, r.label) for r in rows):
        cells = [scenario, label]
        present = [keyed.get((scenario, label, t)) for t in trackers]
        for r in present:
            if r is None:
                cells.append("-")
            elif r.n_seeds > 1:
                cells.append(f"{r.mse:.2f} [{r.mse_min:.2f}, {r.mse_max:.2f}]")
            else:
                cells.append(f"{r.mse:.2f}")
        cells += ["-" if r is None else f"{r.rmse:.2f}" for r in present]
        best = [r.tracker for r in present if r is not None and r.verdict == "better"]
        cells.append(f"{best[0]} better" if best else "indistinguishable")
        body.append(cells)
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in [header, *body]]
    return "\n".join(lines) + "\n"


def error_series_csv(report: ErrorReport) -> str:
    """Plot-ready instant errors: ``frame,rho_error,theta_error``."""
    out = io.StringIO()
    out.write("frame,rho_error,theta_error\n")
    for t, (er, et) in enumerate(zip(report.rho_errors, report.theta_errors)):
        out.write(f"{t},{float(er)!r},{float(et)!r}\n")
    return out.getvalue()
