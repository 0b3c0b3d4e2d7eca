"""Monte-Carlo aggregation, steady-state estimation, CSV emission."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

DB_PER_NEPER = 10.0 / math.log(10.0)


def to_db(values) -> np.ndarray:
    """``10 log10(x)`` with zeros mapped to -inf (no warnings)."""
    values = np.asarray(values, dtype=float)
    out = np.full(values.shape, -np.inf)
    mask = values > 0
    np.log10(values, out=out, where=mask)
    return 10.0 * out


@dataclass
class MsdTrajectory:
    """Per-iteration mean-square deviation averaged over Monte-Carlo runs."""

    values: np.ndarray  # (T,) run-averaged MSD, linear scale
    stderr: np.ndarray  # (T,) standard error of the run average
    runs: int

    def __post_init__(self):
        if np.any(self.values < 0):
            raise InvalidInputError("MSD values must be nonnegative")

    @property
    def iterations(self) -> int:
        return self.values.shape[0]

    @property
    def db(self) -> np.ndarray:
        return to_db(self.values)


def aggregate(runs) -> MsdTrajectory:
    """Elementwise mean (and standard error) across per-run MSD series."""
    try:
        series = np.atleast_2d(np.asarray(runs, dtype=float))
    except ValueError as exc:
        raise InvalidInputError(f"per-run series must all have the same length: {exc}") from exc
    if series.ndim != 2:
        raise InvalidInputError("expected a (runs, iterations) array or a list of equal-length series")
    R = series.shape[0]
    if R < 1 or series.shape[1] < 1:
        raise InvalidInputError("need at least one run with at least one iteration")
    mean = series.mean(axis=0)
    if R > 1:
        stderr = series.std(axis=0, ddof=1) / math.sqrt(R)
    else:
        stderr = np.zeros_like(mean)
    return MsdTrajectory(values=mean, stderr=stderr, runs=R)


@dataclass
class SteadyState:
    mean: float
    std_error: float
    mean_db: float
    std_error_db: float
    stationary: bool  # False when the two window halves differ by > 1 dB


def steady_state(traj: MsdTrajectory, window_fraction: float = 0.1) -> SteadyState:
    """Mean over the trailing window of the trajectory.

    The reported standard error averages the per-iteration standard errors
    over the window (a conservative choice: it stays valid under arbitrary
    correlation across iterations). The stationarity flag compares the two
    halves of the window and trips when they differ by more than 1 dB,
    signalling that the transient has not died out.
    """
    if not (0.0 < window_fraction <= 0.5):
        raise InvalidInputError(f"window_fraction must be in (0, 0.5], got {window_fraction}")
    T = traj.iterations
    n = int(T * window_fraction)
    if n < 1:
        raise InvalidInputError(f"window of fraction {window_fraction} over {T} iterations is empty")
    window = traj.values[T - n :]
    mean = float(window.mean())
    se = float(traj.stderr[T - n :].mean())

    stationary = True
    half = n // 2
    if half >= 1:
        first = float(window[:half].mean())
        second = float(window[half:].mean())
        if first > 0 and second > 0:
            stationary = abs(10.0 * math.log10(first / second)) <= 1.0
        elif (first > 0) != (second > 0):
            stationary = False

    mean_db = float(to_db(mean))
    se_db = DB_PER_NEPER * se / mean if mean > 0 else 0.0
    return SteadyState(
        mean=mean, std_error=se, mean_db=mean_db, std_error_db=float(se_db), stationary=stationary
    )


def csv_lines(
    trajectories: dict[str, MsdTrajectory], include_stderr: bool = True
) -> list[str]:
    """Render aligned trajectories as CSV lines.

    Columns: ``iteration`` then ``<method>_msd_db`` (and optionally
    ``<method>_stderr_db``) per method. Floats use shortest round-trip
    formatting so output bytes are a pure function of the values.
    """
    methods = list(trajectories)
    if not methods:
        raise InvalidInputError("no trajectories to write")
    lengths = {trajectories[m].iterations for m in methods}
    if len(lengths) != 1:
        raise InvalidInputError(f"trajectories have mismatched lengths {sorted(lengths)}")
    (T,) = lengths

    header = ["iteration"]
    columns = []
    for m in methods:
        traj = trajectories[m]
        header.append(f"{m}_msd_db")
        cols = [traj.db]
        if include_stderr:
            header.append(f"{m}_stderr_db")
            with np.errstate(divide="ignore", invalid="ignore"):
                se_db = np.where(traj.values > 0, DB_PER_NEPER * traj.stderr / traj.values, 0.0)
            cols.append(se_db)
        columns.extend(cols)

    lines = [",".join(header)]
    for i in range(T):
        row = [str(i + 1)] + [repr(float(col[i])) for col in columns]
        lines.append(",".join(row))
    return lines


def write_csv(path, trajectories: dict[str, MsdTrajectory], include_stderr: bool = True) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(csv_lines(trajectories, include_stderr)) + "\n")
