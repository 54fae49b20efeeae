"""
Backbone (envelope) extraction and 7-point idealization.

The load trace is cut into half-cycles at load sign changes; each half-cycle
contributes its signed extremum. The idealized backbone keeps, per side, the
first point past 65% of the peak load (yield), the peak load point, and the
point of largest deformation (ultimate), plus the origin.
"""

import logging
from dataclasses import dataclass
from itertools import pairwise

import numpy as np

from core.exceptions import BackboneError

from .ingest import SignalPair

logger = logging.getLogger(__name__)

YIELD_FRACTION = 0.65
IDEALIZED_POINTS = 7
MIN_SIDE_POINTS = 3


@dataclass(frozen=True, eq=False)
class EnvelopeCurve:
    displacement: np.ndarray
    load: np.ndarray
    indices: np.ndarray
    degenerate: bool = False

    def __len__(self) -> int:
        return len(self.displacement)


@dataclass(frozen=True, eq=False)
class IdealizedBackbone:
    """Seven (displacement, load) points, origin at point 4."""

    displacement: np.ndarray
    load: np.ndarray
    yield_at_peak_pos: bool = False
    yield_at_peak_neg: bool = False

    def __post_init__(self):
        for name in ("displacement", "load"):
            values = np.array(getattr(self, name), dtype=float).ravel()
            values.flags.writeable = False
            object.__setattr__(self, name, values)
        self.check()

    def point(self, k: int) -> tuple[float, float]:
        """Point `k`, counted 1..7."""
        return float(self.displacement[k - 1]), float(self.load[k - 1])

    def check(self) -> None:
        d, f = self.displacement, self.load
        problems = []
        if d.size != IDEALIZED_POINTS or f.size != IDEALIZED_POINTS:
            raise BackboneError(
                f"idealized backbone needs {IDEALIZED_POINTS} points, got {d.size}"
            )
        if d[3] != 0.0 or f[3] != 0.0:
            problems.append("point 4 is not the origin")
        if np.any(np.diff(d) < 0):
            problems.append("displacements decrease")
        if np.any(d[:3] > 0) or np.any(d[4:] < 0):
            problems.append("points lie on the wrong side of the origin")
        if not f[4] > YIELD_FRACTION * f.max():
            problems.append("point 5 does not exceed 65% of the peak load")
        if not f[2] < YIELD_FRACTION * f.min():
            problems.append("point 3 does not exceed 65% of the minimum load")
        if problems:
            raise BackboneError("invalid idealized backbone: " + "; ".join(problems))

    @classmethod
    def from_pair(cls, pair: SignalPair) -> "IdealizedBackbone":
        d, f = pair.displacement, pair.load
        if d.size != IDEALIZED_POINTS:
            raise BackboneError(
                f"idealized backbone needs {IDEALIZED_POINTS} rows, got {d.size}"
            )
        return cls(
            displacement=d,
            load=f,
            yield_at_peak_pos=bool(d[4] == d[5] and f[4] == f[5]),
            yield_at_peak_neg=bool(d[2] == d[1] and f[2] == f[1]),
        )


def _half_cycle_bounds(load: np.ndarray) -> np.ndarray:
    """
    Start indices of the half-cycles plus the end sentinel. A new half-cycle
    starts at each strictly signed sample whose sign differs from the last
    signed sample; zero samples stay with the half-cycle before them.
    """
    signs = np.sign(load)
    signed = np.flatnonzero(signs)
    starts = signed[1:][signs[signed][1:] != signs[signed][:-1]]
    return np.concatenate(([0], starts, [load.size]))


def extract_envelope(pair: SignalPair) -> EnvelopeCurve:
    load = pair.load
    bounds = _half_cycle_bounds(load)

    picked = []
    for start, stop in pairwise(bounds):
        subset = load[start:stop]
        if subset.mean() > 0:
            picked.append(start + int(np.argmax(subset)))
        else:
            picked.append(start + int(np.argmin(subset)))

    picked = np.asarray(picked, dtype=int)
    order = np.argsort(pair.displacement[picked], kind="stable")
    picked = picked[order]

    # two half-cycles peaking at the same displacement: keep the outer one
    kept: list[int] = []
    for index in picked:
        if kept and pair.displacement[index] == pair.displacement[kept[-1]]:
            if abs(load[index]) > abs(load[kept[-1]]):
                kept[-1] = index
            continue
        kept.append(index)
    kept = np.asarray(kept, dtype=int)

    degenerate = bounds.size <= 2
    if degenerate:
        logger.warning(
            "Load never changes sign; envelope reduced to the global extremum"
        )
    logger.info("Envelope has %d points from %d half-cycles", kept.size, bounds.size - 1)
    return EnvelopeCurve(
        displacement=pair.displacement[kept],
        load=load[kept],
        indices=kept,
        degenerate=degenerate,
    )


def idealize(env: EnvelopeCurve) -> IdealizedBackbone:
    d, f = env.displacement, env.load
    # a side holds the points in its own quadrant
    positive = np.flatnonzero((f > 0) & (d > 0))
    negative = np.flatnonzero((f < 0) & (d < 0))
    if positive.size < MIN_SIDE_POINTS or negative.size < MIN_SIDE_POINTS:
        raise BackboneError(
            f"envelope needs at least {MIN_SIDE_POINTS} points per side, has "
            f"{positive.size} positive and {negative.size} negative"
        )

    points_d = np.zeros(IDEALIZED_POINTS)
    points_f = np.zeros(IDEALIZED_POINTS)

    # ultimate deformation (envelope is sorted by displacement)
    points_d[6], points_f[6] = d[positive[-1]], f[positive[-1]]
    points_d[0], points_f[0] = d[negative[0]], f[negative[0]]

    # peak load
    peak = positive[np.argmax(f[positive])]
    trough = negative[np.argmin(f[negative])]
    points_d[5], points_f[5] = d[peak], f[peak]
    points_d[1], points_f[1] = d[trough], f[trough]

    # yield: first point past 65% of the peak, scanning away from the origin
    yield_pos = next(i for i in positive if f[i] > YIELD_FRACTION * f[peak])
    yield_neg = next(i for i in negative[::-1] if f[i] < YIELD_FRACTION * f[trough])
    points_d[4], points_f[4] = d[yield_pos], f[yield_pos]
    points_d[2], points_f[2] = d[yield_neg], f[yield_neg]

    at_peak_pos = bool(yield_pos == peak)
    at_peak_neg = bool(yield_neg == trough)
    if at_peak_pos:
        logger.warning("Positive yield point coincides with the peak load point")
    if at_peak_neg:
        logger.warning("Negative yield point coincides with the minimum load point")

    return IdealizedBackbone(
        displacement=points_d,
        load=points_f,
        yield_at_peak_pos=at_peak_pos,
        yield_at_peak_neg=at_peak_neg,
    )
