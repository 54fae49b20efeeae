"""
Record size reduction and re-gridding onto uniform displacement increments.

`regular_reduce` keeps every m-th sample. `irregular_resample` scales the record,
floors the displacements onto the integer grid, and linearly interpolates the load
at every integer grid point of each monotonic displacement segment, so that the
output advances by exactly one grid step (1/scale) per sample.

Change indices are 1-based throughout, the way they are reported to users.
"""

import logging

import numpy as np

from core.exceptions import ResampleError

from .ingest import SignalPair

logger = logging.getLogger(__name__)

MIN_RESAMPLING_SCALE = 10

# (k / scale) * scale can land a hair below k; snap before flooring.
SNAP_DECIMALS = 9


def regular_reduce(pair: SignalPair, step: int) -> SignalPair:
    """Keep samples 1, 1+m, 1+2m, ... of both arrays."""
    if step < 1:
        raise ResampleError(f"reduction step must be at least 1, got {step}")
    return pair.with_arrays(pair.displacement[::step], pair.load[::step])


def detect_reversals(values) -> np.ndarray:
    """
    1-based indices of the samples where the displacement trace turns around,
    followed by the index of the last sample. Flat stretches keep the previous
    direction; a reversal is placed on the last sample before the turn.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ResampleError(f"need at least 2 values to find reversals, got {values.size}")

    steps = np.sign(np.diff(values))
    moving = np.flatnonzero(steps)
    turns = np.flatnonzero(steps[moving][1:] != steps[moving][:-1])
    reversals = moving[turns + 1] + 1
    return np.append(reversals, values.size).astype(int)


def _check_changes(changes, n: int) -> np.ndarray:
    changes = np.asarray(changes, dtype=int).ravel()
    if changes.size == 0 or changes[-1] != n:
        changes = np.append(changes, n)
    if changes.min() < 1 or changes.max() > n:
        raise ResampleError(f"change indices must lie in [1, {n}]")
    if np.any(np.diff(changes) <= 0):
        raise ResampleError("change indices must be strictly increasing")
    return changes


def irregular_resample(pair: SignalPair, scale: int, changes) -> SignalPair:
    if scale <= MIN_RESAMPLING_SCALE:
        raise ResampleError(
            f"resampling scale must be greater than {MIN_RESAMPLING_SCALE}, got {scale}"
        )

    changes = _check_changes(changes, len(pair))
    grid = np.floor(np.round(pair.displacement * scale, SNAP_DECIMALS))
    scaled_load = pair.load * scale

    first_index = 0
    first_value = grid[0]
    disp_parts = [np.array([first_value])]
    load_parts = [np.array([scaled_load[0]])]

    for segment, change in enumerate(changes, start=1):
        last_index = change - 1
        last_value = grid[last_index]

        if first_value < last_value:
            queries = np.arange(first_value + 1, last_value + 1)
            rising = True
        elif first_value > last_value:
            queries = np.arange(first_value - 1, last_value - 1, -1)
            rising = False
        else:
            logger.debug("Segment %d spans no grid step, skipped", segment)
            first_index = last_index
            continue

        window = grid[first_index : last_index + 1]
        window_load = scaled_load[first_index : last_index + 1]
        _, first_seen = np.unique(window, return_index=True)
        keep = np.sort(first_seen)
        knots, knot_loads = window[keep], window_load[keep]

        steps = np.diff(knots)
        if not (np.all(steps > 0) if rising else np.all(steps < 0)):
            raise ResampleError(
                "displacements are not monotonic after flooring", segment=segment
            )
        if not rising:
            knots, knot_loads = knots[::-1], knot_loads[::-1]

        disp_parts.append(queries)
        load_parts.append(np.interp(queries, knots, knot_loads))
        logger.debug(
            "Segment %d: %s %d grid points",
            segment,
            "rising" if rising else "falling",
            queries.size,
        )

        first_index = last_index
        first_value = last_value

    displacement = np.concatenate(disp_parts) / scale
    load = np.concatenate(load_parts) / scale
    logger.info(
        "Resampled %d samples onto %d grid points (scale %d)",
        len(pair),
        displacement.size,
        scale,
    )
    return pair.with_arrays(displacement, load)
