"""
Native Pivot hysteresis engine.

Rules, for a backbone with side-specific elastic stiffness K, yield force Fy and
yield displacement dy:

* Loading past the largest displacement reached so far on a side follows the
  backbone, and moves that side's extreme point.
* Unloading (moving so that |load| decreases) heads in a straight line for the
  primary pivot of the side the load is on: the point of the extended initial
  elastic line at force -alpha * Fy.
* eta softens that unloading line after plastic excursions, dividing its slope
  by 1 + eta * mu / ETA_SCALE with mu = d_extreme / dy - 1. The softened line
  never crosses zero load past the origin.
* Once the load crosses zero, reloading heads for the extreme point reached on
  the side being loaded (the yield point if that side never yielded), passing
  through the pinching pivot at force beta * Fy on that side's initial elastic
  line when the pivot lies below the direct line. Past the extreme point the
  response rejoins the backbone.
* Reloading is never steeper than the side's elastic stiffness at the target:
  when the zero crossing lies past the foot of the elastic line through the
  target, reloading aims at the backbone one such elastic offset further on.
* A reversal before the load reaches zero heads straight back to the extreme
  point of the direction of travel.
* While neither side has yielded the response is linear elastic.

Loads never leave the band between lower(d) = F(min(d, dy-)) and
upper(d) = F(max(d, dy+)), F being the backbone interpolant held constant past
its end points. Branch loads outside the band ride the backbone instead.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from core.exceptions import PivotError
from records.backbone import IdealizedBackbone

logger = logging.getLogger(__name__)

ETA_SCALE = 100.0

PARAMETER_NAMES = ("alpha1", "alpha2", "beta1", "beta2", "eta")


class PivotParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha1: float = Field(
        ..., ge=1.0, allow_inf_nan=False, description="Primary pivot factor, positive side."
    )
    alpha2: float = Field(
        ..., ge=1.0, allow_inf_nan=False, description="Primary pivot factor, negative side."
    )
    beta1: float = Field(
        ...,
        ge=0.0,
        le=1.0,
        allow_inf_nan=False,
        description="Pinching pivot fraction, positive side.",
    )
    beta2: float = Field(
        ...,
        ge=0.0,
        le=1.0,
        allow_inf_nan=False,
        description="Pinching pivot fraction, negative side.",
    )
    eta: float = Field(
        ..., ge=0.0, allow_inf_nan=False, description="Elastic slope degradation."
    )

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in PARAMETER_NAMES])

    @classmethod
    def from_array(cls, values) -> "PivotParams":
        return cls(**{name: float(v) for name, v in zip(PARAMETER_NAMES, values)})


class Branch(str, Enum):
    ELASTIC = "elastic"
    ENVELOPE_POS = "envelope+"
    ENVELOPE_NEG = "envelope-"
    UNLOADING_POS = "unloading+"
    UNLOADING_NEG = "unloading-"
    RELOADING_POS = "reloading+"
    RELOADING_NEG = "reloading-"


@dataclass(frozen=True, eq=False)
class BackboneGeometry:
    knots_d: np.ndarray
    knots_f: np.ndarray
    k_pos: float
    k_neg: float
    fy_pos: float
    fy_neg: float
    dy_pos: float
    dy_neg: float

    @property
    def d_ultimate_pos(self) -> float:
        return float(self.knots_d[-1])

    @property
    def d_ultimate_neg(self) -> float:
        return float(self.knots_d[0])

    def envelope(self, d: float) -> float:
        return float(np.interp(d, self.knots_d, self.knots_f))

    def upper(self, d: float) -> float:
        return self.envelope(max(d, self.dy_pos))

    def lower(self, d: float) -> float:
        return self.envelope(min(d, self.dy_neg))

    def stiffness(self, side: int) -> float:
        return self.k_pos if side > 0 else self.k_neg


@dataclass(frozen=True, slots=True)
class HysteresisState:
    displacement: float = 0.0
    load: float = 0.0
    d_max: float = 0.0
    d_min: float = 0.0
    direction: int = 0
    branch: Branch = Branch.ELASTIC
    # current branch polyline in order of travel; empty when none is open
    path_d: tuple = ()
    path_f: tuple = ()
    beyond_ultimate: bool = False


def build_geometry(backbone: IdealizedBackbone) -> BackboneGeometry:
    dy_pos, fy_pos = backbone.point(5)
    dy_neg, fy_neg = backbone.point(3)
    if dy_pos == 0.0 or dy_neg == 0.0:
        raise PivotError("yield points need a nonzero displacement")

    k_pos, k_neg = fy_pos / dy_pos, fy_neg / dy_neg
    if not (k_pos > 0 and k_neg > 0):
        raise PivotError(f"elastic stiffness must be positive, got {k_pos} and {k_neg}")

    # repeated knots (yield at peak, peak at ultimate) are identical points
    _, first = np.unique(backbone.displacement, return_index=True)
    keep = np.sort(first)
    return BackboneGeometry(
        knots_d=backbone.displacement[keep],
        knots_f=backbone.load[keep],
        k_pos=k_pos,
        k_neg=k_neg,
        fy_pos=fy_pos,
        fy_neg=fy_neg,
        dy_pos=dy_pos,
        dy_neg=dy_neg,
    )


def degradation(state: HysteresisState, geom: BackboneGeometry, params: PivotParams, side: int):
    """Factor dividing the unloading slope of `side` after plastic excursions."""
    if side > 0:
        mu = max(0.0, state.d_max / geom.dy_pos - 1.0)
    else:
        mu = max(0.0, state.d_min / geom.dy_neg - 1.0)
    return 1.0 + params.eta * mu / ETA_SCALE


def pinching_pivot(geom: BackboneGeometry, params: PivotParams, side: int):
    if side > 0:
        force = params.beta1 * geom.fy_pos
    else:
        force = params.beta2 * geom.fy_neg
    return force / geom.stiffness(side), force


def primary_pivot(geom: BackboneGeometry, params: PivotParams, side: int):
    """Pivot that unloading from a load on `side` heads for."""
    if side > 0:
        force = -params.alpha1 * geom.fy_pos
    else:
        force = -params.alpha2 * geom.fy_neg
    return force / geom.stiffness(side), force


def unloading_crossing(
    state: HysteresisState, geom: BackboneGeometry, params: PivotParams, side: int
) -> float:
    """Displacement at which unloading from the current load on `side` reaches zero."""
    d, f = state.displacement, state.load
    pivot = primary_pivot(geom, params, side)
    slope = geom.stiffness(side)
    if (d - pivot[0]) * side > 0:
        slope = (f - pivot[1]) / (d - pivot[0])

    undegraded = d - f / slope
    if undegraded * side <= 0:
        return undegraded
    softened = d - f * degradation(state, geom, params, side) / slope
    return side * max(softened * side, 0.0)


def initial_state(geom: BackboneGeometry, params: PivotParams) -> HysteresisState:
    return HysteresisState()


def _yielded(state: HysteresisState, geom: BackboneGeometry) -> bool:
    return state.d_max > geom.dy_pos or state.d_min < geom.dy_neg


def _extreme_point(state: HysteresisState, geom: BackboneGeometry, side: int):
    if side > 0:
        if state.d_max > geom.dy_pos:
            return state.d_max, geom.envelope(state.d_max)
        return geom.dy_pos, geom.fy_pos
    if state.d_min < geom.dy_neg:
        return state.d_min, geom.envelope(state.d_min)
    return geom.dy_neg, geom.fy_neg


def _pinches(start, pinch, target, direction: int) -> bool:
    if (pinch[0] - start[0]) * direction <= 0 or (target[0] - pinch[0]) * direction <= 0:
        return False
    direct = start[1] + (target[1] - start[1]) * (pinch[0] - start[0]) / (
        target[0] - start[0]
    )
    return abs(pinch[1]) < abs(direct)


def _open_branch(
    state: HysteresisState, geom: BackboneGeometry, params: PivotParams, direction: int
):
    d, f = state.displacement, state.load
    points = [(d, f)]

    crossing = None
    if f * direction < 0:
        crossing = (unloading_crossing(state, geom, params, -direction), 0.0)
        points.append(crossing)
    elif f == 0.0:
        crossing = (d, 0.0)

    target = _extreme_point(state, geom, direction)
    # zero-load foot of the elastic line through the target
    offset = target[1] / geom.stiffness(direction)
    foot = target[0] - offset
    if crossing is not None and (crossing[0] - foot) * direction > 0:
        reach = crossing[0] + offset
        points.append((reach, geom.envelope(reach)))
    else:
        pinch = pinching_pivot(geom, params, direction)
        if crossing is not None and _pinches(crossing, pinch, target, direction):
            points.append(pinch)
        points.append(target)

    path = [points[0]]
    for point in points[1:]:
        if (point[0] - path[-1][0]) * direction > 0:
            path.append(point)
    path_d, path_f = zip(*path)
    return path_d, path_f


def _follow(path_d, path_f, d_next: float, direction: int, geom: BackboneGeometry):
    if (d_next - path_d[-1]) * direction > 0:
        return geom.envelope(d_next), True
    if direction > 0:
        return float(np.interp(d_next, path_d, path_f)), False
    return float(np.interp(d_next, path_d[::-1], path_f[::-1])), False


def step(state: HysteresisState, geom: BackboneGeometry, params: PivotParams, d_next: float):
    """Advance the state to displacement `d_next`; returns (new state, load)."""
    if not math.isfinite(d_next):
        raise PivotError(f"displacement {d_next} is not finite")
    if d_next == state.displacement:
        return state, state.load

    direction = 1 if d_next > state.displacement else -1
    beyond = d_next > geom.d_ultimate_pos or d_next < geom.d_ultimate_neg
    d_max = max(state.d_max, d_next)
    d_min = min(state.d_min, d_next)

    if not _yielded(state, geom) and geom.dy_neg <= d_next <= geom.dy_pos:
        load = geom.envelope(d_next)
        new_state = replace(
            state,
            displacement=d_next,
            load=load,
            d_max=d_max,
            d_min=d_min,
            direction=direction,
            branch=Branch.ELASTIC,
            path_d=(),
            path_f=(),
            beyond_ultimate=beyond,
        )
        return new_state, load

    if direction != state.direction or not state.path_d:
        path_d, path_f = _open_branch(state, geom, params, direction)
    else:
        path_d, path_f = state.path_d, state.path_f

    # branches end at the extreme point, past it the backbone takes over
    load, on_envelope = _follow(path_d, path_f, d_next, direction, geom)
    load = min(max(load, geom.lower(d_next)), geom.upper(d_next))

    if on_envelope:
        branch = Branch.ENVELOPE_POS if direction > 0 else Branch.ENVELOPE_NEG
    elif load * direction < 0:
        branch = Branch.UNLOADING_POS if load > 0 else Branch.UNLOADING_NEG
    else:
        branch = Branch.RELOADING_POS if direction > 0 else Branch.RELOADING_NEG

    new_state = replace(
        state,
        displacement=d_next,
        load=load,
        d_max=d_max,
        d_min=d_min,
        direction=direction,
        branch=branch,
        path_d=path_d,
        path_f=path_f,
        beyond_ultimate=beyond,
    )
    return new_state, load


class PivotEngine:
    """Single-owner mutable wrapper around `step`."""

    def __init__(self, geometry: BackboneGeometry, params: PivotParams):
        self.geometry = geometry
        self.params = params
        self.state = initial_state(geometry, params)
        self.beyond_ultimate_steps = 0

    def step(self, d_next: float) -> float:
        self.state, load = step(self.state, self.geometry, self.params, float(d_next))
        if self.state.beyond_ultimate:
            self.beyond_ultimate_steps += 1
        return load

    def run(self, displacements) -> np.ndarray:
        displacements = np.asarray(displacements, dtype=float)
        return np.fromiter(
            (self.step(d) for d in displacements), dtype=float, count=displacements.size
        )


def simulate(backbone: IdealizedBackbone, params: PivotParams, displacements) -> np.ndarray:
    engine = PivotEngine(build_geometry(backbone), params)
    loads = engine.run(displacements)
    if engine.beyond_ultimate_steps:
        logger.warning(
            "%d steps beyond the ultimate displacement, load held at the terminal value",
            engine.beyond_ultimate_steps,
        )
    return loads


def cyclic_protocol(amplitudes, points_per_quarter: int = 20, repeats: int = 1) -> np.ndarray:
    """Displacement history 0 -> +A -> 0 -> -A -> 0 for each amplitude A."""
    history = [np.zeros(1)]
    for amplitude in amplitudes:
        for _ in range(repeats):
            quarters = ((0.0, amplitude), (amplitude, 0.0), (0.0, -amplitude), (-amplitude, 0.0))
            for start, stop in quarters:
                history.append(np.linspace(start, stop, points_per_quarter + 1)[1:])
    return np.concatenate(history)


def dissipated_energy(displacement, load) -> float:
    """Trapezoidal integral of load over the displacement path."""
    load = np.asarray(load, dtype=float)
    return float(np.trapezoid(load, np.asarray(displacement, dtype=float)))
