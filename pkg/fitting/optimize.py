"""
Real-coded genetic algorithm over the five Pivot parameters.

Every random draw of a generation is made in the calling process before the
population is evaluated, and scores are gathered in population order, so a
fixed seed gives the same history for any number of workers.
"""

import logging
import math
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from django.conf import settings
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from core.exceptions import OptimizationError, PivotFitError
from hysteresis.pivot import PARAMETER_NAMES, PivotEngine, PivotParams, build_geometry
from records.backbone import IdealizedBackbone
from records.ingest import SignalPair

logger = logging.getLogger(__name__)

# admissible range of each parameter, whatever the configured bounds
ADMISSIBLE = {
    "alpha1": (1.0, math.inf),
    "alpha2": (1.0, math.inf),
    "beta1": (0.0, 1.0),
    "beta2": (0.0, 1.0),
    "eta": (0.0, math.inf),
}


class ParameterBounds(BaseModel):
    lower: float = Field(..., allow_inf_nan=False)
    upper: float = Field(..., allow_inf_nan=False)

    @model_validator(mode="after")
    def _ordered(self):
        if self.lower > self.upper:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")
        return self


def default_bounds() -> dict[str, ParameterBounds]:
    return {
        "alpha1": ParameterBounds(lower=1.0, upper=100.0),
        "alpha2": ParameterBounds(lower=1.0, upper=100.0),
        "beta1": ParameterBounds(lower=0.0, upper=1.0),
        "beta2": ParameterBounds(lower=0.0, upper=1.0),
        "eta": ParameterBounds(lower=0.0, upper=1000.0),
    }


class GAConfig(BaseModel):
    population_size: int = Field(50, ge=2, description="Individuals per generation.")
    max_generations: int = Field(300, ge=1, description="Hard cap on generations.")
    tournament_size: int = Field(3, ge=1)
    crossover_probability: float = Field(0.9, ge=0.0, le=1.0)
    blend_alpha: float = Field(0.5, ge=0.0, description="BLX-alpha extension factor.")
    mutation_probability: float = Field(
        0.1, ge=0.0, le=1.0, description="Per-gene mutation probability."
    )
    mutation_scale: float = Field(
        0.1, gt=0.0, description="Mutation std as a fraction of each parameter range."
    )
    elite_count: int = Field(2, ge=0)
    parameter_bounds: dict[str, ParameterBounds] = Field(default_factory=default_bounds)
    rng_seed: int = 0
    stall_generations: int = Field(
        50, ge=1, description="Stop after this many generations without improvement."
    )
    workers: int = Field(1, ge=1, description="Evaluation processes; 1 evaluates inline.")

    @field_validator("parameter_bounds")
    @classmethod
    def _complete_bounds(cls, bounds: dict[str, ParameterBounds]):
        unknown = sorted(set(bounds) - set(PARAMETER_NAMES))
        if unknown:
            raise ValueError(f"unknown parameters in bounds: {', '.join(unknown)}")
        merged = default_bounds() | bounds
        for name, bound in merged.items():
            low, high = ADMISSIBLE[name]
            if bound.lower < low or bound.upper > high:
                raise ValueError(f"{name} bounds must lie within [{low}, {high}]")
        return {name: merged[name] for name in PARAMETER_NAMES}

    @model_validator(mode="after")
    def _elite_fits(self):
        if self.elite_count >= self.population_size:
            raise ValueError("elite_count must be smaller than population_size")
        return self

    def bound_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lower = np.array([self.parameter_bounds[name].lower for name in PARAMETER_NAMES])
        upper = np.array([self.parameter_bounds[name].upper for name in PARAMETER_NAMES])
        return lower, upper


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_score: float
    mean_score: float
    best_params: PivotParams


@dataclass
class ConvergenceHistory:
    records: list[GenerationRecord] = field(default_factory=list)
    stop_reason: str = ""

    def __len__(self) -> int:
        return len(self.records)

    @property
    def best_scores(self) -> np.ndarray:
        return np.array([record.best_score for record in self.records])

    def columns(self) -> dict[str, list]:
        table = {
            "generation": [r.generation for r in self.records],
            "best_score": [r.best_score for r in self.records],
            "mean_score": [r.mean_score for r in self.records],
        }
        for name in PARAMETER_NAMES:
            table[name] = [getattr(r.best_params, name) for r in self.records]
        return table


def deviation_score(load_resp, load_exp) -> float:
    """Sum of squared load differences, exactly rounded."""
    load_resp = np.asarray(load_resp, dtype=float)
    load_exp = np.asarray(load_exp, dtype=float)
    if load_resp.shape != load_exp.shape:
        raise OptimizationError(
            f"response has {load_resp.size} samples, experiment has {load_exp.size}"
        )
    return math.fsum(np.square(load_resp - load_exp))


def evaluate(params: PivotParams, backbone: IdealizedBackbone, resampled: SignalPair) -> float:
    engine = PivotEngine(build_geometry(backbone), params)
    return deviation_score(engine.run(resampled.displacement), resampled.load)


def _score_vector(vector, backbone: IdealizedBackbone, resampled: SignalPair) -> float:
    try:
        score = evaluate(PivotParams.from_array(vector), backbone, resampled)
    except (PivotFitError, ValidationError, FloatingPointError) as exc:
        logger.debug("Evaluation failed for %s: %s", vector, exc)
        return math.inf
    return score if math.isfinite(score) else math.inf


def _tournament(rng: np.random.Generator, scores: np.ndarray, count: int, size: int):
    contestants = rng.integers(0, scores.size, size=(count, size))
    winner = np.argmin(scores[contestants], axis=1)
    return contestants[np.arange(count), winner]


def _breed(population, scores, rng, config: GAConfig, lower, upper):
    count = config.population_size - config.elite_count
    span = upper - lower

    first = population[_tournament(rng, scores, count, config.tournament_size)]
    second = population[_tournament(rng, scores, count, config.tournament_size)]

    # blend crossover
    crossing = rng.random(count) < config.crossover_probability
    low, high = np.minimum(first, second), np.maximum(first, second)
    reach = config.blend_alpha * (high - low)
    blended = rng.uniform(low - reach, high + reach)
    children = np.where(crossing[:, None], blended, first)

    # gaussian mutation
    mutating = rng.random(children.shape) < config.mutation_probability
    noise = rng.normal(0.0, 1.0, size=children.shape) * (config.mutation_scale * span)
    children = np.where(mutating, children + noise, children)

    return np.clip(children, lower, upper)


def fit(
    resampled: SignalPair,
    backbone: IdealizedBackbone,
    config: GAConfig,
    on_generation: Callable[[GenerationRecord], None] | None = None,
) -> tuple[PivotParams, ConvergenceHistory]:
    lower, upper = config.bound_arrays()
    rng = np.random.default_rng(config.rng_seed)
    log_every = getattr(settings, "GA_LOG_EVERY", 10)
    score = partial(_score_vector, backbone=backbone, resampled=resampled)

    executor = ProcessPoolExecutor(config.workers) if config.workers > 1 else None

    def evaluate_all(vectors: np.ndarray) -> np.ndarray:
        if executor is None:
            return np.fromiter(map(score, vectors), dtype=float, count=len(vectors))
        chunk = max(1, len(vectors) // (4 * config.workers))
        return np.fromiter(
            executor.map(score, vectors, chunksize=chunk), dtype=float, count=len(vectors)
        )

    logger.info(
        "GA start: population %d, up to %d generations, seed %d, %d worker(s)",
        config.population_size,
        config.max_generations,
        config.rng_seed,
        config.workers,
    )

    history = ConvergenceHistory()
    best_vector, best_score = None, math.inf
    stalled = 0
    try:
        population = lower + rng.random((config.population_size, lower.size)) * (upper - lower)
        scores = evaluate_all(population)

        for generation in range(1, config.max_generations + 1):
            finite = np.isfinite(scores)
            if not finite.any():
                raise OptimizationError(
                    f"every evaluation failed in generation {generation}"
                )

            leader = int(np.argmin(scores))
            if scores[leader] < best_score:
                best_vector, best_score = population[leader].copy(), float(scores[leader])
                stalled = 0
            else:
                stalled += 1

            record = GenerationRecord(
                generation=generation,
                best_score=best_score,
                mean_score=float(scores[finite].mean()),
                best_params=PivotParams.from_array(best_vector),
            )
            history.records.append(record)
            if on_generation is not None:
                on_generation(record)
            if generation == 1 or generation % log_every == 0:
                logger.info(
                    "Generation %d: best %.6g, mean %.6g",
                    generation,
                    record.best_score,
                    record.mean_score,
                )

            if generation == config.max_generations:
                history.stop_reason = "max_generations"
                break
            if stalled >= config.stall_generations:
                history.stop_reason = "stall"
                logger.warning(
                    "No improvement for %d generations, stopping at generation %d",
                    stalled,
                    generation,
                )
                break

            order = np.argsort(scores, kind="stable")[: config.elite_count]
            children = _breed(population, scores, rng, config, lower, upper)
            population = np.vstack([population[order], children])
            scores = np.concatenate([scores[order], evaluate_all(children)])
    finally:
        if executor is not None:
            executor.shutdown(cancel_futures=True)

    best = PivotParams.from_array(best_vector)
    logger.info(
        "GA done after %d generations (%s): score %.6g, %s",
        len(history),
        history.stop_reason,
        best_score,
        best.model_dump(),
    )
    return best, history


def grid_search(
    name: str,
    truth: PivotParams,
    backbone: IdealizedBackbone,
    resampled: SignalPair,
    bounds: ParameterBounds,
    resolution: float = 1e-3,
) -> tuple[float, float]:
    """
    Exhaustive scan of one parameter with the other four held at `truth`.
    Returns the best value and its score; ties keep the smallest value.
    """
    if name not in PARAMETER_NAMES:
        raise OptimizationError(f"unknown parameter {name!r}")
    values = np.linspace(bounds.lower, bounds.upper, round(1 / resolution) + 1)
    base = truth.model_dump()
    scores = np.array(
        [evaluate(PivotParams(**(base | {name: value})), backbone, resampled) for value in values]
    )
    best = int(np.argmin(scores))
    return float(values[best]), float(scores[best])
