"""
Stage runners behind the management commands.

Each stage reads the files of the stage before it from the output directory,
so running the stages one by one gives the same files as `run_pipeline`:

    resample   input record      -> reduced.csv, resampled.csv
    backbone   resampled.csv     -> envelope.csv, idealized.csv
    fit        resampled.csv,
               idealized.csv     -> best_params.txt, convergence.csv, response.csv
    simulate   best_params.txt   -> response.csv

Every stage also records its inputs in manifest.json.
"""

import hashlib
import json
import logging
import os
import platform
from collections.abc import Mapping
from pathlib import Path

import numpy as np
import pandas as pd
import yaml
from django.conf import settings
from pydantic import BaseModel, Field, ValidationError

from core.exceptions import (
    ConfigError,
    FitInterrupted,
    PipelineIOError,
    PivotFitError,
    StageError,
)
from hysteresis.pivot import PARAMETER_NAMES, PivotParams, simulate
from records.backbone import EnvelopeCurve, IdealizedBackbone, extract_envelope, idealize
from records.ingest import (
    DEFAULT_PRECISION,
    ColumnMapping,
    SignalPair,
    load_record,
    write_record,
    write_table,
)
from records.resample import (
    MIN_RESAMPLING_SCALE,
    detect_reversals,
    irregular_resample,
    regular_reduce,
)

from .optimize import GAConfig, GenerationRecord, fit

logger = logging.getLogger(__name__)

REDUCED = "reduced.csv"
RESAMPLED = "resampled.csv"
ENVELOPE = "envelope.csv"
IDEALIZED = "idealized.csv"
BEST_PARAMS = "best_params.txt"
CONVERGENCE = "convergence.csv"
RESPONSE = "response.csv"
MANIFEST = "manifest.json"


def _default_outdir() -> Path:
    return Path(settings.PIPELINE_OUTPUT_DIR)


class PipelineConfig(BaseModel):
    input: Path | None = Field(None, description="Raw load-deformation record.")
    columns: ColumnMapping = Field(default_factory=ColumnMapping)
    step: int = Field(1, ge=1, description="Regular reduction stride.")
    scale: int = Field(
        100, gt=MIN_RESAMPLING_SCALE, description="Grid points per displacement unit."
    )
    ga: GAConfig = Field(default_factory=GAConfig)
    outdir: Path = Field(default_factory=_default_outdir)
    precision: int = Field(DEFAULT_PRECISION, ge=1, le=17)

    def digest(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def path(self, name: str) -> Path:
        return self.outdir / name


def _merge(base: dict, overrides: Mapping) -> dict:
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_pipeline_config(
    path=None, overrides: Mapping | None = None, defaults: Mapping | None = None
) -> PipelineConfig:
    """
    `defaults`, then the YAML config file (optional), then `overrides`, each
    level deep-merged over the one before. None values never override.
    """
    data = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise PipelineIOError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a mapping")

    data = _merge(_merge(dict(defaults or {}), data), overrides or {})
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def prepare_outdir(outdir: Path) -> Path:
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PipelineIOError(f"cannot create output directory {outdir}: {exc}") from exc
    if not os.access(outdir, os.W_OK):
        raise PipelineIOError(f"output directory {outdir} is not writable")
    return outdir


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def update_manifest(config: PipelineConfig, stage: str, inputs, outputs) -> Path:
    path = config.path(MANIFEST)
    manifest = {}
    if path.is_file():
        try:
            manifest = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            logger.warning("Replacing unreadable manifest %s", path)

    manifest.update(
        {
            "versions": {
                "pivotfit": settings.PIVOTFIT_VERSION,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "pandas": pd.__version__,
            },
            "config_sha256": config.digest(),
            "config": config.model_dump(mode="json"),
        }
    )
    manifest.setdefault("stages", {})[stage] = {
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": sorted(Path(p).name for p in outputs),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def prepare(pair: SignalPair, step: int, scale: int) -> tuple[SignalPair, SignalPair]:
    """Regular reduction then irregular resampling; returns (reduced, resampled)."""
    reduced = regular_reduce(pair, step)
    changes = detect_reversals(reduced.displacement)
    resampled = irregular_resample(reduced, scale, changes)
    return reduced, resampled


def build_backbone(resampled: SignalPair) -> tuple[EnvelopeCurve, IdealizedBackbone]:
    envelope = extract_envelope(resampled)
    return envelope, idealize(envelope)


def read_params(path) -> PivotParams:
    path = Path(path)
    if not path.is_file():
        raise PipelineIOError(f"params file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed params file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"malformed params file {path}: expected name: value lines")
    missing = [name for name in PARAMETER_NAMES if name not in data]
    if missing:
        raise ConfigError(f"malformed params file {path}: missing {', '.join(missing)}")
    try:
        return PivotParams(**{name: data[name] for name in PARAMETER_NAMES})
    except ValidationError as exc:
        raise ConfigError(f"malformed params file {path}: {exc}") from exc


def write_params(path, params: PivotParams) -> Path:
    path = Path(path)
    path.write_text(yaml.safe_dump(params.model_dump(), sort_keys=False), encoding="utf-8")
    logger.info("Wrote %s", path)
    return path


def _read_backbone(config: PipelineConfig) -> IdealizedBackbone:
    return IdealizedBackbone.from_pair(load_record(config.path(IDEALIZED)))


def _write_response(config, resampled: SignalPair, params: PivotParams, backbone) -> Path:
    loads = simulate(backbone, params, resampled.displacement)
    disp_header, _ = resampled.headers
    return write_table(
        config.path(RESPONSE),
        {
            disp_header: resampled.displacement,
            f"simulated_load_{resampled.load_unit}": loads,
            f"experimental_load_{resampled.load_unit}": resampled.load,
        },
        config.precision,
    )


class ConvergenceWriter:
    """Appends one convergence row per generation and flushes it."""

    def __init__(self, path: Path, precision: int):
        self.path = Path(path)
        self.float_format = f"%.{precision}g"
        self.handle = None

    def __enter__(self):
        self.handle = open(self.path, "w", encoding="utf-8", newline="")
        header = ["generation", "best_score", "mean_score", *PARAMETER_NAMES]
        self.handle.write(",".join(header) + "\n")
        return self

    def __exit__(self, *exc_info):
        self.handle.close()

    def __call__(self, record: GenerationRecord) -> None:
        row = {
            "generation": [record.generation],
            "best_score": [record.best_score + 0.0],
            "mean_score": [record.mean_score + 0.0],
        }
        for name in PARAMETER_NAMES:
            row[name] = [getattr(record.best_params, name) + 0.0]
        pd.DataFrame(row).to_csv(
            self.handle,
            header=False,
            index=False,
            float_format=self.float_format,
            lineterminator="\n",
        )
        self.handle.flush()


def run_resample(config: PipelineConfig) -> list[Path]:
    if config.input is None:
        raise ConfigError("no input record given")
    prepare_outdir(config.outdir)
    pair = load_record(config.input, config.columns)
    reduced, resampled = prepare(pair, config.step, config.scale)
    outputs = [
        write_record(config.path(REDUCED), reduced, config.precision),
        write_record(config.path(RESAMPLED), resampled, config.precision),
    ]
    update_manifest(config, "resample", [config.input], outputs)
    return outputs


def run_backbone(config: PipelineConfig) -> list[Path]:
    prepare_outdir(config.outdir)
    resampled = load_record(config.path(RESAMPLED))
    envelope, backbone = build_backbone(resampled)
    disp_header, load_header = resampled.headers
    outputs = [
        write_table(
            config.path(ENVELOPE),
            {disp_header: envelope.displacement, load_header: envelope.load},
            config.precision,
        ),
        write_table(
            config.path(IDEALIZED),
            {disp_header: backbone.displacement, load_header: backbone.load},
            config.precision,
        ),
    ]
    update_manifest(config, "backbone", [config.path(RESAMPLED)], outputs)
    return outputs


def run_fit(config: PipelineConfig) -> list[Path]:
    prepare_outdir(config.outdir)
    resampled = load_record(config.path(RESAMPLED))
    backbone = _read_backbone(config)

    with ConvergenceWriter(config.path(CONVERGENCE), config.precision) as writer:
        try:
            best, history = fit(resampled, backbone, config.ga, on_generation=writer)
        except KeyboardInterrupt:
            raise FitInterrupted(
                f"fit interrupted, convergence history so far kept in {writer.path}"
            ) from None

    outputs = [
        write_params(config.path(BEST_PARAMS), best),
        config.path(CONVERGENCE),
        _write_response(config, resampled, best, backbone),
    ]
    update_manifest(
        config, "fit", [config.path(RESAMPLED), config.path(IDEALIZED)], outputs
    )
    logger.info("Fit stopped on %s after %d generations", history.stop_reason, len(history))
    return outputs


def run_simulate(config: PipelineConfig, params_path=None) -> list[Path]:
    prepare_outdir(config.outdir)
    params_path = Path(params_path) if params_path else config.path(BEST_PARAMS)
    params = read_params(params_path)
    resampled = load_record(config.path(RESAMPLED))
    outputs = [_write_response(config, resampled, params, _read_backbone(config))]
    update_manifest(
        config,
        "simulate",
        [params_path, config.path(RESAMPLED), config.path(IDEALIZED)],
        outputs,
    )
    return outputs


STAGES = {
    "resample": run_resample,
    "backbone": run_backbone,
    "fit": run_fit,
    "simulate": run_simulate,
}


def run_stage(name: str, config: PipelineConfig, **kwargs) -> list[Path]:
    logger.info("Stage %s started", name)
    try:
        outputs = STAGES[name](config, **kwargs)
    except (PivotFitError, OSError) as exc:
        raise StageError(name, exc) from exc
    logger.info("Stage %s wrote %s", name, ", ".join(p.name for p in outputs))
    return outputs


def run_pipeline(config: PipelineConfig) -> list[Path]:
    outputs = []
    for name in STAGES:
        outputs.extend(run_stage(name, config))
    return outputs
