import logging

from core.methods import send_notification
from hysteresis.pivot import PARAMETER_NAMES
from records.ingest import load_record

from .models import FIT_DONE, FIT_FAILED, FIT_PROCESSING, FitRun, Generation
from .optimize import GenerationRecord, fit
from .pipeline import PipelineConfig, build_backbone, prepare

logger = logging.getLogger(__name__)


def process_fit_run(run_id):
    run = FitRun.objects.select_related("record").get(id=run_id)
    run.status = FIT_PROCESSING
    run.save()
    send_notification("fit_started", {"run_id": str(run.id), "file_name": run.record.file_name})

    def on_generation(record: GenerationRecord):
        params = record.best_params.model_dump()
        Generation.objects.create(
            run=run,
            number=record.generation,
            best_score=record.best_score,
            mean_score=record.mean_score,
            **params,
        )
        send_notification(
            "fit_generation",
            {
                "run_id": str(run.id),
                "generation": record.generation,
                "best_score": record.best_score,
            },
        )

    try:
        config = PipelineConfig.model_validate(run.config)
        pair = load_record(run.record.file_path.path, run.record.column_mapping())
        _, resampled = prepare(pair, config.step, config.scale)
        _, backbone = build_backbone(resampled)
        best, history = fit(resampled, backbone, config.ga, on_generation=on_generation)
    except Exception as exc:
        logger.exception("Fit run %s failed", run.id)
        run.status = FIT_FAILED
        run.error = str(exc)
        run.save()
        send_notification("fit_failed", {"run_id": str(run.id), "error": run.error})
        return None

    for name in PARAMETER_NAMES:
        setattr(run, name, getattr(best, name))
    run.best_score = float(history.best_scores[-1])
    run.status = FIT_DONE
    run.save()

    result = best.model_dump()
    send_notification("fit_done", {"run_id": str(run.id), "best_params": result})
    return result
