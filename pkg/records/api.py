from django.http import JsonResponse
from django.utils.decorators import method_decorator
from django.views import View
from django.views.decorators.csrf import csrf_exempt

from core.exceptions import PivotFitError
from fitting.models import FitRun
from fitting.pipeline import load_pipeline_config
from fitting.tasks import run_fit_task

from .models import Record

# form field -> (config section, config key)
FIT_FIELDS = {
    "step": (None, "step"),
    "scale": (None, "scale"),
    "seed": ("ga", "rng_seed"),
    "population": ("ga", "population_size"),
    "generations": ("ga", "max_generations"),
    "displacement_column": ("columns", "displacement_column"),
    "load_column": ("columns", "load_column"),
    "delimiter": ("columns", "delimiter"),
    "displacement_unit": ("columns", "displacement_unit"),
    "load_unit": ("columns", "load_unit"),
}


def _overrides(form) -> dict:
    overrides = {"ga": {}, "columns": {}}
    for field, (section, key) in FIT_FIELDS.items():
        value = form.get(field)
        if value in (None, ""):
            continue
        if section is None:
            overrides[key] = value
        else:
            overrides[section][key] = value
    return overrides


@method_decorator(csrf_exempt, name="dispatch")
class RecordUploadAPI(View):
    def post(self, request, *args, **kwargs):
        uploaded_file = request.FILES.get("file")

        if not uploaded_file:
            return JsonResponse({"error": "No file uploaded"}, status=400)

        try:
            config = load_pipeline_config(overrides=_overrides(request.POST))
        except PivotFitError as exc:
            return JsonResponse({"error": str(exc)}, status=400)

        columns = config.columns
        record = Record(
            file_path=uploaded_file,
            file_name=uploaded_file.name,
            displacement_column=columns.displacement_column,
            load_column=columns.load_column,
            delimiter=columns.delimiter,
            displacement_unit=columns.displacement_unit,
            load_unit=columns.load_unit,
        )
        record.save()

        run = FitRun.objects.create(
            record=record,
            config=config.model_dump(mode="json", include={"step", "scale", "ga"}),
        )

        run_fit_task(run.id)

        return JsonResponse(
            {
                "success": True,
                "record_id": str(record.id),
                "run_id": str(run.id),
                "status": run.status,
            }
        )


@method_decorator(csrf_exempt, name="dispatch")
class RecordRetrieveAPI(View):
    def get(self, request, *args, **kwargs):
        records = Record.objects.all().order_by("-created_at")

        response = {
            "records": [
                {
                    "record_id": str(record.id),
                    "file_name": record.file_name,
                    "displacement_unit": record.displacement_unit,
                    "load_unit": record.load_unit,
                    "fit_runs": [str(run.id) for run in record.fit_runs.order_by("created_at")],
                    "created_at": record.created_at,
                }
                for record in records
            ]
        }

        return JsonResponse(response)
