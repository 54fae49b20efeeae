from django.http import JsonResponse
from django.utils.decorators import method_decorator
from django.views import View
from django.views.decorators.csrf import csrf_exempt

from hysteresis.pivot import PARAMETER_NAMES

from .models import FIT_DONE, FIT_FAILED, FitRun


@method_decorator(csrf_exempt, name="dispatch")
class FitStatusAPI(View):
    def get(self, request, run_id, *args, **kwargs):
        try:
            run = FitRun.objects.select_related("record").get(id=run_id)
        except FitRun.DoesNotExist:
            return JsonResponse({"error": "Fit run not found"}, status=404)

        response = {
            "run_id": str(run.id),
            "record_id": str(run.record_id),
            "file_name": run.record.file_name,
            "status": run.status,
            "generations": run.generations.count(),
            "created_at": run.created_at,
            "updated_at": run.updated_at,
        }

        if run.status == FIT_DONE:
            response["best_params"] = run.best_params().model_dump()
            response["best_score"] = run.best_score
        elif run.status == FIT_FAILED:
            response["error"] = run.error

        return JsonResponse(response)


@method_decorator(csrf_exempt, name="dispatch")
class FitGenerationsAPI(View):
    def get(self, request, run_id, *args, **kwargs):
        try:
            run = FitRun.objects.get(id=run_id)
        except FitRun.DoesNotExist:
            return JsonResponse({"error": "Fit run not found"}, status=404)

        response = {
            "run_id": str(run.id),
            "generations": [
                {
                    "generation": generation.number,
                    "best_score": generation.best_score,
                    "mean_score": generation.mean_score,
                    **{name: getattr(generation, name) for name in PARAMETER_NAMES},
                }
                for generation in run.generations.all()
            ],
        }

        return JsonResponse(response)
