from django.db import models

from core.models import BaseModel
from hysteresis.pivot import PARAMETER_NAMES, PivotParams
from records.models import Record

FIT_PENDING = "PENDING"
FIT_PROCESSING = "PROCESSING"
FIT_DONE = "DONE"
FIT_FAILED = "FAILED"

FIT_PROCESSING_STATUS = (
    (FIT_PENDING, "Pending"),
    (FIT_PROCESSING, "Processing"),
    (FIT_DONE, "Done"),
    (FIT_FAILED, "Failed"),
)


class FitRun(BaseModel):
    record = models.ForeignKey(Record, on_delete=models.CASCADE, related_name="fit_runs")
    status = models.CharField(
        max_length=50, choices=FIT_PROCESSING_STATUS, default=FIT_PENDING
    )
    # PipelineConfig fields other than input/outdir, as JSON
    config = models.JSONField(default=dict, blank=True)

    alpha1 = models.FloatField(blank=True, null=True)
    alpha2 = models.FloatField(blank=True, null=True)
    beta1 = models.FloatField(blank=True, null=True)
    beta2 = models.FloatField(blank=True, null=True)
    eta = models.FloatField(blank=True, null=True)
    best_score = models.FloatField(blank=True, null=True)
    error = models.TextField(blank=True, null=True)

    def best_params(self) -> PivotParams | None:
        if self.status != FIT_DONE:
            return None
        return PivotParams(**{name: getattr(self, name) for name in PARAMETER_NAMES})


class Generation(BaseModel):
    run = models.ForeignKey(FitRun, on_delete=models.CASCADE, related_name="generations")
    number = models.PositiveIntegerField()
    best_score = models.FloatField()
    mean_score = models.FloatField()

    alpha1 = models.FloatField()
    alpha2 = models.FloatField()
    beta1 = models.FloatField()
    beta2 = models.FloatField()
    eta = models.FloatField()

    class Meta:
        ordering = ["number"]
        constraints = [
            models.UniqueConstraint(fields=["run", "number"], name="unique_generation_per_run")
        ]
