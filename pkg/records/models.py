from django.db import models

from core.models import BaseModel

from .ingest import ColumnMapping


class Record(BaseModel):
    file_name = models.CharField(max_length=255)
    file_path = models.FileField(upload_to="records/")
    displacement_column = models.PositiveSmallIntegerField(default=0)
    load_column = models.PositiveSmallIntegerField(default=1)
    delimiter = models.CharField(max_length=8, default=",")
    displacement_unit = models.CharField(max_length=20, default="mm")
    load_unit = models.CharField(max_length=20, default="kN")

    def __str__(self):
        return self.file_name

    def column_mapping(self) -> ColumnMapping:
        return ColumnMapping(
            displacement_column=self.displacement_column,
            load_column=self.load_column,
            delimiter=self.delimiter,
            displacement_unit=self.displacement_unit,
            load_unit=self.load_unit,
        )
