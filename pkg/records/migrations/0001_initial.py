import uuid

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="Record",
            fields=[
                (
                    "id",
                    models.UUIDField(
                        default=uuid.uuid4,
                        editable=False,
                        primary_key=True,
                        serialize=False,
                    ),
                ),
                ("created_at", models.DateTimeField(auto_now_add=True)),
                ("updated_at", models.DateTimeField(auto_now=True)),
                ("file_name", models.CharField(max_length=255)),
                ("file_path", models.FileField(upload_to="records/")),
                ("displacement_column", models.PositiveSmallIntegerField(default=0)),
                ("load_column", models.PositiveSmallIntegerField(default=1)),
                ("delimiter", models.CharField(default=",", max_length=8)),
                ("displacement_unit", models.CharField(default="mm", max_length=20)),
                ("load_unit", models.CharField(default="kN", max_length=20)),
            ],
            options={
                "abstract": False,
            },
        ),
    ]
