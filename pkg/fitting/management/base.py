from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from core.exceptions import EXIT_IO, ConfigError, PivotFitError
from fitting.pipeline import PipelineConfig, load_pipeline_config, run_stage
from hysteresis.pivot import PARAMETER_NAMES


def parse_bounds(values) -> dict:
    """["alpha1=1:50", ...] -> {"alpha1": {"lower": 1.0, "upper": 50.0}, ...}"""
    bounds = {}
    for value in values or ():
        name, sep, span = value.partition("=")
        low, colon, high = span.partition(":")
        if not sep or not colon or name not in PARAMETER_NAMES:
            raise ConfigError(
                f"--bounds expects PARAM=LO:HI with PARAM one of "
                f"{', '.join(PARAMETER_NAMES)}, got {value!r}"
            )
        try:
            bounds[name] = {"lower": float(low), "upper": float(high)}
        except ValueError as exc:
            raise ConfigError(f"--bounds {value!r}: {exc}") from exc
    return bounds


class PipelineCommand(BaseCommand):
    """Shared flags and error mapping of the pipeline commands."""

    stage = None

    def add_arguments(self, parser):
        parser.add_argument("--config", help="YAML run configuration.")
        parser.add_argument("--input", help="Raw load-deformation record.")
        parser.add_argument("--outdir", help="Output directory (default PIVOTFIT_OUTDIR).")
        parser.add_argument("--step", type=int, help="Regular reduction stride m.")
        parser.add_argument("--scale", type=int, help="Resampling scale, greater than 10.")
        parser.add_argument("--precision", type=int, help="Significant digits in outputs.")
        parser.add_argument("--seed", type=int, help="GA random seed.")
        parser.add_argument("--population", type=int, help="GA population size.")
        parser.add_argument("--generations", type=int, help="GA generation cap.")
        parser.add_argument("--workers", type=int, help="GA evaluation processes.")
        parser.add_argument(
            "--bounds",
            action="append",
            metavar="PARAM=LO:HI",
            help="Search bounds of one parameter; repeatable.",
        )
        parser.add_argument("--displacement-column", type=int)
        parser.add_argument("--load-column", type=int)
        parser.add_argument("--delimiter", help="',', ';' or 'tab'.")

    def load_config(self, options) -> PipelineConfig:
        overrides = {
            "input": options["input"],
            "outdir": options["outdir"],
            "step": options["step"],
            "scale": options["scale"],
            "precision": options["precision"],
            "columns": {
                "displacement_column": options["displacement_column"],
                "load_column": options["load_column"],
                "delimiter": options["delimiter"],
            },
            "ga": {
                "rng_seed": options["seed"],
                "population_size": options["population"],
                "max_generations": options["generations"],
                "workers": options["workers"],
                "parameter_bounds": parse_bounds(options["bounds"]) or None,
            },
        }
        defaults = {"ga": {"workers": settings.PIPELINE_WORKERS}}
        return load_pipeline_config(options["config"], overrides, defaults)

    def run(self, config: PipelineConfig, options):
        return run_stage(self.stage, config)

    def handle(self, *args, **options):
        try:
            config = self.load_config(options)
            outputs = self.run(config, options)
        except PivotFitError as exc:
            raise CommandError(str(exc), returncode=exc.exit_code) from exc
        except OSError as exc:
            raise CommandError(str(exc), returncode=EXIT_IO) from exc

        for path in outputs:
            self.stdout.write(self.style.SUCCESS(f"wrote {path}"))
