from fitting.management.base import PipelineCommand
from fitting.pipeline import run_stage


class Command(PipelineCommand):
    help = "Simulate the Pivot response on the resampled grid for a params file."
    stage = "simulate"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            "--params", help="Parameter file (default: best_params.txt in the outdir)."
        )

    def run(self, config, options):
        return run_stage(self.stage, config, params_path=options["params"])
