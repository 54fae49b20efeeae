from fitting.management.base import PipelineCommand
from fitting.pipeline import run_pipeline


class Command(PipelineCommand):
    help = "Run resample, backbone, fit and simulate in order."

    def run(self, config, options):
        return run_pipeline(config)
