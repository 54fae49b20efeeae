from fitting.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Extract the envelope of resampled.csv and idealize it to 7 points."
    stage = "backbone"
