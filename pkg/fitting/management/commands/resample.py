from fitting.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Reduce and resample a raw record onto a uniform displacement grid."
    stage = "resample"
