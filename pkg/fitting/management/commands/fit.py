from fitting.management.base import PipelineCommand


class Command(PipelineCommand):
    help = (
        "Identify the Pivot parameters with the genetic algorithm. "
        "alpha1 and alpha2 are weakly constrained when the record's unloading "
        "branches are short, so refits with another seed may return different "
        "alphas with nearly the same score."
    )
    stage = "fit"
