from huey.contrib.djhuey import task

from .methods import process_fit_run


@task()
def run_fit_task(run_id):
    return process_fit_run(run_id)
