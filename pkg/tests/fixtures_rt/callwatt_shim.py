"""No-op breakpoint stub: behavior-diff runs resolve the shim to this."""


def before_execution_INSERTED_INTO_SCRIPT(experiment_file_path=None, function_to_run=None):
    return {"start_ms": 0}


def after_execution_INSERTED_INTO_SCRIPT(
    start_times=None,
    experiment_file_path=None,
    function_to_run=None,
    method_object=None,
    function_args=None,
    function_kwargs=None,
):
    return None
