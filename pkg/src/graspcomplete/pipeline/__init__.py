from .run import (
    FAILURE_KINDS,
    VARIANTS,
    IterationRecord,
    PipelineConfig,
    RunReport,
    free_sweep_offset,
    initial_stage,
    run,
    stage_seed,
    wrist_camera,
)

__all__ = [
    "FAILURE_KINDS",
    "VARIANTS",
    "IterationRecord",
    "PipelineConfig",
    "RunReport",
    "free_sweep_offset",
    "initial_stage",
    "run",
    "stage_seed",
    "wrist_camera",
]
from .experiment import (
    AGGREGATE_FIELDS,
    aggregate_rows,
    final_rows,
    iteration_rows,
    pairwise_tests,
    parse_config,
    resolve_scene,
    run_experiment,
    write_experiment,
    write_run,
)

__all__ += [
    "AGGREGATE_FIELDS",
    "aggregate_rows",
    "final_rows",
    "iteration_rows",
    "pairwise_tests",
    "parse_config",
    "resolve_scene",
    "run_experiment",
    "write_experiment",
    "write_run",
]
