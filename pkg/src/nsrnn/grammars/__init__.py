"""Task PCFGs, refactoring, exact length-conditioned sampling and inside probabilities."""
from .datasets import Dataset, MissingSidecarError, TaskSource, read_dataset, sidecar_path, write_dataset
from .inside import inside, inside_batch, inside_many, log_p_sample_many, p_sample
from .pcfg import EPSILON, GrammarError, Pcfg, Rule
from .refactor import collapse_unary, nullable_weights, refactor_remove_epsilon_unary, remove_epsilon
from .sampling import (
    LengthTable,
    SizedSampler,
    UnachievableLengthError,
    achievable_lengths,
    compositions,
    compute_table,
    compute_weights,
    sample_dataset,
    sample_sized,
)
from .tasks import TASK_DEFAULTS, TASKS, build_task_grammar, f, f_complement, task_alphabet, task_params

__all__ = [
    "Dataset",
    "EPSILON",
    "GrammarError",
    "LengthTable",
    "MissingSidecarError",
    "Pcfg",
    "Rule",
    "SizedSampler",
    "TASKS",
    "TASK_DEFAULTS",
    "TaskSource",
    "UnachievableLengthError",
    "achievable_lengths",
    "build_task_grammar",
    "collapse_unary",
    "compositions",
    "compute_table",
    "compute_weights",
    "f",
    "f_complement",
    "inside",
    "inside_batch",
    "inside_many",
    "log_p_sample_many",
    "nullable_weights",
    "p_sample",
    "read_dataset",
    "refactor_remove_epsilon_unary",
    "remove_epsilon",
    "sample_dataset",
    "sample_sized",
    "sidecar_path",
    "task_alphabet",
    "task_params",
    "write_dataset",
]
