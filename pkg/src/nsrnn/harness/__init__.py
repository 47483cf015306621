"""Training, grid search, evaluation and the command-line interface."""
from .data import DataConfig, derive_seed, generate_splits, generate_test_set, test_seed
from .evaluate import (
    LengthReport,
    differences_by_length,
    differences_from_strings_csv,
    evaluate_by_length,
    evaluate_on,
    save_report,
)
from .grid import (
    EMBEDDING_GRID,
    NS_STACK_SIZES,
    CellResult,
    GridResult,
    Job,
    JobResult,
    grid_cells,
    grid_search_restarts,
    model_config_for,
    run_job,
    select_best,
)
from .train import (
    LEARNING_RATE_GRID,
    METRICS_HEADER,
    EpochRecord,
    Metrics,
    TrainConfig,
    TrainingError,
    TrainResult,
    cross_entropy,
    cross_entropy_diff,
    length_batches,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
