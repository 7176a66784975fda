from ._metasgd import (
    IoError,
    NumericError,
    ShapeError,
    canonical_config,
    checkpoint_arrays,
    config_hash,
    evaluate_checkpoint,
    export_curve,
    gradcheck,
    run_eval,
    run_train,
)

__all__ = [
    "IoError",
    "NumericError",
    "ShapeError",
    "canonical_config",
    "checkpoint_arrays",
    "config_hash",
    "evaluate_checkpoint",
    "export_curve",
    "gradcheck",
    "run_eval",
    "run_train",
]
