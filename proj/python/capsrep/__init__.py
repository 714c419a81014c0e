"""Capsule-routed invariant/equivariant representation learning.

The heavy lifting lives in the compiled ``_core`` extension; this package
re-exports its public surface.
"""

from capsrep._core import (
    Checkpoint,
    ConfigError,
    ContractError,
    DatasetArchive,
    DimError,
    IoError,
    Model,
    NumericError,
    ParamError,
    generate_dataset,
    load_archive,
    load_checkpoint,
    online_eval_point,
    pretrain,
    r_squared,
    resume_pretrain,
    retrieval_metrics,
    train_config_json,
)

__all__ = [
    "Checkpoint",
    "ConfigError",
    "ContractError",
    "DatasetArchive",
    "DimError",
    "IoError",
    "Model",
    "NumericError",
    "ParamError",
    "generate_dataset",
    "load_archive",
    "load_checkpoint",
    "online_eval_point",
    "pretrain",
    "r_squared",
    "resume_pretrain",
    "retrieval_metrics",
    "train_config_json",
]
