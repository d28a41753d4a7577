"""Dataset ingestion, client partitioning, and backdoor-trigger tooling."""

from .backdoor import TriggerSpec, inject_backdoor, make_backdoor_testset
from .datasets import (
    ClientDataset,
    Dataset,
    SyntheticSpec,
    concat,
    make_synthetic,
    partition,
    split_train_val,
)
from .idx import (
    BadMagicError,
    CountMismatchError,
    DataFormatError,
    TruncatedFileError,
    load_idx,
    read_idx_images,
    read_idx_labels,
    write_idx_images,
    write_idx_labels,
)

__all__ = [
    "BadMagicError",
    "ClientDataset",
    "CountMismatchError",
    "DataFormatError",
    "Dataset",
    "SyntheticSpec",
    "TriggerSpec",
    "TruncatedFileError",
    "concat",
    "inject_backdoor",
    "load_idx",
    "make_backdoor_testset",
    "make_synthetic",
    "partition",
    "read_idx_images",
    "read_idx_labels",
    "split_train_val",
    "write_idx_images",
    "write_idx_labels",
]
