"""Dataset generation and persistence."""

from app.datagen.generator import (
    Dataset,
    DatasetConfig,
    decode_scenario,
    derive_seed,
    encode_input,
    encode_sample,
    generate_dataset,
    sample_scenario,
    split_configs,
)
from app.datagen.storage import read_dataset, write_dataset

__all__ = [
    "Dataset",
    "DatasetConfig",
    "decode_scenario",
    "derive_seed",
    "encode_input",
    "encode_sample",
    "generate_dataset",
    "sample_scenario",
    "split_configs",
    "read_dataset",
    "write_dataset",
]
