"""Talab exporters - read and write datasets, configs, weights and tables."""

from .csv import METRICS_HEADER, format_table, rows_to_csv
from .json import (
    JSONExporter,
    dataset_to_jsonl,
    load_dataset,
    load_monoid,
    load_weights,
    monoid_to_json,
    to_json,
    weights_to_json,
    write_dataset,
    write_monoid,
)
from .yaml import YAMLExporter, load_document, to_yaml

__all__ = [
    "METRICS_HEADER",
    "JSONExporter",
    "YAMLExporter",
    "dataset_to_jsonl",
    "format_table",
    "load_dataset",
    "load_document",
    "load_monoid",
    "load_weights",
    "monoid_to_json",
    "rows_to_csv",
    "to_json",
    "to_yaml",
    "weights_to_json",
    "write_dataset",
    "write_monoid",
]
