"""JSON and JSON-lines documents: datasets, monoids, model weights, reports.

Values without a JSON counterpart are converted on the way out: FloatP as
``{"r", "k", "p"}``, rationals as ``"n/d"`` strings, numpy arrays and
matrices as nested lists, sets as sorted lists.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Sequence
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from talab.errors import ConfigError, DataFormatError, ExportError, ShapeMismatch
from talab.fpx import FloatP
from talab.hardlang import TASKS, Example, Morphism, monoid_from_dict
from talab.probe.model import ModelSpec, Params, check_params
from talab.tensora import Matrix
from talab.utils import check_return, type_check


class JSONExporter:
    """Converts talab values to JSON text, collecting conversion warnings."""

    def __init__(self) -> None:
        """Start with no warnings."""
        self.warnings: list[str] = []

    def _check_json_compatibility(self, value: object, path: str = "root") -> object:
        """Return a JSON-compatible copy of ``value``.

        Raises:
            ExportError: For values with no JSON representation
        """
        if value is None or isinstance(value, str | bool | int):
            return value
        if isinstance(value, float):
            if not math.isfinite(value):
                self.warnings.append(f"non-finite float {value} written as null at {path}")
                return None
            return value
        if isinstance(value, FloatP):
            return {"r": value.r, "k": value.k, "p": value.p}
        if isinstance(value, Fraction):
            return f"{value.numerator}/{value.denominator}"
        if isinstance(value, np.generic):
            return self._check_json_compatibility(value.item(), path)
        if isinstance(value, np.ndarray):
            return self._check_json_compatibility(value.tolist(), path)
        if isinstance(value, Matrix):
            return self._check_json_compatibility(value.to_rows(), path)
        if isinstance(value, set | frozenset):
            return [self._check_json_compatibility(v, f"{path}[]") for v in sorted(value)]
        if isinstance(value, list | tuple):
            return [self._check_json_compatibility(v, f"{path}[{i}]") for i, v in enumerate(value)]
        if isinstance(value, dict):
            result = {}
            for key, item in value.items():
                if not isinstance(key, str):
                    self.warnings.append(f"Converting non-string key '{key}' to string at {path}")
                result[str(key)] = self._check_json_compatibility(item, f"{path}.{key}")
            return result
        raise ExportError(f"cannot write {type(value).__name__} as JSON at {path}")

    def export_to_json(self, data: object, indent: int | None = 2) -> str:
        """Serialize ``data`` with sorted keys.

        Raises:
            ExportError: If serialization fails
        """
        self.warnings = []
        try:
            text = json.dumps(
                self._check_json_compatibility(data),
                indent=indent,
                ensure_ascii=False,
                sort_keys=True,
                allow_nan=False,
            )
        except (TypeError, ValueError) as error:
            raise ExportError(f"Failed to serialize to JSON: {error}") from error
        return check_return(text, str, "export_to_json")


def to_json(data: object, indent: int | None = 2) -> str:
    """One-shot ``JSONExporter().export_to_json``."""
    return JSONExporter().export_to_json(data, indent)


def _read_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as error:
        raise DataFormatError(f"cannot read {path}: {error}") from error
    except json.JSONDecodeError as error:
        raise DataFormatError(f"{path} is not valid JSON: {error}") from error


# Datasets.


def dataset_to_jsonl(examples: Iterable[Example]) -> str:
    """One compact object per line, keys sorted."""
    exporter = JSONExporter()
    return "".join(exporter.export_to_json(example.to_dict(), indent=None) + "\n" for example in examples)


def write_dataset(examples: Sequence[Example], path: Path) -> None:
    """Write ``examples`` as JSON lines."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dataset_to_jsonl(examples), encoding="utf-8")


def _is_token_id(value: object) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _parse_record(record: Any, where: str) -> Example:
    if not isinstance(record, dict):
        raise DataFormatError(f"{where}: expected an object")
    tokens, label, task = record.get("tokens"), record.get("label"), record.get("task")
    if not isinstance(tokens, list) or not tokens or not all(
        _is_token_id(t) and t >= 0 for t in tokens
    ):
        raise DataFormatError(f"{where}: tokens must be a nonempty list of non-negative integers")
    if not _is_token_id(label) or label not in (0, 1):
        raise DataFormatError(f"{where}: label must be 0 or 1, got {label!r}")
    if task not in TASKS:
        raise DataFormatError(f"{where}: unknown task {task!r}")
    meta = record.get("meta", {})
    if not isinstance(meta, dict):
        raise DataFormatError(f"{where}: meta must be an object")
    return Example(tuple(tokens), label, task, meta)


def parse_dataset(text: str, source: str = "<string>") -> list[Example]:
    """Parse JSON-lines text; blank lines are skipped.

    Raises:
        DataFormatError: For malformed lines or records
    """
    type_check(text, str, "text")
    examples = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        where = f"{source}:{number}"
        try:
            record = json.loads(line)
        except json.JSONDecodeError as error:
            raise DataFormatError(f"{where}: {error}") from error
        examples.append(_parse_record(record, where))
    return examples


def load_dataset(path: Path) -> list[Example]:
    """Read a JSON-lines dataset file.

    Raises:
        DataFormatError: If the file is missing or malformed
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as error:
        raise DataFormatError(f"cannot read dataset {path}: {error}") from error
    return parse_dataset(text, str(path))


# Monoids.


def load_monoid(path: Path) -> Morphism:
    """Read ``{size, table, identity[, letters]}`` from a JSON file.

    Raises:
        DataFormatError: If the file is not a JSON object
        BadTable: If the table is not a monoid
    """
    data = _read_json(path)
    if not isinstance(data, dict):
        raise DataFormatError(f"{path}: monoid document must be an object")
    return monoid_from_dict(data, name=path.stem)


def monoid_to_json(morphism: Morphism) -> str:
    """Monoid table plus its letter map."""
    document = morphism.target.to_dict()
    document["letters"] = dict(morphism.letter_map)
    return to_json(document)


def write_monoid(morphism: Morphism, path: Path) -> None:
    """Write ``monoid_to_json(morphism)`` to ``path``; ``load_monoid`` reads it back."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(monoid_to_json(morphism) + "\n", encoding="utf-8")


# Model weights.


def weights_to_json(spec: ModelSpec, params: Params, depth_reference: str | None = None) -> str:
    """Architecture, parameters and the depth expression the architecture is audited against."""
    document: dict[str, object] = {"spec": spec.to_dict(), "params": params}
    if depth_reference is not None:
        document["depth_reference"] = depth_reference
    return to_json(document)


def load_weights(path: Path) -> tuple[ModelSpec, Params]:
    """Read a weights document written by ``weights_to_json``.

    Raises:
        DataFormatError: If the document is malformed or shapes disagree
    """
    data = _read_json(path)
    try:
        spec = ModelSpec.from_dict(data["spec"])
        params = {name: np.asarray(value, dtype=np.float64) for name, value in data["params"].items()}
    except (KeyError, TypeError, ValueError, AttributeError, ConfigError) as error:
        raise DataFormatError(f"{path}: malformed weights document: {error}") from error
    try:
        check_params(spec, params)
    except ShapeMismatch as error:
        raise DataFormatError(f"{path}: {error.message}") from error
    return spec, params
