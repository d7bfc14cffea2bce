"""Tests for JSON, YAML and CSV input and output."""

import json
from fractions import Fraction

import numpy as np
import pytest

from talab import tensora
from talab.errors import BadTable, ConfigError, DataFormatError, ExportError
from talab.exporters.csv import format_table, rows_to_csv
from talab.exporters.json import (
    JSONExporter,
    dataset_to_jsonl,
    load_dataset,
    load_monoid,
    load_weights,
    monoid_to_json,
    parse_dataset,
    to_json,
    weights_to_json,
    write_dataset,
)
from talab.exporters.yaml import load_document, parse_document, to_yaml
from talab.fpx import FloatP
from talab.hardlang import Example, builtin_monoids, monoid_eval
from talab.probe.model import ModelSpec, init_params


def test_json_conversions():
    """FloatP, rationals, arrays, matrices and sets have JSON forms."""
    data = {
        "float": FloatP(5, -4, 3),
        "rational": Fraction(-3, 4),
        "array": np.arange(3),
        "scalar": np.float64(0.5),
        "matrix": tensora.Matrix.from_rows([[1, 2], [3, 4]]),
        "set": frozenset({3, 1, 2}),
        "tuple": (True, None),
    }
    assert json.loads(to_json(data)) == {
        "array": [0, 1, 2],
        "float": {"k": -4, "p": 3, "r": 5},
        "matrix": [[1, 2], [3, 4]],
        "rational": "-3/4",
        "scalar": 0.5,
        "set": [1, 2, 3],
        "tuple": [True, None],
    }


def test_json_warnings():
    """Non-finite floats become null; non-string keys become strings."""
    exporter = JSONExporter()
    text = exporter.export_to_json({"loss": float("nan"), 1: "one"})
    assert json.loads(text) == {"1": "one", "loss": None}
    assert len(exporter.warnings) == 2
    assert any("non-finite" in warning for warning in exporter.warnings)


def test_json_rejects_unknown_types():
    """Objects without a JSON form raise ExportError."""
    with pytest.raises(ExportError, match="object"):
        to_json({"bad": object()})


def test_dataset_round_trip(tmp_path):
    """Written datasets read back unchanged, one compact line per example."""
    examples = [
        Example((0, 1, 1), 1, "closure", {"r": 2}),
        Example((1,), 0, "membership"),
    ]
    text = dataset_to_jsonl(examples)
    assert text.count("\n") == 2
    assert text.splitlines()[0] == '{"label": 1, "meta": {"r": 2}, "task": "closure", "tokens": [0, 1, 1]}'
    path = tmp_path / "sub" / "data.jsonl"
    write_dataset(examples, path)
    loaded = load_dataset(path)
    assert loaded == examples
    assert loaded[0].meta == {"r": 2}


@pytest.mark.parametrize(
    "line",
    [
        "not json",
        "[1, 2]",
        '{"tokens": [], "label": 0, "task": "closure"}',
        '{"tokens": [-1], "label": 0, "task": "closure"}',
        '{"tokens": [true], "label": 0, "task": "closure"}',
        '{"tokens": [0], "label": 2, "task": "closure"}',
        '{"tokens": [0], "label": 0, "task": "parity"}',
        '{"tokens": [0], "label": 0, "task": "closure", "meta": 3}',
    ],
    ids=["syntax", "array", "empty", "negative", "bool", "label", "task", "meta"],
)
def test_dataset_parse_errors(line):
    """Malformed records name their line."""
    text = '{"tokens": [0], "label": 1, "task": "closure"}\n' + line + "\n"
    with pytest.raises(DataFormatError, match="data:2"):
        parse_dataset(text, "data")


def test_dataset_blank_lines_and_missing_file(tmp_path):
    """Blank lines are skipped; a missing file is a format error."""
    assert len(parse_dataset('\n{"tokens": [0], "label": 1, "task": "closure"}\n\n')) == 1
    with pytest.raises(DataFormatError, match="cannot read"):
        load_dataset(tmp_path / "missing.jsonl")


def test_monoid_file_round_trip(tmp_path):
    """A builtin monoid written to disk evaluates the same words."""
    s3 = builtin_monoids()["s3"]
    path = tmp_path / "s3.json"
    path.write_text(monoid_to_json(s3), encoding="utf-8")
    loaded = load_monoid(path)
    assert loaded.target == s3.target
    for word in ("ab", "ba", "aab", "abab", ""):
        assert monoid_eval(loaded, word) == monoid_eval(s3, word)


def test_monoid_file_errors(tmp_path):
    """Non-objects, bad JSON and non-associative tables."""
    path = tmp_path / "m.json"
    path.write_text("[1]", encoding="utf-8")
    with pytest.raises(DataFormatError):
        load_monoid(path)
    path.write_text("{", encoding="utf-8")
    with pytest.raises(DataFormatError, match="not valid JSON"):
        load_monoid(path)
    path.write_text(json.dumps({"size": 2, "identity": 0, "table": [[0, 1], [1, 1]]}), encoding="utf-8")
    assert load_monoid(path).target.size == 2
    path.write_text(json.dumps({"size": 2, "identity": 0, "table": [[0, 1], [0, 1]]}), encoding="utf-8")
    with pytest.raises(BadTable):
        load_monoid(path)


def test_weights_round_trip(tmp_path):
    """Weights survive JSON exactly and carry the depth reference."""
    spec = ModelSpec(vocab=3, d=2, n=4, layers=("rope",), g="mlp")
    params = init_params(spec, 3)
    text = weights_to_json(spec, params, "depth")
    assert json.loads(text)["depth_reference"] == "depth"
    path = tmp_path / "weights.json"
    path.write_text(text, encoding="utf-8")
    loaded_spec, loaded = load_weights(path)
    assert loaded_spec == spec
    assert all(np.array_equal(loaded[name], params[name]) for name in params)


def test_weights_errors(tmp_path):
    """Missing sections and wrong shapes are format errors."""
    spec = ModelSpec(vocab=2, d=2, n=2)
    path = tmp_path / "weights.json"
    path.write_text(json.dumps({"params": {}}), encoding="utf-8")
    with pytest.raises(DataFormatError, match="malformed"):
        load_weights(path)
    document = json.loads(weights_to_json(spec, init_params(spec, 0)))
    document["params"]["readout"] = [[0.0]]
    path.write_text(json.dumps(document), encoding="utf-8")
    with pytest.raises(DataFormatError, match="readout"):
        load_weights(path)
    document["spec"]["layers"] = ["softmax"]
    path.write_text(json.dumps(document), encoding="utf-8")
    with pytest.raises(DataFormatError):
        load_weights(path)


def test_parse_document():
    """YAML mappings parse; scalars, lists and bad syntax do not."""
    assert parse_document("model:\n  d: 2\nsteps: 3\n") == {"model": {"d": 2}, "steps": 3}
    assert parse_document('{"steps": 3}') == {"steps": 3}
    for text in ("- 1\n- 2\n", "3", "a: [1, 2"):
        with pytest.raises(ConfigError):
            parse_document(text)


def test_load_document_missing(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_document(tmp_path / "nope.yaml")


def test_to_yaml():
    """Block style, keys sorted, values through the JSON pass."""
    text = to_yaml([{"operation": "add", "drift": Fraction(1, 8), "pairs": 4}])
    assert text == "- drift: 1/8\n  operation: add\n  pairs: 4\n"


def test_rows_to_csv():
    """Header first; None and NaN cells are empty."""
    rows = [{"a": 1, "b": None}, {"a": float("nan"), "b": 0.25}]
    assert rows_to_csv(rows, ("a", "b")) == "a,b\n1,\n,0.25\n"


def test_format_table():
    """Columns padded to the widest cell, trailing blanks stripped."""
    rows = [{"name": "mul", "ok": True}, {"name": "floor", "ok": False}]
    assert format_table(rows, ("name", "ok")) == (
        "name   ok\n"
        "-----  -----\n"
        "mul    True\n"
        "floor  False\n"
    )
