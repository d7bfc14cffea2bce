"""YAML input (config documents) and output (audit tables)."""

from __future__ import annotations

from pathlib import Path
from typing import Any

from yaml import YAMLError, safe_load
from yaml import dump as yaml_dump

from talab.errors import ConfigError, ExportError
from talab.exporters.json import JSONExporter
from talab.utils import check_return, type_check


def load_document(path: Path) -> dict[str, Any]:
    """Read a YAML or JSON mapping.

    Raises:
        ConfigError: If the file is unreadable, unparsable or not a mapping
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as error:
        raise ConfigError(f"cannot read config {path}: {error}") from error
    return parse_document(text, str(path))


def parse_document(text: str, source: str = "<string>") -> dict[str, Any]:
    """Parse YAML text that must hold a mapping."""
    type_check(text, str, "text")
    try:
        data = safe_load(text)
    except YAMLError as error:
        raise ConfigError(f"{source}: {error}") from error
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: expected a mapping at the top level")
    return data


class YAMLExporter:
    """Writes talab values as block-style YAML."""

    def export_to_yaml(self, data: object) -> str:
        """Serialize ``data``; values go through the JSON compatibility pass first.

        Raises:
            ExportError: If serialization fails
        """
        plain = JSONExporter()._check_json_compatibility(data)
        try:
            text = yaml_dump(plain, default_flow_style=False, allow_unicode=True, sort_keys=True)
        except YAMLError as error:
            raise ExportError(f"Failed to serialize to YAML: {error}") from error
        return check_return(text, str, "export_to_yaml")


def to_yaml(data: object) -> str:
    """One-shot ``YAMLExporter().export_to_yaml``."""
    return YAMLExporter().export_to_yaml(data)
