"""Report validation against the published JSON schema."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import jsonschema

__all__ = ["report_schema", "validate_report", "write_report"]

_SCHEMA = None


def report_schema() -> dict:
    global _SCHEMA
    if _SCHEMA is None:
        text = resources.files("ikno.schemas").joinpath("report.schema.json").read_text()
        _SCHEMA = json.loads(text)
    return _SCHEMA


def validate_report(report: dict) -> None:
    """Raises jsonschema.ValidationError on a malformed report."""
    jsonschema.validate(report, report_schema())


def write_report(report: dict, path) -> Path:
    """Validate then write a report as UTF-8 JSON. Returns the path."""
    validate_report(report)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return path
