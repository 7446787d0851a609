"""Schema registry for persisted artifacts.

Every JSON artifact the pipeline writes has a draft-07 schema shipped under
``expecta/schemas``, and every CSV has a header descriptor in
``csv_formats.json``.  The library itself only needs the cheap header checks;
full JSON-schema validation is optional and used by the test suite.
"""

from __future__ import annotations

import json
import re
from importlib import resources

from .exceptions import FormatError

JSON_SCHEMAS = (
    "config",
    "dataset_meta",
    "checkpoint",
    "calibration",
    "manifest",
    "summary",
    "overlap",
    "overlap_table",
    "report",
)


def schema_text(name):
    """Return the raw JSON text of a shipped schema file."""
    fname = name if name.endswith(".json") else f"{name}.schema.json"
    ref = resources.files("expecta") / "schemas" / fname
    if not ref.is_file():
        raise FormatError(f"no shipped schema named {name!r}")
    return ref.read_text(encoding="utf-8")


def load_schema(name):
    """Load a shipped JSON schema by short name, e.g. ``"report"``."""
    return json.loads(schema_text(name))


def csv_formats():
    """Return the shipped CSV header descriptors."""
    return json.loads(schema_text("csv_formats.json"))


def check_csv_header(kind, header):
    """Check a CSV header row against the shipped descriptor for ``kind``.

    Raises FormatError on any mismatch.  Descriptors come in two shapes:
    a fixed ``header`` list, or a ``prefix`` plus either a single variadic
    ``tail`` column name or a ``middle_pattern`` regex with a fixed
    ``suffix``.
    """
    formats = csv_formats()
    if kind not in formats:
        raise FormatError(f"unknown csv format {kind!r}")
    desc = formats[kind]
    header = list(header)
    if "header" in desc:
        if header != desc["header"]:
            raise FormatError(
                f"{kind} header mismatch: expected {desc['header']}, got {header}"
            )
        return
    prefix = desc["prefix"]
    if header[: len(prefix)] != prefix:
        raise FormatError(
            f"{kind} header must start with {prefix}, got {header[: len(prefix)]}"
        )
    rest = header[len(prefix):]
    if "tail" in desc:
        if rest != [desc["tail"]]:
            raise FormatError(
                f"{kind} header must end with a single {desc['tail']!r} column"
            )
        return
    suffix = desc["suffix"]
    if header[-len(suffix):] != suffix:
        raise FormatError(f"{kind} header must end with {suffix}")
    middle = rest[: len(rest) - len(suffix)]
    pat = re.compile(desc["middle_pattern"])
    bad = [c for c in middle if not pat.match(c)]
    if bad:
        raise FormatError(f"{kind} value columns {bad} do not match {pat.pattern!r}")


def validate_json(obj, schema_name):
    """Validate ``obj`` against a shipped schema.  Needs ``jsonschema``."""
    import jsonschema

    jsonschema.validate(obj, load_schema(schema_name))
