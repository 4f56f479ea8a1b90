"""The accumulating JSON analysis report and its published schema.

One report file describes a full analysis; each CLI subcommand
read-modify-writes its own section. Every write validates against the
schema shipped with the package, floats serialize with Python's
shortest-round-trip repr, and keys are sorted, so reruns are
byte-identical.
"""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import jsonschema

from . import __version__
from .spectral import UNSTABLE, EigenSystem, memory_horizon

REPORT_NAME = "report.json"
SCHEMA_NAME = "report_schema.json"


def load_schema() -> dict:
    text = resources.files("koopstate").joinpath(SCHEMA_NAME).read_text(encoding="utf-8")
    return json.loads(text)


def validate_report(doc: dict) -> None:
    jsonschema.validate(doc, load_schema())


def new_report(manifest_dict: dict | None = None, seed: int | None = None) -> dict:
    doc: dict = {"toolkit_version": __version__}
    if manifest_dict is not None:
        doc["manifest"] = dict(manifest_dict)
    if seed is not None:
        doc["seed"] = int(seed)
    return doc


def horizon_to_json(value) -> float | str:
    """Report encoding: finite float, "inf", or "unstable"."""
    if value == UNSTABLE:
        return UNSTABLE
    if math.isinf(value):
        return "inf"
    return float(value)


def spectrum_entries(eigsys: EigenSystem, epsilon: float) -> list[dict]:
    entries = []
    for index, lam in enumerate(eigsys.values):
        entries.append(
            {
                "index": index,
                "lambda_re": float(lam.real),
                "lambda_im": float(lam.imag),
                "modulus": float(abs(lam)),
                "memory_horizon": horizon_to_json(memory_horizon(lam, epsilon)),
            }
        )
    return entries


def read_report(path) -> dict:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    validate_report(doc)
    return doc


def write_report(doc: dict, path) -> None:
    validate_report(doc)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def update_report(path, updates: dict) -> dict:
    """Merge ``updates`` into the report at ``path`` (created if missing)."""
    path = Path(path)
    doc = read_report(path) if path.exists() else new_report()
    doc.update(updates)
    write_report(doc, path)
    return doc
