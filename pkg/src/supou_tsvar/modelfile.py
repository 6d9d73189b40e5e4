"""JSON model files.

Numbers are written with 17 significant digits so a save/load/save cycle is
byte-identical; every model invariant is re-validated on load.
"""

import json
import math

from .errors import DomainError, ParseError
from .supou import SupOUModel

FORMAT_VERSION = 1
PARAMETERS = ("alpha", "beta", "A", "B", "C", "shift")


def _number(x):
    text = format(float(x), ".17g")
    # keep the token a JSON float even when it looks like an integer
    return text if any(c in text for c in ".en") else text + ".0"


def dumps(model, metadata=None):
    """Serialize a model and free-form metadata to a JSON string."""
    params = model.parameters()
    lines = [f'    "{k}": {_number(params[k])}' for k in PARAMETERS]
    meta = json.dumps(metadata or {}, indent=2, sort_keys=True, allow_nan=False)
    meta = meta.replace("\n", "\n  ")
    return (
        "{\n"
        f'  "format_version": {FORMAT_VERSION},\n'
        '  "parameters": {\n' + ",\n".join(lines) + "\n  },\n"
        f'  "metadata": {meta}\n'
        "}\n"
    )


def loads(text):
    """Parse a model file; returns ``(SupOUModel, metadata)``.

    Raises
    ------
    ParseError
        On malformed JSON, an unknown format version, missing or non-finite
        parameters, or parameters violating the model invariants.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("model file must hold a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ParseError(f"unsupported model format_version {doc.get('format_version')!r}")
    params = doc.get("parameters")
    if not isinstance(params, dict):
        raise ParseError("model file lacks a 'parameters' object")
    values = {}
    for key in PARAMETERS:
        v = params.get(key)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ParseError(f"parameter {key!r} missing or not a finite number")
        values[key] = float(v)
    try:
        model = SupOUModel.from_parameters(**values)
    except DomainError as exc:
        raise ParseError(f"invalid model parameters: {exc}") from None
    meta = doc.get("metadata", {})
    if not isinstance(meta, dict):
        raise ParseError("'metadata' must be an object")
    return model, meta


def save(path, model, metadata=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(model, metadata))


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
