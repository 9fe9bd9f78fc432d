"""Deterministic JSON writing used for every artifact the toolkit emits."""

import json
from pathlib import Path

SIG_DIGITS = 9


def _round_floats(obj):
    if isinstance(obj, float):
        return float(format(obj, f".{SIG_DIGITS}g"))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def dumps(obj) -> str:
    # repr of a float rounded to 9 significant digits never needs more than 9
    return json.dumps(_round_floats(obj), indent=2, sort_keys=False, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def read_json(path):
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return json.load(fh)
