import math
from csv import DictWriter
from dataclasses import fields, is_dataclass
from enum import Enum

import numpy as np
from ujson import dumps


def to_jsonable(value):
    """Convert numeric results to plain JSON values.

    Complex numbers become ``{"re": ..., "im": ...}`` and non-finite floats become
    the strings ``"nan"``, ``"inf"`` and ``"-inf"``.

    Args:
        value: Any combination of dicts, sequences, dataclasses, numpy arrays and scalars.

    Returns:
        The same structure built from dict, list, str, int, float, bool and None.
    """
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if is_dataclass(value) and not isinstance(value, type):
        return {f.name: to_jsonable(getattr(value, f.name)) for f in fields(value) if f.repr}
    if isinstance(value, np.ndarray):
        return [to_jsonable(item) for item in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, (set, frozenset)):
        return [to_jsonable(item) for item in sorted(value)]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": _float(value.real), "im": _float(value.imag)}
    if isinstance(value, (float, np.floating)):
        return _float(value)
    return value


def _float(value: float):
    value = float(value)
    if math.isfinite(value):
        return value
    return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")


def json_serialize(report: dict) -> str:
    """Canonical JSON text of a report: sorted keys, shortest round-trip floats."""
    return dumps(to_jsonable(report), sort_keys=True, indent=2, escape_forward_slashes=False, ensure_ascii=False)


def csv_serialize(row: dict) -> dict:
    """Flatten a table row for the CSV writer, splitting complex cells into ``_re`` and ``_im`` columns."""
    flat = {}
    for key, value in row.items():
        value = to_jsonable(value)
        if isinstance(value, dict) and set(value) == {"re", "im"}:
            flat[f"{key}_re"] = value["re"]
            flat[f"{key}_im"] = value["im"]
        elif isinstance(value, list):
            flat[key] = " ".join(str(item) for item in value)
        else:
            flat[key] = value
    return flat


def write_report(path: str, report: dict) -> None:
    with open(path, "w") as f:
        f.write(json_serialize(report))
        f.write("\n")


def write_table(path: str, rows: list[dict]) -> None:
    """Write rows as CSV; columns follow first appearance across rows."""
    flat = [csv_serialize(row) for row in rows]
    fieldnames = []
    for row in flat:
        fieldnames.extend(key for key in row if key not in fieldnames)
    with open(path, "w", newline="") as f:
        writer = DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(flat)
