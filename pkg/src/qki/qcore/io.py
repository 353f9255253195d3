"""JSON encoding of states and matrices.

State files look like ``{"dims": [["A", 2], ["R", 2]], "matrix_re": [[...]],
"matrix_im": [[...]]}``; floats are written with 17 significant digits.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import InvariantViolation, QkiError
from .states import MultipartiteState, SystemDims


class InputError(QkiError):
    """Malformed input file; the message names the first failing field."""


def _round17(x: float) -> float:
    return float(f"{x:.17g}")


def encode_matrix(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=complex)
    return {
        "matrix_re": [[_round17(v) for v in row] for row in m.real],
        "matrix_im": [[_round17(v) for v in row] for row in m.imag],
    }


def decode_matrix(obj: dict, field: str = "") -> np.ndarray:
    prefix = f"{field}." if field else ""
    for key in ("matrix_re", "matrix_im"):
        if key not in obj:
            raise InputError(f"missing field '{prefix}{key}'")
    try:
        re_ = np.array(obj["matrix_re"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"field '{prefix}matrix_re' is not a numeric matrix: {exc}") from None
    try:
        im_ = np.array(obj["matrix_im"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"field '{prefix}matrix_im' is not a numeric matrix: {exc}") from None
    if re_.ndim != 2:
        raise InputError(f"field '{prefix}matrix_re' must be a 2-d array")
    if im_.shape != re_.shape:
        raise InputError(f"field '{prefix}matrix_im' has shape {im_.shape}, expected {re_.shape}")
    return re_ + 1j * im_


def state_to_json(s: MultipartiteState) -> dict:
    return {"dims": s.dims.to_list(), **encode_matrix(s.matrix)}


def state_from_json(obj) -> MultipartiteState:
    if not isinstance(obj, dict):
        raise InputError("top-level value must be an object")
    if "dims" not in obj:
        raise InputError("missing field 'dims'")
    dims = obj["dims"]
    if not isinstance(dims, list) or not all(
        isinstance(d, (list, tuple)) and len(d) == 2 and isinstance(d[0], str) and isinstance(d[1], int)
        for d in dims
    ):
        raise InputError("field 'dims' must be a list of [label, dim] pairs")
    try:
        sd = SystemDims(dims)
    except QkiError as exc:
        raise InputError(f"field 'dims': {exc}") from None
    m = decode_matrix(obj)
    if m.shape != (sd.total, sd.total):
        raise InputError(f"field 'matrix_re' has shape {m.shape}, expected {(sd.total, sd.total)}")
    try:
        return MultipartiteState(sd, m)
    except InvariantViolation as exc:
        raise InvariantViolation(f"field 'matrix': {exc}") from None


def load_state(path) -> MultipartiteState:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON in {path}: {exc}") from None
    return state_from_json(obj)


def save_state(s: MultipartiteState, path) -> None:
    Path(path).write_text(json.dumps(state_to_json(s)))
