"""File formats: model parameter JSON, data matrices, PGM images.

Model documents carry a ``model_type`` plus dimension fields and row-major
nested arrays:

* ``gaussian``: ``dim``, optional ``scale`` (number or list of length dim)
* ``linear_generative``: ``m``, ``l``, ``prior`` (``gaussian``|``laplace``),
  ``sigma_n`` (default 0.1), ``phi`` (m x l)
* ``bilinear_generative``: ``m``, ``l``, ``k_c``, ``k_d``, ``sigma_n``,
  ``phi`` (m x l), ``theta`` (l x k_c), ``psi`` (l x k_d)
* ``poe``: ``m``, ``l``, ``expert`` (``laplace``|``student_t``),
  ``phi`` (l x m), optional ``lambda`` (length l, default ones)
* ``mcrbm``: ``m``, ``l``, ``k``, ``j``, ``p`` (l x k), ``c`` (l x m),
  ``w`` (j x m), ``b_m`` (j), ``b_c`` (k), ``b_v`` (m), ``sigma``

Matrices are whitespace-delimited text, one sample per row, or binary:
the 8-byte magic ``HAISMAT1``, row and column counts as little-endian
uint32, then little-endian float64 values in row-major order.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractViolation, InputError, ModelFileError
from .models import (
    BilinearGenerative,
    GaussianReference,
    LinearGenerative,
    McRbm,
    PoeModel,
)

MAGIC = b"HAISMAT1"
_HEADER = struct.Struct("<8sII")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- matrices ---------------------------------------------------------------


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as err:
        raise InputError(f"cannot read {path}: {err.strerror}") from None
    if raw.startswith(MAGIC):
        if len(raw) < _HEADER.size:
            raise InputError(f"{path}: truncated header")
        _, rows, cols = _HEADER.unpack_from(raw)
        body = raw[_HEADER.size :]
        if len(body) != 8 * rows * cols:
            raise InputError(f"{path}: header says {rows}x{cols} but body holds {len(body) // 8} values")
        return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(float)
    try:
        data = np.loadtxt(path, ndmin=2)
    except ValueError as err:
        raise InputError(f"{path}: not a numeric text matrix ({err})") from None
    return data


def write_matrix(path, data, binary: bool = False) -> None:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if binary:
        with open(path, "wb") as f:
            f.write(_HEADER.pack(MAGIC, data.shape[0], data.shape[1]))
            f.write(data.astype("<f8").tobytes())
    else:
        np.savetxt(path, data, fmt="%.17g")


def read_image(path) -> np.ndarray:
    """Grayscale 8- or 16-bit PGM as a float array."""
    try:
        with Image.open(path) as im:
            if im.format != "PPM" or im.mode not in ("L", "I", "I;16", "I;16B"):
                raise InputError(f"{path}: expected a grayscale PGM, got {im.format} mode {im.mode}")
            return np.asarray(im, dtype=float)
    except OSError as err:
        raise InputError(f"cannot read image {path}: {err}") from None


def write_pgm(path, image, maxval: int = 255) -> None:
    im = np.asarray(image)
    dtype = ">u1" if maxval < 256 else ">u2"
    with open(path, "wb") as f:
        f.write(f"P5\n{im.shape[1]} {im.shape[0]}\n{maxval}\n".encode())
        f.write(im.astype(dtype).tobytes())


# -- models -----------------------------------------------------------------


def _get(doc: dict, key: str, default=None, required=True):
    if key not in doc:
        if required:
            raise ModelFileError(f"missing field {key!r}", key)
        return default
    return doc[key]


def _array(doc: dict, key: str, shape: tuple[int, ...]) -> np.ndarray:
    try:
        arr = np.asarray(_get(doc, key), dtype=float)
    except (TypeError, ValueError):
        raise ModelFileError(f"field {key!r} is not a numeric array", key) from None
    if arr.shape != shape:
        raise ModelFileError(f"field {key!r} has shape {arr.shape}, expected {shape}", key)
    return arr


def _int(doc: dict, key: str) -> int:
    val = _get(doc, key)
    if not isinstance(val, int) or isinstance(val, bool) or val < 1:
        raise ModelFileError(f"field {key!r} must be a positive integer", key)
    return val


def model_from_dict(doc: dict):
    kind = _get(doc, "model_type")
    try:
        if kind == "gaussian":
            dim = _int(doc, "dim")
            return GaussianReference(dim, doc.get("scale", 1.0))
        if kind == "poe":
            m, l = _int(doc, "m"), _int(doc, "l")
            lam = _array(doc, "lambda", (l,)) if "lambda" in doc else None
            return PoeModel(_array(doc, "phi", (l, m)), lam, _get(doc, "expert"))
        if kind == "mcrbm":
            m, l, k, j = (_int(doc, f) for f in ("m", "l", "k", "j"))
            return McRbm(
                _array(doc, "p", (l, k)),
                _array(doc, "c", (l, m)),
                _array(doc, "w", (j, m)),
                _array(doc, "b_m", (j,)),
                _array(doc, "b_c", (k,)),
                _array(doc, "b_v", (m,)),
                float(_get(doc, "sigma", 1.0, required=False)),
            )
        if kind == "linear_generative":
            m, l = _int(doc, "m"), _int(doc, "l")
            return LinearGenerative(
                _array(doc, "phi", (m, l)),
                _get(doc, "prior"),
                float(_get(doc, "sigma_n", 0.1, required=False)),
            )
        if kind == "bilinear_generative":
            m, l, kc, kd = (_int(doc, f) for f in ("m", "l", "k_c", "k_d"))
            return BilinearGenerative(
                _array(doc, "phi", (m, l)),
                _array(doc, "theta", (l, kc)),
                _array(doc, "psi", (l, kd)),
                float(_get(doc, "sigma_n", 0.1, required=False)),
            )
    except ContractViolation as err:
        raise ModelFileError(str(err)) from None
    raise ModelFileError(f"unknown model_type {kind!r}", "model_type")


def model_to_dict(model) -> dict:
    if isinstance(model, GaussianReference):
        if model.constraints:
            raise ContractViolation("bounded references have no file form")
        return {"model_type": "gaussian", "dim": model.dim, "scale": model.scale.tolist()}
    if isinstance(model, PoeModel):
        return {
            "model_type": "poe",
            "m": model.dim,
            "l": model.n_experts,
            "expert": model.expert,
            "phi": model.phi.tolist(),
            "lambda": model.lam.tolist(),
        }
    if isinstance(model, McRbm):
        return {
            "model_type": "mcrbm",
            "m": model.dim,
            "l": model.c_mat.shape[0],
            "k": model.p_mat.shape[1],
            "j": model.w_mat.shape[0],
            "p": model.p_mat.tolist(),
            "c": model.c_mat.tolist(),
            "w": model.w_mat.tolist(),
            "b_m": model.b_m.tolist(),
            "b_c": model.b_c.tolist(),
            "b_v": model.b_v.tolist(),
            "sigma": model.sigma,
        }
    if isinstance(model, LinearGenerative):
        return {
            "model_type": "linear_generative",
            "m": model.data_dim,
            "l": model.aux_dim,
            "prior": model.prior,
            "sigma_n": model.sigma_n,
            "phi": model.phi.tolist(),
        }
    if isinstance(model, BilinearGenerative):
        return {
            "model_type": "bilinear_generative",
            "m": model.data_dim,
            "l": model.phi.shape[1],
            "k_c": model.k_c,
            "k_d": model.k_d,
            "sigma_n": model.sigma_n,
            "phi": model.phi.tolist(),
            "theta": model.theta.tolist(),
            "psi": model.psi.tolist(),
        }
    raise ContractViolation(f"no file form for {type(model).__name__}")


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as err:
        raise InputError(f"cannot read {path}: {err.strerror}") from None
    except json.JSONDecodeError as err:
        raise ModelFileError(f"{path}: invalid JSON ({err})") from None
    if not isinstance(doc, dict):
        raise ModelFileError(f"{path}: top level must be an object")
    return model_from_dict(doc)


def save_model(path, model) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")
