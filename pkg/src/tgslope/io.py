"""File formats: matrix CSV, dense ``.t3d`` tensors, lambda files, JSON configs and result tables."""

import csv
import json
import math
import struct

import numpy as np

from .errors import FormatError, InvalidArgumentError
from .tensor import as_tensor3

T3D_MAGIC = b"T3DENSE1"
_T3D_HEADER = struct.Struct("<8sQQQ")


def _fmt(value):
    # repr of a Python float is the shortest string that round-trips
    return repr(float(value))


def _data_lines(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return [(i + 1, ln.strip()) for i, ln in enumerate(lines) if ln.strip() and not ln.lstrip().startswith("#")]


def _parse_float(token, path, lineno):
    try:
        return float(token)
    except ValueError:
        raise FormatError(f"{path}:{lineno}: not a number: {token!r}") from None


def read_matrix_csv(path):
    """Headerless comma-separated matrix, one row per line; ``#`` lines are ignored."""
    rows = []
    for lineno, line in _data_lines(path):
        rows.append([_parse_float(tok.strip(), path, lineno) for tok in line.split(",")])
    if not rows:
        raise FormatError(f"{path}: no data rows")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise FormatError(f"{path}: row {i + 1} has {len(row)} columns, expected {width}")
    return np.array(rows, dtype=float)


def write_matrix_csv(path, m, meta=None):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise InvalidArgumentError(f"matrix CSV needs a 2-d array, got shape {m.shape}")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            for row in m:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
            if meta:
                fh.write(meta_line(meta) + "\n")
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc.strerror or exc}") from exc


def encode_t3d(t):
    t = as_tensor3(t)
    p1, p2, p3 = t.shape
    payload = np.asarray(t.ravel(order="F"), dtype="<f8").tobytes()
    return _T3D_HEADER.pack(T3D_MAGIC, p1, p2, p3) + payload


def decode_t3d(data, source="<bytes>"):
    if len(data) < _T3D_HEADER.size:
        raise FormatError(f"{source}: truncated header ({len(data)} bytes)")
    magic, p1, p2, p3 = _T3D_HEADER.unpack_from(data)
    if magic != T3D_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}, expected {T3D_MAGIC!r}")
    count = p1 * p2 * p3
    expected = _T3D_HEADER.size + 8 * count
    if len(data) != expected:
        kind = "truncated payload" if len(data) < expected else "trailing bytes"
        raise FormatError(f"{source}: {kind}: {len(data)} bytes, expected {expected} for dims {(p1, p2, p3)}")
    values = np.frombuffer(data, dtype="<f8", count=count, offset=_T3D_HEADER.size)
    return np.asfortranarray(values.astype(float).reshape((p1, p2, p3), order="F"))


def read_t3d(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return decode_t3d(data, source=str(path))


def write_t3d(path, t):
    try:
        with open(path, "wb") as fh:
            fh.write(encode_t3d(t))
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_lambda(path, p=None):
    """One value per line; must be finite, nonnegative and nonincreasing."""
    values = [_parse_float(line, path, lineno) for lineno, line in _data_lines(path)]
    if not values:
        raise FormatError(f"{path}: empty lambda file")
    lam = np.array(values)
    if not np.all(np.isfinite(lam)):
        raise FormatError(f"{path}: lambda has non-finite entries")
    if lam.min() < 0:
        raise FormatError(f"{path}: lambda entries must be nonnegative")
    bad = np.flatnonzero(np.diff(lam) > 0)
    if bad.size:
        i = int(bad[0])
        raise FormatError(f"{path}: lambda is not nonincreasing (line {i + 2}: {lam[i + 1]!r} > {lam[i]!r})")
    if p is not None and lam.size != p:
        raise FormatError(f"{path}: lambda has {lam.size} entries, design has p={p}")
    return lam


def write_lambda(path, lam):
    with open(path, "w", encoding="utf-8") as fh:
        for v in np.asarray(lam, dtype=float):
            fh.write(_fmt(v) + "\n")


def read_config(path, allowed):
    """JSON object whose keys must all be in ``allowed``."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise InvalidArgumentError(f"{path}: unknown config keys {unknown}")
    return cfg


def meta_line(meta):
    return "# " + ", ".join(f"{k}={v}" for k, v in meta.items())


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else _fmt(v)
    return str(v)


def write_table_csv(path, header, rows, meta):
    """CSV with a header row and a trailing ``# key=value, ...`` metadata line."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
            fh.write(meta_line(meta) + "\n")
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_table_csv(path):
    """Inverse of :func:`write_table_csv`: returns ``(header, rows, meta_text)``."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    meta = lines[-1][2:] if lines and lines[-1].startswith("# ") else ""
    body = [ln for ln in lines if not ln.startswith("#")]
    reader = list(csv.reader(body))
    return reader[0], reader[1:], meta


def write_json(path, obj):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc.strerror or exc}") from exc
