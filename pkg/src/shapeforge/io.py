"""Readers and writers for landmark/curve CSV files, Wavefront OBJ meshes
and JSON batches. Floats are written with 17 significant digits so that
every double survives a write/read cycle unchanged."""

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .geometry import GeometryError
from .surfaces.mesh import TriangleMesh


class InputError(GeometryError):
    """Malformed input file."""


def format_float(value):
    return format(float(value), ".17g")


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _parse_float(text, where):
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"{where}: cannot parse {text.strip()!r} as a number") from None
    if not np.isfinite(value):
        raise InputError(f"{where}: non-finite value {text.strip()!r}")
    return value


def parse_csv_matrix(text, source="<string>", n_columns=None):
    """Rows of comma-separated numbers -> 2d array (row = point)."""
    rows = []
    for line_no, row in enumerate(csv.reader(text.splitlines()), start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if row[0].lstrip().startswith("#"):
            continue
        values = [_parse_float(cell, f"{source}, line {line_no}") for cell in row]
        if rows and len(values) != len(rows[0]):
            raise InputError(
                f"{source}, line {line_no}: expected {len(rows[0])} columns, got {len(values)}"
            )
        if n_columns is not None and len(values) != n_columns:
            raise InputError(f"{source}, line {line_no}: expected {n_columns} columns, got {len(values)}")
        rows.append(values)
    if not rows:
        raise InputError(f"{source}: no data rows")
    return np.array(rows, dtype=float)


def read_csv_matrix(path, n_columns=None):
    path = Path(path)
    return parse_csv_matrix(path.read_text(), str(path), n_columns)


def format_csv_matrix(matrix):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    return "".join(",".join(format_float(v) for v in row) + "\n" for row in matrix)


def write_csv_matrix(path, matrix):
    Path(path).write_text(format_csv_matrix(matrix))


def parse_obj(text, source="<string>"):
    """Vertices and triangular faces from OBJ text (1-based indices;
    ``f a/b/c`` forms keep the vertex index)."""
    vertices, faces = [], []
    face_record = 0
    for line_no, line in enumerate(text.splitlines(), start=1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        where = f"{source}, line {line_no}"
        if parts[0] == "v":
            if len(parts) < 4:
                raise InputError(f"{where}: vertex record needs three coordinates")
            vertices.append([_parse_float(p, where) for p in parts[1:4]])
        elif parts[0] == "f":
            face_record += 1
            if len(parts) != 4:
                raise InputError(
                    f"{where}: face record {face_record} has {len(parts) - 1} vertices; "
                    "only triangles are supported"
                )
            try:
                idx = [int(p.split("/")[0]) for p in parts[1:]]
            except ValueError:
                raise InputError(f"{where}: face record {face_record} has a non-integer index") from None
            if any(i < 1 for i in idx):
                raise InputError(f"{where}: face record {face_record} has an index below 1")
            faces.append([i - 1 for i in idx])
    if not vertices or not faces:
        raise InputError(f"{source}: mesh needs at least one vertex and one face")
    vertices = np.array(vertices, dtype=float)
    faces = np.array(faces, dtype=np.int64)
    if faces.max() >= len(vertices):
        record = int(np.flatnonzero((faces >= len(vertices)).any(axis=1))[0]) + 1
        raise InputError(f"{source}: face record {record} refers to a missing vertex")
    return TriangleMesh(vertices, faces)


def read_obj(path):
    path = Path(path)
    return parse_obj(path.read_text(), str(path))


def format_obj(vertices, faces):
    lines = ["v " + " ".join(format_float(c) for c in v) for v in np.asarray(vertices, float)]
    lines += ["f " + " ".join(str(int(i) + 1) for i in f) for f in np.asarray(faces)]
    return "\n".join(lines) + "\n"


def write_obj(path, vertices, faces):
    Path(path).write_text(format_obj(vertices, faces))


def read_json_batch(path):
    """Named collection ``{"items": [{"name", "data", "x"?}, ...]}``.

    ``data`` is either a nested list (point matrix) or a file path relative
    to the batch file. Returns a list of dicts with ``name``, ``data`` and
    ``x`` (None when absent)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise InputError(f"{path}, line {err.lineno}: invalid JSON ({err.msg})") from None
    items = doc.get("items") if isinstance(doc, dict) else None
    if not isinstance(items, list) or not items:
        raise InputError(f"{path}: expected a non-empty 'items' list")
    out = []
    for number, item in enumerate(items, start=1):
        where = f"{path}, item {number}"
        if not isinstance(item, dict) or "data" not in item:
            raise InputError(f"{where}: each item needs a 'data' entry")
        data = item["data"]
        if isinstance(data, str):
            target = path.parent / data
            data = read_obj(target) if target.suffix.lower() == ".obj" else read_csv_matrix(target)
        else:
            try:
                data = np.array(data, dtype=float)
            except (TypeError, ValueError):
                raise InputError(f"{where}: 'data' is not a numeric matrix") from None
            if not np.all(np.isfinite(data)):
                raise InputError(f"{where}: 'data' contains NaN or inf")
        x = item.get("x")
        if x is not None:
            x = _parse_float(str(x), where)
        out.append({"name": str(item.get("name", f"item{number}")), "data": data, "x": x})
    return out


def write_json(path, document):
    Path(path).write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")


def read_point_file(path):
    """CSV -> matrix, OBJ -> TriangleMesh."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    if path.suffix.lower() == ".obj":
        return read_obj(path)
    return read_csv_matrix(path)
