"""CSV and JSON file formats.

Matrix CSV: n rows of n comma-separated reals, no header.
Edge CSV: header ``u,v,w``. Coordinates CSV: header ``id,x1,...,xd``.
Signals CSV: header of vertex labels, one signal per row.
Samples CSV: header ``vertex,value``.
Coefficients CSV: header ``fiber_param,weight,c_1..c_n``, one row per fiber.
Reals are written with 17 significant digits, which round-trips exactly.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from . import ensemble as E
from .basechange import Coarsening, DiscreteMap, identity_map, stretch_map
from .errors import ParseError
from .filters import BandSpec, FilterKernel, band_kernel, constant_kernel, lambda_kernel, table_kernel
from .operators import Edge, SymOperator, VertexSet


def fmt(x) -> str:
    return format(float(x), ".17g")


def atomic_write(path, text: str) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _rows(path):
    try:
        with open(path, newline="") as fh:
            return [(k + 1, row) for k, row in enumerate(csv.reader(fh)) if row and any(c.strip() for c in row)]
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path) from exc


def _float(s, path, line):
    try:
        return float(s)
    except ValueError:
        raise ParseError(f"not a number: {s!r}", path, line) from None


def _int(s, path, line):
    try:
        return int(s)
    except ValueError:
        raise ParseError(f"not an integer: {s!r}", path, line) from None


def _expect_header(rows, expected, path):
    if not rows:
        raise ParseError("file is empty", path)
    line, header = rows[0]
    got = [c.strip() for c in header]
    if got[: len(expected)] != list(expected):
        raise ParseError(f"expected header {','.join(expected)}, got {','.join(got)}", path, line)
    return rows[1:]


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header is not None:
        w.writerow(header)
    for r in rows:
        w.writerow([c if isinstance(c, str) else fmt(c) for c in r])
    return buf.getvalue()


# -- matrices ------------------------------------------------------------------


def read_matrix(path) -> np.ndarray:
    rows = _rows(path)
    if not rows:
        raise ParseError("matrix file is empty", path)
    data = []
    for line, row in rows:
        data.append([_float(c, path, line) for c in row])
    n = len(data)
    for (line, _), r in zip(rows, data):
        if len(r) != n:
            raise ParseError(f"row has {len(r)} entries; matrix needs {n}", path, line)
    return np.array(data)


def write_matrix(path, M) -> Path:
    return atomic_write(path, csv_text(None, np.asarray(M)))


def read_operator(path, allow_indefinite=False) -> SymOperator:
    M = read_matrix(path)
    try:
        return SymOperator(M, name=str(path), allow_indefinite=allow_indefinite)
    except ValueError as exc:
        raise ParseError(str(exc), path) from exc


# -- graphs ------------------------------------------------------------------------


def read_edges(path):
    out = []
    for line, row in _expect_header(_rows(path), ("u", "v", "w"), path):
        if len(row) < 2:
            raise ParseError("edge row needs u,v[,w]", path, line)
        w = _float(row[2], path, line) if len(row) > 2 and row[2].strip() else 1.0
        out.append(Edge(_int(row[0], path, line), _int(row[1], path, line), w))
    return out


def write_edges(path, edges) -> Path:
    return atomic_write(path, csv_text(("u", "v", "w"), ([str(int(u)), str(int(v)), w] for u, v, w in edges)))


def read_coords(path):
    rows = _rows(path)
    if not rows:
        raise ParseError("file is empty", path)
    line, header = rows[0]
    if not header or header[0].strip() != "id":
        raise ParseError("coordinates header must start with id", path, line)
    d = len(header) - 1
    ids, pts = [], []
    for line, row in rows[1:]:
        if len(row) != d + 1:
            raise ParseError(f"expected {d + 1} fields, got {len(row)}", path, line)
        ids.append(row[0].strip())
        pts.append([_float(c, path, line) for c in row[1:]])
    return ids, np.array(pts).reshape(len(ids), d)


def write_coords(path, coords, ids=None) -> Path:
    X = np.atleast_2d(np.asarray(coords, dtype=float))
    ids = [str(i) for i in range(X.shape[0])] if ids is None else [str(i) for i in ids]
    header = ["id"] + [f"x{k + 1}" for k in range(X.shape[1])]
    return atomic_write(path, csv_text(header, ([i] + list(r) for i, r in zip(ids, X))))


# -- signals ---------------------------------------------------------------------


def read_signals(path):
    """Return ``(VertexSet, array of shape (count, n))``."""
    rows = _rows(path)
    if not rows:
        raise ParseError("file is empty", path)
    line, header = rows[0]
    try:
        vs = VertexSet(len(header), tuple(c.strip() for c in header))
    except ValueError as exc:
        raise ParseError(str(exc), path, line) from exc
    data = []
    for line, row in rows[1:]:
        if len(row) != vs.n:
            raise ParseError(f"signal row has {len(row)} values for {vs.n} vertices", path, line)
        data.append([_float(c, path, line) for c in row])
    return vs, np.array(data).reshape(len(data), vs.n)


def write_signals(path, signals, labels=None) -> Path:
    S = np.atleast_2d(np.asarray(signals, dtype=float))
    labels = [str(i) for i in range(S.shape[1])] if labels is None else list(labels)
    return atomic_write(path, csv_text(labels, S))


def read_samples(path) -> dict:
    out = {}
    for line, row in _expect_header(_rows(path), ("vertex", "value"), path):
        if len(row) != 2:
            raise ParseError("sample row needs vertex,value", path, line)
        v = _int(row[0], path, line)
        if v in out:
            raise ParseError(f"vertex {v} sampled twice", path, line)
        out[v] = _float(row[1], path, line)
    return out


def write_samples(path, samples: dict) -> Path:
    return atomic_write(path, csv_text(("vertex", "value"), ([str(v), x] for v, x in sorted(samples.items()))))


def coefficients_text(coeffs, magnitude=False) -> str:
    ens = coeffs.ensemble
    params = ens.params
    header = ["fiber_param", "weight"] + [f"c_{i + 1}" for i in range(ens.n)]
    table = np.abs(coeffs.table) if magnitude else coeffs.table
    rows = []
    for q in range(ens.Q):
        p = "" if params is None else fmt(params[q])
        rows.append([p, ens.weights[q]] + list(table[q]))
    return csv_text(header, rows)


def read_coefficients(path):
    rows = _rows(path)
    if not rows:
        raise ParseError("file is empty", path)
    line, header = rows[0]
    if [c.strip() for c in header[:2]] != ["fiber_param", "weight"]:
        raise ParseError("expected header fiber_param,weight,c_1..c_n", path, line)
    params, weights, table = [], [], []
    for line, row in rows[1:]:
        params.append(None if not row[0].strip() else _float(row[0], path, line))
        weights.append(_float(row[1], path, line))
        table.append([_float(c, path, line) for c in row[2:]])
    return params, np.array(weights), np.array(table)


# -- JSON specs --------------------------------------------------------------------


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None


def write_json(path, obj) -> Path:
    return atomic_write(path, json.dumps(obj, indent=2) + "\n")


def density_from_dict(d) -> object:
    kind = (d or {}).get("kind", "uniform")
    if kind == "uniform":
        return E.Uniform()
    if kind == "truncated_gaussian":
        return E.TruncatedGaussian(float(d["mean"]), float(d["stddev"]))
    if kind == "piecewise_constant":
        return E.PiecewiseConstant(tuple(d["breakpoints"]), tuple(d["heights"]))
    if kind == "table":
        return E.TableDensity(tuple(d["nodes"]), tuple(d["values"]))
    raise ValueError(f"unknown density kind {kind!r}")


def density_to_dict(p) -> dict:
    if isinstance(p, E.Uniform):
        return {"kind": "uniform"}
    if isinstance(p, E.TruncatedGaussian):
        return {"kind": "truncated_gaussian", "mean": p.mean, "stddev": p.stddev}
    if isinstance(p, E.PiecewiseConstant):
        return {"kind": "piecewise_constant", "breakpoints": list(p.breakpoints), "heights": list(p.heights)}
    if isinstance(p, E.TableDensity):
        return {"kind": "table", "nodes": list(p.nodes), "values": list(p.values)}
    raise TypeError(f"cannot serialize density {type(p).__name__}")


def spec_from_dict(d, base=".", allow_indefinite=False):
    """Build a distribution spec; matrix paths resolve relative to ``base``."""
    base = Path(base)

    def op(p):
        return read_operator(base / p, allow_indefinite)

    try:
        variant = d["variant"]
        if variant == "delta":
            return E.Delta(op(d["operator"]))
        if variant == "discrete":
            params = d.get("params")
            return E.Discrete(
                tuple(op(p) for p in d["operators"]),
                tuple(float(w) for w in d["weights"]),
                None if params is None else tuple(params),
            )
        if variant == "interval_family":
            q = d.get("quadrature", {})
            rule = E.QuadratureRule(q.get("kind", "uniform_midpoint"), int(q.get("Q", E.DEFAULT_NODES)))
            return E.IntervalFamily(op(d["L1"]), op(d["L2"]), density_from_dict(d.get("density")), rule)
    except KeyError as exc:
        raise ParseError(f"distribution spec is missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"invalid distribution spec: {exc}") from exc
    raise ParseError(f"unknown distribution variant {variant!r}")


def read_spec(path, allow_indefinite=False):
    path = Path(path)
    return spec_from_dict(read_json(path), path.parent, allow_indefinite)


def write_spec(path, spec, matrix_prefix=None) -> Path:
    """Write a spec JSON plus its operator matrices (next to the JSON file)."""
    path = Path(path)
    stem = matrix_prefix or path.stem
    files = []

    def put(op, tag):
        name = f"{stem}_{tag}.csv"
        write_matrix(path.parent / name, op.matrix)
        files.append(name)
        return name

    if isinstance(spec, E.Delta):
        d = {"variant": "delta", "operator": put(spec.operator, "op")}
    elif isinstance(spec, E.Discrete):
        d = {
            "variant": "discrete",
            "operators": [put(op, f"op{k}") for k, op in enumerate(spec.operators)],
            "weights": list(spec.weights),
        }
        if spec.params is not None:
            d["params"] = list(spec.params)
    elif isinstance(spec, E.IntervalFamily):
        d = {
            "variant": "interval_family",
            "L1": put(spec.L1, "L1"),
            "L2": put(spec.L2, "L2"),
            "density": density_to_dict(spec.density),
            "quadrature": {"kind": spec.quadrature.kind, "Q": spec.quadrature.Q},
        }
    else:
        raise TypeError(f"cannot serialize spec {type(spec).__name__}")
    return write_json(path, d)


def band_from_dict(d) -> BandSpec:
    if "bottom" in d:
        return BandSpec(bottom=int(d["bottom"]))
    if "per_fiber" in d:
        return BandSpec(per_fiber=tuple(tuple(s) for s in d["per_fiber"]))
    raise ParseError("band spec needs 'bottom' or 'per_fiber'")


def kernel_from_dict(d, ens, base=".") -> FilterKernel:
    variant = d.get("variant")
    if variant == "band":
        return band_kernel(band_from_dict(d), ens)
    if variant == "lambda":
        return lambda_kernel(ens, int(d.get("power", 1)))
    if variant == "allpass":
        return constant_kernel(ens, 1.0)
    if variant == "constant":
        return constant_kernel(ens, float(d["value"]))
    if variant == "table":
        T = read_matrix_rect(Path(base) / d["csv"])
        return table_kernel(T, ens)
    raise ParseError(f"unknown kernel variant {variant!r}")


def read_matrix_rect(path) -> np.ndarray:
    """A headerless rectangular CSV of reals (kernel tables are Q x n)."""
    rows = _rows(path)
    data = [[_float(c, path, line) for c in row] for line, row in rows]
    widths = {len(r) for r in data}
    if len(widths) != 1:
        raise ParseError("rows have unequal lengths", path)
    return np.array(data)


def basemap_from_dict(d):
    variant = d.get("variant")
    if variant == "stretch":
        return stretch_map(float(d["eta"]))
    if variant == "coarsening":
        return Coarsening(tuple(d["breakpoints"]), tuple(d["reps"]))
    if variant == "discrete":
        return DiscreteMap(tuple(d["map"]))
    if variant == "identity":
        return identity_map()
    raise ParseError(f"unknown base map variant {variant!r}")
