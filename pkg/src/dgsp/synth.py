"""Deterministic synthetic graphs and signals (stand-ins for sensor-network data)."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .operators import Edge, SymOperator, knn_graph, laplacian_from_edges, lattice_edges


@dataclass(frozen=True)
class SyntheticSpec:
    """Graph and signal model.

    ``graph`` is one of ``{"kind": "lattice", "rows", "cols", "jitter"}``,
    ``{"kind": "random_geometric", "n", "radius"}`` or
    ``{"kind": "knn", "coords": array or csv path, "k"}``. ``signal`` is
    ``{"model": "bandlimited", "band", "scale", "noise", "offset"}`` (band defaults to min(5, n)) or
    ``{"model": "random", "scale"}``.
    """

    graph: dict
    signal: dict = field(default_factory=lambda: {"model": "bandlimited"})
    count: int = 10

    @classmethod
    def from_dict(cls, d):
        return cls(dict(d["graph"]), dict(d.get("signal", {"model": "bandlimited"})), int(d.get("count", 10)))


@dataclass
class SyntheticData:
    coords: np.ndarray
    edges: list
    laplacian: SymOperator
    signals: np.ndarray


def lattice_coords(rows: int, cols: int) -> np.ndarray:
    return np.array([[c, r] for r in range(rows) for c in range(cols)], dtype=float)


def make_graph(graph: dict, rng: np.random.Generator):
    kind = graph.get("kind")
    if kind == "lattice":
        rows, cols = int(graph["rows"]), int(graph["cols"])
        vert, horiz = lattice_edges(rows, cols)
        coords = lattice_coords(rows, cols)
        jitter = float(graph.get("jitter", 0.0))
        if jitter:
            # breaks the lattice symmetry so k-NN graphs on the coordinates have simple spectra
            coords = coords + rng.uniform(-jitter, jitter, coords.shape)
        return coords, sorted(vert + horiz)
    if kind == "random_geometric":
        n, radius = int(graph["n"]), float(graph["radius"])
        if n < 1 or not radius > 0:
            raise ValueError("random_geometric needs n >= 1 and radius > 0")
        X = rng.random((n, 2))
        D = np.sqrt(((X[:, None] - X[None]) ** 2).sum(-1))
        edges = [Edge(u, v, 1.0) for u in range(n) for v in range(u + 1, n) if D[u, v] <= radius]
        return X, edges
    if kind == "knn":
        coords = graph["coords"]
        X = io.read_coords(coords)[1] if isinstance(coords, (str, Path)) else np.asarray(coords, dtype=float)
        return X, knn_graph(X, int(graph["k"]), graph.get("weight", "unit"))
    raise ValueError(f"unknown graph kind {kind!r}")


def make_signals(L: SymOperator, model: dict, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` signals; bandlimited ones live on the bottom eigenvectors of ``L``."""
    n = L.n
    kind = model.get("model", "bandlimited")
    scale = float(model.get("scale", 1.0))
    if count < 0:
        raise ValueError("count must be nonnegative")
    if kind == "bandlimited":
        band = int(model.get("band", min(5, n)))
        if not 1 <= band <= n:
            raise ValueError(f"band must be in [1, {n}]")
        noise = float(model.get("noise", 0.0))
        if noise < 0:
            raise ValueError("noise level must be nonnegative")
        offset = float(model.get("offset", 0.0))
        U = L.eigen.eigenvectors[:, :band]
        coeffs = scale * rng.standard_normal((count, band))
        S = coeffs @ U.T + offset
        if noise > 0:
            S = S + noise * rng.standard_normal((count, n))
        return S
    if kind == "random":
        return scale * rng.standard_normal((count, n))
    raise ValueError(f"unknown signal model {kind!r}")


def synth(spec: SyntheticSpec, seed: int = 0) -> SyntheticData:
    graph_ss, signal_ss = np.random.SeedSequence(seed).spawn(2)
    coords, edges = make_graph(spec.graph, np.random.default_rng(graph_ss))
    L = laplacian_from_edges(edges, coords.shape[0], name="synthetic")
    S = make_signals(L, spec.signal, spec.count, np.random.default_rng(signal_ss))
    return SyntheticData(coords, edges, L, S)


def write_synth(data: SyntheticData, outdir) -> dict:
    out = Path(outdir)
    paths = {
        "coords": io.write_coords(out / "coords.csv", data.coords),
        "edges": io.write_edges(out / "edges.csv", data.edges),
        "laplacian": io.write_matrix(out / "laplacian.csv", data.laplacian.matrix),
        "signals": io.write_signals(out / "signals.csv", data.signals),
    }
    return {k: str(v) for k, v in paths.items()}
