"""Vertex sets, symmetric PSD operators, graph construction and eigendecomposition."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionError, NumericalError

SIGN_CONVENTION = "max-abs-positive"

SYM_TOL = 1e-12
PSD_TOL = 1e-8
# entries within this relative distance of the column max count as tied
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class VertexSet:
    n: int
    labels: tuple = field(default=None)

    def __post_init__(self):
        if int(self.n) < 1:
            raise DimensionError(f"vertex set must be nonempty, got n={self.n}")
        labels = self.labels
        if labels is None:
            labels = tuple(str(i) for i in range(self.n))
        labels = tuple(str(s) for s in labels)
        if len(labels) != self.n:
            raise DimensionError(f"{len(labels)} labels for {self.n} vertices")
        if len(set(labels)) != len(labels):
            raise ValueError("vertex labels must be pairwise distinct")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "labels", labels)


def as_signal(values, n: int | None = None) -> np.ndarray:
    """Validate a signal on the vertex set and return it as a float vector."""
    f = np.asarray(values, dtype=float)
    if f.ndim != 1:
        raise DimensionError(f"signal must be one-dimensional, got shape {f.shape}")
    if n is not None and f.shape[0] != n:
        raise DimensionError(f"signal has length {f.shape[0]}, expected {n}")
    if not np.all(np.isfinite(f)):
        raise ValueError("signal values must be finite")
    return f


@dataclass(frozen=True)
class EigenSystem:
    """Ascending eigenvalues with orthonormal eigenvectors as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sign_convention: str = SIGN_CONVENTION


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so that the largest-magnitude entry is positive.

    Ties (up to a relative 1e-12) are decided by the lowest row index.
    """
    V = np.array(vectors, dtype=float, copy=True)
    if V.size == 0:
        return V
    mag = np.abs(V)
    top = mag.max(axis=0)
    lead = np.argmax(mag >= top * (1.0 - _TIE_RTOL), axis=0)
    signs = np.sign(V[lead, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def sym_eigh(matrix: np.ndarray, name: str | None = None) -> EigenSystem:
    try:
        w, V = np.linalg.eigh(matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed on operator {name or '<unnamed>'}: {exc}") from exc
    V = fix_signs(V)
    w.setflags(write=False)
    V.setflags(write=False)
    return EigenSystem(w, V)


class SymOperator:
    """A symmetric positive semi-definite matrix on the vertex set.

    The eigendecomposition is computed once on first access and cached.
    Pass ``allow_indefinite=True`` to accept symmetric matrices that are not
    PSD (adjacency matrices, for instance).
    """

    def __init__(self, matrix, name: str | None = None, allow_indefinite: bool = False):
        M = np.array(matrix, dtype=float, copy=True)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionError(f"operator must be square, got shape {M.shape}")
        if M.shape[0] < 1:
            raise DimensionError("operator must have at least one vertex")
        if not np.all(np.isfinite(M)):
            raise ValueError(f"operator {name or '<unnamed>'} has non-finite entries")
        scale = 1.0 + np.abs(M).max()
        asym = np.abs(M - M.T).max()
        if asym > SYM_TOL * scale:
            raise ValueError(f"operator {name or '<unnamed>'} is not symmetric (max asymmetry {asym:.3e})")
        M = 0.5 * (M + M.T)
        M.setflags(write=False)
        self.matrix = M
        self.name = name
        self.allow_indefinite = allow_indefinite
        self._eigen = None
        if not allow_indefinite:
            lam = self.eigen.eigenvalues
            if lam[0] < -PSD_TOL * (1.0 + max(lam[-1], 0.0)):
                raise ValueError(
                    f"operator {name or '<unnamed>'} is not positive semi-definite "
                    f"(smallest eigenvalue {lam[0]:.3e})"
                )

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def eigen(self) -> EigenSystem:
        if self._eigen is None:
            self._eigen = sym_eigh(self.matrix, self.name)
        return self._eigen

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<SymOperator{label} n={self.n}>"

    def __mul__(self, other):
        return SymOperator(float(other) * self.matrix, allow_indefinite=self.allow_indefinite)

    __rmul__ = __mul__


def eigendecompose(op: SymOperator) -> EigenSystem:
    return op.eigen


class Edge(NamedTuple):
    u: int
    v: int
    w: float = 1.0


def laplacian_from_edges(edges: Sequence, n: int, name: str | None = None) -> SymOperator:
    """Combinatorial weighted Laplacian ``L = D - W`` of an undirected edge list."""
    W = np.zeros((n, n))
    seen = set()
    for k, e in enumerate(edges):
        u, v, w = (e[0], e[1], e[2]) if len(e) > 2 else (e[0], e[1], 1.0)
        u, v, w = int(u), int(v), float(w)
        if not (0 <= u < n and 0 <= v < n):
            raise DimensionError(f"edge {k} ({u}, {v}) has a vertex index outside [0, {n})")
        if u == v:
            raise ValueError(f"edge {k} is a self-loop at vertex {u}")
        if not w > 0:
            raise ValueError(f"edge {k} ({u}, {v}) has non-positive weight {w}")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise ValueError(f"duplicate edge {key}")
        seen.add(key)
        W[u, v] = W[v, u] = w
    L = np.diag(W.sum(axis=1)) - W
    return SymOperator(L, name=name)


def knn_graph(coords, k: int, weight: str = "unit", sigma: float | None = None) -> list[Edge]:
    """Symmetrized k-nearest-neighbour graph on a point cloud.

    Edge (u, v) is present iff v is among the k nearest neighbours of u or u
    among those of v. Distance ties are broken by the lower vertex index.

    Parameters
    ----------
    coords : array_like, shape (n, d)
    k : int
        Number of neighbours, ``1 <= k < n``.
    weight : {"unit", "gaussian"}
        Gaussian weights are ``exp(-dist**2 / sigma**2)``; ``sigma`` defaults
        to the mean k-th neighbour distance.
    """
    X = np.asarray(coords, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n={n}, got {k}")
    D = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=-1))
    off = D + np.diag(np.full(n, np.inf))
    if np.any(off == 0):
        u, v = np.argwhere(off == 0)[0]
        raise ValueError(f"duplicate points at indices {u} and {v}")
    pairs = set()
    kth = np.empty(n)
    for u in range(n):
        order = np.argsort(off[u], kind="stable")[:k]
        kth[u] = off[u, order[-1]]
        for v in order:
            pairs.add((min(u, int(v)), max(u, int(v))))
    if weight == "unit":
        return [Edge(u, v, 1.0) for u, v in sorted(pairs)]
    if weight == "gaussian":
        s = float(kth.mean()) if sigma is None else float(sigma)
        if not s > 0:
            raise ValueError("sigma must be positive")
        return [Edge(u, v, float(np.exp(-D[u, v] ** 2 / s**2))) for u, v in sorted(pairs)]
    raise ValueError(f"unknown weight rule {weight!r}")


def lattice_edges(rows: int, cols: int):
    """Vertical and horizontal edge lists of a rows x cols grid (row-major vertex ids)."""
    if rows < 1 or cols < 1:
        raise ValueError("lattice dimensions must be positive")
    vertical, horizontal = [], []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if r + 1 < rows:
                vertical.append(Edge(i, i + cols, 1.0))
            if c + 1 < cols:
                horizontal.append(Edge(i, i + 1, 1.0))
    return vertical, horizontal
