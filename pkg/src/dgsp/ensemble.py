"""Distributions of operators and their compilation to finite weighted ensembles.

Every distribution (delta, discrete mixture, or a one-parameter interval
family ``L_t = t*L1 + (1-t)*L2`` with a density on [0, 1]) is reduced to an
:class:`OperatorEnsemble`: an ordered list of fibers ``(x_q, w_q, t_q)``.
Integrals over the base space become fixed-order weighted sums over fibers.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, NumericalError
from .operators import SymOperator

DEFAULT_NODES = 32
RENORM_WARN = 1e-6


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("DGSP_THREADS", "1")))
    except ValueError:
        return 1


def _warm_eigen(operators):
    ops = list(operators)
    workers = min(thread_count(), len(ops))
    if workers <= 1:
        for op in ops:
            op.eigen
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(lambda op: op.eigen, ops))


# -- densities on [0, 1] ------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    kind = "uniform"

    def __call__(self, t):
        return np.ones_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class TruncatedGaussian:
    mean: float
    stddev: float
    kind = "truncated_gaussian"

    def __post_init__(self):
        if not self.stddev > 0:
            raise ValueError("stddev must be positive")

    def __call__(self, t):
        z = (np.asarray(t, dtype=float) - self.mean) / self.stddev
        return np.exp(-0.5 * z * z)


@dataclass(frozen=True)
class PiecewiseConstant:
    """Height ``heights[k]`` on ``[breakpoints[k-1], breakpoints[k])``."""

    breakpoints: tuple
    heights: tuple
    kind = "piecewise_constant"

    def __post_init__(self):
        b = tuple(float(x) for x in self.breakpoints)
        h = tuple(float(x) for x in self.heights)
        if len(h) != len(b) + 1:
            raise ValueError("piecewise_constant needs len(heights) == len(breakpoints) + 1")
        if any(x < 0 for x in h):
            raise ValueError("density heights must be nonnegative")
        if any(not 0 < x < 1 for x in b) or any(b1 >= b2 for b1, b2 in zip(b, b[1:])):
            raise ValueError("breakpoints must be strictly increasing inside (0, 1)")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "heights", h)

    def __call__(self, t):
        idx = np.searchsorted(self.breakpoints, np.asarray(t, dtype=float), side="right")
        return np.asarray(self.heights)[idx]


@dataclass(frozen=True)
class TableDensity:
    """Piecewise-linear density through ``(nodes, values)``."""

    nodes: tuple
    values: tuple
    kind = "table"

    def __post_init__(self):
        x = tuple(float(v) for v in self.nodes)
        y = tuple(float(v) for v in self.values)
        if len(x) != len(y) or len(x) < 1:
            raise ValueError("table density needs matching, nonempty nodes and values")
        if any(v < 0 for v in y):
            raise ValueError("density values must be nonnegative")
        if any(a >= b for a, b in zip(x, x[1:])):
            raise ValueError("table nodes must be strictly increasing")
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "values", y)

    def __call__(self, t):
        return np.interp(np.asarray(t, dtype=float), self.nodes, self.values)


@dataclass(frozen=True)
class QuadratureRule:
    kind: str = "uniform_midpoint"
    Q: int = DEFAULT_NODES

    def __post_init__(self):
        if self.kind not in ("uniform_midpoint", "gauss_legendre"):
            raise ValueError(f"unknown quadrature kind {self.kind!r}")
        if int(self.Q) < 1:
            raise ValueError("quadrature needs at least one node")

    def nodes_weights(self):
        Q = int(self.Q)
        if self.kind == "uniform_midpoint":
            t = (np.arange(Q) + 0.5) / Q
            return t, np.full(Q, 1.0 / Q)
        x, u = np.polynomial.legendre.leggauss(Q)
        return 0.5 * (x + 1.0), 0.5 * u


# -- distribution specs -------------------------------------------------------


@dataclass(frozen=True)
class Delta:
    operator: SymOperator
    variant = "delta"


@dataclass(frozen=True)
class Discrete:
    operators: tuple
    weights: tuple
    params: tuple = None
    variant = "discrete"

    def __post_init__(self):
        object.__setattr__(self, "operators", tuple(self.operators))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.params is not None:
            object.__setattr__(self, "params", tuple(float(p) for p in self.params))
            if len(self.params) != len(self.operators):
                raise DimensionError("params and operators differ in length")
        if len(self.operators) != len(self.weights) or not self.operators:
            raise DimensionError("discrete distribution needs one weight per operator")
        if any(not (w >= 0 and math.isfinite(w)) for w in self.weights):
            raise ValueError("discrete weights must be finite and nonnegative")


@dataclass(frozen=True)
class IntervalFamily:
    """``L_t = t*L1 + (1-t)*L2`` for t in [0, 1], with a density and a quadrature rule."""

    L1: SymOperator
    L2: SymOperator
    density: object = field(default_factory=Uniform)
    quadrature: QuadratureRule = field(default_factory=QuadratureRule)
    variant = "interval_family"

    def __post_init__(self):
        if self.L1.n != self.L2.n:
            raise DimensionError(f"L1 has n={self.L1.n}, L2 has n={self.L2.n}")

    @property
    def n(self):
        return self.L1.n

    def fiber_at(self, t: float) -> SymOperator:
        t = float(t)
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"family parameter {t} outside [0, 1]")
        M = t * self.L1.matrix + (1.0 - t) * self.L2.matrix
        allow = self.L1.allow_indefinite or self.L2.allow_indefinite
        return SymOperator(M, name=f"L_t={t!r}", allow_indefinite=allow)


def fiber_at(spec: IntervalFamily, t: float) -> SymOperator:
    return spec.fiber_at(t)


# -- compiled ensembles ---------------------------------------------------------


@dataclass(frozen=True)
class Fiber:
    operator: SymOperator
    weight: float
    param: float = None


class OperatorEnsemble:
    """Finite probability distribution over operators on a shared vertex set.

    Fiber order is fixed at construction and every downstream reduction sums
    in that order.
    """

    def __init__(self, fibers: Sequence[Fiber], provenance=None, origin=None):
        fibers = tuple(fibers)
        if not fibers:
            raise ValueError("ensemble needs at least one fiber")
        n = fibers[0].operator.n
        for f in fibers:
            if f.operator.n != n:
                raise DimensionError("all fibers must act on the same vertex set")
            if not f.weight > 0:
                raise ValueError(f"fiber weight must be positive, got {f.weight}")
        total = math.fsum(f.weight for f in fibers)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"fiber weights sum to {total!r}, expected 1")
        params = [f.param for f in fibers]
        if any(p is not None for p in params):
            if any(p is None for p in params):
                raise ValueError("either every fiber has a parameter or none does")
            if any(a >= b for a, b in zip(params, params[1:])):
                raise ValueError("fiber parameters must be strictly increasing")
        self.fibers = fibers
        self.provenance = provenance
        # index of each fiber in a target space (set by pushforward)
        self.origin = None if origin is None else tuple(origin)
        self._stack = None

    @classmethod
    def from_operators(cls, operators, weights=None, params=None):
        ops = list(operators)
        if weights is None:
            weights = [1.0] * len(ops)
        return compile_spec(Discrete(tuple(ops), tuple(weights), None if params is None else tuple(params)))

    def __len__(self):
        return len(self.fibers)

    def __repr__(self):
        return f"<OperatorEnsemble Q={self.Q} n={self.n}>"

    @property
    def Q(self) -> int:
        return len(self.fibers)

    @property
    def n(self) -> int:
        return self.fibers[0].operator.n

    @property
    def operators(self):
        return [f.operator for f in self.fibers]

    @property
    def weights(self) -> np.ndarray:
        return np.array([f.weight for f in self.fibers])

    @property
    def params(self):
        if self.fibers[0].param is None:
            return None
        return np.array([f.param for f in self.fibers])

    def _stacked(self):
        if self._stack is None:
            _warm_eigen(self.operators)
            lam = np.stack([op.eigen.eigenvalues for op in self.operators])
            vec = np.stack([op.eigen.eigenvectors for op in self.operators])
            lam.setflags(write=False)
            vec.setflags(write=False)
            self._stack = (lam, vec)
        return self._stack

    @property
    def eigenvalues(self) -> np.ndarray:
        """(Q, n) array of ascending eigenvalues per fiber."""
        return self._stacked()[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        """(Q, n, n) array; ``eigenvectors[q][:, i]`` pairs with ``eigenvalues[q, i]``."""
        return self._stacked()[1]

    def index_of_param(self, t: float) -> int:
        params = self.params
        if params is None:
            raise ValueError("ensemble fibers carry no parameters")
        hits = np.flatnonzero(np.isclose(params, t, rtol=0.0, atol=1e-12))
        if hits.size == 0:
            raise KeyError(f"no fiber with parameter {t!r}")
        return int(hits[0])


def normalize_weights(weights, warn: bool = True) -> list:
    raw = [float(w) for w in weights]
    total = math.fsum(raw)
    if not total > 0 or not math.isfinite(total):
        raise NumericalError("distribution has zero total mass")
    if warn and abs(total - 1.0) > RENORM_WARN:
        warnings.warn(f"weights sum to {total!r}; renormalizing", RuntimeWarning, stacklevel=3)
    w = [x / total for x in raw]
    # fold the final rounding residue into the largest weight
    resid = 1.0 - math.fsum(w)
    if resid:
        k = max(range(len(w)), key=w.__getitem__)
        w[k] += resid
    return w


def compile_spec(spec) -> OperatorEnsemble:
    """Compile a distribution spec into a finite weighted ensemble.

    Zero-weight fibers are dropped, which realizes the ``0/0 = 0`` convention
    of the fiberwise inverse transform without special cases downstream.
    """
    if isinstance(spec, SymOperator):
        spec = Delta(spec)
    if isinstance(spec, Delta):
        return OperatorEnsemble([Fiber(spec.operator, 1.0)], provenance=spec)
    if isinstance(spec, Discrete):
        keep = [k for k, w in enumerate(spec.weights) if w > 0]
        if not keep:
            raise NumericalError("distribution has zero total mass")
        n = spec.operators[0].n
        if any(op.n != n for op in spec.operators):
            raise DimensionError("all operators must act on the same vertex set")
        w = normalize_weights([spec.weights[k] for k in keep])
        params = [None] * len(keep) if spec.params is None else [spec.params[k] for k in keep]
        fibers = [Fiber(spec.operators[k], wk, p) for k, wk, p in zip(keep, w, params)]
        return OperatorEnsemble(fibers, provenance=spec)
    if isinstance(spec, IntervalFamily):
        t, u = spec.quadrature.nodes_weights()
        p = np.asarray(spec.density(t), dtype=float)
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("density must be finite and nonnegative at the quadrature nodes")
        raw = p * u
        keep = np.flatnonzero(raw > 0)
        if keep.size == 0:
            raise NumericalError("density vanishes at every quadrature node")
        w = normalize_weights(raw[keep], warn=False)
        ops = [spec.fiber_at(t[k]) for k in keep]
        _warm_eigen(ops)
        fibers = [Fiber(op, wk, float(t[k])) for op, wk, k in zip(ops, w, keep)]
        return OperatorEnsemble(fibers, provenance=spec)
    raise TypeError(f"unsupported distribution spec {type(spec).__name__}")


def pushforward(source: OperatorEnsemble, h, target) -> OperatorEnsemble:
    """Transport the weights of ``source`` through the base map ``h``.

    ``target`` is the space ``h`` maps into: an :class:`OperatorEnsemble`
    (discrete maps, or parameter maps onto existing fiber parameters) or an
    :class:`IntervalFamily`. Source fibers that land on the same target fiber
    have their weights summed in source order. Output fibers are ordered by
    target key.
    """
    hits = h.targets(source, target)
    mass = {}
    ops = {}
    params = {}
    for (key, op, param), fib in zip(hits, source.fibers):
        mass.setdefault(key, []).append(fib.weight)
        ops[key] = op
        params[key] = param
    keys = sorted(mass)
    w = normalize_weights([math.fsum(mass[k]) for k in keys], warn=False)
    has_params = all(params[k] is not None for k in keys)
    fibers = [Fiber(ops[k], wk, params[k] if has_params else None) for k, wk in zip(keys, w)]
    origin = keys if all(isinstance(k, int) for k in keys) else None
    return OperatorEnsemble(fibers, provenance=("pushforward", source.provenance, h), origin=origin)
