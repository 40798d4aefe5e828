"""Base maps between operator spaces and the two pullback filter families.

For a base map ``h: Y -> X`` and a kernel ``G`` on X:

* ``pullback_filter_via_fibers`` filters on the mapped fiber ``h(y)`` and
  averages with the weights of Y:
  ``sum_q w_q sum_i G(h(y_q), i) v_{h(y_q)}(i) v_{h(y_q)}(i)^T``.
* ``pullback_kernel_filter`` keeps the eigenvectors of the Y fiber and only
  moves the kernel: ``sum_q w_q sum_i G(h(y_q), i) v_{y_q}(i) v_{y_q}(i)^T``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ensemble import IntervalFamily, OperatorEnsemble
from .errors import DimensionError
from .filters import FilterKernel, fiber_sum
from .operators import SymOperator


def _resolve_param(x, target, source_param):
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"base map sends {source_param!r} to {x!r}, outside [0, 1]")
    if isinstance(target, IntervalFamily):
        return x, target.fiber_at(x), x
    if isinstance(target, OperatorEnsemble):
        try:
            k = target.index_of_param(x)
        except KeyError:
            raise KeyError(f"base map sends {source_param!r} to {x!r}, which is not a fiber of the target") from None
        return k, target.fibers[k].operator, target.fibers[k].param
    raise TypeError(f"unsupported target space {type(target).__name__}")


def _source_params(source: OperatorEnsemble):
    params = source.params
    if params is None:
        raise ValueError("parameter base maps need a source ensemble with fiber parameters")
    return params


@dataclass(frozen=True)
class DiscreteMap:
    """Fiber q of the source goes to fiber ``map[q]`` of the target ensemble."""

    map: tuple
    variant = "discrete"

    def __post_init__(self):
        object.__setattr__(self, "map", tuple(int(k) for k in self.map))

    @classmethod
    def identity(cls, Q: int):
        return cls(tuple(range(Q)))

    def targets(self, source: OperatorEnsemble, target):
        if not isinstance(target, OperatorEnsemble):
            raise TypeError("discrete base maps need a compiled target ensemble")
        if len(self.map) != source.Q:
            raise DimensionError(f"map has {len(self.map)} entries for {source.Q} source fibers")
        out = []
        for q, k in enumerate(self.map):
            if not 0 <= k < target.Q:
                raise KeyError(f"source fiber {q} maps to missing target fiber {k}")
            out.append((k, target.fibers[k].operator, target.fibers[k].param))
        return out


@dataclass(frozen=True)
class ParamMap:
    """A function on family parameters, ``[0, 1] -> [0, 1]``, with optional exact inverse."""

    func: Callable
    inverse: Callable = None
    name: str = "param_function"
    variant = "param_function"

    def __call__(self, y):
        return self.func(y)

    def targets(self, source: OperatorEnsemble, target):
        return [_resolve_param(float(self.func(float(y))), target, float(y)) for y in _source_params(source)]


@dataclass(frozen=True)
class Coarsening:
    """Send the cell ``[b_{k-1}, b_k)`` of [0, 1] to its representative ``reps[k]``."""

    breakpoints: tuple
    reps: tuple
    variant = "coarsening"

    def __post_init__(self):
        b = tuple(float(x) for x in self.breakpoints)
        r = tuple(float(x) for x in self.reps)
        if len(r) != len(b) + 1:
            raise ValueError("coarsening needs one representative per cell")
        edges = (0.0,) + b + (1.0,)
        if any(lo >= hi for lo, hi in zip(edges, edges[1:])):
            raise ValueError("breakpoints must be strictly increasing inside (0, 1)")
        for k, rep in enumerate(r):
            hi_ok = rep < edges[k + 1] or (k == len(r) - 1 and rep <= 1.0)
            if not (edges[k] <= rep and hi_ok):
                raise ValueError(f"representative {rep} lies outside its cell [{edges[k]}, {edges[k + 1]})")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "reps", r)

    def cell(self, y: float) -> int:
        return int(np.searchsorted(self.breakpoints, y, side="right"))

    def __call__(self, y):
        return self.reps[self.cell(y)]

    def targets(self, source: OperatorEnsemble, target):
        return [_resolve_param(self(float(y)), target, float(y)) for y in _source_params(source)]


def identity_map() -> ParamMap:
    return ParamMap(lambda y: y, lambda x: x, name="identity")


def stretch_map(eta: float) -> ParamMap:
    """``h(y) = y*eta / (1 - y + y*eta)`` with inverse ``x / (x + eta - x*eta)``."""
    eta = float(eta)
    if not eta > 0:
        raise ValueError(f"stretch factor must be positive, got {eta}")

    def h(y):
        return y * eta / (1.0 - y + y * eta)

    def h_inv(x):
        return x / (x + eta - x * eta)

    return ParamMap(h, h_inv, name=f"stretch(eta={eta!r})")


def _kernel_rows(kernel, hits, target) -> np.ndarray:
    rows = []
    for key, op, param in hits:
        if isinstance(kernel, FilterKernel):
            if kernel.ensemble is target:
                rows.append(kernel.table[key])
            else:
                rows.append(kernel.table[kernel.ensemble.index_of_param(param)])
        else:
            lam = op.eigen.eigenvalues
            rows.append(np.broadcast_to(np.asarray(kernel(param, lam), dtype=float), lam.shape))
    return np.stack(rows)


def pullback_kernel(kernel, h, Y_ens: OperatorEnsemble, X_space) -> FilterKernel:
    """The kernel ``G^h(y, i) = G(h(y), i)`` as a kernel on the Y ensemble.

    ``kernel`` is a :class:`FilterKernel` on a compiled X ensemble or a
    callable ``kernel(t, lam)`` evaluated on the mapped fiber.
    """
    hits = h.targets(Y_ens, X_space)
    return FilterKernel(_kernel_rows(kernel, hits, X_space), Y_ens, "pullback", (kernel, h))


def pullback_filter_via_fibers(kernel, h, Y_ens: OperatorEnsemble, X_space) -> np.ndarray:
    hits = h.targets(Y_ens, X_space)
    rows = _kernel_rows(kernel, hits, X_space)
    vecs = np.stack([op.eigen.eigenvectors for _, op, _ in hits])
    return fiber_sum(Y_ens.weights, vecs, rows)


def pullback_kernel_filter(kernel, h, Y_ens: OperatorEnsemble, X_space) -> np.ndarray:
    k = pullback_kernel(kernel, h, Y_ens, X_space)
    return fiber_sum(Y_ens.weights, Y_ens.eigenvectors, k.table)


def stretch_consistency(L1: SymOperator, L2: SymOperator, eta: float, y: float):
    """Check that the stretched operator at ``x = h_eta(y)`` is a multiple of ``L_y``.

    Returns ``(c, residual)`` with ``c = eta / (1 - y + y*eta)`` and
    ``residual = max |H_x - c * L_y|`` where ``H_x = x*L1 + (1-x)*eta*L2``.
    """
    eta, y = float(eta), float(y)
    if not eta > 0:
        raise ValueError("stretch factor must be positive")
    if not 0.0 <= y <= 1.0:
        raise ValueError(f"parameter {y} outside [0, 1]")
    x = stretch_map(eta)(y)
    A, B = L1.matrix, L2.matrix
    H = x * A + (1.0 - x) * eta * B
    Ly = y * A + (1.0 - y) * B
    c = eta / (1.0 - y + y * eta)
    return c, float(np.abs(H - c * Ly).max())
