"""Convolution filters over an operator ensemble.

A kernel is a Q x n table ``G[q, i]``; its convolution filter is the n x n
matrix ``sum_q w_q * V_q diag(G[q]) V_q^T``. Band-pass filters use the
indicator of a per-fiber index set. Bi-polynomial filters express the fiber
filter of an interval family as ``sum_i a_i(t) x_t^i`` with each ``a_i`` a
polynomial in the family parameter.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ensemble import IntervalFamily, OperatorEnsemble
from .errors import DimensionError, NumericalError
from .operators import as_signal
from .transform import forward

GAP_RTOL = 1e-9
VANDERMONDE_COND_MAX = 1e12


@dataclass(frozen=True)
class BandSpec:
    """Set of (fiber, frequency index) pairs selected by a band-pass filter.

    Either ``bottom`` (indices ``0..bottom-1`` on every fiber) or
    ``per_fiber`` (one index collection per fiber) is set.
    """

    bottom: int = None
    per_fiber: tuple = None

    def __post_init__(self):
        if (self.bottom is None) == (self.per_fiber is None):
            raise ValueError("give exactly one of bottom or per_fiber")
        if self.bottom is not None and int(self.bottom) < 0:
            raise ValueError("bottom band size must be nonnegative")
        if self.per_fiber is not None:
            object.__setattr__(
                self, "per_fiber", tuple(tuple(sorted(int(i) for i in s)) for s in self.per_fiber)
            )

    def mask(self, Q: int, n: int) -> np.ndarray:
        M = np.zeros((Q, n))
        if self.bottom is not None:
            if self.bottom > n:
                raise DimensionError(f"band bottom({self.bottom}) exceeds n={n}")
            M[:, : self.bottom] = 1.0
            return M
        if len(self.per_fiber) != Q:
            raise DimensionError(f"band spec lists {len(self.per_fiber)} fibers, ensemble has {Q}")
        for q, idx in enumerate(self.per_fiber):
            for i in idx:
                if not 0 <= i < n:
                    raise DimensionError(f"band index {i} on fiber {q} outside [0, {n})")
                M[q, i] = 1.0
        return M


def bottom(m: int) -> BandSpec:
    return BandSpec(bottom=m)


@dataclass(frozen=True)
class FilterKernel:
    table: np.ndarray
    ensemble: OperatorEnsemble
    variant: str = "table"
    source: object = None

    def __post_init__(self):
        T = np.asarray(self.table, dtype=float)
        if T.shape != (self.ensemble.Q, self.ensemble.n):
            raise DimensionError(
                f"kernel table has shape {T.shape}, ensemble needs {(self.ensemble.Q, self.ensemble.n)}"
            )
        if not np.all(np.isfinite(T)):
            raise ValueError("kernel entries must be finite")
        object.__setattr__(self, "table", T)

    def __pow__(self, p):
        return FilterKernel(self.table**p, self.ensemble, self.variant, self.source)


@dataclass(frozen=True)
class ConvolutionFilter:
    matrix: np.ndarray
    kernel: FilterKernel = None

    def __matmul__(self, f):
        return self.matrix @ f

    def apply(self, f):
        return self.matrix @ as_signal(f, self.matrix.shape[0])


def table_kernel(table, ens: OperatorEnsemble) -> FilterKernel:
    return FilterKernel(table, ens, "table")


def constant_kernel(ens: OperatorEnsemble, value: float = 1.0) -> FilterKernel:
    return FilterKernel(np.full((ens.Q, ens.n), float(value)), ens, "table")


def lambda_kernel(ens: OperatorEnsemble, power: int = 1) -> FilterKernel:
    return FilterKernel(np.array(ens.eigenvalues) ** power, ens, "lambda", power)


def signal_kernel(g, ens: OperatorEnsemble) -> FilterKernel:
    g = as_signal(g, ens.n)
    return FilterKernel(forward(g, ens).table, ens, "signal", g)


def band_kernel(Y: BandSpec, ens: OperatorEnsemble) -> FilterKernel:
    return FilterKernel(Y.mask(ens.Q, ens.n), ens, "band", Y)


def response_kernel(ens: OperatorEnsemble, response: Callable) -> FilterKernel:
    """Kernel from a spectral response ``response(t, lam)``.

    ``t`` is the fiber parameter (``None`` for unparametrized ensembles) and
    ``lam`` the fiber's eigenvalue vector.
    """
    params = ens.params
    rows = []
    for q in range(ens.Q):
        t = None if params is None else float(params[q])
        rows.append(np.broadcast_to(np.asarray(response(t, ens.eigenvalues[q]), dtype=float), (ens.n,)))
    return FilterKernel(np.stack(rows), ens, "table", response)


def _eigen_clusters(lam):
    gap_tol = GAP_RTOL * (1.0 + abs(lam[-1]))
    start = 0
    for i in range(1, len(lam) + 1):
        if i == len(lam) or lam[i] - lam[i - 1] >= gap_tol:
            if i - start > 1:
                yield start, i
            start = i


def _warn_repeated(kernel: FilterKernel):
    lam_all = kernel.ensemble.eigenvalues
    for q in range(kernel.ensemble.Q):
        for a, b in _eigen_clusters(lam_all[q]):
            seg = kernel.table[q, a:b]
            if np.ptp(seg) > 1e-12 * (1.0 + np.abs(seg).max()):
                warnings.warn(
                    f"fiber {q} has repeated eigenvalues at indices {a}..{b - 1} and the kernel is "
                    "not constant on them; the filter depends on the eigenbasis choice",
                    RuntimeWarning,
                    stacklevel=3,
                )
                return


def fiber_sum(weights, eigenvectors, table) -> np.ndarray:
    """``sum_q w_q V_q diag(table[q]) V_q^T`` in fixed fiber order, symmetrized."""
    n = eigenvectors.shape[1]
    M = np.zeros((n, n))
    for q in range(len(weights)):
        V = eigenvectors[q]
        M += weights[q] * ((V * table[q]) @ V.T)
    return 0.5 * (M + M.T)


def convolution_matrix(kernel: FilterKernel) -> ConvolutionFilter:
    ens = kernel.ensemble
    _warn_repeated(kernel)
    return ConvolutionFilter(fiber_sum(ens.weights, ens.eigenvectors, kernel.table), kernel)


def band_pass(Y: BandSpec, ens: OperatorEnsemble) -> ConvolutionFilter:
    """Band-pass filter: the ensemble average of per-fiber spectral projections."""
    k = band_kernel(Y, ens)
    _warn_repeated(k)
    return ConvolutionFilter(fiber_sum(ens.weights, ens.eigenvectors, k.table), k)


def bandlimit_residual(f, B) -> float:
    """``||B f - f||``: the smallest eps for which f is (Y, eps)-bandlimited."""
    M = B.matrix if isinstance(B, ConvolutionFilter) else np.asarray(B, dtype=float)
    f = as_signal(f, M.shape[0])
    return float(np.linalg.norm(M @ f - f))


# -- bi-polynomial filters --------------------------------------------------------


@dataclass(frozen=True)
class BiPolynomial:
    """``coeffs[i, s]`` is the coefficient of ``t**s`` in ``a_i(t)``."""

    coeffs: np.ndarray
    family: IntervalFamily

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    def a(self, t: float) -> np.ndarray:
        """Monomial coefficients ``a_i(t)``, i = 0..n-1 (Horner in t)."""
        out = np.zeros(self.coeffs.shape[0])
        for s in range(self.degree, -1, -1):
            out = out * t + self.coeffs[:, s]
        return out


def fiber_monomial_coeffs(lam, multipliers, where="") -> np.ndarray:
    """Solve the Vandermonde system ``sum_s a_s lam_i**s = multipliers_i``."""
    lam = np.asarray(lam, dtype=float)
    gaps = np.diff(lam)
    if gaps.size and gaps.min() <= GAP_RTOL * (1.0 + abs(lam[-1])):
        raise NumericalError(f"repeated eigenvalues at {where} (min gap {gaps.min():.3e})")
    A = np.vander(lam, len(lam), increasing=True)
    cond = np.linalg.cond(A)
    if not cond < VANDERMONDE_COND_MAX:
        raise NumericalError(f"eigenvalue Vandermonde at {where} is ill-conditioned (cond {cond:.3e})")
    return np.linalg.solve(A, np.asarray(multipliers, dtype=float))


def fit_bipolynomial(family: IntervalFamily, kernel, T, degree: int) -> BiPolynomial:
    """Fit a bi-polynomial filter to a kernel sampled at parameters ``T``.

    ``kernel`` is either a callable ``kernel(t, lam) -> multipliers`` or a
    :class:`FilterKernel` over an ensemble whose fiber parameters include every
    ``t`` in ``T``. Each ``a_i(t)`` is a least-squares polynomial of the given
    degree through the per-fiber solutions (exact interpolation when
    ``len(T) == degree + 1``).
    """
    T = np.asarray(T, dtype=float)
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if T.size < degree + 1:
        raise ValueError(f"need at least {degree + 1} parameters for degree {degree}, got {T.size}")
    rows = []
    for t in T:
        if isinstance(kernel, FilterKernel):
            q = kernel.ensemble.index_of_param(t)
            lam = kernel.ensemble.eigenvalues[q]
            mult = kernel.table[q]
        else:
            lam = family.fiber_at(t).eigen.eigenvalues
            mult = np.broadcast_to(np.asarray(kernel(t, lam), dtype=float), lam.shape)
        rows.append(fiber_monomial_coeffs(lam, mult, where=f"t={t!r}"))
    A = np.vander(T, degree + 1, increasing=True)
    C, *_ = np.linalg.lstsq(A, np.stack(rows), rcond=None)
    return BiPolynomial(C.T.copy(), family)


def eval_bipolynomial(bp: BiPolynomial, t: float) -> np.ndarray:
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"parameter {t} outside [0, 1]")
    a = bp.a(t)
    x = bp.family.fiber_at(t).matrix
    n = x.shape[0]
    P = a[-1] * np.eye(n)
    for i in range(len(a) - 2, -1, -1):
        P = P @ x
        P[np.diag_indices(n)] += a[i]
    return P


def fiber_filter(op, multipliers) -> np.ndarray:
    """Classical single-operator filter ``V diag(multipliers) V^T``."""
    V = op.eigen.eigenvectors
    return (V * np.asarray(multipliers, dtype=float)) @ V.T
