"""Distributional Fourier transform, its left inverse, and the fiberwise factorization.

For an ensemble with fibers ``(x_q, w_q)`` the forward transform of a signal
``f`` is the Q x n table ``c[q, i] = sqrt(w_q) * <f, v_q(i)>``. The left
inverse sums ``c[q, i] * sqrt(w_q) * v_q(i)`` over all (q, i), and factors as
``expectation(fiberwise_inverse(c))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import OperatorEnsemble
from .errors import DimensionError
from .operators import as_signal


@dataclass(frozen=True)
class SpectralCoefficients:
    table: np.ndarray
    ensemble: OperatorEnsemble

    def __post_init__(self):
        T = np.asarray(self.table, dtype=float)
        if T.shape != (self.ensemble.Q, self.ensemble.n):
            raise DimensionError(
                f"coefficient table has shape {T.shape}, ensemble needs {(self.ensemble.Q, self.ensemble.n)}"
            )
        object.__setattr__(self, "table", T)

    def norm(self) -> float:
        return float(np.linalg.norm(self.table))


@dataclass(frozen=True)
class FiberSignals:
    """One vertex signal per fiber (row q belongs to fiber q).

    ``weighted`` records whether the rows already carry the fiber weights, in
    which case the expectation is a plain sum over rows.
    """

    table: np.ndarray
    weighted: bool = False


def _check(f, ens):
    return as_signal(f, ens.n)


def forward(f, ens: OperatorEnsemble) -> SpectralCoefficients:
    f = _check(f, ens)
    sw = np.sqrt(ens.weights)
    V = ens.eigenvectors
    table = np.stack([sw[q] * (V[q].T @ f) for q in range(ens.Q)])
    return SpectralCoefficients(table, ens)


def inverse(c: SpectralCoefficients) -> np.ndarray:
    ens = c.ensemble
    sw = np.sqrt(ens.weights)
    V = ens.eigenvectors
    out = np.zeros(ens.n)
    for q in range(ens.Q):
        out += sw[q] * (V[q] @ c.table[q])
    return out


def fiberwise_inverse(c: SpectralCoefficients, weighted: bool = True) -> FiberSignals:
    """Per-fiber inverse graph Fourier transform.

    With ``weighted=False`` row q is the inverse transform of
    ``c[q] / sqrt(w_q)``, a plain signal attached to fiber q; this is the form
    that base maps pull back. With ``weighted=True`` (default) each such row is
    multiplied by ``w_q`` so that summing the rows gives :func:`inverse`.
    """
    ens = c.ensemble
    w = ens.weights
    V = ens.eigenvectors
    rows = np.zeros((ens.Q, ens.n))
    for q in range(ens.Q):
        if w[q] == 0:
            continue
        if weighted:
            rows[q] = np.sqrt(w[q]) * (V[q] @ c.table[q])
        else:
            rows[q] = V[q] @ (c.table[q] / np.sqrt(w[q]))
    return FiberSignals(rows, weighted=weighted)


def expectation(fs, ens: OperatorEnsemble, mode: str | None = None) -> np.ndarray:
    """Aggregate fiber signals into one vertex signal.

    ``mode="weighted"`` sums rows as given; ``mode="raw"`` forms the
    weighted mean ``sum_q w_q * row_q``. For a :class:`FiberSignals` the mode
    defaults to the one recorded on it; for a bare array it must be given.
    """
    if isinstance(fs, FiberSignals):
        table = fs.table
        if mode is None:
            mode = "weighted" if fs.weighted else "raw"
    else:
        table = np.asarray(fs, dtype=float)
        if mode is None:
            raise ValueError("mode must be 'raw' or 'weighted' for bare arrays")
    if table.shape != (ens.Q, ens.n):
        raise DimensionError(f"fiber signal table has shape {table.shape}, expected {(ens.Q, ens.n)}")
    if mode == "weighted":
        scale = np.ones(ens.Q)
    elif mode == "raw":
        scale = ens.weights
    else:
        raise ValueError(f"unknown mode {mode!r}")
    out = np.zeros(ens.n)
    for q in range(ens.Q):
        out += scale[q] * table[q]
    return out


def gft_matrix(ens: OperatorEnsemble) -> np.ndarray:
    """The (Q*n) x n matrix of the forward transform, rows ordered (q, i)."""
    sw = np.sqrt(ens.weights)
    return np.concatenate([sw[q] * ens.eigenvectors[q].T for q in range(ens.Q)], axis=0)
