"""Sampling and reconstruction with a band-pass filter, with certified error bounds.

Given the band-pass filter ``B`` with ascending eigenpairs ``(lam_i, v_i)``, a
cut ``j`` keeps the top ``n - j`` eigenvectors. A vertex subset ``V_j`` of
size ``n - j`` on which those eigenvectors restrict to an invertible matrix
``G_j`` lets a (Y, eps)-bandlimited signal be recovered from its samples with

    ||f' - f|| <= eps * (1 + sigma_j) / (1 - lam_j)

where ``sigma_j = ||G_j^{-1}||_2``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.linalg as la

from .errors import CertificateError, DimensionError, NumericalError
from .filters import ConvolutionFilter, bandlimit_residual
from .operators import as_signal, sym_eigh

SPECTRUM_TOL = 1e-10
COND_MAX = 1e12


@dataclass(frozen=True)
class BandPassSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    source: ConvolutionFilter = None

    @property
    def n(self):
        return self.eigenvalues.shape[0]


@dataclass(frozen=True)
class SamplingPlan:
    j: int
    V_j: tuple
    G_j: np.ndarray
    sigma_j: float
    lambda_j: float
    basis: np.ndarray  # n x (n-j): eigenvectors v_{j+1..n}

    @property
    def n(self):
        return self.basis.shape[0]

    def to_dict(self):
        return {
            "j": int(self.j),
            "V_j": [int(v) for v in self.V_j],
            "sigma_j": float(self.sigma_j),
            "lambda_j": float(self.lambda_j),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


@dataclass(frozen=True)
class ReconstructionReport:
    f_prime: np.ndarray
    bound_a: float
    epsilon_prime: float
    epsilon: float
    j: int


def analyze(B) -> BandPassSpectrum:
    """Eigendecompose a band-pass filter and check its spectrum lies in [0, 1]."""
    M = B.matrix if isinstance(B, ConvolutionFilter) else np.asarray(B, dtype=float)
    es = sym_eigh(M, name="band-pass filter")
    lam = es.eigenvalues
    bad = lam[(lam < -SPECTRUM_TOL) | (lam > 1.0 + SPECTRUM_TOL)]
    if bad.size:
        raise NumericalError(f"band-pass eigenvalue {bad[0]!r} escapes [0, 1]; ensemble is malformed")
    return BandPassSpectrum(lam, es.eigenvectors, B if isinstance(B, ConvolutionFilter) else None)


def cut_index(spectrum: BandPassSpectrum, budget: int | None = None, threshold: float | None = None) -> int:
    n = spectrum.n
    if (budget is None) == (threshold is None):
        raise ValueError("give exactly one of budget or threshold")
    if budget is not None:
        if not 1 <= budget <= n:
            raise ValueError(f"budget must be in [1, {n}], got {budget}")
        return n - int(budget)
    if not 0.0 <= threshold < 1.0:
        raise ValueError(f"threshold must be in [0, 1), got {threshold}")
    j = int(np.count_nonzero(spectrum.eigenvalues <= threshold))
    if j >= n:
        raise CertificateError(f"all eigenvalues are <= {threshold}; nothing left to sample")
    return j


def select_rows(basis: np.ndarray) -> np.ndarray:
    """Greedy well-conditioned row subset via column-pivoted QR of ``basis.T``."""
    k = basis.shape[1]
    _, _, piv = la.qr(basis.T, mode="economic", pivoting=True)
    return np.sort(piv[:k])


def make_plan(spectrum: BandPassSpectrum, j: int, V_j=None) -> SamplingPlan:
    n = spectrum.n
    if not 0 <= j < n:
        raise ValueError(f"cut index must be in [0, {n}), got {j}")
    lam_j = 0.0 if j == 0 else float(spectrum.eigenvalues[j - 1])
    if 1.0 - lam_j <= SPECTRUM_TOL:
        raise CertificateError(f"lambda_j = {lam_j!r} equals 1; the error bound cannot be certified")
    U = np.array(spectrum.eigenvectors[:, j:])
    rows = select_rows(U) if V_j is None else np.sort(np.asarray(V_j, dtype=int))
    if rows.size != n - j or len(set(rows.tolist())) != rows.size:
        raise DimensionError(f"uniqueness set must have {n - j} distinct vertices")
    G = U[rows, :]
    s = np.linalg.svd(G, compute_uv=False)
    if s[-1] == 0 or s[0] / s[-1] > COND_MAX:
        raise CertificateError(f"G_j is numerically singular (condition {s[0] / s[-1] if s[-1] else np.inf:.3e})")
    G.setflags(write=False)
    U.setflags(write=False)
    return SamplingPlan(j, tuple(int(v) for v in rows), G, float(1.0 / s[-1]), lam_j, U)


def plan(spectrum: BandPassSpectrum, budget: int | None = None, threshold: float | None = None) -> SamplingPlan:
    """Choose the cut index and a uniqueness set.

    ``budget=m`` samples m vertices (``j = n - m``); ``threshold=tau`` cuts
    below every eigenvalue ``<= tau``.
    """
    return make_plan(spectrum, cut_index(spectrum, budget, threshold))


def _samples_vector(p: SamplingPlan, samples) -> np.ndarray:
    if isinstance(samples, Mapping):
        keys = {int(k) for k in samples}
        if keys != set(p.V_j):
            missing = sorted(set(p.V_j) - keys)
            extra = sorted(keys - set(p.V_j))
            raise ValueError(f"samples must cover exactly V_j (missing {missing}, unexpected {extra})")
        return np.array([float(samples[v]) if v in samples else float(samples[str(v)]) for v in p.V_j])
    y = np.asarray(samples, dtype=float)
    if y.shape != (len(p.V_j),):
        raise DimensionError(f"expected {len(p.V_j)} samples aligned with V_j, got shape {y.shape}")
    return y


def error_bounds(p: SamplingPlan, epsilon: float):
    gap = 1.0 - p.lambda_j
    bound_a = epsilon * (1.0 + p.sigma_j) / gap
    eps_prime = epsilon * (1.0 + 2.0 * (1.0 + p.sigma_j) / gap)
    return bound_a, eps_prime


def reconstruct(p: SamplingPlan, samples, epsilon: float = 0.0) -> ReconstructionReport:
    """Recover a signal from its values on ``V_j``.

    ``samples`` is a mapping vertex -> value (keys must be exactly ``V_j``) or
    a vector aligned with ``p.V_j``.
    """
    if not epsilon >= 0:
        raise ValueError("epsilon must be nonnegative")
    y = _samples_vector(p, samples)
    try:
        lu = la.lu_factor(p.G_j, check_finite=True)
    except (la.LinAlgError, ValueError) as exc:
        raise CertificateError(f"singular solve with G_j: {exc}") from exc
    coeffs = la.lu_solve(lu, y)
    f_prime = p.basis @ coeffs
    bound_a, eps_prime = error_bounds(p, float(epsilon))
    return ReconstructionReport(f_prime, bound_a, eps_prime, float(epsilon), p.j)


def sample_signal(p: SamplingPlan, f) -> np.ndarray:
    f = as_signal(f, p.n)
    return f[list(p.V_j)]


def convexity_check(f, g, B, epsilon: float) -> bool:
    """Check that the midpoint of two (Y, eps)-bandlimited signals is bandlimited.

    Raises ``ValueError`` when either input is not (Y, eps)-bandlimited.
    """
    rf, rg = bandlimit_residual(f, B), bandlimit_residual(g, B)
    if rf > epsilon or rg > epsilon:
        raise ValueError(f"inputs are not ({epsilon})-bandlimited (residuals {rf:.3e}, {rg:.3e})")
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    return bandlimit_residual(0.5 * (f + g), B) <= epsilon + 1e-12


def nonuniqueness_witness(p: SamplingPlan, B, f, epsilon: float):
    """Two distinct (Y, eps)-bandlimited signals with identical samples on ``V_j``.

    ``f`` must satisfy ``residual(f) < eps``. The second signal adds a bump on
    a vertex outside ``V_j`` scaled to use up the remaining residual budget.
    """
    M = B.matrix if isinstance(B, ConvolutionFilter) else np.asarray(B, dtype=float)
    f = as_signal(f, p.n)
    outside = sorted(set(range(p.n)) - set(p.V_j))
    if not outside:
        raise ValueError("V_j covers every vertex; samples determine the signal")
    r0 = bandlimit_residual(f, M)
    if not r0 < epsilon:
        raise ValueError("f must be strictly inside the bandlimited set")
    e = np.zeros(p.n)
    e[outside[0]] = 1.0
    d = M @ e - e
    dn = float(np.linalg.norm(d))
    # largest step with ||(B - I)(f + s e)|| <= eps, by the triangle inequality
    step = (epsilon - r0) / dn if dn > 0 else 1.0
    return f, f + step * e
