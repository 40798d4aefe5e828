"""Learning a discrete operator distribution from training signals.

Candidates are scored by empirical risk, weighted by the Gibbs posterior
``exp(-gamma * risk) * prior``, and the posterior is either computed exactly or
sampled with Metropolis-Hastings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ensemble import Discrete, normalize_weights
from .errors import DimensionError, NumericalError
from .operators import SymOperator, as_signal


@dataclass(frozen=True)
class TrainingSet:
    signals: np.ndarray
    labels: np.ndarray = None

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.signals, dtype=float))
        if S.shape[0] == 0:
            raise ValueError("training set is empty")
        if not np.all(np.isfinite(S)):
            raise ValueError("training signals must be finite")
        object.__setattr__(self, "signals", S)
        if self.labels is not None:
            z = np.asarray(self.labels, dtype=float)
            if z.shape != (S.shape[0],):
                raise DimensionError(f"{z.shape[0] if z.ndim else 1} labels for {S.shape[0]} signals")
            object.__setattr__(self, "labels", z)

    def __len__(self):
        return self.signals.shape[0]


def highfreq_loss(x: SymOperator, f, b: int) -> float:
    """Fraction of the signal norm above the first ``b`` graph frequencies of ``x``."""
    f = as_signal(f, x.n)
    if not 1 <= b <= x.n:
        raise ValueError(f"bandwidth must be in [1, {x.n}], got {b}")
    norm = float(np.linalg.norm(f))
    if norm == 0:
        raise ValueError("high-frequency energy is undefined for the zero signal")
    fhat = x.eigen.eigenvectors.T @ f
    return min(1.0, float(np.sqrt(np.sum(fhat[b:] ** 2))) / norm)


@dataclass(frozen=True)
class AnomalyDetector:
    """Flags a signal as abnormal when its high-frequency energy exceeds ``threshold``."""

    bandwidth: int
    threshold: float

    def flags(self, x: SymOperator, f) -> bool:
        return highfreq_loss(x, f, self.bandwidth) > self.threshold


def anomaly_loss(x: SymOperator, f, is_abnormal: bool, detector: AnomalyDetector) -> float:
    """0 when the detector classifies ``f`` correctly under ``x``, 1 otherwise."""
    return 0.0 if detector.flags(x, f) == bool(is_abnormal) else 1.0


def calibrate_threshold(energies, labels) -> float:
    """Threshold on a 1-D score minimizing training misclassifications.

    Candidate thresholds are midpoints between consecutive sorted scores (plus
    the two outer ends); ties keep the smallest threshold.
    """
    s = np.asarray(energies, dtype=float)
    z = np.asarray(labels, dtype=bool)
    order = np.sort(np.unique(s))
    cands = np.concatenate([[order[0] - 1e-12], 0.5 * (order[1:] + order[:-1]), [order[-1] + 1e-12]])
    errors = [np.count_nonzero((s > th) != z) for th in cands]
    return float(cands[int(np.argmin(errors))])


@dataclass(frozen=True)
class HighFreqLoss:
    bandwidth: int
    variant = "highfreq_energy"


@dataclass(frozen=True)
class AnomalyLoss:
    """One detector shared by all candidates, or one per candidate."""

    detectors: object
    variant = "anomaly"

    def detector_for(self, c: int) -> AnomalyDetector:
        if isinstance(self.detectors, AnomalyDetector):
            return self.detectors
        return self.detectors[c]


@dataclass(frozen=True)
class CustomLoss:
    """Precomputed losses: ``table[c, i]`` is the loss of candidate c on signal i."""

    table: np.ndarray
    variant = "custom"


@dataclass(frozen=True)
class RiskTable:
    candidates: tuple
    risks: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.risks, dtype=float)
        if r.shape != (len(self.candidates),):
            raise DimensionError("one risk per candidate is required")
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ValueError("risks must be finite and nonnegative")
        object.__setattr__(self, "candidates", tuple(self.candidates))
        object.__setattr__(self, "risks", r)


def empirical_risk(candidates: Sequence[SymOperator], train: TrainingSet, loss) -> RiskTable:
    """Mean loss of each candidate over the training signals (fixed summation order)."""
    cands = tuple(candidates)
    k = len(train)
    risks = []
    for c, x in enumerate(cands):
        losses = []
        for i in range(k):
            f = train.signals[i]
            try:
                if isinstance(loss, HighFreqLoss):
                    val = highfreq_loss(x, f, loss.bandwidth)
                elif isinstance(loss, AnomalyLoss):
                    if train.labels is None:
                        raise ValueError("anomaly loss needs labelled training signals")
                    val = anomaly_loss(x, f, bool(train.labels[i]), loss.detector_for(c))
                elif isinstance(loss, CustomLoss):
                    val = float(loss.table[c][i])
                elif callable(loss):
                    val = float(loss(x, f) if train.labels is None else loss(x, f, train.labels[i]))
                else:
                    raise TypeError(f"unsupported loss {type(loss).__name__}")
            except (ValueError, ArithmeticError, IndexError) as exc:
                raise type(exc)(f"loss failed for candidate {c} on signal {i}: {exc}") from exc
            if not (val >= 0 and math.isfinite(val)):
                raise ValueError(f"loss for candidate {c} on signal {i} is {val!r}; must be finite and >= 0")
            losses.append(val)
        risks.append(math.fsum(losses) / k)
    return RiskTable(cands, np.array(risks))


@dataclass(frozen=True)
class GibbsConfig:
    gamma: float
    prior: tuple = None

    def __post_init__(self):
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be finite and >= 0, got {self.gamma}")
        if self.prior is not None:
            p = tuple(float(v) for v in self.prior)
            if any(not v > 0 for v in p):
                raise ValueError("prior weights must be positive")
            if abs(math.fsum(p) - 1.0) > 1e-9:
                raise ValueError("prior weights must sum to 1")
            object.__setattr__(self, "prior", p)

    def prior_for(self, C: int) -> np.ndarray:
        if self.prior is None:
            return np.full(C, 1.0 / C)
        if len(self.prior) != C:
            raise DimensionError(f"prior has {len(self.prior)} entries for {C} candidates")
        return np.array(self.prior)


def _risks(risk) -> np.ndarray:
    if isinstance(risk, RiskTable):
        return risk.risks
    return np.asarray(risk, dtype=float)


def gibbs_exact(risk, cfg: GibbsConfig) -> np.ndarray:
    """Posterior weights ``exp(-gamma * r_c) * prior_c / Z`` (max-shifted in log space)."""
    r = _risks(risk)
    logw = np.log(cfg.prior_for(r.size)) - cfg.gamma * r
    if not np.all(np.isfinite(logw)):
        raise NumericalError("non-finite log posterior weight")
    w = np.exp(logw - logw.max())
    if not np.any(w > 0):
        raise NumericalError("all posterior weights underflow")
    return np.array(normalize_weights(w, warn=False))


@dataclass(frozen=True)
class MHConfig:
    steps: int = 100_000
    burn_in: int = 1_000
    thinning: int = 1
    proposal: str = "uniform_independent"
    width: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.steps > self.burn_in >= 0:
            raise ValueError("need steps > burn_in >= 0")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.proposal not in ("uniform_independent", "neighbor_walk"):
            raise ValueError(f"unknown proposal {self.proposal!r}")
        if self.width < 1:
            raise ValueError("neighbor_walk width must be >= 1")


@dataclass(frozen=True)
class MHResult:
    weights: np.ndarray
    acceptance_rate: float
    visits: np.ndarray
    kept: int


def reflect(i: int, C: int) -> int:
    """Fold an index back into ``[0, C)`` by mirror reflection at both ends."""
    if C == 1:
        return 0
    period = 2 * (C - 1)
    i %= period
    return period - i if i > C - 1 else i


def walk_proposal_matrix(C: int, width: int) -> np.ndarray:
    """``P[c, d]``: probability that the reflected neighbour walk proposes d from c."""
    P = np.zeros((C, C))
    offsets = [d for d in range(-width, width + 1) if d != 0]
    for c in range(C):
        for d in offsets:
            P[c, reflect(c + d, C)] += 1.0 / len(offsets)
    return P


def mh_sample(risk_oracle, candidates, gibbs: GibbsConfig, mh: MHConfig) -> MHResult:
    """Metropolis-Hastings over candidate indices targeting the Gibbs posterior.

    ``risk_oracle`` is a :class:`RiskTable`, a sequence of risks, or a callable
    ``index -> risk`` (evaluated lazily and cached). ``candidates`` is the
    candidate sequence or its length. Returns visit frequencies after burn-in
    and thinning.
    """
    C = candidates if isinstance(candidates, int) else len(candidates)
    if C < 1:
        raise ValueError("no candidates")
    if callable(risk_oracle) and not isinstance(risk_oracle, RiskTable):
        cache = {}

        def risk(c):
            if c not in cache:
                cache[c] = float(risk_oracle(c))
            return cache[c]

    else:
        table = _risks(risk_oracle)
        if table.size != C:
            raise DimensionError(f"{table.size} risks for {C} candidates")

        def risk(c):
            return float(table[c])

    log_prior = np.log(gibbs.prior_for(C))

    def log_target(c):
        return log_prior[c] - gibbs.gamma * risk(c)

    rng = np.random.default_rng(mh.seed)
    log_u = np.log(rng.random(mh.steps))
    if mh.proposal == "uniform_independent":
        proposals = rng.integers(0, C, mh.steps)
        log_q = None
    else:
        w = mh.width
        raw = rng.integers(0, 2 * w, mh.steps)
        offsets = np.where(raw < w, raw - w, raw - w + 1)
        with np.errstate(divide="ignore"):
            log_q = np.log(walk_proposal_matrix(C, w))
    state = int(rng.integers(0, C))
    lt = log_target(state)
    visits = np.zeros(C, dtype=np.int64)
    accepted = 0
    for step in range(mh.steps):
        if log_q is None:
            prop = int(proposals[step])
            log_ratio = 0.0
        else:
            prop = reflect(state + int(offsets[step]), C)
            log_ratio = log_q[prop, state] - log_q[state, prop]
        lt_prop = log_target(prop)
        if log_u[step] < lt_prop - lt + log_ratio:
            state, lt = prop, lt_prop
            accepted += 1
        if step >= mh.burn_in and (step - mh.burn_in) % mh.thinning == 0:
            visits[state] += 1
    kept = int(visits.sum())
    return MHResult(visits / kept, accepted / mh.steps, visits, kept)


def posterior_spec(candidates, weights, params=None, cutoff: float = 0.0) -> Discrete:
    """Discrete distribution spec over candidates with weight above ``cutoff``."""
    w = np.asarray(weights, dtype=float)
    keep = [c for c in range(w.size) if w[c] > cutoff]
    if not keep:
        raise ValueError(f"no candidate has weight above {cutoff}")
    return Discrete(
        tuple(candidates[c] for c in keep),
        tuple(float(w[c]) for c in keep),
        None if params is None else tuple(float(params[c]) for c in keep),
    )
