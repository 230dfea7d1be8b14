"""Jackknife+ predictive inference from the same fitted ensemble.

Leave-one-out residuals and per-row LOO predictions of a new point are
combined through order-statistic quantiles into distribution-free
intervals (regression) or label sets (classification).  Order-statistic
ranks are snapped to the nearest integer when within 1e-9 so that float
representation of alpha (e.g. 0.9 * 10) cannot shift a rank by one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import EmptyInput, InvalidSize, Task, TaskMismatch
from .ensemble import Ensemble
from .loco import _error_vector
from .rng import generator

__all__ = [
    "LooResiduals", "PredictiveInterval", "PredictiveSet",
    "quantile_plus", "quantile_minus", "loo_residuals",
    "predict_interval", "predict_set", "predict_intervals_batch",
    "predict_sets_batch", "sample_K_binomial",
]

_RANK_TOL = 1e-9


@dataclass(frozen=True)
class LooResiduals:
    """Nonconformity of each row's leave-one-out prediction."""

    R: np.ndarray


@dataclass(frozen=True)
class PredictiveInterval:
    lo: float
    hi: float
    alpha: float

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, y: float) -> bool:
        return self.lo <= y <= self.hi


@dataclass(frozen=True)
class PredictiveSet:
    labels: tuple[int, ...]
    alpha: float

    def contains(self, y: int) -> bool:
        return int(y) in self.labels


def _snap(t: float) -> float:
    nearest = round(t)
    if abs(t - nearest) < _RANK_TOL:
        return float(nearest)
    return t


def quantile_plus(values, alpha: float) -> float:
    """The ceil((1-alpha)(N+1))-th smallest value, +inf past the end."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise EmptyInput("quantile of an empty vector")
    rank = math.ceil(_snap((1.0 - alpha) * (values.size + 1)))
    if rank > values.size:
        return math.inf
    return float(np.sort(values)[rank - 1])


def quantile_minus(values, alpha: float) -> float:
    """The floor(alpha(N+1))-th smallest value, -inf below the start."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise EmptyInput("quantile of an empty vector")
    rank = math.floor(_snap(alpha * (values.size + 1)))
    if rank < 1:
        return -math.inf
    return float(np.sort(values)[rank - 1])


def loo_residuals(ens: Ensemble) -> LooResiduals:
    ds = ens.dataset
    return LooResiduals(R=_error_vector(ds.task, ds.Y, ens.loo_all()))


def predict_intervals_batch(ens: Ensemble, residuals: LooResiduals,
                            X_new, alpha: float) -> list[PredictiveInterval]:
    """Regression intervals for a block of new points."""
    if ens.dataset.task != Task.REGRESSION:
        raise TaskMismatch("predictive intervals require a regression ensemble")
    X_new = np.asarray(X_new, dtype=float)
    loo = ens.loo_new_all(X_new)[:, :, 0]          # (N, T)
    R = residuals.R[:, None]
    out = []
    for t in range(X_new.shape[0]):
        lo = quantile_minus(loo[:, t] - R[:, 0], alpha)
        hi = quantile_plus(loo[:, t] + R[:, 0], alpha)
        out.append(PredictiveInterval(lo=lo, hi=hi, alpha=alpha))
    return out


def predict_interval(ens: Ensemble, residuals: LooResiduals, x_new,
                     alpha: float) -> PredictiveInterval:
    x_new = np.asarray(x_new, dtype=float)
    return predict_intervals_batch(ens, residuals, x_new[None, :], alpha)[0]


def predict_sets_batch(ens: Ensemble, residuals: LooResiduals,
                       X_new, alpha: float) -> list[PredictiveSet]:
    """Classification label sets for a block of new points.

    A label enters the set when the count of rows whose residual it
    fails to beat stays within (1-alpha)(N+1).
    """
    if ens.dataset.task != Task.CLASSIFICATION:
        raise TaskMismatch("predictive sets require a classification ensemble")
    X_new = np.asarray(X_new, dtype=float)
    loo = ens.loo_new_all(X_new)                    # (N, T, d)
    N = loo.shape[0]
    budget = _snap((1.0 - alpha) * (N + 1)) + _RANK_TOL
    R = residuals.R[:, None]                        # (N, 1)
    out = []
    for t in range(X_new.shape[0]):
        errs = 1.0 - loo[:, t, :]                   # (N, d)
        counts = (errs >= R).sum(axis=0)            # per-label counts
        labels = tuple(int(y) for y in np.nonzero(counts <= budget)[0])
        out.append(PredictiveSet(labels=labels, alpha=alpha))
    return out


def predict_set(ens: Ensemble, residuals: LooResiduals, x_new,
                alpha: float) -> PredictiveSet:
    x_new = np.asarray(x_new, dtype=float)
    return predict_sets_batch(ens, residuals, x_new[None, :], alpha)[0]


def sample_K_binomial(K_tilde: int, n: int, N: int, seed: int) -> int:
    """Draw the patch count as Binomial(K_tilde, 1 - n/(N+1)).

    Opt-in mode for experiments that want the randomised-ensemble-size
    variant of the coverage guarantee; deterministic in the seed.
    """
    if K_tilde < 1 or not (1 <= n <= N):
        raise InvalidSize(f"invalid K_tilde={K_tilde}, n={n}, N={N}")
    gen = generator(seed, "binomial-k")
    return int(gen.binomial(K_tilde, 1.0 - n / (N + 1)))
