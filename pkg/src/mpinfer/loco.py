"""Feature-importance inference from a fitted minipatch ensemble.

Occlusion scores compare each row's leave-one-out prediction error with
and without the target feature available to the ensemble; the score mean
gets a normal-approximation interval, optionally widened by a small
variance barrier epsilon(N) = c * L * B * n * log(N) / N that protects
coverage when the score variance collapses for null features.  The
one-sided test rejects H0: importance <= 0 when the studentised mean
clears the upper-alpha normal quantile.

Everything here is a read-only consumer of the ensemble cache: no model
is refit during inference.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .core import (
    CoverageFailure, Dataset, DegenerateDenominator, DimensionMismatch,
    InvalidSize, Task, TooFewRows,
)
from .ensemble import Ensemble
from .normal import norm_ppf, norm_sf
from .rng import generator, spawn_seed

__all__ = [
    "OcclusionResult", "FeatureInterval", "TestResult", "InferenceReport",
    "occlusion_scores", "plain_interval", "buffered_interval",
    "estimate_B", "variance_barrier", "test_feature", "infer_all",
    "infer_feature", "loco_split_baseline", "report_to_csv", "report_to_json",
]


@dataclass(frozen=True)
class OcclusionResult:
    """Per-row occlusion scores for one feature with their mean and sd."""

    j: int
    scores: np.ndarray
    mean: float
    sd: float
    n_obs: int


@dataclass(frozen=True)
class FeatureInterval:
    """Normal-approximation interval for one feature's importance.

    ``alpha`` is the level the interval was built at (already divided by
    M under Bonferroni).  ``b_hat``/``epsilon_n`` are present only on
    buffered intervals.  ``t_stat``/``p_value`` are None when the score
    spread and barrier are both exactly zero.
    """

    j: int
    lo: float
    hi: float
    alpha: float
    buffered: bool
    mean: float
    sd: float
    b_hat: float | None = None
    epsilon_n: float | None = None
    t_stat: float | None = None
    p_value: float | None = None
    name: str | None = None

    @property
    def reject(self) -> bool:
        if self.t_stat is None:
            return False
        return self.t_stat >= norm_ppf(1.0 - self.alpha)


class TestResult(NamedTuple):
    t_stat: float
    p_value: float
    reject: bool


def _error_vector(task: Task, Y: np.ndarray, preds: np.ndarray) -> np.ndarray:
    # Elementwise twin of core.error_score over a column of predictions.
    if task == Task.REGRESSION:
        return np.abs(Y - preds[:, 0])
    return 1.0 - preds[np.arange(Y.shape[0]), Y.astype(np.int64)]


def occlusion_scores(ens: Ensemble, j: int) -> OcclusionResult:
    """Score every row: error with feature j occluded minus error with it."""
    ds = ens.dataset
    loo = ens.loo_all()
    loco = ens.loo_loco_all(j)
    scores = _error_vector(ds.task, ds.Y, loco) - _error_vector(ds.task, ds.Y, loo)
    mean = float(scores.mean())
    sd = float(scores.std(ddof=1)) if scores.shape[0] > 1 else 0.0
    return OcclusionResult(j=j, scores=scores, mean=mean, sd=sd,
                           n_obs=scores.shape[0])


def _t_and_p(mean: float, denom: float):
    if denom <= 0.0:
        return None, None
    t = mean / denom
    return float(t), float(norm_sf(t))


def plain_interval(res: OcclusionResult, alpha: float) -> FeatureInterval:
    """mean +/- z_{alpha/2} * sd / sqrt(N)."""
    if res.n_obs < 2:
        raise TooFewRows("need at least 2 scores for an interval")
    z = norm_ppf(1.0 - alpha / 2.0)
    half = z * res.sd / math.sqrt(res.n_obs)
    t, p = _t_and_p(res.mean, res.sd / math.sqrt(res.n_obs))
    return FeatureInterval(j=res.j, lo=res.mean - half, hi=res.mean + half,
                           alpha=alpha, buffered=False, mean=res.mean,
                           sd=res.sd, t_stat=t, p_value=p)


def buffered_interval(res: OcclusionResult, alpha: float, epsilon_n: float,
                      b_hat: float | None = None) -> FeatureInterval:
    """mean +/- z_{alpha/2} * (sd / sqrt(N) + epsilon_n)."""
    if epsilon_n < 0.0:
        raise InvalidSize("epsilon_n must be >= 0")
    z = norm_ppf(1.0 - alpha / 2.0)
    spread = res.sd / math.sqrt(res.n_obs) + epsilon_n
    t, p = _t_and_p(res.mean, spread)
    return FeatureInterval(j=res.j, lo=res.mean - z * spread,
                           hi=res.mean + z * spread, alpha=alpha,
                           buffered=True, mean=res.mean, sd=res.sd,
                           b_hat=b_hat, epsilon_n=epsilon_n,
                           t_stat=t, p_value=p)


def estimate_B(ens: Ensemble, pairs_per_sample: int = 10, seed: int = 0) -> float:
    """Estimate the prediction-difference bound from cached predictions.

    For each row, sample pairs of distinct patches that exclude it and
    average the Euclidean gap between the two cached predictions at the
    row; the estimate averages those per-row means.
    """
    if pairs_per_sample < 1:
        raise InvalidSize("pairs_per_sample must be >= 1")
    excl = ~ens.obs_mask        # (K, N)
    counts = excl.sum(axis=0)
    short = np.nonzero(counts < 2)[0]
    if short.size:
        raise CoverageFailure(int(short[0]))
    gen = generator(seed, "pair-gaps")
    N = ens.dataset.n_rows
    row_means = np.empty(N, dtype=float)
    for i in range(N):
        qualifying = np.nonzero(excl[:, i])[0]
        gaps = np.empty(pairs_per_sample, dtype=float)
        for p in range(pairs_per_sample):
            k1, k2 = gen.choice(qualifying.shape[0], size=2, replace=False)
            diff = ens.cache[qualifying[k1], i] - ens.cache[qualifying[k2], i]
            gaps[p] = math.sqrt(float(diff @ diff))
        row_means[i] = gaps.mean()
    return float(row_means.mean())


def variance_barrier(b_hat: float, n: int, N: int, L: float = 1.0,
                     c: float = 0.000005) -> float:
    """Barrier value c * L * B * n * log(N) / N (natural log)."""
    if min(b_hat, n, N, L, c) < 0 or N < 2:
        raise InvalidSize("barrier inputs must be nonnegative with N >= 2")
    return c * L * b_hat * n * math.log(N) / N


def test_feature(res: OcclusionResult, alpha: float, epsilon_n: float) -> TestResult:
    """One-sided test of H0: importance <= 0.

    T = mean / (sd / sqrt(N) + epsilon_n); reject iff T >= z_alpha,
    equivalently p = 1 - Phi(T) <= alpha.
    """
    denom = res.sd / math.sqrt(res.n_obs) + epsilon_n
    if denom <= 0.0:
        raise DegenerateDenominator("score sd and barrier are both zero")
    t = res.mean / denom
    p = float(norm_sf(t))
    return TestResult(t_stat=float(t), p_value=p,
                      reject=bool(t >= norm_ppf(1.0 - alpha)))


@dataclass(frozen=True)
class InferenceReport:
    """Per-feature intervals plus the shared barrier provenance."""

    intervals: tuple[FeatureInterval | None, ...]
    failures: dict
    alpha: float
    bonferroni: bool
    b_hat: float
    epsilon_n: float
    settings: dict
    feature_names: tuple[str, ...] | None = None


def infer_all(ens: Ensemble, alpha: float | None = None,
              bonferroni: bool = False, pairs_per_sample: int = 10) -> InferenceReport:
    """Interval and test for every feature off one fitted ensemble.

    One prediction-difference estimate and one barrier value are shared
    across features; under ``bonferroni`` each feature runs at level
    alpha / M.  A coverage failure on one feature is recorded and the
    remaining features are unaffected.
    """
    ds = ens.dataset
    cfg = ens.config
    if alpha is None:
        alpha = cfg.alpha
    M = ds.n_features
    level = alpha / M if bonferroni else alpha

    if cfg.use_buffer:
        b_hat = estimate_B(ens, pairs_per_sample=pairs_per_sample,
                           seed=spawn_seed(cfg.seed, "estimate-b"))
        eps = variance_barrier(b_hat, cfg.n, ds.n_rows, c=cfg.buffer_c)
    else:
        b_hat, eps = 0.0, 0.0

    intervals: list[FeatureInterval | None] = []
    failures: dict[int, str] = {}
    names = ds.feature_names
    for j in range(M):
        try:
            res = occlusion_scores(ens, j)
        except CoverageFailure as exc:
            failures[j] = str(exc)
            intervals.append(None)
            continue
        iv = buffered_interval(res, level, eps, b_hat=b_hat)
        if names is not None:
            iv = replace(iv, name=names[j])
        intervals.append(iv)
    return InferenceReport(intervals=tuple(intervals), failures=failures,
                           alpha=alpha, bonferroni=bonferroni, b_hat=b_hat,
                           epsilon_n=eps, settings=cfg.settings_dict(),
                           feature_names=names)


def infer_feature(ens: Ensemble, j: int, alpha: float | None = None) -> FeatureInterval:
    """Interval and test for a single feature, honouring the config's
    buffer settings; barrier randomness derives from the config seed."""
    cfg = ens.config
    if alpha is None:
        alpha = cfg.alpha
    if cfg.use_buffer:
        b_hat = estimate_B(ens, seed=spawn_seed(cfg.seed, "estimate-b"))
        eps = variance_barrier(b_hat, cfg.n, ens.dataset.n_rows, c=cfg.buffer_c)
    else:
        b_hat, eps = 0.0, 0.0
    res = occlusion_scores(ens, j)
    return buffered_interval(res, alpha, eps, b_hat=b_hat)


def loco_split_baseline(dataset: Dataset, j: int, alpha: float, learner,
                        split_seed: int) -> FeatureInterval:
    """Split-sample baseline: one full fit and one leave-j-out fit.

    Rows are permuted by the seed and split ceil(N/2) / rest; both models
    are fit on the first part, scored on the second, and the score mean
    gets the same normal interval and one-sided test as the main method.
    """
    N = dataset.n_rows
    if N < 4:
        raise TooFewRows("split baseline needs at least 4 rows")
    if not 0 <= j < dataset.n_features:
        raise DimensionMismatch(f"feature index {j} out of range")
    order = generator(split_seed, "split").permutation(N)
    n1 = -(-N // 2)
    d1, d2 = order[:n1], order[n1:]

    X, Y = dataset.X, dataset.Y
    keep = [c for c in range(dataset.n_features) if c != j]
    full = learner.fit(X[d1], Y[d1], dataset.task, dataset.n_classes)
    reduced = learner.fit(X[d1][:, keep], Y[d1], dataset.task, dataset.n_classes)

    err_full = _error_vector(dataset.task, Y[d2], full.predict_batch(X[d2]))
    err_red = _error_vector(dataset.task, Y[d2],
                            reduced.predict_batch(X[d2][:, keep]))
    scores = err_red - err_full
    res = OcclusionResult(j=j, scores=scores, mean=float(scores.mean()),
                          sd=float(scores.std(ddof=1)), n_obs=scores.shape[0])
    return plain_interval(res, alpha)


# -- report serialisation ---------------------------------------------------

_CSV_COLUMNS = ["j", "name", "mean", "sd", "lo", "hi", "T", "p", "reject"]


def report_to_csv(report: InferenceReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for j, iv in enumerate(report.intervals):
        if iv is None:
            writer.writerow([j, _feature_name(report, j), "", "", "", "", "", "",
                             f"coverage_failure:{report.failures.get(j, '')}"])
            continue
        writer.writerow([
            j, _feature_name(report, j),
            format(iv.mean, ".17g"), format(iv.sd, ".17g"),
            format(iv.lo, ".17g"), format(iv.hi, ".17g"),
            "" if iv.t_stat is None else format(iv.t_stat, ".17g"),
            "" if iv.p_value is None else format(iv.p_value, ".17g"),
            int(iv.reject),
        ])
    return buf.getvalue()


def _feature_name(report: InferenceReport, j: int) -> str:
    if report.feature_names is not None:
        return report.feature_names[j]
    return f"x{j}"


def report_to_json(report: InferenceReport) -> str:
    features = []
    for j, iv in enumerate(report.intervals):
        if iv is None:
            features.append({"j": j, "name": _feature_name(report, j),
                             "error": report.failures.get(j, "coverage failure")})
            continue
        features.append({
            "j": j, "name": _feature_name(report, j), "mean": iv.mean,
            "sd": iv.sd, "lo": iv.lo, "hi": iv.hi, "T": iv.t_stat,
            "p": iv.p_value, "reject": bool(iv.reject), "level": iv.alpha,
        })
    payload = {
        "alpha": report.alpha,
        "bonferroni": report.bonferroni,
        "b_hat": report.b_hat,
        "epsilon_n": report.epsilon_n,
        "settings": report.settings,
        "features": features,
    }
    return json.dumps(payload, sort_keys=True, indent=2)
