"""Minipatch sampling, ensemble training, and leave-out aggregation.

A minipatch is a random (rows, features) submatrix; the ensemble keeps
every fitted base model together with a dense K x N x d cache of each
model's prediction at every training row, plus boolean membership masks.
Every leave-one-out / leave-one-covariate-out query is then a masked
average over the cache: no model is ever refit after training.

Memory: the cache costs K*N*d doubles (e.g. K=10,000, N=2,000, d=1 is
160 MB); queries scan masks at K*N bools per feature.  Training is pure
per patch, so worker threads only shard the patch index range and output
is byte-identical for any thread count.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    CoverageFailure, Dataset, DimensionMismatch, InvalidSize, InvalidSpec,
    MPConfig, Task,
)
from .learners import (
    ConstantModel, FittedModel, LinearModel, RidgeLearner, TreeModel, _Node,
)
from .rng import generator

__all__ = [
    "Minipatch", "Ensemble", "sample_minipatches", "train_ensemble",
    "save_ensemble", "load_ensemble",
]

_PATCH_STREAM = "minipatches"


@dataclass(frozen=True)
class Minipatch:
    """Sorted row indices (n) and feature indices (m) of one submatrix."""

    rows: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rows", np.asarray(self.rows, dtype=np.int64))
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.int64))


def sample_minipatches(N: int, M: int, n: int, m: int, K: int, seed: int) -> list[Minipatch]:
    """Draw K independent uniform (rows, features) pairs, each without
    replacement within the patch; deterministic in the seed."""
    if not (1 <= n < N) or not (1 <= m < M) or K < 1:
        raise InvalidSize(f"invalid sizes: N={N}, M={M}, n={n}, m={m}, K={K}")
    gen = generator(seed, _PATCH_STREAM)
    patches = []
    for _ in range(K):
        rows = np.sort(gen.choice(N, size=n, replace=False))
        feats = np.sort(gen.choice(M, size=m, replace=False))
        patches.append(Minipatch(rows=rows, features=feats))
    return patches


class Ensemble:
    """K fitted minipatch models plus the prediction cache and masks.

    Immutable after construction; all query methods are read-only and
    safe to call concurrently.  Aggregations are computed through one
    vectorised kernel and memoised, so repeated queries are cheap and
    single-index queries agree exactly with full-column queries.
    """

    def __init__(self, dataset: Dataset, config: MPConfig,
                 patches: list[Minipatch], models: list[FittedModel],
                 cache: np.ndarray, obs_mask: np.ndarray, feat_mask: np.ndarray):
        self.dataset = dataset
        self.config = config
        self.patches = patches
        self.models = models
        self.cache = cache            # (K, N, d)
        self.obs_mask = obs_mask      # (K, N) bool, True iff row in patch
        self.feat_mask = feat_mask    # (K, M) bool, True iff feature in patch
        self._loo = None
        self._loo_counts = None
        self._loco: dict[int, np.ndarray] = {}

    @property
    def K(self) -> int:
        return len(self.patches)

    @property
    def pred_dim(self) -> int:
        return self.cache.shape[2]

    # -- vectorised aggregation kernels ---------------------------------
    # Hole handling: a row whose qualifying set is empty only errors when
    # that row is actually asked for; whole-matrix consumers require full
    # coverage and fail on the first hole.

    def _loo_stats(self):
        if self._loo is None:
            excl = (~self.obs_mask).astype(float)          # (K, N)
            counts = excl.sum(axis=0)                      # (N,)
            numer = np.einsum("kn,knd->nd", excl, self.cache)
            self._loo = numer
            self._loo_counts = counts
        return self._loo, self._loo_counts

    def loo_all(self) -> np.ndarray:
        """LOO prediction for every training row, shape (N, d)."""
        numer, counts = self._loo_stats()
        bad = np.nonzero(counts == 0)[0]
        if bad.size:
            raise CoverageFailure(int(bad[0]))
        return numer / counts[:, None]

    def _loco_stats(self, j: int):
        if j not in self._loco:
            if not 0 <= j < self.feat_mask.shape[1]:
                raise DimensionMismatch(f"feature index {j} out of range")
            excl = (~self.obs_mask) & (~self.feat_mask[:, j])[:, None]
            excl = excl.astype(float)
            counts = excl.sum(axis=0)
            numer = np.einsum("kn,knd->nd", excl, self.cache)
            self._loco[j] = (numer, counts)
        return self._loco[j]

    def loo_loco_all(self, j: int) -> np.ndarray:
        """LOO prediction with feature j occluded, for every row."""
        numer, counts = self._loco_stats(j)
        bad = np.nonzero(counts == 0)[0]
        if bad.size:
            raise CoverageFailure(int(bad[0]), j)
        return numer / counts[:, None]

    def _loo_new_stats(self, X_new: np.ndarray):
        X_new = np.asarray(X_new, dtype=float)
        if X_new.ndim != 2 or X_new.shape[1] != self.dataset.n_features:
            raise DimensionMismatch(
                f"new points must have {self.dataset.n_features} columns"
            )
        if not np.isfinite(X_new).all():
            raise DimensionMismatch("new points contain non-finite entries")
        T, d = X_new.shape[0], self.pred_dim
        preds = np.empty((self.K, T, d), dtype=float)
        for k, (patch, model) in enumerate(zip(self.patches, self.models)):
            preds[k] = model.predict_batch(X_new[:, patch.features])
        excl = (~self.obs_mask).astype(float)
        counts = excl.sum(axis=0)
        numer = np.einsum("kn,ktd->ntd", excl, preds)
        return numer, counts

    def loo_new_all(self, X_new: np.ndarray) -> np.ndarray:
        """Per-row LOO predictions at new points, shape (N, T, d).

        Entry [i, t] averages models whose patch excludes row i,
        evaluated at X_new[t] restricted to each patch's features.
        """
        numer, counts = self._loo_new_stats(X_new)
        bad = np.nonzero(counts == 0)[0]
        if bad.size:
            raise CoverageFailure(int(bad[0]))
        return numer / counts[:, None, None]

    # -- single-index queries -------------------------------------------

    def loo_prediction(self, i: int) -> np.ndarray:
        self._check_row(i)
        numer, counts = self._loo_stats()
        if counts[i] == 0:
            raise CoverageFailure(i)
        return numer[i] / counts[i]

    def loo_loco_prediction(self, i: int, j: int) -> np.ndarray:
        self._check_row(i)
        numer, counts = self._loco_stats(j)
        if counts[i] == 0:
            raise CoverageFailure(i, j)
        return numer[i] / counts[i]

    def loo_prediction_new(self, i: int, x_new) -> np.ndarray:
        self._check_row(i)
        x_new = np.asarray(x_new, dtype=float)
        if x_new.ndim != 1:
            raise DimensionMismatch("x_new must be a 1-D vector")
        numer, counts = self._loo_new_stats(x_new[None, :])
        if counts[i] == 0:
            raise CoverageFailure(i)
        return numer[i, 0] / counts[i]

    def _check_row(self, i: int) -> None:
        if not 0 <= i < self.dataset.n_rows:
            raise DimensionMismatch(f"row index {i} out of range")


def _fit_range(dataset: Dataset, learner, patches, cache, models, lo, hi):
    X, Y = dataset.X, dataset.Y
    task, d = dataset.task, dataset.pred_dim
    for k in range(lo, hi):
        patch = patches[k]
        model = learner.fit(X[patch.rows][:, patch.features], Y[patch.rows],
                            task, dataset.n_classes)
        models[k] = model
        cache[k] = model.predict_batch(X[:, patch.features])


def train_ensemble(dataset: Dataset, config: MPConfig, threads: int = 1,
                   check_coverage: bool = True,
                   patches: list[Minipatch] | None = None) -> Ensemble:
    """Fit one model per minipatch and cache its predictions everywhere.

    The patch list is generated serially from the seed before any
    parallel work, and each fit is pure, so the result is byte-identical
    for any ``threads``.  ``patches`` overrides the random draw (used by
    the exhaustive-enumeration checks).  With ``check_coverage`` every
    row must be excluded by some patch and every (row, feature) pair
    jointly excluded by some patch, otherwise :class:`CoverageFailure`
    is raised at once instead of surfacing on a later query.
    """
    if patches is None:
        config = config.resolve(dataset.n_rows, dataset.n_features)
        patches = sample_minipatches(dataset.n_rows, dataset.n_features,
                                     config.n, config.m, config.K, config.seed)
    else:
        ns = {len(p.rows) for p in patches}
        ms = {len(p.features) for p in patches}
        if len(ns) != 1 or len(ms) != 1:
            raise InvalidSize("all patches must share the same (n, m)")
        config = replace(config, n=ns.pop(), m=ms.pop(), K=len(patches))
        config.validate(dataset.n_rows, dataset.n_features)

    N, M = dataset.n_rows, dataset.n_features
    K, d = len(patches), dataset.pred_dim
    obs_mask = np.zeros((K, N), dtype=bool)
    feat_mask = np.zeros((K, M), dtype=bool)
    for k, patch in enumerate(patches):
        obs_mask[k, patch.rows] = True
        feat_mask[k, patch.features] = True

    if check_coverage:
        row_excl = ~obs_mask
        uncovered = np.nonzero(~row_excl.any(axis=0))[0]
        if uncovered.size:
            raise CoverageFailure(int(uncovered[0]))
        # joint (row, feature) exclusion counts via one matmul
        counts = row_excl.T.astype(float) @ (~feat_mask).astype(float)
        holes = np.argwhere(counts == 0)
        if holes.size:
            i, j = holes[0]
            raise CoverageFailure(int(i), int(j))

    learner = config.learner if config.learner is not None else RidgeLearner()
    cache = np.empty((K, N, d), dtype=float)
    models: list[FittedModel | None] = [None] * K

    threads = max(1, int(threads))
    if threads == 1 or K < 2 * threads:
        _fit_range(dataset, learner, patches, cache, models, 0, K)
    else:
        bounds = np.linspace(0, K, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_fit_range, dataset, learner, patches, cache,
                            models, int(bounds[t]), int(bounds[t + 1]))
                for t in range(threads)
            ]
            for fut in futures:
                fut.result()

    return Ensemble(dataset, config, patches, models, cache, obs_mask, feat_mask)


# -- snapshot --------------------------------------------------------------
# Layout (version 1, not stable across package versions): one .npz holding
# the dataset arrays, patch index matrices, masks, cache, a JSON header
# with the config echo, and per-model parameter payloads.


def _model_to_obj(model: FittedModel):
    if isinstance(model, LinearModel):
        return {"kind": "linear", "coef": model.coef.tolist(),
                "intercept": model.intercept.tolist(), "task": model.task.value}
    if isinstance(model, ConstantModel):
        return {"kind": "constant", "value": model.value.tolist(),
                "n_slots": model.n_slots}
    if isinstance(model, TreeModel):
        def walk(node):
            if node.feature < 0:
                return {"value": list(map(float, node.value))}
            return {"feature": node.feature, "threshold": node.threshold,
                    "left": walk(node.left), "right": walk(node.right)}
        return {"kind": "tree", "root": walk(model.root),
                "n_slots": model.n_slots, "d": model.d}
    raise TypeError(f"cannot snapshot model type {type(model).__name__}")


def _model_from_obj(obj) -> FittedModel:
    kind = obj["kind"]
    if kind == "linear":
        return LinearModel(coef=np.array(obj["coef"], dtype=float),
                           intercept=np.array(obj["intercept"], dtype=float),
                           task=Task(obj["task"]))
    if kind == "constant":
        return ConstantModel(value=np.array(obj["value"], dtype=float),
                             n_slots=obj["n_slots"])
    if kind == "tree":
        def walk(node):
            if "value" in node:
                return _Node(value=np.array(node["value"], dtype=float))
            return _Node(feature=node["feature"], threshold=node["threshold"],
                         left=walk(node["left"]), right=walk(node["right"]))
        return TreeModel(root=walk(obj["root"]), n_slots=obj["n_slots"], d=obj["d"])
    raise TypeError(f"unknown model kind {kind!r}")


def save_ensemble(ens: Ensemble, path) -> None:
    header = {
        "version": 1,
        "task": ens.dataset.task.value,
        "n_classes": ens.dataset.n_classes,
        "feature_names": list(ens.dataset.feature_names or []),
        "label_names": list(ens.dataset.label_names or []),
        "config": ens.config.settings_dict(),
        "models": [_model_to_obj(m) for m in ens.models],
    }
    rows = np.stack([p.rows for p in ens.patches])
    feats = np.stack([p.features for p in ens.patches])
    np.savez_compressed(
        path, header=np.frombuffer(json.dumps(header).encode("utf8"), dtype=np.uint8),
        X=ens.dataset.X, Y=ens.dataset.Y, rows=rows, feats=feats,
        cache=ens.cache, obs_mask=ens.obs_mask, feat_mask=ens.feat_mask,
    )


def load_ensemble(path) -> Ensemble:
    with np.load(path) as zf:
        header = json.loads(bytes(zf["header"]).decode("utf8"))
        if header.get("version") != 1:
            raise InvalidSpec(f"unsupported snapshot version {header.get('version')}")
        task = Task(header["task"])
        dataset = Dataset(
            X=zf["X"], Y=zf["Y"], task=task, n_classes=header["n_classes"],
            feature_names=tuple(header["feature_names"]) or None,
            label_names=tuple(header["label_names"]) or None,
        )
        cfg_echo = header["config"]
        config = MPConfig(n=cfg_echo["n"], m=cfg_echo["m"], K=cfg_echo["K"],
                          seed=cfg_echo["seed"], alpha=cfg_echo["alpha"],
                          buffer_c=cfg_echo["buffer_c"],
                          use_buffer=cfg_echo["use_buffer"])
        patches = [Minipatch(rows=r, features=f)
                   for r, f in zip(zf["rows"], zf["feats"])]
        models = [_model_from_obj(o) for o in header["models"]]
        return Ensemble(dataset, config, patches, models,
                        zf["cache"].copy(), zf["obs_mask"].copy(),
                        zf["feat_mask"].copy())
