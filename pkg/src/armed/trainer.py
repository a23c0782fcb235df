"""Alternating adversarial training, early stopping and cross-validation."""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigError, InputError, NumericError
from .metrics import accuracy, feature_importance, youden_metrics
from .model import ArmedModel
from .numcore import Adam, make_rng
from .simgen import cluster_holdout, fraction_split, stratified_folds
from .zpredictor import train_zpredictor

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 50
    lr: float = 1e-3
    batch_size: int = 32
    patience: int = 10
    adversary_steps_per_batch: int = 1
    seed: int = 0
    lambda_g: float = 1.0
    lambda_K: float = 1e-3
    lambda_F: float = 0.5
    sigma_p: float = 1.0
    re_mode: str = "nonlinear"
    val_fraction: float = 0.1

    def __post_init__(self):
        for name in ("epochs", "batch_size", "adversary_steps_per_batch"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.patience < 0:
            raise ConfigError("patience must be nonnegative")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if min(self.lambda_g, self.lambda_K, self.lambda_F) < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.sigma_p <= 0:
            raise ConfigError("sigma_p must be positive")
        if not 0 < self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in (0, 1)")


@dataclass
class FoldReport:
    fold: int
    variant: str
    metrics: dict
    feature_importance: np.ndarray
    history: list = field(default_factory=list)
    failed: str | None = None
    model: object = field(default=None, repr=False)


def build_model(variant, n_features, n_clusters, config, seed=None):
    return ArmedModel(n_features, n_clusters, variant, config.re_mode,
                      config.lambda_g, config.lambda_K, config.lambda_F, config.sigma_p,
                      config.seed if seed is None else seed)


def make_optimizers(model, lr):
    return {g: Adam(p, lr=lr) for g, p in model.param_groups().items()}


def train_batch(model, X, y, Z, optimizers, rng, n_batches=1, adversary_steps=1,
                record_adversary=False):
    """One alternating update on a mini-batch.

    Phase A trains the adversary on the frozen main model's hidden activations;
    phase B updates the fixed net and random-effects head once against the
    frozen adversary, with fresh random-effect draws.
    """
    out = {}
    if model.adversary is not None:
        fo = model.fixed_forward(model.fixed_input(X, Z))
        params = model.adversary.params()
        for step in range(adversary_steps):
            loss, grads = model.adversary_objective(fo.hidden, Z)
            if step == 0:
                out["adv_cce_before"] = loss
            optimizers["adversary"].update(params, grads)
        if record_adversary:
            out["adv_cce_after"] = model.adversary_objective(fo.hidden, Z, with_grads=False)[0]
    eps = model.re_head.draw_eps(rng) if model.re_head is not None else None
    obj = model.main_objective(X, y, Z, eps=eps, kl_scale=1.0 / n_batches)
    if not np.isfinite(obj.total):
        raise NumericError("total")
    for group, grads in obj.grads.items():
        optimizers[group].update(model.param_groups()[group], grads)
    out.update(obj.components)
    out["total"] = obj.total
    return out


def _epoch_record(epoch, sums, count, model, val):
    rec = {"epoch": epoch}
    rec.update({f"train_{k}": v / count for k, v in sums.items()})
    obj = model.main_objective(val.X, val.y, val.Z, with_grads=False)
    rec.update({f"val_{k}": v for k, v in obj.components.items()})
    rec["val_criterion"] = model.criterion(val.X, val.y, val.Z)
    return rec


def fit(model, train, val, config, rng=None, record_adversary=False):
    """Train with early stopping on the validation criterion.

    The criterion is the main loss without the adversarial term, evaluated with
    posterior-mean random effects.  Parameters from the best epoch are restored.
    Returns the per-epoch history; ``model.best_epoch`` records the chosen epoch.
    """
    if train.n == 0 or val.n == 0:
        raise InputError("train and validation sets must be nonempty")
    rng = make_rng(config.seed, 2) if rng is None else rng
    optimizers = make_optimizers(model, config.lr)
    X, y, Z = train.X, train.y, train.Z
    n = train.n
    bs = config.batch_size
    n_batches = -(-n // bs)
    history = []
    best, best_state, stale = np.inf, None, 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        sums, count = {}, 0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            comps = train_batch(model, X[idx], y[idx], Z[idx], optimizers, rng, n_batches,
                                config.adversary_steps_per_batch, record_adversary)
            for k, v in comps.items():
                sums[k] = sums.get(k, 0.0) + v * len(idx)
            count += len(idx)
        rec = _epoch_record(epoch, sums, count, model, val)
        history.append(rec)
        if rec["val_criterion"] < best:
            best, stale = rec["val_criterion"], 0
            best_state = model.get_state()
            model.best_epoch = epoch
        else:
            stale += 1
            if stale > config.patience:
                break
    model.set_state(best_state)
    return history


# -- evaluation --------------------------------------------------------------

def evaluate(scores, labels):
    """Accuracy at 0.5 plus the Youden-point operating metrics."""
    om = youden_metrics(scores, labels)
    return {
        "accuracy": accuracy(scores, labels),
        "auroc": om.auroc,
        "balanced_accuracy": om.balanced_accuracy,
        "sensitivity": om.sensitivity,
        "specificity": om.specificity,
        "threshold": om.youden_threshold,
    }


def _restrict_clusters(train, others):
    """Drop Z columns of clusters absent from ``train``; remap ids everywhere.

    Samples of a dropped cluster get id -1, which :func:`_z_matrix` turns into
    uniform weights over the kept clusters.
    """
    present = np.unique(train.cluster_id)
    if len(present) == train.n_clusters:
        return train, others
    missing = sorted(set(range(train.n_clusters)) - set(present.tolist()))
    warnings.warn(f"clusters {missing} are absent from the training folds; excluding them from Z")
    mapping = np.full(train.n_clusters, -1)
    mapping[present] = np.arange(len(present))

    def remap(ds):
        return replace(ds, cluster_id=mapping[ds.cluster_id], n_clusters=len(present))

    return remap(train), [remap(d) for d in others]


def _z_matrix(ds):
    Z = np.zeros((ds.n, ds.n_clusters))
    known = ds.cluster_id >= 0
    Z[np.flatnonzero(known), ds.cluster_id[known]] = 1.0
    Z[~known] = 1.0 / ds.n_clusters
    return Z


def _run_fold(args):
    dataset, fold_ids, fold, variants, config, random_z, keep_models = args
    test_idx = np.flatnonzero(fold_ids == fold)
    train_all, (test,) = _restrict_clusters(dataset.subset(np.flatnonzero(fold_ids != fold)),
                                            [dataset.subset(test_idx)])
    fit_idx, val_idx = fraction_split(train_all, (1 - config.val_fraction, config.val_fraction),
                                      make_rng(config.seed, 2, fold))
    train, val = train_all.subset(fit_idx), train_all.subset(val_idx)
    out = {}
    for variant in variants:
        model = build_model(variant, dataset.p, train.n_clusters, config, seed=config.seed * 1000 + fold)
        try:
            history = fit(model, train, val, config, make_rng(config.seed, 4, fold))
        except NumericError as exc:
            log.warning("fold %d variant %s failed: %s", fold, variant, exc)
            out[variant] = FoldReport(fold, variant, {}, np.full(dataset.p, np.nan), [], str(exc))
            continue
        Zt = _z_matrix(test)
        scores = model.predict(test.X, "true_Z", Zt)
        importance = feature_importance(model, test.X, Zt if model.uses_z_input else None)
        out[variant] = FoldReport(fold, variant, evaluate(scores, test.y), importance, history,
                                  model=model if keep_models else None)
        if random_z and model.re_head is not None:
            rs = model.predict(test.X, "random_Z", rng=make_rng(config.seed, 5, fold))
            label = f"{variant}_random_z"
            out[label] = FoldReport(fold, label, evaluate(rs, test.y), importance, history)
    return out


def crossvalidate(dataset, k, config, variants, random_z=False, n_jobs=1, keep_models=False):
    """K-fold cross-validation of each variant on one shared fold assignment.

    10% of each training split (stratified by cluster and label) is held out
    for early stopping.  Returns ``{variant: [FoldReport, ...]}``; with
    ``random_z`` the random-effects variants also get a ``<variant>_random_z``
    entry evaluated with uniformly random one-hot cluster memberships.
    """
    if k < 2:
        raise InputError("k must be at least 2")
    if not variants:
        raise InputError("no variants requested")
    fold_ids = stratified_folds(dataset, k, make_rng(config.seed, 1))
    jobs = [(dataset, fold_ids, f, list(variants), config, random_z, keep_models)
            for f in range(k)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            per_fold = list(pool.map(_run_fold, jobs))
    else:
        per_fold = [_run_fold(j) for j in jobs]
    reports = {}
    for fold_result in per_fold:
        for label, rep in fold_result.items():
            reports.setdefault(label, []).append(rep)
    return reports


def unseen_cluster_eval(dataset, holdout_ids, config, variant="armed"):
    """Train on seen clusters, then score held-out clusters three ways.

    The Z-predictor is fit on the seen-cluster features after the main model.
    Returns ``{z_source: metrics}`` for ``inferred_Z``, ``random_Z`` and
    ``fixed_only``.
    """
    holdout_ids = sorted(set(int(i) for i in holdout_ids))
    if set(holdout_ids) >= set(range(dataset.n_clusters)):
        raise InputError("cannot hold out every cluster")
    seen_idx, unseen_idx = cluster_holdout(dataset, holdout_ids)
    kept = [c for c in range(dataset.n_clusters) if c not in holdout_ids]
    mapping = np.full(dataset.n_clusters, -1)
    mapping[kept] = np.arange(len(kept))
    seen = dataset.subset(seen_idx)
    seen = replace(seen, cluster_id=mapping[seen.cluster_id], n_clusters=len(kept))
    unseen = dataset.subset(unseen_idx)

    fit_idx, val_idx = fraction_split(seen, (1 - config.val_fraction, config.val_fraction),
                                      make_rng(config.seed, 2))
    train, val = seen.subset(fit_idx), seen.subset(val_idx)
    model = build_model(variant, dataset.p, len(kept), config)
    history = fit(model, train, val, config, make_rng(config.seed, 4))
    model.zpredictor = train_zpredictor(train, val, config)

    results = {}
    for source in ("inferred_Z", "random_Z", "fixed_only"):
        scores = model.predict(unseen.X, source, rng=make_rng(config.seed, 5))
        results[source] = evaluate(scores, unseen.y)
    return {"metrics": results, "model": model, "history": history,
            "holdout": holdout_ids, "train_clusters": kept}


def config_dict(config):
    return asdict(config)
