"""Clustered spiral simulations, confounded probe features and data splits."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError
from .numcore import make_rng

SIMULATIONS = {
    "sim1": dict(radius_mean=1.0, radius_sd=0.3, probes=False),
    "sim2": dict(radius_mean=0.0, radius_sd=1.0, probes=False),
    "sim3": dict(radius_mean=1.0, radius_sd=0.3, probes=True),
}

RHO_MEAN, RHO_SD = 0.5, 0.1
RHO_CLAMP = (0.05, 0.95)
SPIRAL_PROBE_SD = 0.2
TABULAR_PROBE_SD = 0.05
RECIPROCAL_FLOOR = 0.01


@dataclass
class SpiralConfig:
    n: int = 10_000
    clusters: int = 10
    radius_mean: float = 1.0
    radius_sd: float = 0.3
    noise_sd: float = 0.1
    probes: bool = False
    rho_sd: float = RHO_SD
    probe_sd: float = SPIRAL_PROBE_SD
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.clusters < 1:
            raise InputError("n and clusters must be at least 1")
        if min(self.noise_sd, self.rho_sd, self.probe_sd) < 0:
            raise InputError("noise_sd, rho_sd and probe_sd must be nonnegative")

    @classmethod
    def for_simulation(cls, name, **overrides):
        if name not in SIMULATIONS:
            raise InputError(f"unknown simulation {name!r}")
        return cls(**{**SIMULATIONS[name], **overrides})


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    cluster_id: np.ndarray
    n_clusters: int
    probe_columns: tuple = ()
    truth: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.cluster_id = np.asarray(self.cluster_id, dtype=np.int64)
        if self.X.ndim != 2 or not (len(self.y) == len(self.cluster_id) == self.X.shape[0]):
            raise InputError("X, y and cluster_id lengths disagree")
        if not set(self.probe_columns) <= set(range(self.X.shape[1])):
            raise InputError("probe column outside X")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def Z(self):
        return one_hot(self.cluster_id, self.n_clusters)

    def subset(self, idx):
        idx = np.asarray(idx)
        return replace(self, X=self.X[idx], y=self.y[idx], cluster_id=self.cluster_id[idx])


def one_hot(cluster_id, c):
    ids = np.asarray(cluster_id)
    if ids.size and (ids.min() < 0 or ids.max() >= c):
        raise InputError(f"cluster id outside [0, {c})")
    Z = np.zeros((ids.shape[0], c))
    Z[np.arange(ids.shape[0]), ids] = 1.0
    return Z


def cluster_sizes(n, c):
    """Equal shares; the first ``n % c`` clusters take one extra sample each."""
    sizes = np.full(c, n // c)
    sizes[: n % c] += 1
    return sizes


def spiral_coordinates(radius, t, y, noise=None):
    """Two interleaved spirals half a turn apart; ``y`` picks the phase (0 or pi)."""
    phi = np.where(np.asarray(y) > 0, np.pi, 0.0)
    scale = radius * t / (2 * np.pi)
    x1 = -scale * np.cos(t - phi)
    x2 = scale * np.sin(t - phi)
    X = np.column_stack([x1, x2])
    if noise is not None:
        X = X + noise
    return X


def _draw_spiral_points(radii, cluster_id, y, noise_sd, rng):
    t = rng.uniform(0.0, 2 * np.pi, size=len(y))
    noise = rng.normal(0.0, noise_sd, size=(len(y), 2)) if noise_sd > 0 else None
    return spiral_coordinates(radii[cluster_id], t, y, noise)


def gen_spiral(config, rng=None):
    """Generate a clustered two-spiral dataset.

    Each cluster ``j`` has radius ``r_j ~ N(radius_mean, radius_sd)``; labels are
    fair coin flips.  With ``config.probes`` two confounded probe columns are
    appended via :func:`add_spiral_probes`.
    """
    rng = make_rng(config.seed) if rng is None else rng
    c = config.clusters
    radii = rng.normal(config.radius_mean, config.radius_sd, size=c)
    cluster_id = np.repeat(np.arange(c), cluster_sizes(config.n, c))
    y = rng.integers(0, 2, size=config.n).astype(float)
    X = _draw_spiral_points(radii, cluster_id, y, config.noise_sd, rng)
    ds = Dataset(X, y, cluster_id, c, (), {"radius": radii},
                 {"seed": config.seed, "noise_sd": config.noise_sd, "source": "spiral"})
    if config.probes:
        ds = add_spiral_probes(ds, rng, config.rho_sd, config.probe_sd)
    return ds


def add_spiral_probes(dataset, rng, rho_sd=RHO_SD, probe_sd=SPIRAL_PROBE_SD):
    """Impose a cluster-specific class balance and append two probes tracking it.

    For each cluster a fraction ``rho_j ~ N(0.5, rho_sd)`` (clamped to
    [0.05, 0.95]) of the samples get ``y = 0``.  Labels are redrawn within the
    cluster and the spiral coordinates regenerated from the stored radii, then
    ``x3, x4 ~ N(rho_j, probe_sd)`` are appended.
    """
    if "radius" not in dataset.truth:
        raise InputError("spiral probes need per-cluster radii in dataset.truth")
    c = dataset.n_clusters
    rho = np.clip(rng.normal(RHO_MEAN, rho_sd, size=c), *RHO_CLAMP)
    cid = dataset.cluster_id
    y = (rng.random(dataset.n) < 1.0 - rho[cid]).astype(float)
    X = _draw_spiral_points(np.asarray(dataset.truth["radius"]), cid, y,
                            dataset.meta.get("noise_sd", 0.1), rng)
    probes = rng.normal(rho[cid][:, None], probe_sd, size=(dataset.n, 2))
    X = np.hstack([X, dataset.X[:, 2:], probes])
    cols = tuple(dataset.probe_columns) + (dataset.p, dataset.p + 1)
    return replace(dataset, X=X, y=y, probe_columns=cols,
                   truth={**dataset.truth, "rho": rho})


def add_tabular_probes(dataset, rng):
    """Append five noisy functions of each cluster's positive-label fraction."""
    c = dataset.n_clusters
    counts = np.bincount(dataset.cluster_id, minlength=c)
    pos = np.bincount(dataset.cluster_id, weights=dataset.y, minlength=c)
    rho = np.divide(pos, counts, out=np.zeros(c), where=counts > 0)
    r = rho[dataset.cluster_id]
    base = np.column_stack([r, r ** 2, 1.0 / np.maximum(r, RECIPROCAL_FLOOR), np.cos(r), np.sin(r)])
    probes = base + rng.normal(0.0, TABULAR_PROBE_SD, size=base.shape)
    start = dataset.p
    return replace(dataset, X=np.hstack([dataset.X, probes]),
                   probe_columns=tuple(dataset.probe_columns) + tuple(range(start, start + 5)),
                   truth={**dataset.truth, "positive_fraction": rho})


# -- splits -----------------------------------------------------------------

def _strata(dataset):
    return dataset.cluster_id * 2 + (dataset.y > 0.5)


def stratified_folds(dataset, k, rng):
    """Fold index per sample, stratified jointly by (cluster, label).

    Within each stratum the samples are shuffled and dealt to folds in turn,
    continuing the rotation across strata so fold sizes differ by at most one.
    """
    if k < 2:
        raise InputError("k must be at least 2")
    strata = _strata(dataset)
    fold = np.empty(dataset.n, dtype=np.int64)
    offset = 0
    for s in np.unique(strata):
        idx = np.flatnonzero(strata == s)
        idx = idx[rng.permutation(len(idx))]
        fold[idx] = (np.arange(len(idx)) + offset) % k
        offset = (offset + len(idx)) % k
    return fold


def cluster_holdout(dataset, holdout_ids):
    """Return (seen indices, unseen indices)."""
    held = np.isin(dataset.cluster_id, list(holdout_ids))
    seen, unseen = np.flatnonzero(~held), np.flatnonzero(held)
    if len(seen) == 0 or len(unseen) == 0:
        raise InputError("cluster holdout produced an empty partition")
    return seen, unseen


def fraction_split(dataset, fractions, rng):
    """Stratified split into len(fractions) disjoint, exhaustive parts."""
    fractions = np.asarray(fractions, dtype=float)
    if np.any(fractions <= 0):
        raise InputError("split fractions must be positive")
    fractions = fractions / fractions.sum()
    # Spread each stratum evenly over [0, 1), then cut the pooled order.
    strata = _strata(dataset)
    pos = np.empty(dataset.n)
    for s in np.unique(strata):
        idx = np.flatnonzero(strata == s)
        pos[idx[rng.permutation(len(idx))]] = (np.arange(len(idx)) + rng.random(len(idx))) / len(idx)
    order = np.argsort(pos, kind="stable")
    edges = np.round(np.cumsum(fractions) * dataset.n).astype(int)
    parts = np.split(order, edges[:-1])
    if any(len(p) == 0 for p in parts):
        raise InputError("split produced an empty partition")
    return [np.sort(p) for p in parts]


@dataclass(frozen=True)
class StratifiedKFold:
    k: int
    seed: int = 0


@dataclass(frozen=True)
class ClusterHoldout:
    ids: tuple


@dataclass(frozen=True)
class Fraction:
    train: float
    val: float
    test: float
    seed: int = 0


def split(dataset, scheme):
    """Partition sample indices according to ``scheme``.

    * :class:`StratifiedKFold` -> list of k test-index arrays
    * :class:`ClusterHoldout` -> (seen, unseen)
    * :class:`Fraction` -> (train, val, test)
    """
    if isinstance(scheme, StratifiedKFold):
        fold = stratified_folds(dataset, scheme.k, make_rng(scheme.seed))
        parts = [np.flatnonzero(fold == i) for i in range(scheme.k)]
        if any(len(p) == 0 for p in parts):
            raise InputError("a fold is empty")
        return parts
    if isinstance(scheme, ClusterHoldout):
        return cluster_holdout(dataset, scheme.ids)
    if isinstance(scheme, Fraction):
        return fraction_split(dataset, (scheme.train, scheme.val, scheme.test), make_rng(scheme.seed))
    raise InputError(f"unknown split scheme {scheme!r}")


# -- CSV round trip ---------------------------------------------------------

def _meta_path(path):
    return str(path) + ".meta.json"


def _jsonable(v):
    return v.tolist() if isinstance(v, np.ndarray) else v


def save_dataset(dataset, path):
    """Write ``x1..xp,y,cluster`` CSV plus a ``<path>.meta.json`` sidecar."""
    tmp = str(path) + ".tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(dataset.p)] + ["y", "cluster"])
        for row, yi, ci in zip(dataset.X.tolist(), dataset.y.tolist(), dataset.cluster_id.tolist()):
            w.writerow([repr(v) for v in row] + [int(yi), ci])
    os.replace(tmp, path)
    meta = {
        "n_clusters": dataset.n_clusters,
        "probe_columns": list(dataset.probe_columns),
        "truth": {k: _jsonable(v) for k, v in dataset.truth.items()},
        "meta": dataset.meta,
    }
    with open(_meta_path(path) + ".tmp", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    os.replace(_meta_path(path) + ".tmp", _meta_path(path))


def load_dataset(path):
    """Read a CSV written by :func:`save_dataset` (sidecar optional)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path} is empty")
    header = rows[0]
    if header[-2:] != ["y", "cluster"]:
        raise InputError(f"{path}: last two columns must be 'y' and 'cluster'")
    body = np.array(rows[1:], dtype=float)
    X, y, cid = body[:, :-2], body[:, -2], body[:, -1].astype(np.int64)
    meta = {}
    if os.path.exists(_meta_path(path)):
        with open(_meta_path(path)) as fh:
            meta = json.load(fh)
    n_clusters = int(meta.get("n_clusters", cid.max() + 1))
    truth = {k: np.asarray(v) for k, v in meta.get("truth", {}).items()}
    return Dataset(X, y, cid, n_clusters, tuple(meta.get("probe_columns", ())), truth,
                   meta.get("meta", {}))
