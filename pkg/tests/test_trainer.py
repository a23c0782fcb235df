import warnings

import numpy as np
import pytest

from armed.errors import ConfigError, InputError
from armed.model import ArmedModel
from armed.numcore import make_rng
from armed.simgen import Dataset, SpiralConfig, fraction_split, gen_spiral, stratified_folds
from armed.trainer import (
    TrainConfig,
    build_model,
    crossvalidate,
    evaluate,
    fit,
    make_optimizers,
    train_batch,
    unseen_cluster_eval,
)


@pytest.fixture(scope="module")
def small():
    ds = gen_spiral(SpiralConfig(n=1200, clusters=4, seed=2))
    tr, va = fraction_split(ds, (0.8, 0.2), make_rng(0))
    return ds.subset(tr), ds.subset(va)


def _snapshot(arrays):
    return {k: v.copy() for k, v in arrays.items()}


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(lambda_g=-1)
    with pytest.raises(ConfigError):
        TrainConfig(sigma_p=0)
    with pytest.raises(ConfigError):
        TrainConfig(lr=0)


def test_phases_touch_only_their_own_parameters(small):
    train, _ = small
    model = build_model("armed", 2, 4, TrainConfig())
    opts = make_optimizers(model, 1e-2)
    X, y, Z = train.X[:32], train.y[:32], train.Z[:32]
    groups = model.param_groups()
    before = {g: _snapshot(p) for g, p in groups.items()}

    # Phase A alone: run the adversary step the way train_batch does.
    fo = model.fixed_forward(X)
    _, grads = model.adversary_objective(fo.hidden, Z)
    opts["adversary"].update(groups["adversary"], grads)
    for g in ("fixed", "re_head"):
        for k, v in groups[g].items():
            assert v.tobytes() == before[g][k].tobytes()
    assert any(v.tobytes() != before["adversary"][k].tobytes() for k, v in groups["adversary"].items())

    # Phase B alone: the main update must leave the adversary untouched.
    adv = _snapshot(groups["adversary"])
    obj = model.main_objective(X, y, Z, eps=model.re_head.draw_eps(make_rng(0)))
    assert set(obj.grads) == {"fixed", "re_head"}
    for g, gr in obj.grads.items():
        opts[g].update(groups[g], gr)
    for k, v in groups["adversary"].items():
        assert v.tobytes() == adv[k].tobytes()


def test_conventional_skips_adversary_phase(small):
    train, _ = small
    model = build_model("conventional", 2, 4, TrainConfig())
    out = train_batch(model, train.X[:32], train.y[:32], train.Z[:32],
                      make_optimizers(model, 1e-3), make_rng(0))
    assert "adv_cce_before" not in out and "cce" not in out
    assert "adversary" not in make_optimizers(model, 1e-3)


def test_adversary_step_rarely_increases_batch_cce(small):
    train, val = small
    cfg = TrainConfig(epochs=5, patience=5, seed=1)
    model = build_model("armed", 2, 4, cfg)
    opts = make_optimizers(model, cfg.lr)
    rng = make_rng(3)
    improved = total = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(train.n)
        for s in range(0, train.n, 32):
            idx = order[s:s + 32]
            out = train_batch(model, train.X[idx], train.y[idx], train.Z[idx], opts, rng,
                              n_batches=30, record_adversary=True)
            improved += out["adv_cce_after"] <= out["adv_cce_before"]
            total += 1
    assert improved / total >= 0.95


def test_patience_zero_single_epoch(small):
    train, val = small
    model = build_model("armed", 2, 4, TrainConfig())
    history = fit(model, train, val, TrainConfig(epochs=1, patience=0))
    assert len(history) == 1
    assert model.best_epoch == 0
    expected = {"epoch", "train_bce_mixed", "train_bce_fixed", "train_kl", "train_cce",
                "val_bce_mixed", "val_criterion"}
    assert expected <= set(history[0])


def test_identical_seeds_identical_histories(small):
    train, val = small
    cfg = TrainConfig(epochs=3, seed=5)
    runs = []
    for _ in range(2):
        model = build_model("armed", 2, 4, cfg)
        runs.append((fit(model, train, val, cfg), model.get_state()))
    assert runs[0][0] == runs[1][0]
    for group in runs[0][1]:
        for k, v in runs[0][1][group].items():
            assert v.tobytes() == runs[1][1][group][k].tobytes()


def test_early_stopping_restores_best_epoch(small):
    train, val = small
    cfg = TrainConfig(epochs=12, patience=2, lr=0.05, seed=0)
    model = build_model("armed", 2, 4, cfg)
    history = fit(model, train, val, cfg)
    crit = [h["val_criterion"] for h in history]
    assert model.best_epoch == int(np.argmin(crit))
    assert min(crit) == pytest.approx(model.criterion(val.X, val.y, val.Z), rel=1e-12)
    if len(history) < cfg.epochs:
        assert len(history) - 1 - model.best_epoch == cfg.patience + 1


def test_training_lowers_validation_bce():
    ds = gen_spiral(SpiralConfig.for_simulation("sim1", n=3000, seed=0))
    tr, va = fraction_split(ds, (0.9, 0.1), make_rng(0))
    cfg = TrainConfig(epochs=8)
    model = build_model("armed", 2, 10, cfg)
    history = fit(model, ds.subset(tr), ds.subset(va), cfg)
    assert history[model.best_epoch]["val_bce_mixed"] < history[0]["val_bce_mixed"]


def test_empty_partition_is_input_error(small):
    train, _ = small
    empty = train.subset(np.array([], dtype=int))
    with pytest.raises(InputError):
        fit(build_model("armed", 2, 4, TrainConfig()), train, empty, TrainConfig())


def test_evaluate_keys():
    m = evaluate(np.array([0.1, 0.9, 0.6, 0.3]), np.array([0, 1, 1, 0]))
    assert m["accuracy"] == 1.0 and m["auroc"] == 1.0
    assert set(m) == {"accuracy", "auroc", "balanced_accuracy", "sensitivity", "specificity", "threshold"}


def test_crossvalidate_shares_folds_and_is_reproducible():
    ds = gen_spiral(SpiralConfig(n=600, clusters=3, seed=1))
    cfg = TrainConfig(epochs=2, seed=3)
    a = crossvalidate(ds, 3, cfg, ["armed", "conventional"], random_z=True)
    b = crossvalidate(ds, 3, cfg, ["armed", "conventional"], random_z=True)
    assert set(a) == {"armed", "conventional", "armed_random_z"}
    for v in a:
        assert [r.metrics for r in a[v]] == [r.metrics for r in b[v]]
        assert len(a[v]) == 3
        for r in a[v]:
            assert all(0 <= r.metrics[m] <= 1 for m in ("accuracy", "auroc", "sensitivity"))
            assert r.feature_importance.shape == (2,)


def test_fold_sizes_for_ten_fold():
    ds = gen_spiral(SpiralConfig(n=10_000))
    folds = stratified_folds(ds, 10, make_rng(0, 1))
    sizes = np.bincount(folds)
    assert np.all(np.abs(sizes - 1000) <= 10)


def test_cluster_absent_from_training_warns():
    rng = make_rng(0)
    n = 300
    # cluster 2 has a single sample, so one training split never sees it
    cid = np.r_[np.zeros(150, int), np.ones(149, int), [2]]
    y = np.r_[rng.integers(0, 2, 299), 1].astype(float)
    ds = Dataset(rng.normal(size=(n, 2)), y, cid, 3)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        reports = crossvalidate(ds, 2, TrainConfig(epochs=1), ["armed"])
    assert any("absent" in str(w.message) for w in caught)
    assert len(reports["armed"]) == 2


def test_unseen_cluster_eval_reports_three_sources():
    ds = gen_spiral(SpiralConfig(n=1000, clusters=5, seed=4))
    cfg = TrainConfig(epochs=2)
    res = unseen_cluster_eval(ds, [3, 4], cfg)
    assert set(res["metrics"]) == {"inferred_Z", "random_Z", "fixed_only"}
    assert res["train_clusters"] == [0, 1, 2]
    assert res["model"].n_clusters == 3
    with pytest.raises(InputError):
        unseen_cluster_eval(ds, range(5), cfg)


def test_inferred_and_fixed_differ_only_through_random_effects():
    ds = gen_spiral(SpiralConfig(n=800, clusters=4, seed=6))
    res = unseen_cluster_eval(ds, [3], TrainConfig(epochs=2))
    model = res["model"]
    X = ds.X[:20]
    for vg in model.re_head.vars.values():
        vg.mu[:] = 0.0
    np.testing.assert_array_equal(model.predict(X, "inferred_Z"), model.predict(X, "fixed_only"))


def test_random_effects_variants_flagged():
    assert ArmedModel(2, 3, "armed").re_head is not None
    assert ArmedModel(2, 3, "cluster_input").re_head is None
