import numpy as np
import pytest

from multires.backend import BackendConfig
from multires.cache import FeatureCache
from multires.model import model_params
from multires.stft import ResolutionSpec
from multires.trainer import (
    OptimizerState,
    TrainConfig,
    TrainingDivergedError,
    adam_step,
    cross_entropy,
    cross_entropy_batch,
    init_optimizer,
    lr_at,
    score_cache,
    train,
)

from oracles import adam_trace, central_difference

RES = (ResolutionSpec(64, 16), ResolutionSpec(128, 32))
SLIM = BackendConfig(stem_channels=4, stages=1, blocks_per_stage=1, se_reduction=2)


def _caches(n_train=16, n_dev=8, w=6, h=5, seed=0):
    """Separable toy task: bona fide stacks sit above zero, spoofs below."""
    rng = np.random.default_rng(seed)

    def build(n, prefix):
        labels = (np.arange(n) % 2).astype(np.uint8)
        offset = np.where(labels == 1, 0.5, -0.5)[:, None, None, None]
        stacks = (offset + 0.1 * rng.standard_normal((n, 2, w, h))).astype(np.float32)
        ids = tuple(f"{prefix}{i:04d}" for i in range(n))
        return FeatureCache(RES, stacks, ids, labels)

    return build(n_train, "t"), build(n_dev, "d")


def test_cross_entropy_hand_values():
    loss, grad = cross_entropy(np.array([0.0, 0.0]), 1)
    assert loss == pytest.approx(np.log(2.0))
    np.testing.assert_allclose(grad, [0.5, -0.5], atol=1e-15)


def test_cross_entropy_stable_at_extreme_logits():
    loss, grad = cross_entropy(np.array([1000.0, -1000.0]), 0)
    assert loss == 0.0
    np.testing.assert_allclose(grad, [0.0, 0.0], atol=1e-15)
    loss, _ = cross_entropy(np.array([1000.0, -1000.0]), 1)
    assert loss == pytest.approx(2000.0)


def test_cross_entropy_gradient_finite_differences():
    rng = np.random.default_rng(0)
    z = rng.standard_normal(2)

    def loss():
        return cross_entropy(z, 1)[0]

    _, grad = cross_entropy(z, 1)
    num = central_difference(loss, [z])[0]
    np.testing.assert_allclose(grad, num, rtol=1e-7, atol=1e-9)


def test_cross_entropy_batch_averages_singles():
    rng = np.random.default_rng(1)
    logits = rng.standard_normal((5, 2))
    labels = np.array([0, 1, 1, 0, 1])
    loss, grad = cross_entropy_batch(logits.copy(), labels)
    singles = [cross_entropy(logits[i], labels[i]) for i in range(5)]
    assert loss == pytest.approx(np.mean([s[0] for s in singles]), abs=1e-12)
    np.testing.assert_allclose(grad, np.stack([s[1] for s in singles]) / 5, atol=1e-12)


def test_lr_schedule_anchor_points():
    assert lr_at(1000, 1e-3, 1000) == pytest.approx(1e-3, abs=0)
    assert lr_at(250, 1e-3, 1000) == pytest.approx(0.25e-3)
    assert lr_at(4000, 1e-3, 1000) == pytest.approx(0.5e-3)
    assert lr_at(1, 1e-3, 1000) == pytest.approx(1e-6)
    with pytest.raises(ValueError):
        lr_at(0)


def test_lr_schedule_peaks_at_warmup():
    values = [lr_at(s, 1.0, 50) for s in range(1, 500)]
    assert max(values) == pytest.approx(1.0)
    assert values.index(max(values)) == 49


def test_adam_matches_scalar_oracle():
    for wd in (0.0, 0.01):
        p = [np.array([0.7])]
        state = init_optimizer(p, peak_lr=0.1, warmup_steps=4, weight_decay=wd)
        grads = [0.3, -0.2, 0.05, 0.4]
        want = adam_trace(0.7, grads, 0.1, 4, weight_decay=wd)
        for g, expect in zip(grads, want):
            adam_step(p, [np.array([g])], state)
            assert p[0][0] == pytest.approx(expect, abs=1e-15)
        assert state.step == 4


def test_adam_updates_in_place_per_tensor():
    a, b = np.ones(3), np.full(2, 2.0)
    params = [a, b]
    state = init_optimizer(params, peak_lr=0.1, warmup_steps=1, weight_decay=0.0)
    adam_step(params, [np.full(3, 0.5), np.zeros(2)], state)
    assert params[0] is a and params[1] is b
    assert (a != 1.0).all()
    np.testing.assert_array_equal(b, 2.0)  # zero grad, zero decay: no movement


def test_adam_shape_mismatch_rejected():
    p = [np.zeros(3)]
    state = init_optimizer(p)
    with pytest.raises(ValueError, match="shape"):
        adam_step(p, [np.zeros(4)], state)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(dtype="float16")
    assert TrainConfig(dtype="float32").np_dtype == np.float32


def test_train_learns_separable_task():
    train_cache, dev_cache = _caches()
    cfg = TrainConfig(epochs=3, batch_size=4, seed=0, peak_lr=3e-3, warmup_steps=8, dtype="float64")
    result = train(train_cache, dev_cache, cfg, SLIM)
    losses = [h[1] for h in result.history]
    assert losses[-1] < losses[0]
    assert result.best_dev_eer <= 0.25
    assert result.log_lines[-1] == f"retained_epoch\t{result.best_epoch}"
    for line, (epoch, loss, eer) in zip(result.log_lines, result.history):
        assert line == f"{epoch}\t{loss:.6f}\t{eer:.6f}"


def test_train_is_deterministic():
    cfg = TrainConfig(epochs=2, batch_size=4, seed=7, peak_lr=1e-3, warmup_steps=8)
    a = train(*_caches(), cfg, SLIM)
    b = train(*_caches(), cfg, SLIM)
    assert a.log_lines == b.log_lines
    for pa, pb in zip(model_params(a.model), model_params(b.model)):
        np.testing.assert_array_equal(pa, pb)


def test_train_seed_changes_run():
    a = train(*_caches(), TrainConfig(epochs=1, batch_size=4, seed=0, warmup_steps=8), SLIM)
    b = train(*_caches(), TrainConfig(epochs=1, batch_size=4, seed=1, warmup_steps=8), SLIM)
    assert a.log_lines != b.log_lines


def test_train_retains_earliest_best_epoch():
    # dev is perfectly separable from epoch 1, so every epoch scores EER 0
    # and the strict < rule must keep epoch 1
    train_cache, dev_cache = _caches(n_train=12, n_dev=6)
    cfg = TrainConfig(epochs=3, batch_size=4, seed=3, peak_lr=3e-3, warmup_steps=8)
    result = train(train_cache, dev_cache, cfg, SLIM)
    eers = [h[2] for h in result.history]
    assert result.best_epoch == 1 + eers.index(min(eers))


def test_train_reload_hook_drives_epochs_after_first():
    train_cache, dev_cache = _caches()
    calls = []

    def reload(epoch):
        calls.append(epoch)
        return train_cache.stacks

    cfg = TrainConfig(epochs=3, batch_size=4, seed=0, warmup_steps=8)
    train(train_cache, dev_cache, cfg, SLIM, reload_train=reload)
    assert calls == [2, 3]


def test_train_reload_shape_change_rejected():
    train_cache, dev_cache = _caches()

    def reload(epoch):
        return train_cache.stacks[:, :, :3, :]

    cfg = TrainConfig(epochs=2, batch_size=4, seed=0, warmup_steps=8)
    with pytest.raises(ValueError, match="shape"):
        train(train_cache, dev_cache, cfg, SLIM, reload_train=reload)


def test_train_aborts_on_divergence():
    # a huge step in float32 overflows the conv activations to inf, and the
    # next batch's loss must abort with the failing step named
    train_cache, dev_cache = _caches()
    cfg = TrainConfig(epochs=1, batch_size=4, seed=0, peak_lr=1e20, warmup_steps=1, dtype="float32")
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(
        TrainingDivergedError, match="optimizer step"
    ):
        train(train_cache, dev_cache, cfg, SLIM)


def test_score_cache_convention_and_chunking():
    train_cache, _ = _caches(n_train=10)
    cfg = TrainConfig(epochs=1, batch_size=4, seed=0, warmup_steps=8)
    result = train(train_cache, _caches()[1], cfg, SLIM)
    full = score_cache(result.model, train_cache, batch_size=64)
    chunked = score_cache(result.model, train_cache, batch_size=3)
    np.testing.assert_array_equal(full, chunked)
