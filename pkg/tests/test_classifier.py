import numpy as np
import pytest

from portraitgan.classifier import (
    ClassifierConfig,
    build_cnn,
    cnn_spec,
    evaluate,
    predict,
    predict_batch,
    split_per_class,
    train_cnn,
)
from portraitgan.dataset import BehaviorClass as B
from portraitgan.errors import DataError
from portraitgan.nn import Mode, forward, init_params
from portraitgan.portrait import Portrait, PortraitKind

from oracles import brute_confusion

TINY = (1, 1, 1)


def _constant(level, label, i, rng, noise=3.0):
    px = np.clip(np.round(rng.normal(level, noise, (28, 28))), 0, 255).astype(np.uint8)
    return Portrait(px, PortraitKind.CMR, label, "s", i)


def _flat_set(n_per_class):
    z = np.zeros((28, 28), dtype=np.uint8)
    return [Portrait(z, PortraitKind.CMR, c, c.name, i) for c in B for i in range(n_per_class)]


def _bias_only(logits):
    net = cnn_spec(TINY)
    params = init_params(net, 0)
    params = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]
    params[-2]["b"] = np.asarray(logits, dtype=float)
    return net, params


def _block_portrait(cls, i=0):
    # bright 4x4 block in block-column int(cls) of the top block-row
    px = np.zeros((28, 28), dtype=np.uint8)
    c = int(cls)
    px[0:4, 4 * c:4 * c + 4] = 255
    return Portrait(px, PortraitKind.CMR, cls, "blk", i)


def _perfect_predictor():
    """Hand-set weights: delta kernels pass the block through both pools to 7x7 cell (0, c)."""
    net = cnn_spec(TINY)
    params = init_params(net, 0)
    delta = np.zeros((3, 3, 1, 1))
    delta[1, 1, 0, 0] = 1.0
    for i in (0, 3, 6):
        params[i] = {"W": delta.copy(), "b": np.zeros(1)}
    w = np.zeros((49, 6))
    for c in range(6):
        w[c, c] = 10.0
    params[-2] = {"W": w, "b": np.full(6, -5.0)}
    return net, params


# ---------------------------------------------------------------- structure

def test_cnn_structure():
    net, params = build_cnn(0)
    assert net.output_shape == (6,)
    spatial = [s[:2] for s in net.shapes if len(s) == 3]
    assert spatial == [(28, 28), (28, 28), (28, 28), (14, 14), (14, 14), (14, 14), (7, 7), (7, 7), (7, 7)]
    out, _ = forward(net, params, np.zeros((1, 28, 28, 1)), Mode.Infer)
    assert out.shape == (1, 6) and np.all((out > 0) & (out < 1))


def test_config_defaults_and_validation():
    cfg = ClassifierConfig()
    assert (cfg.epochs, cfg.learning_rate, cfg.train_per_class, cfg.val_per_class) == (100, 1e-3, 300, 700)
    with pytest.raises(ValueError):
        ClassifierConfig(batch_size=0)
    with pytest.raises(ValueError):
        ClassifierConfig(learning_rate=-1.0)


# ---------------------------------------------------------------- splitting and training

def test_split_sizes_for_default_balance():
    train, val = split_per_class(_flat_set(1000), ClassifierConfig())
    assert len(train) == 1800 and len(val) == 4200
    assert not {(p.label, p.index) for p in train} & {(p.label, p.index) for p in val}


def test_split_insufficient_data_names_class():
    data = _flat_set(5)[:-1]  # LoadOrthogonal one short
    with pytest.raises(DataError, match="LoadOrthogonal"):
        split_per_class(data, ClassifierConfig(train_per_class=3, val_per_class=2))


def test_zero_epochs_returns_untrained():
    net, params = build_cnn(0, TINY)
    out, hist = train_cnn(net, params, _flat_set(2), ClassifierConfig(epochs=0, train_per_class=1, val_per_class=1))
    assert out is params and hist.rows == []
    assert hist.to_csv() == "epoch,train_acc,val_acc\n"


def test_separable_constant_intensity_classes():
    # six disjoint constant-intensity levels plus small noise
    rng = np.random.default_rng(0)
    data = [_constant(20 + 43 * int(c), c, i, rng) for c in B for i in range(60)]
    cfg = ClassifierConfig(epochs=10, batch_size=8, train_per_class=40, val_per_class=20, seed=0)
    net, params = build_cnn(0)
    params, hist = train_cnn(net, params, data, cfg)
    assert len(hist.rows) == 10
    assert hist.rows[-1][3] == 1.0
    assert hist.losses[-1] < hist.losses[0]


def test_training_is_deterministic():
    rng = np.random.default_rng(1)
    data = [_constant(30 * int(c), c, i, rng) for c in B for i in range(4)]
    cfg = ClassifierConfig(epochs=2, batch_size=4, train_per_class=2, val_per_class=2, widths=(2, 2, 2))
    runs = [train_cnn(*build_cnn(3, cfg.widths), data, cfg) for _ in range(2)]
    assert runs[0][1].rows == runs[1][1].rows
    for a, b in zip(runs[0][0], runs[1][0]):
        assert all(np.array_equal(a[k], b[k]) for k in a)


# ---------------------------------------------------------------- prediction

def test_tie_goes_to_nominal():
    net, params = _bias_only(np.zeros(6))
    pred = predict(net, params, _flat_set(1)[3])
    assert np.all(pred.scores == 0.5) and pred.label is B.Nominal


def test_argmax_example():
    logit = lambda p: np.log(p / (1 - p))
    net, params = _bias_only(logit(np.array([0.1, 0.9, 0.1, 0.1, 0.1, 0.1])))
    pred = predict(net, params, _flat_set(1)[0])
    assert pred.label is B.Ball
    assert np.allclose(pred.scores, [0.1, 0.9, 0.1, 0.1, 0.1, 0.1])


def test_batch_predict_equals_single_predict():
    net, params = build_cnn(5, (4, 4, 4))
    rng = np.random.default_rng(2)
    ps = [_constant(rng.uniform(0, 255), B(i % 6), i, rng, noise=40) for i in range(12)]
    batch = predict_batch(net, params, ps)
    for p, b in zip(ps, batch):
        s = predict(net, params, p)
        assert s.label is b.label and np.array_equal(s.scores, b.scores)


# ---------------------------------------------------------------- evaluation

def test_perfect_predictor_on_benchmark_shaped_data():
    counts = {B.Nominal: 4, B.Ball: 28, B.InnerRace: 28, B.LoadCenter: 23, B.LoadOpposite: 15, B.LoadOrthogonal: 16}
    data = [_block_portrait(c, i) for c, n in counts.items() for i in range(n)]
    cm = evaluate(*_perfect_predictor(), data)
    assert np.array_equal(np.diag(cm.counts), [4, 28, 28, 23, 15, 16])
    assert cm.counts.sum() == np.trace(cm.counts) == 114


def test_constant_predictor_fills_one_row():
    net, params = _bias_only([0, 0, 3.0, 0, 0, 0])
    data = _flat_set(3)
    cm = evaluate(net, params, data)
    assert cm.counts[2].tolist() == [3] * 6
    assert cm.counts.sum() == cm.counts[2].sum() == len(data)


def test_confusion_total_matches_recount():
    net, params = build_cnn(7, (2, 2, 2))
    rng = np.random.default_rng(3)
    data = [_constant(rng.uniform(0, 255), B(rng.integers(6)), i, rng, noise=50) for i in range(30)]
    cm = evaluate(net, params, data)
    preds = [int(p.label) for p in predict_batch(net, params, data)]
    assert cm.counts.tolist() == brute_confusion(preds, [int(p.label) for p in data])
    assert cm.total == 30


def test_evaluate_empty():
    with pytest.raises(DataError):
        evaluate(*build_cnn(0, TINY), [])
