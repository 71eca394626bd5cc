import math
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from portraitgan.adversarial import (
    AdvConfig,
    Flavor,
    adversarial_step,
    balance_dataset,
    build_dcgan,
    build_mlp_gan,
    dcgan_rule_violations,
    generate_portraits,
    generator_output,
    portraits_to_batch,
    provenance_csv,
    to_pixels,
    train_adversarial,
)
from portraitgan.dataset import BehaviorClass
from portraitgan.errors import DataError, NumericError, ShapeError
from portraitgan.nn import Conv, Dense, Mode, TConv, forward, param_count
from portraitgan.portrait import Portrait, PortraitKind

SMALL = AdvConfig(iterations=3, batch_size=4, gen_channels=(8, 4, 2), disc_channels=(4, 8, 8), log_every=1)


def _portraits(n, label=BehaviorClass.Ball, seed=0):
    rng = np.random.default_rng(seed)
    return [Portrait(rng.integers(0, 256, (28, 28)).astype(np.uint8), PortraitKind.CwtMorse, label, "s", i)
            for i in range(n)]


def _same_params(a, b):
    return all(x.keys() == y.keys() and all(np.array_equal(x[k], y[k]) for k in x) for x, y in zip(a, b))


# ---------------------------------------------------------------- structure

def test_dcgan_shapes_and_ranges():
    model = build_dcgan(AdvConfig())
    out, _ = forward(model.generator, model.g_params, np.zeros((1, 100)), Mode.Infer)
    assert out.shape == (1, 28, 28, 1)
    assert np.all(np.abs(out) < 1)
    d, _ = forward(model.discriminator, model.d_params, np.random.default_rng(0).uniform(-1, 1, (4, 28, 28, 1)))
    assert d.shape == (4, 1) and np.all((d > 0) & (d < 1))


def test_dcgan_generator_has_three_conv_family_layers():
    gen = build_dcgan(AdvConfig()).generator
    assert sum(isinstance(l, (Conv, TConv)) for l in gen.layers) == 3
    assert [s[:2] for s in gen.shapes if len(s) == 3] == [(7, 7), (7, 7), (7, 7), (14, 14), (14, 14), (14, 14),
                                                          (28, 28), (28, 28), (28, 28)]


def test_dcgan_follows_architecture_rules():
    assert dcgan_rule_violations(build_dcgan(AdvConfig())) == []
    assert dcgan_rule_violations(build_dcgan(SMALL)) == []


def test_rule_checker_flags_mlp_gan():
    problems = dcgan_rule_violations(build_mlp_gan(AdvConfig()))
    assert any("dense" in p for p in problems)


def test_mlp_gan_widths_and_param_count():
    model = build_mlp_gan(AdvConfig())
    assert model.generator.layers[-3].n_out == 784
    dense = lambda i, o: i * o + o
    gen = dense(100, 256) + dense(256, 512) + dense(512, 1024) + dense(1024, 784) + 2 * (256 + 512 + 1024)
    disc = dense(784, 512) + dense(512, 256) + dense(256, 1)
    assert param_count(model.g_params, model.generator) == gen
    assert param_count(model.d_params, model.discriminator) == disc


def test_mlp_gan_zero_noise_is_deterministic():
    a = generator_output(build_mlp_gan(AdvConfig(seed=3)), np.zeros((1, 100)))
    b = generator_output(build_mlp_gan(AdvConfig(seed=3)), np.zeros((1, 100)))
    assert a.shape == (1, 28, 28, 1) and np.array_equal(a, b)


def test_config_validation():
    with pytest.raises(ValueError):
        AdvConfig(batch_size=0)
    with pytest.raises(ValueError):
        AdvConfig(learning_rate=0.0)
    assert AdvConfig().noise_dim == 100


def test_full_scale_defaults():
    cfg = AdvConfig()
    assert (cfg.learning_rate, cfg.iterations, cfg.batch_size) == (1e-4, 40000, 100)


# ---------------------------------------------------------------- training step

def test_initial_d_loss_is_near_chance():
    cfg = replace(AdvConfig(), batch_size=16)
    model = build_dcgan(cfg)
    real = portraits_to_batch(_portraits(16))
    rng = np.random.default_rng(0)
    d_loss, _, _ = adversarial_step(model, real, rng, cfg)
    assert abs(d_loss - math.log(2)) < 0.2
    # recompute from the measured initial discriminator outputs
    z = np.random.default_rng(0).standard_normal((16, 100))
    fake, _ = forward(model.generator, model.g_params, z, Mode.Train)
    d_real, _ = forward(model.discriminator, model.d_params, real, Mode.Train)
    d_fake, _ = forward(model.discriminator, model.d_params, fake, Mode.Train)
    expected = 0.5 * (-np.mean(np.log(d_real)) - np.mean(np.log1p(-d_fake)))
    assert math.isclose(d_loss, expected, rel_tol=1e-9)


def test_discriminator_substeps_do_not_touch_generator():
    cfg = replace(SMALL, k=3)
    model = build_dcgan(cfg)
    g_before = [{k: v.copy() for k, v in p.items()} for p in model.g_params]
    _, _, new = adversarial_step(model, portraits_to_batch(_portraits(4)), np.random.default_rng(1), cfg)
    assert new.d_opt.t == 3 and new.g_opt.t == 1
    assert _same_params(model.g_params, g_before)
    assert not _same_params(new.g_params, g_before)
    assert new.iteration == 1


def test_step_rejects_wrong_batch():
    with pytest.raises(ShapeError):
        adversarial_step(build_dcgan(SMALL), portraits_to_batch(_portraits(3)), np.random.default_rng(0), SMALL)


def test_nan_loss_reports_iteration():
    real = portraits_to_batch(_portraits(4))
    real[0, 0, 0, 0] = np.nan
    with pytest.raises(NumericError, match="iteration 1"):
        adversarial_step(build_dcgan(SMALL), real, np.random.default_rng(0), SMALL)


def test_training_is_deterministic():
    data = _portraits(6)
    m1, h1 = train_adversarial(build_dcgan(SMALL, BehaviorClass.Ball), data, SMALL)
    m2, h2 = train_adversarial(build_dcgan(SMALL, BehaviorClass.Ball), data, SMALL)
    assert h1.rows == h2.rows and len(h1.rows) == 3
    assert _same_params(m1.g_params, m2.g_params) and _same_params(m1.d_params, m2.d_params)
    assert m1.checkpoint_id == m2.checkpoint_id
    assert h1.to_csv().splitlines()[0] == "iter,d_loss,g_loss"


def test_zero_iterations_returns_model_unchanged():
    model = build_dcgan(SMALL)
    out, hist = train_adversarial(model, _portraits(2), replace(SMALL, iterations=0))
    assert out is model and hist.rows == []


def test_training_input_errors():
    with pytest.raises(DataError):
        train_adversarial(build_dcgan(SMALL), [], SMALL)
    mixed = _portraits(2) + _portraits(2, BehaviorClass.Nominal)
    with pytest.raises(DataError):
        train_adversarial(build_dcgan(SMALL), mixed, SMALL)


def test_lr_decay_schedule_applied():
    # the rate for a step is set from the iteration count before it: steps 0-1, 2-3, 4
    cfg = replace(SMALL, iterations=5, lr_decay=0.5, decay_every=2)
    model, _ = train_adversarial(build_mlp_gan(cfg), _portraits(4), cfg)
    assert model.g_opt.lr == cfg.learning_rate * 0.25 and model.flavor is Flavor.MlpGAN


def test_pixel_mapping_to_and_from_tanh_range():
    batch = portraits_to_batch([Portrait(np.array([[0, 255] * 14] * 28, dtype=np.uint8),
                                         PortraitKind.CMR, BehaviorClass.Ball, "s")])
    assert batch.shape == (1, 28, 28, 1) and batch.min() == -1.0 and batch.max() == 1.0
    v = np.array([-1.0, -0.999, 0.0, 0.5, 0.999, 1.0])
    assert to_pixels(v).tolist() == [math.floor(255 * (x + 1) / 2 + 0.5) for x in v]


# ---------------------------------------------------------------- generation and balancing

def test_generate_counts_determinism_and_tags():
    model = build_dcgan(SMALL, BehaviorClass.LoadCenter, PortraitKind.Gram)
    assert generate_portraits(model, 0, 1) == []
    a, b = generate_portraits(model, 5, 7), generate_portraits(model, 5, 7)
    assert a == b and len(a) == 5
    assert all(p.label is BehaviorClass.LoadCenter and p.kind is PortraitKind.Gram for p in a)
    assert len({p.name for p in a}) == 5


def test_generate_matches_rounded_generator_output():
    model = build_dcgan(SMALL)
    z = np.random.default_rng(4).standard_normal((3, 100))
    raw = generator_output(model, z)[..., 0]
    assert np.all(np.abs(raw) < 1)
    ps = generate_portraits(model, 3, 4)
    expected = np.floor(255 * (raw + 1) / 2 + 0.5)
    assert np.array_equal(np.stack([p.pixels for p in ps]), expected)


def _models(cfg=SMALL):
    return {c: build_dcgan(cfg, c) for c in BehaviorClass}


def test_balance_target_one():
    ps, prov = balance_dataset(_models(), 1, 0)
    assert len(ps) == 6 and [p.label for p in ps] == list(BehaviorClass)
    assert all(r.synthetic for r in prov)


def test_balance_full_scale_target_gives_6000():
    ps, prov = balance_dataset(_models(), 1000, 0)
    assert len(ps) == 6000
    counts = Counter(p.label for p in ps)
    assert all(counts[c] == 1000 for c in BehaviorClass)
    # independent recount through the provenance rows
    tally = {}
    for row in prov:
        tally[row.label] = tally.get(row.label, 0) + 1
    assert tally == dict(counts)
    lines = provenance_csv(prov).splitlines()
    assert lines[0] == "name,label,synthetic,checkpoint_id" and len(lines) == 6001


def test_balance_errors():
    models = _models()
    del models[BehaviorClass.Ball]
    with pytest.raises(DataError, match="Ball"):
        balance_dataset(models, 1, 0)
    mixed = _models()
    mixed[BehaviorClass.Nominal] = build_dcgan(SMALL, BehaviorClass.Nominal, PortraitKind.Gram)
    with pytest.raises(DataError):
        balance_dataset(mixed, 1, 0)
    with pytest.raises(ValueError):
        balance_dataset(_models(), 0, 0)
