"""Per-class GAN training for minority-class portrait synthesis."""

from __future__ import annotations

import enum
import hashlib
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .dataset import BehaviorClass
from .errors import DataError, NumericError, ShapeError
from .nn import (
    AdamState,
    BatchNorm,
    Conv,
    Dense,
    Flatten,
    LeakyReLU,
    MaxPool,
    Mode,
    NetworkSpec,
    ParamSet,
    ReLU,
    Reshape,
    Sigmoid,
    Tanh,
    TConv,
    adam_init,
    adam_step,
    backward,
    encode_params,
    forward,
    init_params,
    loss_bce,
    update_running_stats,
    with_lr,
)
from .nn.layers import Activation
from .portrait import SIDE, Portrait, PortraitKind

log = logging.getLogger(__name__)

IMAGE_SHAPE = (SIDE, SIDE, 1)  # channels-last


class Flavor(enum.Enum):
    DCGAN = "DCGAN"
    MlpGAN = "MlpGAN"


@dataclass(frozen=True)
class AdvConfig:
    learning_rate: float = 1e-4
    iterations: int = 40000
    batch_size: int = 100
    k: int = 1  # discriminator updates per generator update
    noise_dim: int = 100
    seed: int = 0
    lr_decay: float | None = None
    decay_every: int = 10000
    beta1: float = 0.5
    beta2: float = 0.999
    gen_channels: tuple[int, int, int] = (128, 64, 32)
    disc_channels: tuple[int, int, int] = (32, 64, 128)
    leaky_alpha: float = 0.2
    log_every: int = 10
    checkpoint_every: int = 0

    def __post_init__(self):
        for name in ("iterations", "batch_size", "k", "noise_dim"):
            value = getattr(self, name)
            if value < (0 if name == "iterations" else 1):
                raise ValueError(f"{name} must be positive, got {value}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        object.__setattr__(self, "gen_channels", tuple(self.gen_channels))
        object.__setattr__(self, "disc_channels", tuple(self.disc_channels))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GanModel:
    generator: NetworkSpec
    g_params: ParamSet
    discriminator: NetworkSpec
    d_params: ParamSet
    flavor: Flavor
    class_label: BehaviorClass
    portrait_kind: PortraitKind
    g_opt: AdamState
    d_opt: AdamState
    iteration: int = 0

    @property
    def checkpoint_id(self) -> str:
        return hashlib.sha256(encode_params(self.g_params)).hexdigest()[:16]


@dataclass
class LossHistory:
    rows: list[tuple[int, float, float]] = field(default_factory=list)

    def to_csv(self) -> str:
        return "iter,d_loss,g_loss\n" + "".join(f"{i},{d!r},{g!r}\n" for i, d, g in self.rows)


def dcgan_generator(cfg: AdvConfig) -> NetworkSpec:
    c1, c2, c3 = cfg.gen_channels
    return NetworkSpec([
        Dense(cfg.noise_dim, 7 * 7 * c1), Reshape((7, 7, c1)), BatchNorm(c1), ReLU(),
        TConv(c1, c2), BatchNorm(c2), ReLU(),          # 7 -> 14
        TConv(c2, c3),                                 # 14 -> 28
        Conv(c3, 1, 3, 1), Tanh(),
    ], (cfg.noise_dim,))


def dcgan_discriminator(cfg: AdvConfig) -> NetworkSpec:
    c1, c2, c3 = cfg.disc_channels
    a = cfg.leaky_alpha
    net = [
        Conv(1, c1, 3, 2), LeakyReLU(a),                   # 28 -> 14
        Conv(c1, c2, 3, 2), BatchNorm(c2), LeakyReLU(a),   # 14 -> 7
        Conv(c2, c3, 3, 2), BatchNorm(c3), LeakyReLU(a),   # 7 -> 4
        Flatten(),
    ]
    flat = c3 * 4 * 4
    return NetworkSpec(net + [Dense(flat, 1), Sigmoid()], IMAGE_SHAPE)


def mlp_generator(cfg: AdvConfig) -> NetworkSpec:
    a = cfg.leaky_alpha
    layers, width = [], cfg.noise_dim
    for n in (256, 512, 1024):
        layers += [Dense(width, n), LeakyReLU(a), BatchNorm(n)]
        width = n
    layers += [Dense(width, SIDE * SIDE), Tanh(), Reshape(IMAGE_SHAPE)]
    return NetworkSpec(layers, (cfg.noise_dim,))


def mlp_discriminator(cfg: AdvConfig) -> NetworkSpec:
    a = cfg.leaky_alpha
    return NetworkSpec([
        Flatten(), Dense(SIDE * SIDE, 512), LeakyReLU(a), Dense(512, 256), LeakyReLU(a), Dense(256, 1), Sigmoid(),
    ], IMAGE_SHAPE)


def _assemble(gen: NetworkSpec, disc: NetworkSpec, flavor: Flavor, cfg: AdvConfig,
              class_label: BehaviorClass, kind: PortraitKind) -> GanModel:
    rng = np.random.default_rng([cfg.seed, 0, int(class_label)])
    g_params = init_params(gen, rng)
    d_params = init_params(disc, rng)
    opt = dict(lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2)
    return GanModel(
        gen, g_params, disc, d_params, flavor, class_label, kind,
        adam_init(g_params, [l.trainable for l in gen.layers], **opt),
        adam_init(d_params, [l.trainable for l in disc.layers], **opt),
    )


def build_dcgan(cfg: AdvConfig, class_label: BehaviorClass = BehaviorClass.Nominal,
                kind: PortraitKind = PortraitKind.CwtMorse) -> GanModel:
    return _assemble(dcgan_generator(cfg), dcgan_discriminator(cfg), Flavor.DCGAN, cfg, class_label, kind)


def build_mlp_gan(cfg: AdvConfig, class_label: BehaviorClass = BehaviorClass.Nominal,
                  kind: PortraitKind = PortraitKind.CwtMorse) -> GanModel:
    return _assemble(mlp_generator(cfg), mlp_discriminator(cfg), Flavor.MlpGAN, cfg, class_label, kind)


def dcgan_rule_violations(model: GanModel) -> list[str]:
    """Check the structural DCGAN rules on both networks; empty list means compliant."""
    problems = []
    g, d = model.generator.layers, model.discriminator.layers
    for name, layers in (("generator", g), ("discriminator", d)):
        if any(isinstance(l, MaxPool) for l in layers):
            problems.append(f"{name} contains a pooling layer")
    dense_g = [i for i, l in enumerate(g) if isinstance(l, Dense)]
    if dense_g != [0]:
        problems.append(f"generator dense layers at {dense_g}, expected only the input projection")
    dense_d = [i for i, l in enumerate(d) if isinstance(l, Dense)]
    if dense_d != [len(d) - 2]:
        problems.append(f"discriminator dense layers at {dense_d}, expected only the head")
    if not (isinstance(g[-1], Activation) and g[-1].fn == "tanh"):
        problems.append("generator output activation is not tanh")
    if not isinstance(g[-2], (Conv, TConv)):
        problems.append("generator output layer is not convolutional")
    hidden_g = [l.fn for l in g[:-1] if isinstance(l, Activation)]
    if any(fn != "relu" for fn in hidden_g):
        problems.append(f"generator hidden activations {hidden_g} are not all ReLU")
    hidden_d = [l.fn for l in d[:-1] if isinstance(l, Activation)]
    if any(fn != "leaky_relu" for fn in hidden_d):
        problems.append(f"discriminator hidden activations {hidden_d} are not all LeakyReLU")
    if isinstance(d[1], BatchNorm) or isinstance(d[0], BatchNorm):
        problems.append("batch norm on discriminator input layer")
    if any(isinstance(l, BatchNorm) for l in g[-3:]):
        problems.append("batch norm on generator output layer")
    return problems


def portraits_to_batch(portraits: Sequence[Portrait]) -> np.ndarray:
    """Stack portraits as (N, 28, 28, 1) floats in [-1, 1]."""
    px = np.stack([p.pixels for p in portraits]).astype(np.float64)
    return (px / 127.5 - 1.0)[..., None]


def _check_finite(value: float, what: str, iteration: int) -> None:
    if not np.isfinite(value):
        raise NumericError(f"{what} is not finite at iteration {iteration}")


def adversarial_step(model: GanModel, real_batch: np.ndarray, noise: np.random.Generator,
                     cfg: AdvConfig) -> tuple[float, float, GanModel]:
    """k discriminator updates followed by one generator update.

    Discriminator: BCE with real -> 1 and fake -> 0, fakes treated as
    constants. Generator: non-saturating BCE of D(G(z)) toward 1, scored by
    the updated discriminator on the fake batch of the last discriminator
    update (one generator forward pass per update, as in the usual DCGAN
    loop). The losses returned are those measured during the step.
    """
    real = np.asarray(real_batch, dtype=np.float64)
    if real.shape != (cfg.batch_size,) + IMAGE_SHAPE:
        raise ShapeError(f"real batch shape {real.shape}, expected {(cfg.batch_size,) + IMAGE_SHAPE}")
    n = cfg.batch_size
    gen, disc = model.generator, model.discriminator
    g_params, d_params = model.g_params, model.d_params
    d_opt, g_opt = model.d_opt, model.g_opt
    it = model.iteration + 1
    ones, zeros = np.ones((n, 1)), np.zeros((n, 1))

    d_loss = float("nan")
    for _ in range(cfg.k):
        fake, tape_g = forward(gen, g_params, noise.standard_normal((n, cfg.noise_dim)), Mode.Train)
        out_r, tape_r = forward(disc, d_params, real, Mode.Train)
        loss_r, grad_r = loss_bce(out_r, ones)
        grads_r, _ = backward(disc, d_params, tape_r, grad_r)
        stats_params = update_running_stats(disc, d_params, tape_r)
        out_f, tape_f = forward(disc, d_params, fake, Mode.Train)
        loss_f, grad_f = loss_bce(out_f, zeros)
        grads_f, _ = backward(disc, d_params, tape_f, grad_f)
        stats_params = update_running_stats(disc, stats_params, tape_f)
        d_loss = 0.5 * (loss_r + loss_f)
        _check_finite(d_loss, "discriminator loss", it)
        grads = [{k: 0.5 * (gr[k] + gf[k]) for k in gr} for gr, gf in zip(grads_r, grads_f)]
        d_params, d_opt = adam_step(stats_params, grads, d_opt)

    out, tape_d = forward(disc, d_params, fake, Mode.Train)
    g_loss, grad = loss_bce(out, ones)
    _check_finite(g_loss, "generator loss", it)
    _, dfake = backward(disc, d_params, tape_d, grad)
    g_grads, _ = backward(gen, g_params, tape_g, dfake)
    g_params, g_opt = adam_step(update_running_stats(gen, g_params, tape_g), g_grads, g_opt)

    return d_loss, g_loss, replace(model, g_params=g_params, d_params=d_params,
                                   g_opt=g_opt, d_opt=d_opt, iteration=it)


def _scheduled_lr(cfg: AdvConfig, iteration: int) -> float:
    if not cfg.lr_decay or cfg.decay_every <= 0:
        return cfg.learning_rate
    return cfg.learning_rate * cfg.lr_decay ** (iteration // cfg.decay_every)


def train_adversarial(model: GanModel, real_portraits: Sequence[Portrait], cfg: AdvConfig,
                      on_checkpoint: Callable[[GanModel], None] | None = None,
                      ) -> tuple[GanModel, LossHistory]:
    """Run ``cfg.iterations`` adversarial steps on minibatches drawn with replacement."""
    if not real_portraits:
        raise DataError("cannot train a GAN on an empty portrait list")
    kinds = {p.kind for p in real_portraits}
    labels = {p.label for p in real_portraits}
    if len(kinds) > 1 or len(labels) > 1:
        raise DataError(f"portraits must share one kind and class, got {kinds} / {labels}")
    data = portraits_to_batch(real_portraits)
    rng = np.random.default_rng([cfg.seed, 1, int(model.class_label), model.iteration])
    history = LossHistory()
    for step in range(cfg.iterations):
        lr = _scheduled_lr(cfg, model.iteration)
        if lr != model.g_opt.lr:
            model = replace(model, g_opt=with_lr(model.g_opt, lr), d_opt=with_lr(model.d_opt, lr))
        batch = data[rng.integers(0, len(data), cfg.batch_size)]
        d_loss, g_loss, model = adversarial_step(model, batch, rng, cfg)
        if cfg.log_every and (model.iteration % cfg.log_every == 0 or step == cfg.iterations - 1):
            history.rows.append((model.iteration, d_loss, g_loss))
            if model.iteration % (cfg.log_every * 100) == 0:
                log.info("%s %s iter %d: d_loss %.4f g_loss %.4f", model.class_label.name,
                         model.flavor.value, model.iteration, d_loss, g_loss)
        if on_checkpoint and cfg.checkpoint_every and model.iteration % cfg.checkpoint_every == 0:
            on_checkpoint(model)
    return model, history


def generator_output(model: GanModel, z: np.ndarray) -> np.ndarray:
    """Pre-quantization generator output in (-1, 1), Infer mode."""
    out, _ = forward(model.generator, model.g_params, z, Mode.Infer)
    return out


def to_pixels(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(255.0 * (values + 1.0) / 2.0 + 0.5), 0, 255).astype(np.uint8)


def generate_portraits(model: GanModel, n: int, seed: int | Sequence[int],
                       noise_dim: int | None = None, chunk: int = 256) -> list[Portrait]:
    if n < 0:
        raise ValueError("n must be nonnegative")
    noise_dim = noise_dim or model.generator.input_shape[0]
    rng = np.random.default_rng(seed)
    tag = "gan" + "-".join(str(s) for s in np.atleast_1d(seed))
    out: list[Portrait] = []
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        px = to_pixels(generator_output(model, rng.standard_normal((m, noise_dim))))
        out += [Portrait(px[i, :, :, 0], model.portrait_kind, model.class_label, tag, start + i) for i in range(m)]
    return out


@dataclass(frozen=True)
class ProvenanceRow:
    name: str
    label: BehaviorClass
    synthetic: bool
    checkpoint_id: str


def balance_dataset(models: Mapping[BehaviorClass, GanModel], target_per_class: int,
                    seed: int) -> tuple[list[Portrait], list[ProvenanceRow]]:
    """Generate ``target_per_class`` synthetic portraits for every class."""
    if target_per_class < 1:
        raise ValueError("target_per_class must be positive")
    missing = [c.name for c in BehaviorClass if c not in models]
    if missing:
        raise DataError(f"no GAN model for classes: {', '.join(missing)}")
    kinds = {m.portrait_kind for m in models.values()}
    if len(kinds) != 1:
        raise DataError(f"models mix portrait kinds: {sorted(k.value for k in kinds)}")
    portraits, provenance = [], []
    for cls in BehaviorClass:
        model = models[cls]
        ckpt = model.checkpoint_id
        batch = generate_portraits(model, target_per_class, [seed, int(cls)])
        portraits += batch
        provenance += [ProvenanceRow(p.name, cls, True, ckpt) for p in batch]
    return portraits, provenance


def provenance_csv(rows: Sequence[ProvenanceRow]) -> str:
    return "name,label,synthetic,checkpoint_id\n" + "".join(
        f"{r.name},{r.label.name},{int(r.synthetic)},{r.checkpoint_id}\n" for r in rows)
