"""Sequential network composition: static shapes, forward, backward."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import ShapeError
from .layers import BatchNorm, Layer

ParamSet = list[dict[str, np.ndarray]]
GradSet = list[dict[str, np.ndarray]]


class Mode(enum.Enum):
    Train = "train"
    Infer = "infer"


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[Layer, ...]
    input_shape: tuple[int, ...]
    shapes: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        shapes = [self.input_shape]
        for i, layer in enumerate(self.layers):
            try:
                shapes.append(tuple(layer.out_shape(shapes[-1])))
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
        object.__setattr__(self, "shapes", tuple(shapes))

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes[-1]

    def __len__(self) -> int:
        return len(self.layers)


@dataclass
class Tape:
    net: NetworkSpec
    mode: Mode
    caches: list[Any]
    batch: int


def init_params(net: NetworkSpec, seed: int | np.random.Generator) -> ParamSet:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return [layer.init(rng, shape) for layer, shape in zip(net.layers, net.shapes)]


def param_count(params: ParamSet, net: NetworkSpec | None = None) -> int:
    """Number of trainable scalars (running statistics excluded)."""
    total = 0
    for i, p in enumerate(params):
        keys = net.layers[i].trainable if net is not None else [k for k in p if not k.startswith("running_")]
        total += sum(p[k].size for k in keys)
    return total


def forward(net: NetworkSpec, params: ParamSet, batch: np.ndarray,
            mode: Mode = Mode.Train) -> tuple[np.ndarray, Tape]:
    x = np.asarray(batch, dtype=np.float64)
    if x.shape[1:] != net.input_shape:
        raise ShapeError(f"layer 0 ({net.layers[0].kind if net.layers else 'input'}): "
                         f"batch shape {x.shape[1:]} does not match input {net.input_shape}")
    if len(params) != len(net.layers):
        raise ShapeError(f"{len(params)} parameter groups for {len(net.layers)} layers")
    train = mode is Mode.Train
    caches = []
    for i, (layer, p) in enumerate(zip(net.layers, params)):
        x, cache = layer.forward(p, x, train)
        if x.shape[1:] != net.shapes[i + 1]:
            raise ShapeError(f"layer {i} ({layer.kind}): produced {x.shape[1:]}, expected {net.shapes[i + 1]}")
        caches.append(cache)
    return x, Tape(net, mode, caches, x.shape[0])


def backward(net: NetworkSpec, params: ParamSet, tape: Tape,
             output_grad: np.ndarray) -> tuple[GradSet, np.ndarray]:
    if tape.net is not net and tape.net != net:
        raise ValueError("tape was recorded on a different network")
    if len(tape.caches) != len(net.layers):
        raise ValueError("stale tape: cache count does not match layer count")
    dy = np.asarray(output_grad, dtype=np.float64)
    if dy.shape != (tape.batch,) + net.output_shape:
        raise ShapeError(f"output_grad shape {dy.shape} does not match {(tape.batch,) + net.output_shape}")
    grads: GradSet = [{} for _ in net.layers]
    for i in range(len(net.layers) - 1, -1, -1):
        grads[i], dy = net.layers[i].backward(params[i], tape.caches[i], dy)
    return grads, dy


def update_running_stats(net: NetworkSpec, params: ParamSet, tape: Tape) -> ParamSet:
    """Fold the batch-norm running statistics recorded in a Train tape into a new ParamSet."""
    if tape.mode is not Mode.Train:
        return params
    out = []
    for layer, p, cache in zip(net.layers, params, tape.caches):
        if isinstance(layer, BatchNorm):
            p = {**p, **cache[3]}
        out.append(p)
    return out


def copy_params(params: ParamSet) -> ParamSet:
    return [{k: v.copy() for k, v in p.items()} for p in params]


def walk(net: NetworkSpec) -> list[tuple[int, str, Layer]]:
    return [(i, layer.kind, layer) for i, layer in enumerate(net.layers)]
