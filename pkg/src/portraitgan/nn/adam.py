"""Adam with bias correction over layer-structured parameter sets."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import ShapeError
from .network import GradSet, ParamSet


@dataclass(frozen=True)
class AdamState:
    m: list[dict[str, np.ndarray]]
    v: list[dict[str, np.ndarray]]
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: ParamSet, trainable: list[tuple[str, ...]], lr: float = 1e-4,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    m = [{k: np.zeros_like(p[k]) for k in keys} for p, keys in zip(params, trainable)]
    v = [{k: np.zeros_like(p[k]) for k in keys} for p, keys in zip(params, trainable)]
    return AdamState(m, v, 0, lr, beta1, beta2, eps)


def adam_step(params: ParamSet, grads: GradSet, state: AdamState) -> tuple[ParamSet, AdamState]:
    """One Adam update. Returns fresh parameter and state objects.

    Only entries present in ``grads`` move; running statistics and other
    untracked arrays are carried over unchanged.
    """
    if not (len(params) == len(grads) == len(state.m)):
        raise ShapeError("params, grads and optimizer state disagree on layer count")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    new_params, new_m, new_v = [], [], []
    for i, (p, g, m, v) in enumerate(zip(params, grads, state.m, state.v)):
        if set(g) != set(m):
            raise ShapeError(f"layer {i}: gradient keys {sorted(g)} != state keys {sorted(m)}")
        p2, m2, v2 = dict(p), {}, {}
        for k, gk in g.items():
            if gk.shape != p[k].shape:
                raise ShapeError(f"layer {i} '{k}': gradient shape {gk.shape} != param shape {p[k].shape}")
            m2[k] = b1 * m[k] + (1.0 - b1) * gk
            v2[k] = b2 * v[k] + (1.0 - b2) * (gk * gk)
            p2[k] = p[k] - state.lr * (m2[k] / bc1) / (np.sqrt(v2[k] / bc2) + state.eps)
        new_params.append(p2)
        new_m.append(m2)
        new_v.append(v2)
    return new_params, replace(state, m=new_m, v=new_v, t=t)


def with_lr(state: AdamState, lr: float) -> AdamState:
    return replace(state, lr=lr)
