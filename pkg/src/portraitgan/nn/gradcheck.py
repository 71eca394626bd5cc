"""Central finite-difference verification of the analytic backward pass."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import BatchNorm, Conv, Dense, TConv
from .network import Mode, NetworkSpec, ParamSet, Tape, backward, forward

STEP = 1e-5
TOLERANCE = 1e-5
# Round-off in a central difference is ~ eps * |L| / h, so arrays whose
# gradient norm is below NORM_FLOOR * max(1, sum|o*R|) are measured
# against that floor instead of their own norm.
NORM_FLOOR = 1e-4


@dataclass
class GradCheckReport:
    layer_errors: dict[str, float] = field(default_factory=dict)
    input_error: float = 0.0
    checked: int = 0
    skipped: int = 0

    @property
    def max_error(self) -> float:
        return max([self.input_error, *self.layer_errors.values()])

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE

    def __str__(self) -> str:
        lines = [f"{name:<24} {err:.3e}" for name, err in self.layer_errors.items()]
        lines.append(f"{'input':<24} {self.input_error:.3e}")
        lines.append(f"checked={self.checked} skipped={self.skipped} -> {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def random_params(net: NetworkSpec, rng: np.random.Generator) -> ParamSet:
    """Well-scaled parameters so every layer carries a non-trivial gradient."""
    params = []
    for layer, shape in zip(net.layers, net.shapes):
        if isinstance(layer, (Conv, TConv)):
            fan_in = layer.in_ch * layer.kernel ** 2
            params.append({"W": rng.normal(0, 1 / np.sqrt(fan_in), (layer.kernel, layer.kernel, layer.in_ch, layer.out_ch)),
                           "b": rng.normal(0, 0.1, layer.out_ch)})
        elif isinstance(layer, Dense):
            params.append({"W": rng.normal(0, 1 / np.sqrt(layer.n_in), (layer.n_in, layer.n_out)),
                           "b": rng.normal(0, 0.1, layer.n_out)})
        elif isinstance(layer, BatchNorm):
            params.append({"gamma": rng.uniform(0.5, 1.5, layer.ch), "beta": rng.normal(0, 0.1, layer.ch),
                           "running_mean": np.zeros(layer.ch), "running_var": np.ones(layer.ch)})
        else:
            params.append({})
    return params


def _patterns(tape: Tape) -> list:
    return [layer.pattern(c) for layer, c in zip(tape.net.layers, tape.caches)]


def _same(a: list, b: list) -> bool:
    return all((x is None and y is None) or np.array_equal(x, y) for x, y in zip(a, b))


def _rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float) -> float:
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(diff / scale)


def grad_check(net: NetworkSpec, seed: int, batch_size: int = 4, max_entries: int | None = None,
               params: ParamSet | None = None, mode: Mode = Mode.Train) -> GradCheckReport:
    """Compare backward() with central differences of L = sum(out * R).

    Entries whose perturbation flips a ReLU/LeakyReLU sign or a max-pool
    winner are skipped, since the loss is not differentiable there.
    ``max_entries`` caps how many entries per array are probed.
    """
    rng = np.random.default_rng(seed)
    if params is None:
        params = random_params(net, rng)
    x = rng.normal(0, 1, (batch_size,) + net.input_shape)
    out, tape = forward(net, params, x, mode)
    proj = rng.normal(0, 1, out.shape)
    grads, dx = backward(net, params, tape, proj)
    base_pattern = _patterns(tape)
    floor = NORM_FLOOR * max(1.0, float(np.sum(np.abs(out * proj))))

    def loss_and_ok(p: ParamSet, xin: np.ndarray) -> tuple[float, bool]:
        o, t = forward(net, p, xin, mode)
        return float(np.sum(o * proj)), _same(_patterns(t), base_pattern)

    report = GradCheckReport()

    def probe(arr_size: int, evaluate) -> tuple[np.ndarray, np.ndarray]:
        idx = np.arange(arr_size)
        if max_entries is not None and arr_size > max_entries:
            idx = np.sort(rng.choice(arr_size, max_entries, replace=False))
        keep, numeric = [], []
        for j in idx:
            lp, ok_p = evaluate(j, STEP)
            lm, ok_m = evaluate(j, -STEP)
            if ok_p and ok_m:
                keep.append(j)
                numeric.append((lp - lm) / (2 * STEP))
                report.checked += 1
            else:
                report.skipped += 1
        return np.asarray(keep, dtype=int), np.asarray(numeric)

    for i, layer in enumerate(net.layers):
        errs = []
        for key in layer.trainable:
            base = params[i][key]

            def evaluate(j, h, i=i, key=key, base=base):
                pert = base.copy().ravel()
                pert[j] += h
                p2 = list(params)
                p2[i] = {**params[i], key: pert.reshape(base.shape)}
                return loss_and_ok(p2, x)

            keep, numeric = probe(base.size, evaluate)
            if keep.size:
                errs.append(_rel_error(grads[i][key].ravel()[keep], numeric, floor))
        if errs:
            report.layer_errors[f"{i}:{layer.kind}"] = max(errs)

    def evaluate_x(j, h):
        pert = x.copy().ravel()
        pert[j] += h
        return loss_and_ok(params, pert.reshape(x.shape))

    keep, numeric = probe(x.size, evaluate_x)
    if keep.size:
        report.input_error = _rel_error(dx.ravel()[keep], numeric, floor)
    return report
