"""Hand-rolled fully-connected networks on float64 numpy.

Shapes follow the row-batch convention: inputs are (B, in) or (in,), weights are
(out, in), so a layer computes z = x @ W.T + b. Everything here is deterministic
given the rng handed to `mlp_init`, which is what makes seeded training runs
reproduce bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation

ACTIVATIONS = ("relu", "tanh", "identity", "softmax")


@dataclass
class MlpParams:
    weights: list[np.ndarray]   # each (out, in)
    biases: list[np.ndarray]    # each (out,)
    activations: list[str]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]


@dataclass
class ForwardCache:
    """Per-layer tensors kept from the forward pass for backprop."""
    inputs: list[np.ndarray]
    preacts: list[np.ndarray]
    outputs: list[np.ndarray]


def mlp_init(dims: list[int], activations: list[str],
             rng: np.random.Generator) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    if len(dims) < 2 or len(activations) != len(dims) - 1:
        raise ContractViolation("need len(dims) >= 2 and one activation per layer")
    for act in activations:
        if act not in ACTIVATIONS:
            raise ContractViolation(f"unknown activation {act!r}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        scale = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-scale, scale, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return MlpParams(weights=weights, biases=biases, activations=list(activations))


def softmax(z: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _activate(z: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    if act == "identity":
        return z
    if act == "softmax":
        return softmax(z)
    raise ContractViolation(f"unknown activation {act!r}")


def _activation_backward(dy: np.ndarray, z: np.ndarray, a: np.ndarray,
                         act: str) -> np.ndarray:
    if act == "relu":
        return dy * (z > 0.0)
    if act == "tanh":
        return dy * (1.0 - a * a)
    if act == "identity":
        return dy
    if act == "softmax":
        # rowwise Jacobian product: dz = a * (dy - <a, dy>)
        inner = (a * dy).sum(axis=-1, keepdims=True)
        return a * (dy - inner)
    raise ContractViolation(f"unknown activation {act!r}")


def mlp_forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Returns (y, cache). y matches x's batch shape: (B, out) or (out,)."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] != params.in_dim:
        raise ContractViolation(
            f"input width {x.shape[1]} != expected {params.in_dim}")
    inputs, preacts, outputs = [], [], []
    a = x
    for W, b, act in zip(params.weights, params.biases, params.activations):
        inputs.append(a)
        z = a @ W.T + b
        preacts.append(z)
        a = _activate(z, act)
        outputs.append(a)
    cache = ForwardCache(inputs=inputs, preacts=preacts, outputs=outputs)
    return (a[0] if squeeze else a), cache


def mlp_backward(params: MlpParams, cache: ForwardCache,
                 dy: np.ndarray) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Backprop dy through the cached pass.

    Returns (grads, dx); grads[k] is (dW, db) for layer k. Weight gradients sum
    over the batch, so callers scale dy by 1/B themselves when averaging.
    """
    dy = np.asarray(dy, dtype=np.float64)
    squeeze = dy.ndim == 1
    if squeeze:
        dy = dy[None, :]
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * params.n_layers
    upstream = dy
    for k in range(params.n_layers - 1, -1, -1):
        dz = _activation_backward(upstream, cache.preacts[k], cache.outputs[k],
                                  params.activations[k])
        grads[k] = (dz.T @ cache.inputs[k], dz.sum(axis=0))
        upstream = dz @ params.weights[k]
    return grads, (upstream[0] if squeeze else upstream)


def grad_norm(grads: list[tuple[np.ndarray, np.ndarray]]) -> float:
    total = 0.0
    for dW, db in grads:
        total += float((dW * dW).sum()) + float((db * db).sum())
    return float(np.sqrt(total))


def clip_gradients(grads: list[tuple[np.ndarray, np.ndarray]],
                   max_norm: float) -> list[tuple[np.ndarray, np.ndarray]]:
    """Rescale all gradients so their joint norm is at most max_norm."""
    norm = grad_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return [(dW * scale, db * scale) for dW, db in grads]


@dataclass
class OptState:
    """Adam moments per tensor, plus step and skip counters."""
    m: list[tuple[np.ndarray, np.ndarray]]
    v: list[tuple[np.ndarray, np.ndarray]]
    step: int = 0
    skipped: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def opt_init(params: MlpParams, beta1: float = 0.9, beta2: float = 0.999,
             eps: float = 1e-8) -> OptState:
    zeros = lambda: [(np.zeros_like(W), np.zeros_like(b))
                     for W, b in zip(params.weights, params.biases)]
    return OptState(m=zeros(), v=zeros(), beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: MlpParams, grads: list[tuple[np.ndarray, np.ndarray]],
              opt: OptState, lr: float) -> tuple[MlpParams, OptState]:
    """Bias-corrected Adam, in place. A non-finite gradient skips the update
    (step counter untouched) and bumps opt.skipped."""
    for dW, db in grads:
        if not (np.isfinite(dW).all() and np.isfinite(db).all()):
            opt.skipped += 1
            return params, opt
    opt.step += 1
    c1 = 1.0 - opt.beta1 ** opt.step
    c2 = 1.0 - opt.beta2 ** opt.step
    for k, (dW, db) in enumerate(grads):
        mW, mb = opt.m[k]
        vW, vb = opt.v[k]
        mW *= opt.beta1; mW += (1.0 - opt.beta1) * dW
        mb *= opt.beta1; mb += (1.0 - opt.beta1) * db
        vW *= opt.beta2; vW += (1.0 - opt.beta2) * dW * dW
        vb *= opt.beta2; vb += (1.0 - opt.beta2) * db * db
        params.weights[k] -= lr * (mW / c1) / (np.sqrt(vW / c2) + opt.eps)
        params.biases[k] -= lr * (mb / c1) / (np.sqrt(vb / c2) + opt.eps)
    return params, opt


def soft_update(target: MlpParams, online: MlpParams, tau: float) -> None:
    """Polyak averaging: target <- (1 - tau) * target + tau * online, in place."""
    for k in range(target.n_layers):
        target.weights[k] *= 1.0 - tau
        target.weights[k] += tau * online.weights[k]
        target.biases[k] *= 1.0 - tau
        target.biases[k] += tau * online.biases[k]


def clone_params(params: MlpParams) -> MlpParams:
    return MlpParams(weights=[W.copy() for W in params.weights],
                     biases=[b.copy() for b in params.biases],
                     activations=list(params.activations))


def grad_check(params: MlpParams, x: np.ndarray, h: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences.

    The probe functional is f = <probe, y> with a fixed non-uniform probe, so a
    sign or transpose bug cannot hide behind a symmetric cancellation.
    """
    x = np.asarray(x, dtype=np.float64)
    probe = np.cos(0.7 * np.arange(params.out_dim) + 0.3) + 1.5

    y, cache = mlp_forward(params, x)
    analytic, _ = mlp_backward(params, cache, probe)

    def f() -> float:
        out, _ = mlp_forward(params, x)
        return float(out @ probe)

    worst = 0.0
    for k in range(params.n_layers):
        for tensor, grad in ((params.weights[k], analytic[k][0]),
                             (params.biases[k], analytic[k][1])):
            flat = tensor.reshape(-1)
            gflat = grad.reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                f_plus = f()
                flat[idx] = orig - h
                f_minus = f()
                flat[idx] = orig
                numeric = (f_plus - f_minus) / (2.0 * h)
                denom = max(abs(gflat[idx]), abs(numeric), 1e-12)
                worst = max(worst, abs(gflat[idx] - numeric) / denom)
    return worst
