"""Dense feed-forward networks with hand-written reverse-mode gradients and Adam.

Everything is float64 and purely functional: forward/backward/adam_step take
parameter containers and return new ones, which keeps gradient checks and
cross-run determinism exact.  Supported activations: relu, tanh, identity.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .container import load_container, save_container

ACTIVATIONS = ("relu", "tanh", "identity")


@dataclass(frozen=True)
class LayerParams:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)


@dataclass(frozen=True)
class MlpParams:
    layers: tuple[LayerParams, ...]
    activations: tuple[str, ...]

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        sizes = [self.layers[0].weights.shape[1]]
        sizes.extend(layer.weights.shape[0] for layer in self.layers)
        return tuple(sizes)

    @property
    def param_count(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weights.shape[0]


@dataclass(frozen=True)
class ForwardCache:
    inputs: tuple[np.ndarray, ...]  # input to each layer, batch-major
    preacts: tuple[np.ndarray, ...]  # pre-activation of each layer


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_params(layer_sizes: list[int], activations: list[str], seed: int) -> MlpParams:
    """Uniform fan-in init: W ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero."""
    if len(layer_sizes) < 2:
        raise ValueError(f"need at least 2 layer sizes, got {layer_sizes}")
    if len(activations) != len(layer_sizes) - 1:
        raise ValueError(
            f"need {len(layer_sizes) - 1} activations for {len(layer_sizes)} sizes, got {len(activations)}"
        )
    for act in activations:
        if act not in ACTIVATIONS:
            raise ValueError(f"unknown activation {act!r}; expected one of {ACTIVATIONS}")
    rng = np.random.Generator(np.random.PCG64(seed))
    layers = []
    for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(LayerParams(weights=weights, bias=np.zeros(fan_out, dtype=np.float64)))
    return MlpParams(layers=tuple(layers), activations=tuple(activations))


def _activate(z: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    return z


def _activate_grad(z: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return (z > 0.0).astype(np.float64)
    if act == "tanh":
        return 1.0 - np.tanh(z) ** 2
    return np.ones_like(z)


def forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run a batch (n, in_dim) through the net; cache is sufficient for backward."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ValueError(f"expected input of shape (n, {params.in_dim}), got {x.shape}")
    inputs, preacts = [], []
    h = x
    for layer, act in zip(params.layers, params.activations):
        inputs.append(h)
        z = h @ layer.weights.T + layer.bias
        preacts.append(z)
        h = _activate(z, act)
    return h, ForwardCache(inputs=tuple(inputs), preacts=tuple(preacts))


def backward(
    params: MlpParams, cache: ForwardCache, output_gradient: np.ndarray
) -> tuple[tuple[LayerParams, ...], np.ndarray]:
    """Exact gradients of sum(output * output_gradient) w.r.t. params and input."""
    g = np.asarray(output_gradient, dtype=np.float64)
    if g.shape != cache.preacts[-1].shape:
        raise ValueError(f"output gradient shape {g.shape} != output shape {cache.preacts[-1].shape}")
    grads: list[LayerParams] = []
    for layer, act, h_in, z in zip(
        reversed(params.layers),
        reversed(params.activations),
        reversed(cache.inputs),
        reversed(cache.preacts),
    ):
        gz = g * _activate_grad(z, act)
        grads.append(LayerParams(weights=gz.T @ h_in, bias=gz.sum(axis=0)))
        g = gz @ layer.weights
    grads.reverse()
    return tuple(grads), g


def init_adam(params: MlpParams, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    n = params.param_count
    return AdamState(m=np.zeros(n), v=np.zeros(n), t=0, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(
    params: MlpParams, grads: tuple[LayerParams, ...], state: AdamState, lr: float
) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update; raises on non-finite gradients."""
    g = flatten_layers(grads)
    if not np.all(np.isfinite(g)):
        raise ValueError("non-finite gradient in adam_step (training diverged)")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    theta = flatten_params(params) - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return unflatten_params(params, theta), replace(state, m=m, v=v, t=t)


def flatten_layers(layers: tuple[LayerParams, ...]) -> np.ndarray:
    parts = []
    for layer in layers:
        parts.append(layer.weights.ravel())
        parts.append(layer.bias)
    return np.concatenate(parts)


def flatten_params(params: MlpParams) -> np.ndarray:
    """Layer-order flattening: weights (row-major) then bias, per layer."""
    return flatten_layers(params.layers)


def unflatten_params(template: MlpParams, vector: np.ndarray) -> MlpParams:
    """Inverse of flatten_params; the template supplies shapes and activations."""
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (template.param_count,):
        raise ValueError(f"expected vector of length {template.param_count}, got shape {vector.shape}")
    layers = []
    offset = 0
    for layer in template.layers:
        w_n = layer.weights.size
        w = vector[offset : offset + w_n].reshape(layer.weights.shape)
        offset += w_n
        b = vector[offset : offset + layer.bias.size].copy()
        offset += layer.bias.size
        layers.append(LayerParams(weights=w.copy(), bias=b))
    return MlpParams(layers=tuple(layers), activations=template.activations)


def params_like(params: MlpParams) -> MlpParams:
    """Deep copy with the same values (containers are immutable, arrays are not)."""
    return unflatten_params(params, flatten_params(params))


# ------------------------------------------------------------------ checkpoints


def mlp_arrays(params: MlpParams, prefix: str = "") -> dict[str, np.ndarray]:
    return {f"{prefix}params": flatten_params(params)}


def mlp_meta(params: MlpParams) -> dict:
    return {"layer_sizes": list(params.layer_sizes), "activations": list(params.activations)}


def mlp_from_parts(meta: dict, flat: np.ndarray) -> MlpParams:
    sizes = [int(s) for s in meta["layer_sizes"]]
    acts = [str(a) for a in meta["activations"]]
    template = init_params(sizes, acts, seed=0)
    return unflatten_params(template, flat)


def save_mlp(path, params: MlpParams, adam: AdamState | None = None, extra_meta: dict | None = None) -> None:
    arrays = mlp_arrays(params)
    meta = {"kind": "mlp", "net": mlp_meta(params)}
    if adam is not None:
        arrays["adam_m"] = adam.m
        arrays["adam_v"] = adam.v
        meta["adam"] = {"t": adam.t, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps}
    if extra_meta:
        meta.update(extra_meta)
    save_container(path, arrays, meta)


def load_mlp(path) -> tuple[MlpParams, AdamState | None, dict]:
    arrays, meta = load_container(path)
    params = mlp_from_parts(meta["net"], arrays["params"])
    adam = None
    if "adam" in meta:
        a = meta["adam"]
        adam = AdamState(
            m=arrays["adam_m"], v=arrays["adam_v"], t=int(a["t"]),
            beta1=float(a["beta1"]), beta2=float(a["beta2"]), eps=float(a["eps"]),
        )
    return params, adam, meta
