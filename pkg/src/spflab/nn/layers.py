"""Layer specifications and the shared forward pass.

A network is a tuple of LayerSpec entries evaluated in order.  The dense-
concat block appends its new features to its input ([input || features]),
so the block's output width is input width plus growth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamTree, Tensor

ACTIVATIONS = {
    "relu": ad.relu,
    "swish": ad.swish,
    "tanh": ad.tanh,
    "identity": lambda t: t,
}


@dataclass(frozen=True)
class LayerSpec:
    """kind: dense | densenet_block | layernorm | activation.

    out_width is the dense output width, or the growth of a densenet_block;
    norm switches on a layer normalization inside a densenet_block before its
    activation.
    """

    kind: str
    out_width: int = 0
    activation: str = "identity"
    norm: bool = False

    def __post_init__(self):
        if self.kind not in ("dense", "densenet_block", "layernorm", "activation"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind in ("dense", "densenet_block") and self.out_width < 1:
            raise ValueError(f"{self.kind} needs a positive out_width")


def stack_out_width(stack, in_width: int) -> int:
    width = in_width
    for spec in stack:
        if spec.kind == "dense":
            width = spec.out_width
        elif spec.kind == "densenet_block":
            width = width + spec.out_width
    return width


def _weight_std(fan_in: int, activation: str) -> float:
    if activation in ("relu", "swish"):
        return float(np.sqrt(2.0 / fan_in))
    return float(np.sqrt(1.0 / fan_in))


def init_params(
    stack,
    in_width: int,
    prefix: str,
    rng: np.random.Generator,
    weight_scale: float = 1.0,
) -> ParamTree:
    """Create parameters for a stack under `prefix/layer{i}/...` names."""
    params = ParamTree()
    width = in_width
    for i, spec in enumerate(stack):
        base = f"{prefix}/layer{i}"
        if spec.kind in ("dense", "densenet_block"):
            std = _weight_std(width, spec.activation) * weight_scale
            w = rng.normal(0.0, std, size=(width, spec.out_width))
            params[f"{base}/weight"] = Tensor(w, requires_grad=True)
            params[f"{base}/bias"] = Tensor(np.zeros(spec.out_width), requires_grad=True)
            if spec.kind == "densenet_block" and spec.norm:
                params[f"{base}/ln_gain"] = Tensor(np.ones(spec.out_width), requires_grad=True)
                params[f"{base}/ln_shift"] = Tensor(np.zeros(spec.out_width), requires_grad=True)
            width = spec.out_width if spec.kind == "dense" else width + spec.out_width
        elif spec.kind == "layernorm":
            params[f"{base}/ln_gain"] = Tensor(np.ones(width), requires_grad=True)
            params[f"{base}/ln_shift"] = Tensor(np.zeros(width), requires_grad=True)
    return params


def _np_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "swish":
        return z / (1.0 + np.exp(-z))
    if name == "tanh":
        return np.tanh(z)
    return z


def forward_data(stack, params: ParamTree, x: np.ndarray, prefix: str) -> np.ndarray:
    """Inference-only mirror of forward over plain arrays (no graph)."""
    out = np.atleast_2d(np.asarray(x, dtype=np.float64))
    for i, spec in enumerate(stack):
        base = f"{prefix}/layer{i}"
        if spec.kind in ("dense", "densenet_block"):
            h = out @ params[f"{base}/weight"].data
            h += params[f"{base}/bias"].data
            if spec.kind == "densenet_block" and spec.norm:
                mu = h.mean(axis=1, keepdims=True)
                h -= mu
                h /= np.sqrt((h**2).mean(axis=1, keepdims=True) + 1e-5)
                h *= params[f"{base}/ln_gain"].data
                h += params[f"{base}/ln_shift"].data
            h = _np_activation(spec.activation, h)
            out = h if spec.kind == "dense" else np.concatenate([out, h], axis=1)
        elif spec.kind == "layernorm":
            mu = out.mean(axis=1, keepdims=True)
            out = out - mu
            out /= np.sqrt((out**2).mean(axis=1, keepdims=True) + 1e-5)
            out *= params[f"{base}/ln_gain"].data
            out += params[f"{base}/ln_shift"].data
        elif spec.kind == "activation":
            out = _np_activation(spec.activation, out)
    return out


def forward(stack, params: ParamTree, x: Tensor, prefix: str) -> Tensor:
    """Evaluate the stack; an empty stack is the identity."""
    out = x
    for i, spec in enumerate(stack):
        base = f"{prefix}/layer{i}"
        if spec.kind == "dense":
            out = ad.dense(out, params[f"{base}/weight"], params[f"{base}/bias"],
                           spec.activation)
        elif spec.kind == "densenet_block":
            if spec.norm:
                h = ad.dense(out, params[f"{base}/weight"], params[f"{base}/bias"])
                h = ad.layer_norm(h, params[f"{base}/ln_gain"], params[f"{base}/ln_shift"])
                h = ACTIVATIONS[spec.activation](h)
            else:
                h = ad.dense(out, params[f"{base}/weight"], params[f"{base}/bias"],
                             spec.activation)
            out = ad.concat([out, h], axis=1)
        elif spec.kind == "layernorm":
            out = ad.layer_norm(out, params[f"{base}/ln_gain"], params[f"{base}/ln_shift"])
        elif spec.kind == "activation":
            out = ACTIVATIONS[spec.activation](out)
    return out
