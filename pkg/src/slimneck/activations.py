"""Pointwise activations and their closed-form derivatives.

All functions accept any float array (or scalar) and keep its dtype, so the
same code serves float32 tensors in the blocks and float64 scalars in the
gradient checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Activation",
    "KINDS",
    "activate",
    "activate_grad",
    "finite_difference",
    "parse_activation",
    "sigmoid",
    "softplus",
]

KINDS = ("relu", "sigmoid", "tanh", "swish", "mish", "hard_swish")

SOFTPLUS_THRESHOLD = 20.0


@dataclass(frozen=True)
class Activation:
    kind: str
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation {self.kind!r}; expected one of {KINDS}")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"swish beta must be finite and positive, got {self.beta}")

    def __str__(self):
        if self.kind == "swish" and self.beta != 1.0:
            return f"swish:{self.beta:g}"
        return self.kind


def parse_activation(text):
    """``"mish"`` -> Activation("mish"); ``"swish:1.5"`` sets beta; ``"none"`` -> None."""
    if text is None or isinstance(text, Activation):
        return text
    text = text.strip()
    if text in ("none", ""):
        return None
    kind, _, beta = text.partition(":")
    if beta and kind != "swish":
        raise ValueError(f"only swish takes a beta parameter, got {text!r}")
    return Activation(kind, float(beta) if beta else 1.0)


def _as_activation(kind):
    return kind if isinstance(kind, Activation) else parse_activation(kind)


def sigmoid(x):
    x = np.asarray(x)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1 / (1 + z), z / (1 + z)).astype(x.dtype, copy=False)


def softplus(x):
    """``log(1 + e^x)``; returns ``x`` above 20 and ``e^x`` below -20."""
    x = np.asarray(x)
    mid = np.log1p(np.exp(np.clip(x, -SOFTPLUS_THRESHOLD, SOFTPLUS_THRESHOLD)))
    out = np.where(x > SOFTPLUS_THRESHOLD, x, mid)
    out = np.where(x < -SOFTPLUS_THRESHOLD, np.exp(np.minimum(x, 0)), out)
    return out.astype(x.dtype, copy=False)


def activate(kind, x):
    act = _as_activation(kind)
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    k = act.kind
    if k == "relu":
        y = np.maximum(x, 0)
    elif k == "sigmoid":
        y = sigmoid(x)
    elif k == "tanh":
        y = np.tanh(x)
    elif k == "swish":
        y = x * sigmoid(x.dtype.type(act.beta) * x)
    elif k == "mish":
        y = x * np.tanh(softplus(x))
    else:  # hard_swish
        y = x * np.clip(x + 3, 0, 6) / 6
    return y.astype(x.dtype, copy=False)


def activate_grad(kind, x):
    """Pointwise derivative of :func:`activate`. ReLU takes 0 at the origin."""
    act = _as_activation(kind)
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    k = act.kind
    if k == "relu":
        g = (x > 0).astype(x.dtype)
    elif k == "sigmoid":
        s = sigmoid(x)
        g = s * (1 - s)
    elif k == "tanh":
        t = np.tanh(x)
        g = 1 - t * t
    elif k == "swish":
        b = x.dtype.type(act.beta)
        s = sigmoid(b * x)
        g = s + b * x * s * (1 - s)
    elif k == "mish":
        t = np.tanh(softplus(x))
        g = t + x * (1 - t * t) * sigmoid(x)
    else:  # hard_swish
        g = np.where(x < -3, 0, np.where(x > 3, 1, (2 * x + 3) / 6))
    return np.asarray(g).astype(x.dtype, copy=False)


def finite_difference(f, x, step=1e-4):
    """Central difference ``(f(x + step) - f(x - step)) / (2 * step)``."""
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    return (f(x + step) - f(x - step)) / (2 * step)
