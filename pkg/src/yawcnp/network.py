"""Minimal multilayer-perceptron machinery built on numpy.

Forward passes cache pre-activations so exact reverse-mode gradients can be
assembled layer by layer.  Hidden layers use ReLU, the output layer is
linear.  The adaptive-moment optimizer operates on flat lists of parameter
arrays so one instance can drive several networks at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError


@dataclass
class Mlp:
    """Fully connected network: ordered (weights, bias) pairs.

    Weights have shape (fan_in, fan_out); inputs are row vectors.
    """

    layers: list[tuple[np.ndarray, np.ndarray]]

    @classmethod
    def create(cls, sizes: list[int], rng: np.random.Generator) -> "Mlp":
        """He-initialized network with the given layer widths."""
        layers = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
            b = np.zeros(fan_out)
            layers.append((w, b))
        return cls(layers)

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0][0].shape[0]] + [w.shape[1] for w, _ in self.layers]

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(x)
        return out

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.layers[0][0].shape[0]:
            raise DimensionMismatchError(
                f"input width {x.shape[1]} != first layer fan-in {self.layers[0][0].shape[0]}")
        cache = []
        h = x
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            z = h @ w + b
            cache.append((h, z))
            h = z if i == last else np.maximum(z, 0.0)
        return h, cache

    def backward(self, cache: list, dout: np.ndarray) -> tuple[list, np.ndarray]:
        """Gradients of all parameters and of the input, given d(loss)/d(output)."""
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.layers)
        dh = np.atleast_2d(dout)
        last = len(self.layers) - 1
        for i in range(last, -1, -1):
            w, _ = self.layers[i]
            h_in, z = cache[i]
            dz = dh if i == last else dh * (z > 0.0)
            grads[i] = (h_in.T @ dz, dz.sum(axis=0))
            dh = dz @ w.T
        return grads, dh

    def zero_grads(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(np.zeros_like(w), np.zeros_like(b)) for w, b in self.layers]

    def flat_params(self) -> list[np.ndarray]:
        out = []
        for w, b in self.layers:
            out.extend((w, b))
        return out


def accumulate(into: list, grads: list, scale: float = 1.0) -> None:
    """Add per-layer gradients into an accumulator in place."""
    for (aw, ab), (gw, gb) in zip(into, grads):
        aw += scale * gw
        ab += scale * gb


@dataclass
class AdamState:
    """First/second moment estimates, one pair per parameter array."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[np.ndarray], **kw) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params], **kw)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState, lr: float) -> None:
    """In-place adaptive-moment update with bias correction."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionMismatchError("parameter/gradient/state lists must align")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise DimensionMismatchError("gradient shape mismatch")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
