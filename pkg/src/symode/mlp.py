"""Small fully connected residual network applied pointwise over grid points.

The network consumes the same dictionary values as the symbolic network and
learns whatever tendency the symbolic part missed.  The final layer starts
at exactly zero so the residual begins as the zero field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MLPParams:
    """Affine-tanh chain with a linear final layer; weights are (out, in)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def validate(self) -> None:
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (w.shape[0],):
                raise ValueError(f"layer {i} bias shape mismatch")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i} input width mismatch")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("parameters contain non-finite values")

    def to_vector(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.extend([w.ravel(), b.ravel()])
        return np.concatenate(parts)

    def from_vector(self, vec: np.ndarray) -> "MLPParams":
        vec = np.asarray(vec, dtype=float)
        if vec.size != self.n_params:
            raise ValueError(f"expected vector of size {self.n_params}, got {vec.size}")
        pos = 0
        ws, bs = [], []
        for w, b in zip(self.weights, self.biases):
            ws.append(vec[pos : pos + w.size].reshape(w.shape))
            pos += w.size
            bs.append(vec[pos : pos + b.size].reshape(b.shape))
            pos += b.size
        return MLPParams(ws, bs)

    def copy(self) -> "MLPParams":
        return self.from_vector(self.to_vector())

    @staticmethod
    def create(
        sizes: list[int], rng: np.random.Generator | None = None, zero_output: bool = True
    ) -> "MLPParams":
        """Hidden weights ~ N(0, 1/sqrt(fan_in)); the last layer is zeroed
        when ``zero_output`` so the initial residual vanishes identically."""
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        ws, bs = [], []
        for i in range(len(sizes) - 1):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            last = i == len(sizes) - 2
            if (last and zero_output) or rng is None:
                ws.append(np.zeros((fan_out, fan_in)))
            else:
                ws.append(rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in))
            bs.append(np.zeros(fan_out))
        return MLPParams(ws, bs)


def mlp_forward(params: MLPParams, x: np.ndarray) -> np.ndarray:
    """Evaluate pointwise: tanh on hidden layers, linear output."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.weights[0].shape[1]:
        raise ValueError(
            f"expected input width {params.weights[0].shape[1]}, got {x.shape[-1]}"
        )
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.T + b
        if i < last:
            h = np.tanh(h)
    return h


def mlp_vjp(
    params: MLPParams, x: np.ndarray, upstream: np.ndarray
) -> tuple[MLPParams, np.ndarray]:
    """Reverse-mode gradients of ``sum(upstream * mlp_forward)``; returns
    parameter gradients and the gradient w.r.t. the inputs."""
    x = np.asarray(x, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    last = len(params.weights) - 1
    pre_acts = []
    h = x
    inputs = [x]
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        pre_acts.append(z)
        h = np.tanh(z) if i < last else z
        inputs.append(h)
    flat = lambda a: a.reshape(-1, a.shape[-1])
    g_ws: list[np.ndarray] = [None] * len(params.weights)
    g_bs: list[np.ndarray] = [None] * len(params.weights)
    g = upstream
    for i in range(last, -1, -1):
        if i < last:
            g = g * (1.0 - np.tanh(pre_acts[i]) ** 2)
        g_ws[i] = flat(g).T @ flat(inputs[i])
        g_bs[i] = flat(g).sum(axis=0)
        g = g @ params.weights[i]
    return MLPParams(g_ws, g_bs), g
