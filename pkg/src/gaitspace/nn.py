"""Minimal dense-network kernel: affine layers, ELU, reverse-mode gradients, Adam.

Everything runs in float64 numpy. Inputs are batch-first (B, dim); a bare
(dim,) vector is accepted and returned as (dim,).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch


def elu(x):
    return np.where(x > 0.0, x, np.expm1(x))


def elu_grad(x):
    return np.where(x > 0.0, 1.0, np.exp(np.minimum(x, 0.0)))


@dataclass
class DenseLayer:
    w: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)

    @property
    def in_dim(self):
        return self.w.shape[1]

    @property
    def out_dim(self):
        return self.w.shape[0]


class Mlp:
    """Fixed-topology MLP: ELU on hidden layers, identity output."""

    def __init__(self, layers: list[DenseLayer]):
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise DimensionMismatch(
                    f"layer dims do not chain: {a.out_dim} -> {b.in_dim}"
                )
        self.layers = layers

    @classmethod
    def init(cls, sizes: list[int], rng: np.random.Generator) -> "Mlp":
        """He-style uniform fan-in init, seeded through `rng`."""
        layers = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            b = np.zeros(fan_out)
            layers.append(DenseLayer(w, b))
        return cls(layers)

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    def forward(self, x: np.ndarray):
        """Returns (output, cache); cache holds inputs and pre-activations."""
        squeeze = x.ndim == 1
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if h.shape[1] != self.in_dim:
            raise DimensionMismatch(
                f"input dim {h.shape[1]} != expected {self.in_dim}"
            )
        inputs = []
        preacts = []
        n = len(self.layers)
        for i, layer in enumerate(self.layers):
            inputs.append(h)
            z = h @ layer.w.T + layer.b
            preacts.append(z)
            h = elu(z) if i < n - 1 else z
        out = h[0] if squeeze else h
        return out, _Cache(inputs, preacts, squeeze)

    def backward(self, cache: "_Cache", dout: np.ndarray):
        """Reverse-mode gradients. Returns (grads, dinput).

        grads is a list of (dw, db) matching self.layers; minibatch
        gradients are summed over the batch axis.
        """
        d = np.atleast_2d(np.asarray(dout, dtype=np.float64))
        if d.shape != cache.preacts[-1].shape:
            raise DimensionMismatch(
                f"output grad shape {d.shape} != {cache.preacts[-1].shape}"
            )
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.layers)
        n = len(self.layers)
        for i in range(n - 1, -1, -1):
            if i < n - 1:
                d = d * elu_grad(cache.preacts[i])
            dw = d.T @ cache.inputs[i]
            db = d.sum(axis=0)
            grads[i] = (dw, db)
            d = d @ self.layers[i].w
        dinput = d[0] if cache.squeeze else d
        return grads, dinput

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.append(layer.w)
            out.append(layer.b)
        return out


@dataclass
class _Cache:
    inputs: list
    preacts: list
    squeeze: bool


@dataclass
class AdamState:
    """Bias-corrected Adam over a flat list of parameter arrays."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        """Updates `params` in place."""
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if len(params) != len(grads) or len(params) != len(self.m):
            raise DimensionMismatch("param/grad count mismatch")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise DimensionMismatch("param/grad shape mismatch")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def gradient_check(loss_and_grads, params: list[np.ndarray],
                   n_coords: int = 10, h: float = 1e-5, seed: int = 0,
                   tolerance: float = 1e-4):
    """Central-difference check of analytic gradients.

    `loss_and_grads()` must return (scalar loss, grads matching `params`)
    and be deterministic. Probes `n_coords` random coordinates per array.
    Returns a report dict with per-array max relative error and a `passed`
    flag against `tolerance`.
    """
    rng = np.random.default_rng(seed)
    _, analytic = loss_and_grads()
    errors = []
    for p, g in zip(params, analytic):
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        idx = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            lp, _ = loss_and_grads()
            flat[i] = orig - h
            lm, _ = loss_and_grads()
            flat[i] = orig
            fd = (lp - lm) / (2.0 * h)
            denom = max(abs(fd), abs(gflat[i]), 1e-8)
            worst = max(worst, abs(fd - gflat[i]) / denom)
        errors.append(worst)
    return {
        "max_rel_error": max(errors) if errors else 0.0,
        "per_array": errors,
        "passed": all(e < tolerance for e in errors),
    }
