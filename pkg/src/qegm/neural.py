"""Small numpy MLPs with hand-written backprop, a Gaussian output head and Adam."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError, StateError

LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0


class Mlp:
    """Fully connected net: tanh on hidden layers, linear output.

    ``weights[j]`` has shape (dims[j+1], dims[j]); inputs are row batches of
    shape (batch, dims[0]).
    """

    def __init__(self, dims, weights=None, biases=None):
        self.dims = [int(d) for d in dims]
        if len(self.dims) < 2:
            raise ShapeError("an MLP needs at least an input and an output dimension")
        if weights is None:
            weights = [np.zeros((o, i)) for i, o in zip(self.dims[:-1], self.dims[1:])]
        if biases is None:
            biases = [np.zeros(o) for o in self.dims[1:]]
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        for j, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.dims[j + 1], self.dims[j]) or b.shape != (self.dims[j + 1],):
                raise ShapeError(f"layer {j}: weight {w.shape} / bias {b.shape} do not match dims {self.dims}")
        self._cache = None

    @classmethod
    def glorot(cls, dims, src) -> "Mlp":
        """Glorot-uniform weights drawn from ``src``, zero biases."""
        weights = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            u = np.asarray(src.uniform(fan_out * fan_in)).reshape(fan_out, fan_in)
            weights.append((2.0 * u - 1.0) * limit)
        return cls(dims, weights)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dims[0]:
            raise ShapeError(f"input has {x.shape[1]} features, network expects {self.dims[0]}")
        acts = [x]
        h = x
        for j, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if j < self.n_layers - 1:
                h = np.tanh(h)
            if not np.all(np.isfinite(h)):
                raise NumericError(f"non-finite activation at layer {j}")
            acts.append(h)
        self._cache = acts
        return h

    def backward(self, grad_out: np.ndarray):
        """Gradients of a scalar loss given dLoss/dOutput of the last forward pass.

        Returns (list of (dW, db) per layer, dLoss/dInput).
        """
        if self._cache is None:
            raise StateError("backward called before forward")
        acts = self._cache
        g = np.asarray(grad_out, dtype=np.float64).reshape(acts[-1].shape)
        grads = [None] * self.n_layers
        for j in range(self.n_layers - 1, -1, -1):
            if j < self.n_layers - 1:
                g = g * (1.0 - acts[j + 1] ** 2)
            grads[j] = (g.T @ acts[j], g.sum(axis=0))
            g = g @ self.weights[j]
        return grads, g

    def named_params(self, prefix: str) -> dict:
        out = {}
        for j, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.W{j}"] = w
            out[f"{prefix}.b{j}"] = b
        return out

    @staticmethod
    def named_grads(prefix: str, grads) -> dict:
        out = {}
        for j, (dw, db) in enumerate(grads):
            out[f"{prefix}.W{j}"] = dw
            out[f"{prefix}.b{j}"] = db
        return out

    def copy(self) -> "Mlp":
        return Mlp(self.dims, [w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class GaussianHead:
    mean: np.ndarray
    log_variance: np.ndarray
    clamped: np.ndarray = None  # True where the raw log-variance was clipped

    @classmethod
    def from_output(cls, out: np.ndarray, d_x: int) -> "GaussianHead":
        raw = out[:, d_x : 2 * d_x]
        lv = np.clip(raw, LOGVAR_MIN, LOGVAR_MAX)
        return cls(out[:, :d_x], lv, (raw < LOGVAR_MIN) | (raw > LOGVAR_MAX))

    @property
    def variance(self) -> np.ndarray:
        return np.exp(self.log_variance)

    @property
    def std(self) -> np.ndarray:
        return np.exp(0.5 * self.log_variance)


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        """In-place bias-corrected Adam update of every array in ``params``."""
        for k, p in params.items():
            if grads[k].shape != p.shape:
                raise ShapeError(f"gradient for {k} has shape {grads[k].shape}, parameter has {p.shape}")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, p in params.items():
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            p -= self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)

    def state_dict(self) -> dict:
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "t": self.t,
            "m": {k: v.tolist() for k, v in sorted(self.m.items())},
            "v": {k: v.tolist() for k, v in sorted(self.v.items())},
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "Adam":
        opt = cls(state["lr"], state["beta1"], state["beta2"], state["eps"])
        opt.t = state["t"]
        opt.m = {k: np.array(v, dtype=np.float64) for k, v in state["m"].items()}
        opt.v = {k: np.array(v, dtype=np.float64) for k, v in state["v"].items()}
        return opt
