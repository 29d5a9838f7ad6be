"""Dense networks with hand-coded reverse-mode gradients, a diagonal
Gaussian policy head, and the Adam optimizer.

Everything runs in float64 so finite-difference gradient checks are
meaningful.  Forward passes never mutate the network; optimizer steps
return fresh parameter arrays instead of updating in place, so a net can
be read concurrently while an update is being prepared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DivergenceError

SIGMA_MIN = 1e-3
SIGMA_MAX = 10.0
LOG_2PI = math.log(2.0 * math.pi)


def scaled_uniform_init(
    rng: np.random.Generator, fan_in: int, fan_out: int, gain: float
) -> np.ndarray:
    """Variance-scaled uniform init; `gain` shrinks the output layer."""
    limit = gain * math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class DenseNet:
    """Fully connected network: tanh hidden layers, identity output layer."""

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def create(
        cls,
        layer_sizes: list[int],
        rng: np.random.Generator,
        output_gain: float = 1.0,
    ) -> "DenseNet":
        if len(layer_sizes) < 2 or any(int(n) <= 0 for n in layer_sizes):
            raise ValueError(f"bad layer sizes: {layer_sizes!r}")
        sizes = [int(n) for n in layer_sizes]
        weights, biases = [], []
        last = len(sizes) - 2
        for i, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = output_gain if i == last else 1.0
            weights.append(scaled_uniform_init(rng, fi, fo, gain))
            biases.append(np.zeros(fo))
        return cls(sizes, weights, biases)

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        out, _ = self.forward_cached(np.atleast_2d(x))
        return out[0] if single else out

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Batched forward pass; also returns activations for backward_cached."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise DimensionError(
                f"expected input (*, {self.in_dim}), got {x.shape}"
            )
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def backward_cached(
        self, acts: list[np.ndarray], upstream: np.ndarray
    ) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients of sum_t out_t . upstream_t w.r.t. params and input.

        Returns ([dW0, db0, dW1, db1, ...], dL/dx).
        """
        g = np.asarray(upstream, dtype=np.float64)
        n = len(self.weights)
        grads: list[np.ndarray | None] = [None] * (2 * n)
        for i in range(n - 1, -1, -1):
            dz = g if i == n - 1 else g * (1.0 - acts[i + 1] ** 2)
            grads[2 * i] = acts[i].T @ dz
            grads[2 * i + 1] = dz.sum(axis=0)
            g = dz @ self.weights[i].T
        return grads, g  # type: ignore[return-value]

    def backward(
        self, x: np.ndarray, upstream: np.ndarray
    ) -> tuple[list[np.ndarray], np.ndarray]:
        x = np.asarray(x, dtype=np.float64)
        up = np.asarray(upstream, dtype=np.float64)
        single = x.ndim == 1
        _, acts = self.forward_cached(np.atleast_2d(x))
        up2 = np.atleast_2d(up)
        if up2.shape[1] != self.out_dim:
            raise DimensionError(
                f"expected upstream (*, {self.out_dim}), got {up.shape}"
            )
        grads, gx = self.backward_cached(acts, up2)
        return grads, (gx[0] if single else gx)

    def parameters(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_parameters(self, params: list[np.ndarray]) -> None:
        if len(params) != 2 * len(self.weights):
            raise DimensionError("wrong number of parameter arrays")
        for i in range(len(self.weights)):
            w, b = params[2 * i], params[2 * i + 1]
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise DimensionError("parameter shape mismatch")
            self.weights[i] = w
            self.biases[i] = b

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNet":
        sizes = [int(n) for n in d["layer_sizes"]]
        weights = [np.array(w, dtype=np.float64) for w in d["weights"]]
        biases = [np.array(b, dtype=np.float64) for b in d["biases"]]
        net = cls(sizes, weights, biases)
        for i, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
            if weights[i].shape != (fi, fo) or biases[i].shape != (fo,):
                raise DimensionError("checkpoint layer shapes inconsistent")
        return net


def gaussian_log_prob(
    mean: np.ndarray, std: np.ndarray, action: np.ndarray
) -> np.ndarray | float:
    """Log density of a diagonal Gaussian; broadcasts over leading axes."""
    z = (np.asarray(action) - mean) / std
    dim = mean.shape[-1]
    val = -0.5 * np.sum(z * z, axis=-1) - np.sum(np.log(std)) - 0.5 * dim * LOG_2PI
    return float(val) if np.ndim(val) == 0 else val


@dataclass
class GaussianPolicy:
    """Diagonal Gaussian policy: state-dependent mean, global log-std."""

    mean_net: DenseNet
    log_std: np.ndarray

    @classmethod
    def create(
        cls,
        state_dim: int,
        action_dim: int,
        rng: np.random.Generator,
        hidden: tuple[int, ...] = (64, 64),
        init_std: float = 0.5,
        output_gain: float = 0.01,
    ) -> "GaussianPolicy":
        net = DenseNet.create([state_dim, *hidden, action_dim], rng, output_gain)
        return cls(net, np.full(action_dim, math.log(init_std)))

    @property
    def state_dim(self) -> int:
        return self.mean_net.in_dim

    @property
    def action_dim(self) -> int:
        return self.mean_net.out_dim

    def std(self) -> np.ndarray:
        return np.clip(np.exp(self.log_std), SIGMA_MIN, SIGMA_MAX)

    def mean(self, state: np.ndarray) -> np.ndarray:
        return self.mean_net.forward(state)

    def sample(
        self, state: np.ndarray, rng: np.random.Generator
    ) -> tuple[np.ndarray, float]:
        mean = self.mean(state)
        action = mean + self.std() * rng.standard_normal(self.action_dim)
        return action, self.log_prob(state, action)

    def log_prob(self, state: np.ndarray, action: np.ndarray) -> float:
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (self.action_dim,):
            raise DimensionError(
                f"expected action ({self.action_dim},), got {action.shape}"
            )
        return float(gaussian_log_prob(self.mean(state), self.std(), action))

    def entropy(self) -> float:
        return float(np.sum(np.log(self.std()) + 0.5 * (1.0 + LOG_2PI)))

    def parameters(self) -> list[np.ndarray]:
        return [*self.mean_net.parameters(), self.log_std]

    def set_parameters(self, params: list[np.ndarray]) -> None:
        if len(params) != 2 * len(self.mean_net.weights) + 1:
            raise DimensionError("wrong number of parameter arrays")
        self.mean_net.set_parameters(params[:-1])
        if params[-1].shape != self.log_std.shape:
            raise DimensionError("log_std shape mismatch")
        self.log_std = params[-1]

    def to_dict(self) -> dict:
        d = self.mean_net.to_dict()
        d["log_std"] = self.log_std.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianPolicy":
        net = DenseNet.from_dict(d)
        log_std = np.array(d["log_std"], dtype=np.float64)
        if log_std.shape != (net.out_dim,):
            raise DimensionError("log_std length does not match output width")
        return cls(net, log_std)


@dataclass
class AdamState:
    """Adam moments for one flat list of parameter arrays.

    Single-writer: moments update in place, parameters do not.
    """

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float = 1e-4, **kw) -> "AdamState":
        return cls(
            [np.zeros_like(p) for p in params],
            [np.zeros_like(p) for p in params],
            lr=lr,
            **kw,
        )


def adam_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: AdamState
) -> list[np.ndarray]:
    """One Adam update with bias correction; returns new parameter arrays."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise DimensionError("params/grads/state length mismatch")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    out = []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        out.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    return out
