"""Dense layers with explicit backward passes, VAE loss terms, Adam and seeded RNG.

Everything here works on 2-D float64 numpy arrays with samples in rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BCE_EPS = 1e-7
ACTIVATIONS = ("identity", "relu", "sigmoid")


def make_rng(seed):
    """Return a numpy Generator driven by the counter-based Philox bit generator.

    ``seed`` may be an int or a ``numpy.random.SeedSequence``. Philox is fixed
    on purpose: accuracy numbers are only reproducible with the same stream.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed, n):
    """Independent Philox streams derived from one integer seed."""
    return [make_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class Dense:
    """Fully connected layer computing ``activation(x @ weights.T + bias)``."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"inconsistent layer shapes: weights {self.weights.shape}, bias {self.bias.shape}"
            )

    @classmethod
    def glorot(cls, in_dim, out_dim, activation, rng):
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        w = rng.uniform(-limit, limit, size=(out_dim, in_dim))
        return cls(w, np.zeros(out_dim), activation)

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]

    @property
    def params(self):
        return [self.weights, self.bias]

    def _check_input(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"layer expects (n, {self.in_dim}) input, got {x.shape}")

    def forward(self, x):
        self._check_input(x)
        z = x @ self.weights.T + self.bias
        if self.activation == "relu":
            return np.maximum(z, 0.0)
        if self.activation == "sigmoid":
            return sigmoid(z)
        return z

    def backward(self, x, grad_out, out=None):
        """Gradients w.r.t. input, weights and bias.

        ``out`` is the cached forward output; it is recomputed when omitted.
        """
        self._check_input(x)
        if out is None:
            out = self.forward(x)
        if grad_out.shape != out.shape:
            raise ValueError(f"grad_out shape {grad_out.shape} != output shape {out.shape}")
        if self.activation == "relu":
            grad_z = grad_out * (out > 0)
        elif self.activation == "sigmoid":
            grad_z = grad_out * out * (1.0 - out)
        else:
            grad_z = grad_out
        return grad_z @ self.weights, grad_z.T @ x, grad_z.sum(axis=0)


def bce_loss(pred, target, reduction="mean"):
    """Binary cross-entropy summed over pixels.

    ``reduction`` is ``"mean"`` (over rows), ``"sum"`` or ``"none"`` (per-row
    losses, gradient of their sum). Predictions are
    clamped to ``[BCE_EPS, 1 - BCE_EPS]``; the returned gradient is evaluated
    at the clamped value so saturated pixels still receive a signal.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"bce shape mismatch: {pred.shape} vs {target.shape}")
    p = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    per_row = -(target * np.log(p) + (1.0 - target) * np.log1p(-p)).sum(axis=-1)
    grad = (p - target) / (p * (1.0 - p))
    if reduction == "mean":
        n = max(pred.shape[0], 1) if pred.ndim == 2 else 1
        return float(per_row.sum() / n), grad / n
    if reduction == "sum":
        return float(per_row.sum()), grad
    if reduction == "none":
        return per_row, grad
    raise ValueError(f"unknown reduction {reduction!r}")


def kl_diag_gaussian(mu, logvar, reduction="mean"):
    """KL(N(mu, exp(logvar)) || N(0, I)) and its gradients w.r.t. mu and logvar."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if mu.shape != logvar.shape:
        raise ValueError(f"kl shape mismatch: {mu.shape} vs {logvar.shape}")
    if reduction not in ("mean", "sum", "none"):
        raise ValueError(f"unknown reduction {reduction!r}")
    var = np.exp(logvar)
    per_row = -0.5 * (1.0 + logvar - mu * mu - var).sum(axis=-1)
    if reduction == "none":
        return per_row, mu, 0.5 * (var - 1.0)
    n = mu.shape[0] if (mu.ndim == 2 and reduction == "mean") else 1
    # clamp tiny negative round-off; the divergence is non-negative
    return max(float(per_row.sum() / n), 0.0), mu / n, 0.5 * (var - 1.0) / n


@dataclass
class Adam:
    """Adam with bias correction, updating parameter arrays in place."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params, grads):
        if len(params) != len(grads):
            raise ValueError("params and grads differ in length")
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if len(self.m) != len(params):
            raise ValueError("optimizer state does not match parameter list")
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if g.shape != p.shape or m.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
