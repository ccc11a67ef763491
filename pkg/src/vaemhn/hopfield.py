"""Modern (continuous) Hopfield memory with softmax-attention retrieval."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from .numerics import make_rng


class RetrievalError(RuntimeError):
    """Retrieval requested from an empty memory."""


@dataclass
class SettleTrace:
    iterations_used: int
    final_state: np.ndarray
    energies: list = field(default_factory=list)


class ModernHopfield(BaseEstimator, TransformerMixin):
    """Append-only pattern store retrieved by ``xi <- X.T softmax(beta X xi)``.

    Each update is a concave-convex step on the energy
    ``E(xi) = -logsumexp(beta X xi) / beta + |xi|^2 / 2``, so energies along a
    trace never increase.

    ``beta`` is scale dependent. When ``beta`` is None it is derived from the
    stored patterns as ``beta_scale / mean(|p|^2)`` and recomputed whenever the
    memory grows.

    Parameters
    ----------
    beta : float or None, default=None
        Fixed inverse temperature; overrides ``beta_scale``.
    beta_scale : float, default=50.0
    max_iters : int, default=16
    tol : float, default=1e-6
        Stop once the L2 change of the state drops below this.
    """

    def __init__(self, beta=None, beta_scale=50.0, max_iters=16, tol=1e-6):
        self.beta = beta
        self.beta_scale = beta_scale
        self.max_iters = max_iters
        self.tol = tol

    @property
    def n_patterns(self):
        return 0 if getattr(self, "patterns_", None) is None else self.patterns_.shape[0]

    @property
    def beta_(self):
        if self.beta is not None:
            return float(self.beta)
        self._check_nonempty()
        return self.beta_scale / self.mean_sq_norm_

    def _check_nonempty(self):
        if self.n_patterns == 0:
            raise RetrievalError("retrieval from an empty Hopfield memory")

    def fit(self, X, y=None):
        """Replace the memory contents with ``X``."""
        self.patterns_ = None
        return self.store(X)

    def partial_fit(self, X, y=None):
        return self.store(X)

    def store(self, X):
        """Append rows of ``X``; existing rows are untouched."""
        X = check_array(X, dtype=np.float64, ensure_min_samples=0)
        if self.n_patterns and X.shape[1] != self.patterns_.shape[1]:
            raise ValueError(
                f"pattern dimension {X.shape[1]} does not match memory dimension {self.patterns_.shape[1]}"
            )
        if X.shape[0] == 0 and self.n_patterns:
            return self
        self.patterns_ = X.copy() if not self.n_patterns else np.vstack([self.patterns_, X])
        if self.n_patterns:
            sq = np.einsum("ij,ij->i", self.patterns_, self.patterns_)
            self.mean_sq_norm_ = float(sq.mean())
            self.mean_norm_ = float(np.sqrt(sq).mean())
        return self

    def energy(self, xi):
        """Energy of each row of ``xi`` (or of a single state vector)."""
        self._check_nonempty()
        beta = self.beta_
        xi = np.asarray(xi, dtype=np.float64)
        logits = beta * (xi @ self.patterns_.T)
        return -logsumexp(logits, axis=-1) / beta + 0.5 * np.sum(xi * xi, axis=-1)

    def _update(self, xi):
        return softmax(self.beta_ * (xi @ self.patterns_.T), axis=-1) @ self.patterns_

    def settle(self, cue):
        """Iterate the update from ``cue`` and record the energy after every step."""
        self._check_nonempty()
        xi = np.asarray(cue, dtype=np.float64).reshape(-1)
        if xi.shape[0] != self.patterns_.shape[1] or not np.isfinite(xi).all():
            raise ValueError("cue must be a finite vector matching the pattern dimension")
        energies = [float(self.energy(xi))]
        iters = 0
        for iters in range(1, self.max_iters + 1):
            new = self._update(xi)
            delta = np.linalg.norm(new - xi)
            xi = new
            energies.append(float(self.energy(xi)))
            if delta < self.tol:
                break
        return SettleTrace(iters, xi, energies)

    def transform(self, X):
        """Settle every row of ``X`` independently; rows freeze once converged."""
        self._check_nonempty()
        X = check_array(X, dtype=np.float64, ensure_min_samples=0)
        if X.shape[1] != self.patterns_.shape[1]:
            raise ValueError(f"cues have dimension {X.shape[1]}, memory {self.patterns_.shape[1]}")
        state = X.copy()
        active = np.arange(len(state))
        for _ in range(self.max_iters):
            if active.size == 0:
                break
            new = self._update(state[active])
            delta = np.linalg.norm(new - state[active], axis=1)
            state[active] = new
            active = active[delta >= self.tol]
        return state

    recall = transform

    def noise_cues(self, n, random_state=None):
        """Standard-normal cues rescaled so their expected norm matches the stored patterns."""
        self._check_nonempty()
        rng = make_rng(random_state)
        d = self.patterns_.shape[1]
        return rng.standard_normal((n, d)) * (self.mean_norm_ / np.sqrt(d))

    def sample(self, n, random_state=None):
        """Settle ``n`` random noise cues; each result is a mixture of stored patterns."""
        self._check_nonempty()
        if n == 0:
            return np.empty((0, self.patterns_.shape[1]))
        return self.transform(self.noise_cues(n, random_state))
