"""Fully connected variational autoencoder trained with hand-written backprop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import N_PIXELS, ImageBatch, iter_batches
from .numerics import Adam, Dense, bce_loss, kl_diag_gaussian, spawn_rngs

TAP_POINTS = ("latent", "fully_connected")
REPLAY_WEIGHTINGS = ("equal", "per_sample")


class TrainingError(RuntimeError):
    """Raised when a loss or gradient becomes non-finite."""


@dataclass
class LatentCode:
    mu: np.ndarray
    logvar: np.ndarray
    sample: np.ndarray
    eps: np.ndarray


@dataclass
class LossParts:
    bce_real: float = 0.0
    kl_real: float = 0.0
    bce_replay: float = 0.0
    kl_replay: float = 0.0

    @property
    def total(self):
        return self.bce_real + self.kl_real + self.bce_replay + self.kl_replay

    def as_dict(self):
        return {
            "bce_real": self.bce_real,
            "kl_real": self.kl_real,
            "bce_replay": self.bce_replay,
            "kl_replay": self.kl_replay,
            "total": self.total,
        }


class VAE(BaseEstimator, TransformerMixin):
    """Gaussian-latent VAE with a Bernoulli (sigmoid) decoder.

    The encoder is ``input -> hidden_dims (relu) -> (mu, logvar)`` and the
    decoder mirrors the hidden widths back to a sigmoid output layer. The loss
    per image is pixel-summed binary cross-entropy plus the KL divergence to a
    standard normal prior, averaged over the batch.

    Parameters
    ----------
    latent_dim : int, default=48
    hidden_dims : tuple of int, default=(512, 256)
    tap_point : {"latent", "fully_connected"}, default="latent"
        Which deterministic representation :meth:`representation` returns by
        default: the latent mean or the last hidden encoder activation.
    epochs, batch_size, learning_rate
        Used by :meth:`fit`; the continual-learning driver reuses them.
    replay_weighting : {"equal", "per_sample"}, default="equal"
        ``"equal"`` averages the replay loss over the replay rows, so real and
        replayed data contribute equally. ``"per_sample"`` divides the replay
        sum by the real batch size instead, weighting replay by its size.
    random_state : int, default=0
    """

    def __init__(
        self,
        latent_dim=48,
        hidden_dims=(512, 256),
        tap_point="latent",
        epochs=10,
        batch_size=32,
        learning_rate=1e-3,
        replay_weighting="equal",
        input_dim=N_PIXELS,
        random_state=0,
    ):
        self.latent_dim = latent_dim
        self.hidden_dims = hidden_dims
        self.tap_point = tap_point
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.replay_weighting = replay_weighting
        self.input_dim = input_dim
        self.random_state = random_state

    # -- construction -------------------------------------------------

    def initialize(self):
        """Draw fresh Glorot weights and reset optimizer and RNG streams."""
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if not self.hidden_dims:
            raise ValueError("hidden_dims must be non-empty")
        if self.tap_point not in TAP_POINTS:
            raise ValueError(f"tap_point must be one of {TAP_POINTS}")
        if self.replay_weighting not in REPLAY_WEIGHTINGS:
            raise ValueError(f"replay_weighting must be one of {REPLAY_WEIGHTINGS}")
        init_rng, self.noise_rng_, self.batch_rng_ = spawn_rngs(self.random_state, 3)
        widths = [self.input_dim, *self.hidden_dims]
        self.encoder_ = [
            Dense.glorot(a, b, "relu", init_rng) for a, b in zip(widths[:-1], widths[1:])
        ]
        self.mu_head_ = Dense.glorot(widths[-1], self.latent_dim, "identity", init_rng)
        self.logvar_head_ = Dense.glorot(widths[-1], self.latent_dim, "identity", init_rng)
        dec_widths = [self.latent_dim, *reversed(self.hidden_dims)]
        self.decoder_ = [
            Dense.glorot(a, b, "relu", init_rng) for a, b in zip(dec_widths[:-1], dec_widths[1:])
        ]
        self.decoder_.append(Dense.glorot(dec_widths[-1], self.input_dim, "sigmoid", init_rng))
        self.optimizer_ = Adam(lr=self.learning_rate)
        self.n_steps_ = 0
        self.history_ = []
        return self

    @property
    def layers_(self):
        return [*self.encoder_, self.mu_head_, self.logvar_head_, *self.decoder_]

    @property
    def params_(self):
        return [p for layer in self.layers_ for p in layer.params]

    def _check_x(self, X, dim=None):
        check_is_fitted(self, "encoder_")
        X = check_array(X, dtype=np.float64, ensure_min_samples=0)
        dim = self.input_dim if dim is None else dim
        if X.shape[1] != dim:
            raise ValueError(f"expected {dim} features, got {X.shape[1]}")
        return X

    # -- inference ----------------------------------------------------

    def _encode_hidden(self, X):
        acts = [X]
        for layer in self.encoder_:
            acts.append(layer.forward(acts[-1]))
        return acts

    def encode(self, X, eps=None):
        X = self._check_x(X)
        h = self._encode_hidden(X)[-1]
        mu = self.mu_head_.forward(h)
        logvar = self.logvar_head_.forward(h)
        if eps is None:
            eps = self.noise_rng_.standard_normal(mu.shape)
        return LatentCode(mu, logvar, mu + np.exp(0.5 * logvar) * eps, eps)

    def decode(self, Z):
        out = self._check_x(Z, self.latent_dim)
        for layer in self.decoder_:
            out = layer.forward(out)
        return out

    def transform(self, X):
        """Latent means (deterministic embedding)."""
        X = self._check_x(X)
        return self.mu_head_.forward(self._encode_hidden(X)[-1])

    def inverse_transform(self, Z):
        return self.decode(Z)

    def reconstruct(self, X):
        return self.decode(self.transform(X))

    def representation(self, X, tap=None):
        tap = self.tap_point if tap is None else tap
        if tap == "latent":
            return self.transform(X)
        if tap == "fully_connected":
            return self._encode_hidden(self._check_x(X))[-1]
        raise ValueError(f"unknown tap point {tap!r}; expected one of {TAP_POINTS}")

    def decode_representation(self, R, tap=None):
        """Images from tap-point vectors; hidden activations go through the mean head first."""
        tap = self.tap_point if tap is None else tap
        if tap == "latent":
            return self.decode(R)
        if tap == "fully_connected":
            R = self._check_x(R, self.hidden_dims[-1])
            return self.decode(self.mu_head_.forward(R))
        raise ValueError(f"unknown tap point {tap!r}; expected one of {TAP_POINTS}")

    # -- training -----------------------------------------------------

    def _forward_backward(self, X, row_weight, eps):
        """Per-row losses and parameter gradients of ``sum_r row_weight[r] * loss_r``."""
        acts = self._encode_hidden(X)
        h = acts[-1]
        mu = self.mu_head_.forward(h)
        logvar = self.logvar_head_.forward(h)
        std = np.exp(0.5 * logvar)
        z = mu + std * eps
        dec_acts = [z]
        for layer in self.decoder_:
            dec_acts.append(layer.forward(dec_acts[-1]))
        recon = dec_acts[-1]

        w = row_weight[:, None]
        bce_rows, g_recon = bce_loss(recon, X, reduction="none")
        kl_rows, g_mu_kl, g_lv_kl = kl_diag_gaussian(mu, logvar, reduction="none")

        grads_dec = []
        g = g_recon * w
        for layer, a_in, a_out in zip(
            reversed(self.decoder_), reversed(dec_acts[:-1]), reversed(dec_acts[1:])
        ):
            g, gw, gb = layer.backward(a_in, g, a_out)
            grads_dec.append((gw, gb))
        grads_dec.reverse()
        g_z = g
        g_mu = g_z + g_mu_kl * w
        g_lv = g_z * 0.5 * std * eps + g_lv_kl * w

        g_h_mu, gw_mu, gb_mu = self.mu_head_.backward(h, g_mu, mu)
        g_h_lv, gw_lv, gb_lv = self.logvar_head_.backward(h, g_lv, logvar)
        g = g_h_mu + g_h_lv
        grads_enc = []
        for layer, a_in, a_out in zip(reversed(self.encoder_), reversed(acts[:-1]), reversed(acts[1:])):
            g, gw, gb = layer.backward(a_in, g, a_out)
            grads_enc.append((gw, gb))
        grads_enc.reverse()

        grads = []
        for gw, gb in [*grads_enc, (gw_mu, gb_mu), (gw_lv, gb_lv), *grads_dec]:
            grads.extend([gw, gb])
        return bce_rows, kl_rows, grads

    def _row_weights(self, n_real, n_replay):
        w_real = np.full(n_real, 1.0 / max(n_real, 1))
        if not n_replay:
            return w_real
        denom = n_replay if self.replay_weighting == "equal" else max(n_real, 1)
        return np.concatenate([w_real, np.full(n_replay, 1.0 / denom)])

    def loss_and_grads(self, x_real, x_replay=None, eps=None):
        """Return ``(LossParts, grads)`` for a real batch plus optional replay batch.

        Replayed images act as both input and reconstruction target.
        """
        x_real = self._check_x(x_real)
        n_real = x_real.shape[0]
        if x_replay is not None and len(x_replay):
            x_replay = self._check_x(x_replay)
            X = np.vstack([x_real, x_replay])
        else:
            X = x_real
        n_rep = X.shape[0] - n_real
        if eps is None:
            eps = self.noise_rng_.standard_normal((X.shape[0], self.latent_dim))
        weights = self._row_weights(n_real, n_rep)
        bce_rows, kl_rows, grads = self._forward_backward(X, weights, eps)
        wb, wk = weights * bce_rows, weights * kl_rows
        parts = LossParts(
            float(wb[:n_real].sum()),
            float(wk[:n_real].sum()),
            float(wb[n_real:].sum()),
            float(wk[n_real:].sum()),
        )
        return parts, grads

    def loss(self, x_real, x_replay=None, eps=None):
        return self.loss_and_grads(x_real, x_replay, eps)[0]

    def train_step(self, x_real, x_replay=None):
        parts, grads = self.loss_and_grads(x_real, x_replay)
        if not np.isfinite(parts.total) or not all(np.isfinite(g).all() for g in grads):
            raise TrainingError(f"non-finite loss at step {self.n_steps_}: {parts.as_dict()}")
        self.optimizer_.step(self.params_, grads)
        self.n_steps_ += 1
        return parts

    def fit(self, X, y=None):
        """Train from scratch on ``X`` for ``epochs`` epochs (no replay)."""
        self.initialize()
        batch = ImageBatch(check_array(X, dtype=np.float64), np.zeros(len(X), dtype=np.int64))
        for epoch in range(self.epochs):
            for step, mb in enumerate(iter_batches(batch, self.batch_size, self.batch_rng_)):
                parts = self.train_step(mb.images)
                self.history_.append({"context": -1, "epoch": epoch, "step": step, **parts.as_dict()})
        return self
