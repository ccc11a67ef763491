"""MLP digit classifier used to score reconstructions."""

import numpy as np
from scipy.special import log_softmax, softmax
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .numerics import Adam, Dense, spawn_rngs

JUDGE_SEED = 97_58


class JudgeError(RuntimeError):
    """The classifier did not reach the accuracy needed to act as a judge."""


def random_shift(images, max_shift, rng, side=28):
    """Translate each image by an integer offset in [-max_shift, max_shift]^2, zero filled."""
    if max_shift == 0:
        return images
    n = images.shape[0]
    sq = images.reshape(n, side, side)
    pad = np.pad(sq, ((0, 0), (max_shift, max_shift), (max_shift, max_shift)))
    dy = rng.integers(0, 2 * max_shift + 1, size=n)
    dx = rng.integers(0, 2 * max_shift + 1, size=n)
    out = np.empty_like(sq)
    for oy in range(2 * max_shift + 1):
        for ox in range(2 * max_shift + 1):
            sel = (dy == oy) & (dx == ox)
            if sel.any():
                out[sel] = pad[sel, oy : oy + side, ox : ox + side]
    return out.reshape(n, -1)


class MLPJudge(BaseEstimator, ClassifierMixin):
    """784-512-256-10 relu network trained with softmax cross-entropy and Adam.

    Training images are randomly translated by up to ``max_shift`` pixels each
    epoch, which is what lets the small network clear 97% test accuracy on a
    reduced training set. With ``anneal`` the learning rate follows a cosine
    schedule from ``learning_rate`` towards zero, stepped once per epoch.
    """

    def __init__(
        self,
        hidden_dims=(512, 256),
        epochs=60,
        batch_size=128,
        learning_rate=1e-3,
        max_shift=1,
        anneal=True,
        random_state=JUDGE_SEED,
    ):
        self.hidden_dims = hidden_dims
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.max_shift = max_shift
        self.anneal = anneal
        self.random_state = random_state

    def _forward(self, X):
        acts = [X]
        for layer in self.layers_:
            acts.append(layer.forward(acts[-1]))
        return acts

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.arange(10)
        init_rng, order_rng, aug_rng = spawn_rngs(self.random_state, 3)
        widths = [X.shape[1], *self.hidden_dims, 10]
        self.layers_ = [
            Dense.glorot(a, b, "relu" if i < len(widths) - 2 else "identity", init_rng)
            for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))
        ]
        opt = Adam(lr=self.learning_rate)
        params = [p for layer in self.layers_ for p in layer.params]
        onehot = np.eye(10)[y]
        for epoch in range(self.epochs):
            if self.anneal:
                opt.lr = 0.5 * self.learning_rate * (1.0 + np.cos(np.pi * epoch / self.epochs))
            order = order_rng.permutation(len(X))
            for start in range(0, len(X), self.batch_size):
                idx = order[start : start + self.batch_size]
                xb = random_shift(X[idx], self.max_shift, aug_rng)
                acts = self._forward(xb)
                g = (softmax(acts[-1], axis=1) - onehot[idx]) / len(idx)
                grads = []
                for layer, a_in, a_out in zip(
                    reversed(self.layers_), reversed(acts[:-1]), reversed(acts[1:])
                ):
                    g, gw, gb = layer.backward(a_in, g, a_out)
                    grads[:0] = [gw, gb]
                opt.step(params, grads)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "layers_")
        return self._forward(check_array(X, dtype=np.float64))[-1]

    def predict_proba(self, X):
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)

    def log_loss(self, X, y):
        return float(-log_softmax(self.decision_function(X), axis=1)[np.arange(len(y)), y].mean())


def train_judge(train, test, min_accuracy=0.97, **params):
    """Fit the judge on ``train`` and refuse to return it below ``min_accuracy`` on ``test``."""
    judge = MLPJudge(**params).fit(train.images, train.labels)
    acc = judge.score(test.images, test.labels)
    judge.test_accuracy_ = float(acc)
    if acc < min_accuracy:
        raise JudgeError(f"judge test accuracy {acc:.4f} is below the required {min_accuracy:.4f}")
    return judge


def reconstruction_accuracy(model, judge, test):
    """Fraction of test images whose mean-path reconstruction the judge labels correctly."""
    return float(np.mean(judge.predict(model.reconstruct(test.images)) == test.labels))
