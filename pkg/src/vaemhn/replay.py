"""Split-MNIST curriculum with Hopfield-driven generative replay, plus baselines."""

from __future__ import annotations

import copy
import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted, check_X_y

from .data import SPLIT_MNIST, ImageBatch, iter_batches, split_by_context
from .hopfield import ModernHopfield, RetrievalError
from .numerics import make_rng

# "snapshot": replay is decoded by a frozen copy of the decoder taken when the
# context starts; "live": by the decoder being trained.
REPLAY_DECODERS = ("snapshot", "live")
LOSS_COLUMNS = ("context", "epoch", "step", "bce_real", "kl_real", "bce_replay", "kl_replay", "total")


@dataclass
class ReplaySchedule:
    storage_fraction: float = 0.05
    replay_ratio: float = 1.0
    epochs_per_context: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    store_memories: bool = True
    replay_decoder: str = "snapshot"

    def __post_init__(self):
        if self.replay_decoder not in REPLAY_DECODERS:
            raise ValueError(f"replay_decoder must be one of {REPLAY_DECODERS}")
        if not 0.0 < self.storage_fraction <= 1.0:
            raise ValueError("storage_fraction must lie in (0, 1]")
        if self.replay_ratio < 0:
            raise ValueError("replay_ratio must be >= 0")

    def n_replay(self, n_real):
        return math.ceil(self.replay_ratio * n_real)

    def n_stored(self, n_context):
        return math.ceil(self.storage_fraction * n_context)


@dataclass
class RunRecord:
    mode: str
    seed: int
    config: dict = field(default_factory=dict)
    loss_curve: list = field(default_factory=list)
    memory_sizes: list = field(default_factory=list)
    final_accuracy: float | None = None
    per_class_accuracy: list | None = None

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls(**json.load(fh))

    def write_loss_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=LOSS_COLUMNS, extrasaction="ignore")
            writer.writeheader()
            writer.writerows(self.loss_curve)

    def losses(self):
        return np.array([[row[c] for c in LOSS_COLUMNS[3:]] for row in self.loss_curve])


def _ensure_ready(vae, schedule):
    if not hasattr(vae, "encoder_"):
        vae.set_params(learning_rate=schedule.learning_rate, batch_size=schedule.batch_size)
        vae.initialize()
    return vae


def _orchestrator_rngs(seed):
    # separate from the VAE's own streams, which are spawned from the bare seed
    storage, replay = np.random.SeedSequence([seed, 1]).spawn(2)
    return make_rng(storage), make_rng(replay)


def generate_replay(vae, memory, n, rng, tap=None):
    """Settle ``n`` noise cues in ``memory`` and decode them into images (no gradients)."""
    states = memory.sample(n, rng)
    return vae.decode_representation(states, tap)


def train_continual(vae, memory, schedule, train, seed, protocol=SPLIT_MNIST, mode="continual"):
    """Run the class-incremental curriculum and return a :class:`RunRecord`.

    Context 0 trains on real data only. Every later real batch of size ``B`` is
    paired with ``ceil(replay_ratio * B)`` images decoded from settled
    Hopfield states, decoded by the teacher chosen by
    ``schedule.replay_decoder``. After each context a random ``storage_fraction`` of its
    training images is encoded at the VAE's tap point and appended to memory.
    """
    vae = _ensure_ready(vae, schedule)
    storage_rng, replay_rng = _orchestrator_rngs(seed)
    record = RunRecord(mode=mode, seed=seed, config=asdict(schedule))
    for c in range(len(protocol)):
        ctx = split_by_context(train, c, protocol)
        teacher = vae
        if c > 0 and schedule.replay_ratio > 0 and schedule.replay_decoder == "snapshot":
            teacher = copy.deepcopy(vae)
        for epoch in range(schedule.epochs_per_context):
            for step, mb in enumerate(iter_batches(ctx, schedule.batch_size, vae.batch_rng_)):
                x_replay = None
                if c > 0 and schedule.replay_ratio > 0:
                    if memory is None or memory.n_patterns == 0:
                        raise RetrievalError(f"replay requested in context {c} but the memory is empty")
                    x_replay = generate_replay(teacher, memory, schedule.n_replay(len(mb)), replay_rng)
                parts = vae.train_step(mb.images, x_replay)
                record.loss_curve.append({"context": c, "epoch": epoch, "step": step, **parts.as_dict()})
        if schedule.store_memories and memory is not None:
            k = schedule.n_stored(len(ctx))
            chosen = np.sort(storage_rng.choice(len(ctx), size=k, replace=False))
            memory.store(vae.representation(ctx.images[chosen]))
        record.memory_sizes.append(0 if memory is None else memory.n_patterns)
    return record


def train_control(vae, schedule, train, seed, protocol=SPLIT_MNIST):
    """Sequential contexts with neither replay nor memory."""
    control = ReplaySchedule(**{**asdict(schedule), "replay_ratio": 0.0, "store_memories": False})
    return train_continual(vae, None, control, train, seed, protocol, mode="control")


def train_offline_ub(vae, schedule, train, seed):
    """Ordinary VAE training on all classes at once."""
    vae = _ensure_ready(vae, schedule)
    record = RunRecord(mode="ub", seed=seed, config=asdict(schedule))
    for epoch in range(schedule.epochs_per_context):
        for step, mb in enumerate(iter_batches(train, schedule.batch_size, vae.batch_rng_)):
            parts = vae.train_step(mb.images)
            record.loss_curve.append({"context": -1, "epoch": epoch, "step": step, **parts.as_dict()})
    return record


def lb_model(vae):
    """The untrained lower baseline: fresh weights, no optimizer steps."""
    return vae.initialize()


class ContinualVAE(BaseEstimator, TransformerMixin):
    """VAE + Hopfield memory trained class-incrementally with generative replay.

    ``fit(X, y)`` runs the whole curriculum; labels are only used to split the
    data into contexts. ``transform`` returns VAE latent means and ``recall``
    returns the settled Hopfield states for the same inputs.
    """

    def __init__(
        self,
        latent_dim=48,
        hidden_dims=(512, 256),
        tap_point="latent",
        replay_ratio=1.0,
        storage_fraction=0.05,
        epochs=10,
        batch_size=32,
        learning_rate=1e-3,
        replay_weighting="equal",
        replay_decoder="snapshot",
        beta_scale=50.0,
        max_iters=16,
        tol=1e-6,
        contexts=SPLIT_MNIST,
        random_state=0,
    ):
        self.latent_dim = latent_dim
        self.hidden_dims = hidden_dims
        self.tap_point = tap_point
        self.replay_ratio = replay_ratio
        self.storage_fraction = storage_fraction
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.replay_weighting = replay_weighting
        self.replay_decoder = replay_decoder
        self.beta_scale = beta_scale
        self.max_iters = max_iters
        self.tol = tol
        self.contexts = contexts
        self.random_state = random_state

    def schedule(self):
        return ReplaySchedule(
            storage_fraction=self.storage_fraction,
            replay_ratio=self.replay_ratio,
            epochs_per_context=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            replay_decoder=self.replay_decoder,
        )

    def fit(self, X, y):
        from .vae import VAE

        X, y = check_X_y(X, y, dtype=np.float64)
        self.vae_ = VAE(
            latent_dim=self.latent_dim,
            hidden_dims=self.hidden_dims,
            tap_point=self.tap_point,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            replay_weighting=self.replay_weighting,
            input_dim=X.shape[1],
            random_state=self.random_state,
        ).initialize()
        self.memory_ = ModernHopfield(beta_scale=self.beta_scale, max_iters=self.max_iters, tol=self.tol)
        self.record_ = train_continual(
            self.vae_, self.memory_, self.schedule(), ImageBatch(X, y), self.random_state, self.contexts
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "vae_")
        return self.vae_.transform(X)

    def recall(self, X):
        """Hopfield states settled from the inputs' tap-point representations."""
        check_is_fitted(self, "vae_")
        return self.memory_.transform(self.vae_.representation(X))

    def reconstruct(self, X):
        return self.vae_.reconstruct(X)

    def reconstruct_via_memory(self, X):
        return self.vae_.decode_representation(self.recall(X))


def grid_cells(grid):
    keys = ("latent_dim", "replay_ratio", "tap_point")
    values = [list(grid[k]) for k in keys]
    if any(not v for v in values):
        raise ValueError("every grid axis needs at least one value")
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def sweep(grid, seeds, run_cell):
    """Run ``run_cell(cell, seed) -> accuracy`` over the grid x seeds product.

    Returns ``(run_rows, aggregate_rows)``. A failing run is recorded with
    ``status="failed"`` and the sweep carries on.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("sweep needs at least one seed")
    runs, aggregates = [], []
    for cell in grid_cells(grid):
        accs = []
        for seed in seeds:
            try:
                acc = float(run_cell(cell, seed))
                runs.append({**cell, "seed": seed, "accuracy": acc, "status": "ok", "error": ""})
                accs.append(acc)
            except Exception as exc:  # noqa: BLE001 - one bad cell must not end the sweep
                runs.append({**cell, "seed": seed, "accuracy": float("nan"), "status": "failed", "error": repr(exc)})
        aggregates.append(
            {
                **cell,
                "n_ok": len(accs),
                "mean_accuracy": float(np.mean(accs)) if accs else float("nan"),
                "sd_accuracy": float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0,
            }
        )
    return runs, aggregates
