"""Builds models from a :class:`RunConfig` and runs one training mode end to end."""

from __future__ import annotations

from .hopfield import ModernHopfield
from .judge import train_judge
from .replay import ReplaySchedule, RunRecord, lb_model, train_continual, train_control, train_offline_ub
from .vae import VAE

MODES = ("continual", "ub", "control", "lb")


def build_vae(cfg):
    return VAE(
        latent_dim=cfg.latent_dim,
        hidden_dims=cfg.hidden_dims,
        tap_point=cfg.tap_point,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        replay_weighting=cfg.replay_weighting,
        random_state=cfg.seed,
    ).initialize()


def build_memory(cfg):
    return ModernHopfield(beta_scale=cfg.beta_scale, max_iters=cfg.max_iters, tol=cfg.tol)


def build_schedule(cfg):
    return ReplaySchedule(
        storage_fraction=cfg.storage_fraction,
        replay_ratio=cfg.replay_ratio,
        epochs_per_context=cfg.epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        replay_decoder=cfg.replay_decoder,
    )


def run_mode(mode, cfg, train):
    """Train one model; returns ``(vae, memory_or_None, RunRecord)``."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    vae, sched = build_vae(cfg), build_schedule(cfg)
    memory = None
    if mode == "continual":
        memory = build_memory(cfg)
        record = train_continual(vae, memory, sched, train, cfg.seed)
    elif mode == "control":
        record = train_control(vae, sched, train, cfg.seed)
    elif mode == "ub":
        record = train_offline_ub(vae, sched, train, cfg.seed)
    else:
        vae = lb_model(vae)
        record = RunRecord(mode="lb", seed=cfg.seed)
    record.config = cfg.to_dict()
    return vae, memory, record


def score(record, vae, judge, test):
    """Fill in overall and per-class judge accuracy of the mean-path reconstructions."""
    pred = judge.predict(vae.reconstruct(test.images))
    hit = pred == test.labels
    record.final_accuracy = float(hit.mean())
    record.per_class_accuracy = [float(hit[test.labels == c].mean()) for c in range(10)]
    return record


def fit_judge(train, test, min_accuracy=0.97):
    return train_judge(train, test, min_accuracy=min_accuracy)

