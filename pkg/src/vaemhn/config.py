"""Run configuration: JSON file values, overridden by explicit command-line flags."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

from .replay import REPLAY_DECODERS
from .vae import REPLAY_WEIGHTINGS, TAP_POINTS


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    latent_dim: int = 48
    hidden_dims: tuple = (512, 256)
    tap_point: str = "latent"
    replay_ratio: float = 1.0
    storage_fraction: float = 0.05
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    replay_weighting: str = "equal"
    replay_decoder: str = "snapshot"
    beta_scale: float = 50.0
    max_iters: int = 16
    tol: float = 1e-6
    n_per_class: int = 128
    data_dir: str | None = None

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        checks = [
            (self.tap_point in TAP_POINTS, f"tap_point must be one of {TAP_POINTS}"),
            (self.replay_weighting in REPLAY_WEIGHTINGS, f"replay_weighting must be one of {REPLAY_WEIGHTINGS}"),
            (self.replay_decoder in REPLAY_DECODERS, f"replay_decoder must be one of {REPLAY_DECODERS}"),
            (self.latent_dim > 0 and all(h > 0 for h in self.hidden_dims), "layer widths must be positive"),
            (self.replay_ratio >= 0, "replay_ratio must be >= 0"),
            (0 < self.storage_fraction <= 1, "storage_fraction must lie in (0, 1]"),
            (self.epochs > 0 and self.batch_size > 0, "epochs and batch_size must be positive"),
            (self.learning_rate >= 0 and self.beta_scale > 0, "learning_rate >= 0 and beta_scale > 0 required"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path=None, overrides=None):
        """Defaults < JSON file < overrides (``None`` override values are ignored)."""
        values = {}
        if path is not None:
            try:
                with open(path) as fh:
                    values = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(values, dict):
                raise ConfigError(f"{path}: top level must be a JSON object")
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(values)

    def to_dict(self):
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
