"""Versioned checkpoint container.

A checkpoint is a numpy ``.npz`` archive. Entry ``header`` holds a UTF-8 JSON
document (format name, version, estimator parameters, seeds, RNG states);
every other entry is a little-endian float64 array:

    vae/layer/<k>/weight, vae/layer/<k>/bias    layers in encoder, mu-head,
                                                logvar-head, decoder order
    vae/adam/m/<j>, vae/adam/v/<j>              optimizer moments per parameter
    mhn/patterns                                stored Hopfield patterns
    judge/layer/<k>/weight, judge/layer/<k>/bias

Writes go to a temporary file that is renamed into place.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .hopfield import ModernHopfield
from .judge import MLPJudge
from .numerics import Dense
from .vae import VAE

FORMAT = "vaemhn-checkpoint"
VERSION = 1
F8 = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _jsonable(params):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()}


def _vae_arrays(vae):
    arrays = {}
    for k, layer in enumerate(vae.layers_):
        arrays[f"vae/layer/{k}/weight"] = layer.weights
        arrays[f"vae/layer/{k}/bias"] = layer.bias
    for j, (m, v) in enumerate(zip(vae.optimizer_.m, vae.optimizer_.v)):
        arrays[f"vae/adam/m/{j}"] = m
        arrays[f"vae/adam/v/{j}"] = v
    return arrays


def save(path, vae=None, memory=None, judge=None, meta=None):
    """Write any combination of VAE, Hopfield memory and judge to ``path`` atomically."""
    header = {"format": FORMAT, "version": VERSION, "meta": meta or {}}
    arrays = {}
    if vae is not None:
        header["vae"] = {
            "params": _jsonable(vae.get_params()),
            "n_steps": vae.n_steps_,
            "adam_steps": vae.optimizer_.step_count,
            "rng": {
                "noise": vae.noise_rng_.bit_generator.state,
                "batch": vae.batch_rng_.bit_generator.state,
            },
        }
        arrays.update(_vae_arrays(vae))
    if memory is not None:
        header["mhn"] = {"params": memory.get_params(), "n_patterns": memory.n_patterns}
        if memory.n_patterns:
            arrays["mhn/patterns"] = memory.patterns_
            header["mhn"]["beta"] = memory.beta_
    if judge is not None:
        header["judge"] = {
            "params": _jsonable(judge.get_params()),
            "activations": [layer.activation for layer in judge.layers_],
            "test_accuracy": getattr(judge, "test_accuracy_", None),
        }
        for k, layer in enumerate(judge.layers_):
            arrays[f"judge/layer/{k}/weight"] = layer.weights
            arrays[f"judge/layer/{k}/bias"] = layer.bias
    payload = {k: np.ascontiguousarray(v, dtype=F8) for k, v in arrays.items()}
    payload["header"] = np.frombuffer(json.dumps(header, default=_json_default).encode(), dtype=np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _restore_params(params):
    return {k: tuple(v) if isinstance(v, list) else v for k, v in params.items()}


def load(path):
    """Return ``{"vae": VAE | None, "memory": ModernHopfield | None, "judge": MLPJudge | None, "meta": dict}``."""
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"{path}: not a checkpoint archive ({exc})") from exc
    with archive:
        if "header" not in archive.files:
            raise CheckpointError(f"{path}: missing header entry")
        header = json.loads(archive["header"].tobytes().decode())
        if header.get("format") != FORMAT:
            raise CheckpointError(f"{path}: unknown format {header.get('format')!r}")
        if header.get("version") != VERSION:
            raise CheckpointError(f"{path}: unsupported version {header.get('version')}")
        out = {"vae": None, "memory": None, "judge": None, "meta": header.get("meta", {})}
        if "vae" in header:
            h = header["vae"]
            vae = VAE(**_restore_params(h["params"])).initialize()
            for k, layer in enumerate(vae.layers_):
                layer.weights[...] = archive[f"vae/layer/{k}/weight"]
                layer.bias[...] = archive[f"vae/layer/{k}/bias"]
            n_moments = sum(1 for f in archive.files if f.startswith("vae/adam/m/"))
            vae.optimizer_.m = [archive[f"vae/adam/m/{j}"].copy() for j in range(n_moments)]
            vae.optimizer_.v = [archive[f"vae/adam/v/{j}"].copy() for j in range(n_moments)]
            vae.optimizer_.step_count = h["adam_steps"]
            vae.n_steps_ = h["n_steps"]
            vae.noise_rng_.bit_generator.state = h["rng"]["noise"]
            vae.batch_rng_.bit_generator.state = h["rng"]["batch"]
            out["vae"] = vae
        if "mhn" in header:
            memory = ModernHopfield(**header["mhn"]["params"])
            if header["mhn"]["n_patterns"]:
                memory.store(archive["mhn/patterns"])
            out["memory"] = memory
        if "judge" in header:
            h = header["judge"]
            judge = MLPJudge(**_restore_params(h["params"]))
            judge.layers_ = [
                Dense(archive[f"judge/layer/{k}/weight"], archive[f"judge/layer/{k}/bias"], act)
                for k, act in enumerate(h["activations"])
            ]
            judge.classes_ = np.arange(10)
            if h["test_accuracy"] is not None:
                judge.test_accuracy_ = h["test_accuracy"]
            out["judge"] = judge
    return out
