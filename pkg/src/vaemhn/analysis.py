"""Pattern-separation and pattern-completion analyses over trained models.

Both analyses compare four representation sources per digit class:

``mhn``             Hopfield states settled from the continual model's codes
``cl_latent``       latent means of the continual (VAE + memory) model
``ub_latent``       latent means of the offline upper-baseline VAE
``control_latent``  latent means of the sequential no-replay VAE

and test the ``mhn`` source against each of the other three per class with
Welch's t-test, Bonferroni-corrected over all ``10 x 3`` comparisons.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from .data import Occlusion, first_n_per_class, occlude
from .ssim import ssim_batch
from .stats import bonferroni, welch_t

SOURCES = ("mhn", "cl_latent", "ub_latent", "control_latent")
BASELINE = "mhn"


@dataclass
class ModelSet:
    """The three trained models an analysis needs."""

    cl_vae: object
    memory: object
    ub_vae: object
    control_vae: object

    def representations(self, X):
        cl_rep = self.cl_vae.representation(X)
        return {
            "mhn": self.memory.transform(cl_rep),
            "cl_latent": self.cl_vae.transform(X),
            "ub_latent": self.ub_vae.transform(X),
            "control_latent": self.control_vae.transform(X),
        }

    def reconstructions(self, X):
        cl_rep = self.cl_vae.representation(X)
        return {
            "mhn": self.cl_vae.decode_representation(self.memory.transform(cl_rep)),
            "cl_latent": self.cl_vae.reconstruct(X),
            "ub_latent": self.ub_vae.reconstruct(X),
            "control_latent": self.control_vae.reconstruct(X),
        }


@dataclass
class ReportRow:
    cls: int
    source: str
    mean: float
    n: int
    t: float = math.nan
    p_raw: float = math.nan
    p_corr: float = math.nan


@dataclass
class AnalysisReport:
    kind: str
    metric: str
    rows: list = field(default_factory=list)

    def row(self, cls, source):
        for r in self.rows:
            if r.cls == cls and r.source == source:
                return r
        raise KeyError((cls, source))

    def comparisons(self):
        return [r for r in self.rows if r.source != BASELINE]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "source", self.metric, "t", "p_raw", "p_corr"])
            for r in self.rows:
                writer.writerow([r.cls, r.source, repr(r.mean), repr(r.t), repr(r.p_raw), repr(r.p_corr)])

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump({"kind": self.kind, "metric": self.metric, "rows": [asdict(r) for r in self.rows]}, fh, indent=2)

    def summary(self):
        lines = [f"{'class':>5}  " + "  ".join(f"{s:>15}" for s in SOURCES)]
        for c in sorted({r.cls for r in self.rows}):
            cells = []
            for s in SOURCES:
                r = self.row(c, s)
                star = "" if s == BASELINE else ("*" if r.p_corr < 1e-3 else " ")
                cells.append(f"{r.mean:14.4f}{star or ' '}")
            lines.append(f"{c:>5}  " + "  ".join(cells))
        lines.append(f"(* Bonferroni-corrected p < 0.001 against {BASELINE}; metric: {self.metric})")
        return "\n".join(lines)


def _compare(kind, metric, samples):
    """``samples[cls][source]`` -> report with MHN-vs-other Welch tests."""
    rows = []
    for c, by_source in samples.items():
        base = by_source[BASELINE]
        rows.append(ReportRow(c, BASELINE, float(np.mean(base)), len(base)))
        for s in SOURCES:
            if s == BASELINE:
                continue
            t, p, _ = welch_t(base, by_source[s])
            rows.append(ReportRow(c, s, float(np.mean(by_source[s])), len(by_source[s]), t, p))
    comps = [r for r in rows if r.source != BASELINE]
    for r, pc in zip(comps, bonferroni([r.p_raw for r in comps])):
        r.p_corr = float(pc)
    return AnalysisReport(kind, metric, rows)


def intra_class_distances(vectors):
    """All ``n(n-1)/2`` pairwise Euclidean distances between rows."""
    return pdist(np.asarray(vectors, dtype=np.float64), metric="euclidean")


def separation_analysis(models, test, n_per_class=128):
    """Mean intra-class Euclidean distance per source, first ``n_per_class`` test images per class."""
    picks = first_n_per_class(test, n_per_class)
    samples = {}
    for c, idx in picks.items():
        reps = models.representations(test.images[idx])
        samples[c] = {s: intra_class_distances(reps[s]) for s in SOURCES}
    return _compare("separation", "mean_dist", samples)


def completion_analysis(models, test, occlusion=Occlusion(), n_per_class=128):
    """SSIM between reconstructions of occluded images and the clean originals."""
    picks = first_n_per_class(test, n_per_class)
    samples = {}
    for c, idx in picks.items():
        clean = test.subset(idx)
        recon = models.reconstructions(occlude(clean, occlusion).images)
        samples[c] = {s: ssim_batch(recon[s], clean.images) for s in SOURCES}
    return _compare("completion", "mean_ssim", samples)


def latent_table(models, test, n_per_class=128):
    """Rows of ``(source, class, index, vector)`` for external projection tools."""
    picks = first_n_per_class(test, n_per_class)
    rows = []
    for c, idx in picks.items():
        reps = models.representations(test.images[idx])
        for s in SOURCES:
            for i, vec in zip(idx, reps[s]):
                rows.append((s, c, int(i), vec))
    return rows


def export_latents(models, test, n_per_class, out_path):
    rows = latent_table(models, test, n_per_class)
    width = max(len(v) for *_, v in rows)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source", "class", "index", *[f"v{k}" for k in range(width)]])
        for s, c, i, vec in rows:
            writer.writerow([s, c, i, *[repr(float(x)) for x in vec]])
    return len(rows)


def read_latents(path):
    """Inverse of :func:`export_latents`: ``{source: (classes, indices, matrix)}``."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for s, c, i, *vals in reader:
            out.setdefault(s, ([], [], []))
            out[s][0].append(int(c))
            out[s][1].append(int(i))
            out[s][2].append([float(v) for v in vals if v != ""])
    return {s: (np.array(c), np.array(i), np.array(m)) for s, (c, i, m) in out.items()}
