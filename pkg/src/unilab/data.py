"""Synthetic paired image/report data with known region-to-sentence ground truth.

Each sample has ``M_i`` sentences about ``T_i <= M_i`` latent topics: a
sentence either introduces a new topic or, with probability ``restate_prob``,
restates an earlier one. A sentence is its topic blended with the sample's
mean topic, plus a fixed code for its ordinal position, plus noise. An image
is an ``H x W`` grid whose cells are split among the topics by a random
Voronoi partition; each region shows its own topic (blended the same way,
with its own mixing weight) seen through a fixed image-side rotation, plus a
fixed code for its grid cell, plus noise.
Position codes carry no sample identity, so a global objective can ignore
them while a per-sample uniformity objective can use them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numeric import IMAGE, REPORT, RaggedBatch
from .textio import dump_named, load_named


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    n_total: int = 256
    grid_h: int = 4
    grid_w: int = 4
    m_min: int = 2
    m_max: int = 4
    d_latent: int = 8
    d_input: int = 16
    noise_sigma: float = 0.1
    region_mix: float = 0.25
    report_mix: float = 0.25
    restate_prob: float = 0.5
    position_scale: float = 0.5
    orthonormal_topics: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_total < 1:
            raise ConfigError("n_total must be >= 1")
        if self.grid_h < 1 or self.grid_w < 1:
            raise ConfigError("grid sides must be >= 1")
        if not 1 <= self.m_min <= self.m_max:
            raise ConfigError(f"need 1 <= m_min <= m_max, got [{self.m_min}, {self.m_max}]")
        if self.m_max > self.k:
            raise ConfigError(f"m_max ({self.m_max}) cannot exceed the number of regions ({self.k})")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.position_scale < 0:
            raise ConfigError("position_scale must be >= 0")
        for name in ("region_mix", "report_mix", "restate_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.d_latent > self.d_input:
            raise ConfigError("d_latent cannot exceed d_input")
        if self.orthonormal_topics and self.m_max > self.d_latent:
            raise ConfigError("orthonormal topics need m_max <= d_latent")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def k(self) -> int:
        return self.grid_h * self.grid_w


@dataclass(frozen=True)
class Sample:
    regions: np.ndarray      # K x d_input
    sentences: np.ndarray    # M x d_input
    assignment: np.ndarray   # K, topic index of each region
    topics: np.ndarray       # T x d_input, T <= M distinct topics
    sentence_topics: np.ndarray  # M, topic index of each sentence


@dataclass(frozen=True)
class Batch:
    regions: list
    sentences: list
    indices: tuple


@dataclass(frozen=True)
class Dataset:
    spec: SyntheticDatasetSpec
    samples: tuple

    def __len__(self):
        return len(self.samples)

    @property
    def images(self) -> RaggedBatch:
        return RaggedBatch(IMAGE, [s.regions for s in self.samples])

    @property
    def reports(self) -> RaggedBatch:
        return RaggedBatch(REPORT, [s.sentences for s in self.samples])

    def batch(self, indices=None) -> Batch:
        idx = tuple(range(len(self.samples))) if indices is None else tuple(int(i) for i in indices)
        return Batch([self.samples[i].regions for i in idx],
                     [self.samples[i].sentences for i in idx], idx)

    def dumps(self) -> str:
        return dump_named({"images": self.images, "reports": self.reports}, header="DATASET")


def load_dataset_batches(text: str) -> tuple[RaggedBatch, RaggedBatch]:
    named = load_named(text, header="DATASET")
    return named["images"], named["reports"]


def grid_coordinates(h: int, w: int) -> np.ndarray:
    """(row, col) of each cell in row-major order."""
    return np.array([divmod(k, w) for k in range(h * w)], dtype=np.float64)


def partition_grid(h: int, w: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Assign every cell to one of ``m`` random seed cells (nearest seed, lowest index on ties)."""
    coords = grid_coordinates(h, w)
    seeds = rng.choice(h * w, size=m, replace=False)
    d2 = np.sum((coords[:, None, :] - coords[seeds][None, :, :]) ** 2, axis=-1)
    return np.argmin(d2, axis=1)


def _orthonormal_columns(rng, rows, cols):
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    # fix the sign ambiguity so the draw is a deterministic function of the rng
    return q * np.sign(np.diag(r))


def _unit_rows(m):
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def generate_dataset(spec: SyntheticDatasetSpec) -> Dataset:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    basis = _orthonormal_columns(rng, spec.d_input, spec.d_latent)      # latent -> input
    image_view = _orthonormal_columns(rng, spec.d_input, spec.d_input)  # fixed rotation
    # fixed position codes: one per grid cell, one per sentence ordinal
    cell_code = _unit_rows(rng.standard_normal((spec.k, spec.d_input))) * spec.position_scale
    ordinal_code = _unit_rows(rng.standard_normal((spec.m_max, spec.d_input))) * spec.position_scale
    samples = []
    for _ in range(spec.n_total):
        m = int(rng.integers(spec.m_min, spec.m_max + 1))
        # each sentence after the first restates an earlier topic with restate_prob
        sentence_topics = [0]
        for _ in range(m - 1):
            n_topics = max(sentence_topics) + 1
            if rng.random() < spec.restate_prob:
                sentence_topics.append(int(rng.integers(n_topics)))
            else:
                sentence_topics.append(n_topics)
        sentence_topics = np.array(sentence_topics)
        t = int(sentence_topics.max()) + 1
        if spec.orthonormal_topics:
            coef = _orthonormal_columns(rng, spec.d_latent, t).T
        else:
            coef = rng.standard_normal((t, spec.d_latent))
            coef /= np.linalg.norm(coef, axis=1, keepdims=True)
        topics = coef @ basis.T
        assignment = partition_grid(spec.grid_h, spec.grid_w, t, rng)
        mean_topic = topics.mean(axis=0)
        clean = (1.0 - spec.region_mix) * topics[assignment] + spec.region_mix * mean_topic
        regions = clean @ image_view + cell_code + spec.noise_sigma * rng.standard_normal((spec.k, spec.d_input))
        said = (1.0 - spec.report_mix) * topics[sentence_topics] + spec.report_mix * mean_topic
        sentences = said + ordinal_code[:m] + spec.noise_sigma * rng.standard_normal((m, spec.d_input))
        samples.append(Sample(regions, sentences, assignment, topics, sentence_topics))
    return Dataset(spec, tuple(samples))
