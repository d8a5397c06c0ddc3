"""Small two-tower encoder: local MLPs, attention pooling, projection heads, cross attention.

Everything is written with :mod:`unilab.autodiff` ops so a forward pass can
run on plain arrays or on a tape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import Batch, grid_coordinates
from .errors import ConfigError, DimensionError
from .losses import CrossReps, GlobalReps, WeightSet
from .numeric import IMAGE, REPORT, RaggedBatch
from .textio import dump_named, load_named

MLP = "mlp"
IDENTITY = "identity"
SIMPLIFIED = "simplified"
FULL = "full"
POOLING = "pooling"
UNIFORM = "uniform"

MODALITIES = (IMAGE, REPORT)


def positiveness_matrix(h: int, w: int, bandwidth: float = 1.0) -> np.ndarray:
    """Row-normalized Gaussian kernel over grid distance between region cells."""
    if h < 1 or w < 1:
        raise ConfigError("grid sides must be >= 1")
    if not bandwidth > 0:
        raise ConfigError("bandwidth must be > 0")
    coords = grid_coordinates(h, w)
    d2 = np.sum((coords[:, None, :] - coords[None, :, :]) ** 2, axis=-1)
    kernel = np.exp(-d2 / (2.0 * bandwidth**2))
    return kernel / kernel.sum(axis=1, keepdims=True)


def attention_pool(locals_, query):
    """Softmax(locals @ query)-weighted sum of rows; returns ``(pooled, weights)``."""
    n = locals_.shape[0]
    if n == 0:
        raise DimensionError("attention pooling over zero rows")
    scores = ad.reshape(ad.matmul(locals_, query), (1, n))
    weights = ad.reshape(ad.softmax_rows(scores), (n,))
    return ad.matmul(weights, locals_), weights


def cross_attention(queries, keys_values, tau_attn: float, projections=None):
    """Rows of ``queries`` attend over rows of ``keys_values``; returns ``(outputs, alpha)``.

    ``projections`` is an optional ``(w_q, w_k, w_v)`` triple (the full mode);
    without it the attention is the plain weighted sum of the other modality's rows.
    """
    if projections is None:
        q, k, v = queries, keys_values, keys_values
    else:
        w_q, w_k, w_v = projections
        q, k, v = ad.matmul(queries, w_q), ad.matmul(keys_values, w_k), ad.matmul(keys_values, w_v)
    alpha = ad.softmax_rows(ad.matmul(q, ad.transpose(k)), tau_attn)
    return ad.matmul(alpha, v), alpha


@dataclass(frozen=True)
class ModelConfig:
    d_input: int = 16
    d_hidden: int = 32
    d_rep: int = 16
    d_proj: int | None = None
    shared_heads: bool = True
    encoder: str = MLP
    cross_attention: str = SIMPLIFIED
    tau_attn: float | None = None
    weights: str = POOLING
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.encoder not in (MLP, IDENTITY):
            raise ConfigError(f"unknown encoder {self.encoder!r}")
        if self.cross_attention not in (SIMPLIFIED, FULL):
            raise ConfigError(f"unknown cross attention mode {self.cross_attention!r}")
        if self.weights not in (POOLING, UNIFORM):
            raise ConfigError(f"unknown weights mode {self.weights!r}")
        if min(self.d_input, self.d_hidden, self.d_rep, self.proj_dim) < 1:
            raise ConfigError("all dimensions must be >= 1")
        if self.tau_attn is not None and not self.tau_attn > 0:
            raise ConfigError("tau_attn must be > 0")
        if not self.bandwidth > 0:
            raise ConfigError("bandwidth must be > 0")

    @property
    def proj_dim(self) -> int:
        return self.d_rep if self.d_proj is None else self.d_proj

    @property
    def attn_temperature(self) -> float:
        return math.sqrt(self.proj_dim) if self.tau_attn is None else self.tau_attn


class EncoderParams(dict):
    """Named parameter tensors. Shared heads use ``<mod>.proj``; unshared use
    ``<mod>.proj_local`` and ``<mod>.proj_global``."""

    @property
    def shared(self) -> bool:
        return f"{IMAGE}.proj" in self

    def head(self, modality: str, which: str):
        if self.shared:
            return self[f"{modality}.proj"]
        return self[f"{modality}.proj_{which}"]

    def copy(self) -> "EncoderParams":
        return EncoderParams({k: np.array(v, copy=True) for k, v in self.items()})

    def dumps(self) -> str:
        return dump_named({k: self[k] for k in sorted(self)}, header="PARAMS")

    @classmethod
    def loads(cls, text: str, shapes: dict | None = None) -> "EncoderParams":
        out = cls(load_named(text, header="PARAMS"))
        for name, shape in (shapes or {}).items():
            out[name] = out[name].reshape(shape)
        return out

    def shapes(self) -> dict:
        return {k: np.shape(v) for k, v in self.items()}


def init_params(cfg: ModelConfig, seed: int, free_reps: tuple[list, list] | None = None) -> EncoderParams:
    """Scaled-normal initialisation; identity encoders start from ``free_reps``."""
    rng = np.random.Generator(np.random.PCG64(seed))
    p = EncoderParams()
    d_rep, d_proj = cfg.d_rep, cfg.proj_dim
    if cfg.encoder == MLP:
        for mod in MODALITIES:
            p[f"{mod}.w1"] = rng.standard_normal((cfg.d_input, cfg.d_hidden)) / math.sqrt(cfg.d_input)
            p[f"{mod}.b1"] = np.zeros(cfg.d_hidden)
            p[f"{mod}.w2"] = rng.standard_normal((cfg.d_hidden, d_rep)) / math.sqrt(cfg.d_hidden)
    else:
        if free_reps is None:
            raise ConfigError("identity encoder needs initial representations")
        if cfg.d_input != d_rep:
            raise ConfigError("identity encoder needs d_input == d_rep")
        for mod, reps in zip(MODALITIES, free_reps):
            for i, r in enumerate(reps):
                p[f"free.{mod}.{i}"] = np.array(r, dtype=np.float64)
    for mod in MODALITIES:
        p[f"{mod}.query"] = rng.standard_normal(d_rep) / math.sqrt(d_rep)
        heads = ("proj",) if cfg.shared_heads else ("proj_local", "proj_global")
        for h in heads:
            if cfg.encoder == IDENTITY:
                p[f"{mod}.{h}"] = np.eye(d_rep, d_proj)
            else:
                p[f"{mod}.{h}"] = rng.standard_normal((d_rep, d_proj)) / math.sqrt(d_rep)
    if cfg.cross_attention == FULL:
        for direction in ("rs", "sr"):
            for part in ("q", "k", "v"):
                p[f"attn.{direction}.{part}"] = np.eye(d_proj)
    return p


@dataclass
class ForwardOutputs:
    y_s: RaggedBatch
    y_r: RaggedBatch
    ybar_s: object
    ybar_r: object
    z_s: RaggedBatch
    z_r: RaggedBatch
    zbar_s: object
    zbar_r: object
    cross: CrossReps | None
    weights: WeightSet

    @property
    def global_reps(self) -> GlobalReps:
        return GlobalReps(self.zbar_s, self.zbar_r)


def _split_rows(stacked, sizes):
    out, start = [], 0
    for n in sizes:
        out.append(ad.getitem(stacked, slice(start, start + n)))
        start += n
    return out


def _encode(params, mod, x):
    h = ad.tanh(ad.add(ad.matmul(x, params[f"{mod}.w1"]), params[f"{mod}.b1"]))
    return ad.matmul(h, params[f"{mod}.w2"])


def forward(batch: Batch, params: EncoderParams, cfg: ModelConfig, p_s=None,
            need_cross: bool = True) -> ForwardOutputs:
    """Full pass from raw inputs to every representation the losses consume.

    ``params`` may hold arrays or tape variables (a plain dict works too).
    """
    if not isinstance(params, EncoderParams):
        params = EncoderParams(params)
    k = batch.regions[0].shape[0]
    if any(r.shape[0] != k for r in batch.regions):
        raise DimensionError("all images in a batch must share K")
    sizes = {IMAGE: [k] * len(batch.regions), REPORT: [s.shape[0] for s in batch.sentences]}
    raw = {IMAGE: batch.regions, REPORT: batch.sentences}

    locals_, pooled, weights, z_local = {}, {}, {}, {}
    for mod in MODALITIES:
        if cfg.encoder == MLP:
            x = np.concatenate(raw[mod], axis=0)
            if x.shape[1] != cfg.d_input:
                raise DimensionError(f"{mod} inputs have {x.shape[1]} features, model expects {cfg.d_input}")
            y_all = _encode(params, mod, x)
            ys = _split_rows(y_all, sizes[mod])
        else:
            ys = [params[f"free.{mod}.{i}"] for i in batch.indices]
            y_all = ad.concat_rows(ys)
        pools, ws = [], []
        for y in ys:
            pv, wv = attention_pool(y, params[f"{mod}.query"])
            pools.append(pv)
            ws.append(wv)
        locals_[mod] = ys
        pooled[mod] = ad.concat_rows(pools)
        weights[mod] = ws if cfg.weights == POOLING else [np.full(n, 1.0 / n) for n in sizes[mod]]
        z_local[mod] = _split_rows(ad.matmul(y_all, params.head(mod, "local")), sizes[mod])

    zbar = {mod: ad.matmul(pooled[mod], params.head(mod, "global")) for mod in MODALITIES}

    cross, alpha_rs, alpha_sr = None, None, None
    if need_cross:
        tau = cfg.attn_temperature
        proj = {d: None for d in ("rs", "sr")}
        if cfg.cross_attention == FULL:
            proj = {d: tuple(params[f"attn.{d}.{part}"] for part in "qkv") for d in ("rs", "sr")}
        z_rs, z_sr, alpha_rs, alpha_sr = [], [], [], []
        for zs_i, zr_i in zip(z_local[IMAGE], z_local[REPORT]):
            out, a = cross_attention(zs_i, zr_i, tau, proj["rs"])
            z_rs.append(out)
            alpha_rs.append(a)
            out, a = cross_attention(zr_i, zs_i, tau, proj["sr"])
            z_sr.append(out)
            alpha_sr.append(a)
        cross = CrossReps(z_rs, z_sr)

    if p_s is None:
        p_s = np.eye(k)
    wset = WeightSet(weights[IMAGE], weights[REPORT], p_s, alpha_rs, alpha_sr)
    return ForwardOutputs(
        y_s=RaggedBatch(IMAGE, locals_[IMAGE]),
        y_r=RaggedBatch(REPORT, locals_[REPORT]),
        ybar_s=pooled[IMAGE],
        ybar_r=pooled[REPORT],
        z_s=RaggedBatch(IMAGE, z_local[IMAGE]),
        z_r=RaggedBatch(REPORT, z_local[REPORT]),
        zbar_s=zbar[IMAGE],
        zbar_r=zbar[REPORT],
        cross=cross,
        weights=wset,
    )
