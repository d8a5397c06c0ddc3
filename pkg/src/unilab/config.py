"""Experiment configuration and its flat ``key = value`` text format."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

from .data import SyntheticDatasetSpec
from .errors import ConfigError
from .losses import GAUSS, XENT, LossConfig
from .model import IDENTITY, ModelConfig

GLOBAL_ONLY = "global_only"
LOVT = "lovt"
LOVT_UNI_GAUSS = "lovt_uni_gauss"
LOVT_UNI_XENT = "lovt_uni_xent"
UNI_ONLY = "uni_only"
OBJECTIVES = (GLOBAL_ONLY, LOVT, LOVT_UNI_GAUSS, LOVT_UNI_XENT, UNI_ONLY)

SEED_ENV = "LAB_SEED"


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: SyntheticDatasetSpec = field(default_factory=SyntheticDatasetSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    objective: str = LOVT_UNI_GAUSS
    uni_variant: str = GAUSS  # only read by uni_only
    lr: float = 0.1
    steps: int = 500
    batch_size: int = 64
    cadence: int = 50
    tau_metric: float | None = None  # None: follow loss.tau_prime
    unif_t: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"unknown objective {self.objective!r}; choose from {', '.join(OBJECTIVES)}")
        if self.uni_variant not in (GAUSS, XENT):
            raise ConfigError(f"unknown uniformity variant {self.uni_variant!r}")
        if not self.lr >= 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.lr}")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if not 1 <= self.batch_size <= self.dataset.n_total:
            raise ConfigError(f"batch_size must lie in [1, n_total={self.dataset.n_total}]")
        if self.cadence < 1:
            raise ConfigError("cadence must be >= 1")
        if self.tau_metric is not None and not self.tau_metric > 0:
            raise ConfigError("tau_metric must be > 0")
        if not self.unif_t > 0:
            raise ConfigError("unif_t must be > 0")
        if self.model.d_input != self.dataset.d_input:
            raise ConfigError("model.d_input must equal dataset.d_input")
        if self.objective in (LOVT_UNI_GAUSS, LOVT_UNI_XENT, UNI_ONLY) and not self.loss.eta > 0:
            raise ConfigError(f"objective {self.objective} needs eta > 0")
        if self.objective == LOVT and not (self.loss.mu > 0 or self.loss.nu > 0):
            raise ConfigError("objective lovt needs mu > 0 or nu > 0")
        if self.model.encoder == IDENTITY and self.objective == LOVT:
            raise ConfigError("the identity encoder supports global and uniformity objectives only")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def variant(self) -> str:
        """Uniformity variant used by the objective (and logged for every objective)."""
        if self.objective == LOVT_UNI_XENT:
            return XENT
        if self.objective == LOVT_UNI_GAUSS:
            return GAUSS
        return self.uni_variant

    @property
    def metric_tau(self) -> float:
        return self.loss.tau_prime if self.tau_metric is None else self.tau_metric

    def with_values(self, **flat) -> "ExperimentConfig":
        return from_flat({**to_flat(self), **flat})


# flat key -> (section, field name); sections: dataset, model, loss, top
_SECTIONS = {
    "dataset": SyntheticDatasetSpec,
    "model": ModelConfig,
    "loss": LossConfig,
}
_RENAMED = {"data_seed": ("dataset", "seed")}
_DERIVED = {("model", "d_input")}  # mirrors dataset.d_input

_TYPES = {
    "d_proj": (int, True),
    "tau_attn": (float, True),
    "tau_metric": (float, True),
}


def _keymap():
    out = dict(_RENAMED)
    for section, cls in _SECTIONS.items():
        for f in fields(cls):
            if (section, f.name) in _DERIVED or (section == "dataset" and f.name == "seed"):
                continue
            out[f.name] = (section, f.name)
    for f in fields(ExperimentConfig):
        if f.name not in _SECTIONS:
            out[f.name] = ("top", f.name)
    return out


KEYS = _keymap()


def to_flat(cfg: ExperimentConfig) -> dict:
    out = {}
    for key, (section, name) in KEYS.items():
        obj = cfg if section == "top" else getattr(cfg, section)
        out[key] = getattr(obj, name)
    return out


def from_flat(flat: dict) -> ExperimentConfig:
    unknown = set(flat) - set(KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    parts = {s: {} for s in (*_SECTIONS, "top")}
    for key, value in flat.items():
        section, name = KEYS[key]
        parts[section][name] = value
    dataset = SyntheticDatasetSpec(**parts["dataset"])
    model = ModelConfig(d_input=dataset.d_input, **parts["model"])
    loss = LossConfig(**parts["loss"])
    return ExperimentConfig(dataset=dataset, model=model, loss=loss, **parts["top"])


def _default_of(key):
    section, name = KEYS[key]
    cls = ExperimentConfig if section == "top" else _SECTIONS[section]
    for f in fields(cls):
        if f.name == name:
            return f.default
    raise KeyError(key)


def coerce(key: str, text: str):
    if key not in KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    text = text.strip()
    typ, optional = _TYPES.get(key, (None, False))
    if typ is None:
        typ = type(_default_of(key))
    if optional and text.lower() == "none":
        return None
    try:
        if typ is bool:
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        return typ(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {typ.__name__}") from None


def parse_pairs(text: str) -> list[tuple[str, str]]:
    """``key = value`` lines; ``#`` starts a comment; blank lines are skipped."""
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        pairs.append((key, value))
    return pairs


def parse_config(text: str, env: dict | None = None) -> ExperimentConfig:
    flat = {}
    for key, value in parse_pairs(text):
        if key in flat:
            raise ConfigError(f"duplicate key {key!r}")
        flat[key] = coerce(key, value)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        flat["seed"] = coerce("seed", env[SEED_ENV])
    return from_flat(flat)


def load_config(path, env: dict | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), env)


def format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return "none" if v is None else str(v).lower() if isinstance(v, bool) else str(v)


def dumps_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in to_flat(cfg).items())


def echo_columns(cfg: ExperimentConfig) -> tuple[list[str], list[str]]:
    flat = to_flat(cfg)
    return [f"cfg_{k}" for k in flat], [format_value(v) for v in flat.values()]


__all__ = [
    "ExperimentConfig", "OBJECTIVES", "parse_config", "load_config", "dumps_config",
    "to_flat", "from_flat", "echo_columns",
]
