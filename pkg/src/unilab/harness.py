"""Training loop, metric logging and sweeps.

Every run is a pure function of its config: the dataset, the initial
parameters and the mini-batch order all come from PCG64 streams keyed by
the config's seeds, and nothing time-dependent is written to disk.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import losses
from .config import (
    GLOBAL_ONLY, LOVT, UNI_ONLY, ExperimentConfig, coerce, dumps_config, echo_columns,
    format_value, from_flat, parse_pairs, to_flat,
)
from .data import Dataset, generate_dataset
from .errors import ConfigError, DivergenceError, EvaluationError, LabError
from .losses import GAUSS, XENT
from .metrics import CSV_HEADER, MetricRecord, global_alignment, global_uniformity, local_uniformity
from .model import IDENTITY, MODALITIES, EncoderParams, ForwardOutputs, forward, init_params, positiveness_matrix
from .numeric import IMAGE, REPORT, RaggedBatch
from .textio import dump_named, write_text

METRICS_FILE = "metrics.csv"
PARAMS_FILE = "params.txt"
REPS_FILE = "reps.txt"
CONFIG_FILE = "config.txt"
SWEEP_FILE = "sweep.csv"
FAILURES_FILE = "failures.txt"

DEFAULT_GRIDS = {
    GAUSS: {"tau_prime": [0.1, 0.2, 0.3, 0.5, 1.0], "eta": [0.1, 0.25, 0.5]},
    XENT: {"tau_prime": [0.05, 0.1, 0.2, 0.3, 0.5], "eta": [0.25, 0.5, 0.75]},
}


@dataclass
class RunResult:
    final: MetricRecord
    trajectory: list
    seconds: float
    config: ExperimentConfig
    params: EncoderParams | None = None


# ---------------------------------------------------------------- objectives


def objective_loss(out: ForwardOutputs, cfg: ExperimentConfig):
    c = cfg.loss
    g = out.global_reps
    if cfg.objective == GLOBAL_ONLY:
        return ad.scale(losses.global_loss(g, c), c.gamma)
    if cfg.objective == LOVT:
        return losses.lovt_loss(g, out.z_s, out.z_r, out.cross, out.weights, c)
    if cfg.objective == UNI_ONLY:
        c = replace(c, gamma=0.0)
    return losses.lovt_uni_loss(g, out.z_s, out.z_r, c, cfg.variant)


def _as_float(x) -> float:
    return float(ad.value_of(x))


def evaluate(dataset: Dataset, params: EncoderParams, cfg: ExperimentConfig, step: int,
             p_s=None) -> tuple[MetricRecord, ForwardOutputs]:
    """Objective pieces and uniformity/alignment metrics on the whole dataset."""
    out = forward(dataset.batch(), params, cfg.model, p_s, need_cross=cfg.objective == LOVT)
    c = cfg.loss
    uni = losses.UNIFORMITY[cfg.variant]
    ybar_s, ybar_r = np.asarray(out.ybar_s), np.asarray(out.ybar_r)
    rec = MetricRecord(
        step=step,
        loss_total=_as_float(objective_loss(out, cfg)),
        loss_global=_as_float(losses.global_loss(out.global_reps, c)),
        loss_uni_image=_as_float(uni(out.z_s, c.tau_prime)),
        loss_uni_report=_as_float(uni(out.z_r, c.tau_prime)),
        align_global=global_alignment(out.global_reps),
        unif_local_image=local_uniformity(out.y_s, cfg.metric_tau),
        unif_local_report=local_uniformity(out.y_r, cfg.metric_tau),
        unif_global_image=global_uniformity(ybar_s, cfg.unif_t),
        unif_global_report=global_uniformity(ybar_r, cfg.unif_t),
    )
    return rec, out


# ---------------------------------------------------------------- training


def batch_stream(n: int, batch_size: int, seed: int):
    """Endless mini-batches: consecutive chunks of a stream of fresh permutations."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 1])))
    buf = np.empty(0, dtype=np.int64)
    while True:
        while buf.size < batch_size:
            buf = np.concatenate([buf, rng.permutation(n)])
        yield np.sort(buf[:batch_size])
        buf = buf[batch_size:]


def _trainable(params: EncoderParams, cfg: ExperimentConfig, indices) -> list[str]:
    if cfg.model.encoder != IDENTITY:
        return sorted(params)
    # identity encoder: the free representations of this batch plus the pooling
    # queries; projection heads stay the identity
    names = [f"free.{mod}.{i}" for mod in MODALITIES for i in indices]
    names += [n for n in sorted(params) if n.startswith("attn.") or n.endswith(".query")]
    return names


def eval_steps(steps: int, cadence: int) -> list[int]:
    out = list(range(0, steps + 1, cadence))
    if out[-1] != steps:
        out.append(steps)
    return out


def metrics_csv(trajectory, cfg: ExperimentConfig) -> str:
    names, values = echo_columns(cfg)
    lines = [",".join([CSV_HEADER, *names])]
    for rec in trajectory:
        lines.append(",".join(rec.csv_values() + values))
    return "\n".join(lines) + "\n"


def dump_reps(out: ForwardOutputs) -> str:
    def arr(x):
        return np.asarray(ad.value_of(x), dtype=np.float64)
    named = {
        "y_s": RaggedBatch(IMAGE, [arr(y) for y in out.y_s]),
        "y_r": RaggedBatch(REPORT, [arr(y) for y in out.y_r]),
        "ybar_s": arr(out.ybar_s),
        "ybar_r": arr(out.ybar_r),
        "zbar_s": arr(out.zbar_s),
        "zbar_r": arr(out.zbar_r),
    }
    return dump_named(named, header="REPS")


def train(cfg: ExperimentConfig, out_dir=None, dataset: Dataset | None = None) -> RunResult:
    """Plain mini-batch gradient descent on the configured objective."""
    t0 = time.perf_counter()
    dataset = generate_dataset(cfg.dataset) if dataset is None else dataset
    free = None
    if cfg.model.encoder == IDENTITY:
        free = ([s.regions for s in dataset.samples], [s.sentences for s in dataset.samples])
    params = init_params(cfg.model, cfg.seed, free)
    p_s = positiveness_matrix(cfg.dataset.grid_h, cfg.dataset.grid_w, cfg.model.bandwidth)
    need_cross = cfg.objective == LOVT
    checkpoints = set(eval_steps(cfg.steps, cfg.cadence))
    batches = batch_stream(len(dataset), cfg.batch_size, cfg.seed)

    trajectory = []
    rec, out = evaluate(dataset, params, cfg, 0, p_s)
    trajectory.append(rec)
    for step in range(1, cfg.steps + 1):
        idx = next(batches)
        batch = dataset.batch(idx)
        names = _trainable(params, cfg, idx)
        fixed = {k: v for k, v in params.items() if k not in set(names)}

        def builder(leaves):
            o = forward(batch, {**fixed, **leaves}, cfg.model, p_s, need_cross=need_cross)
            return objective_loss(o, cfg)

        try:
            value, grads = ad.grad(builder, {n: params[n] for n in names})
        except EvaluationError as e:
            raise DivergenceError(step, float("nan")) from e
        if not math.isfinite(value):
            raise DivergenceError(step, value)
        if cfg.lr:
            for n in names:
                params[n] = params[n] - cfg.lr * grads[n]
        if step in checkpoints:
            rec, out = evaluate(dataset, params, cfg, step, p_s)
            if not rec.is_finite():
                raise DivergenceError(step, rec.loss_total)
            trajectory.append(rec)

    result = RunResult(trajectory[-1], trajectory, time.perf_counter() - t0, cfg, params)
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        write_text(d / METRICS_FILE, metrics_csv(trajectory, cfg))
        write_text(d / PARAMS_FILE, params.dumps())
        write_text(d / REPS_FILE, dump_reps(out))
        write_text(d / CONFIG_FILE, dumps_config(cfg))
    return result


# ---------------------------------------------------------------- sweeps

# these lead the canonical order so sweep rows come out sorted by them
_LEADING = ("objective", "tau_prime", "eta")


def parse_grid(text: str) -> dict:
    """``key = v1, v2, ...`` lines, same comment rules as config files."""
    grid = {}
    for key, value in parse_pairs(text):
        if key in grid:
            raise ConfigError(f"duplicate grid key {key!r}")
        vals = [coerce(key, v) for v in value.split(",") if v.strip()]
        if not vals:
            raise ConfigError(f"grid key {key!r} has no values")
        grid[key] = vals
    return grid


def default_grid(cfg: ExperimentConfig) -> dict:
    return {k: list(v) for k, v in DEFAULT_GRIDS[cfg.variant].items()}


def _sort_key(v):
    return (v is None, v if v is not None else 0)


def grid_cells(base: ExperimentConfig, grid: dict) -> list[ExperimentConfig]:
    """Cartesian product in canonical order; cell i gets seed base.seed + i."""
    if not grid:
        raise ConfigError("empty sweep grid")
    keys = [k for k in _LEADING if k in grid] + sorted(k for k in grid if k not in _LEADING)
    axes = [sorted(set(grid[k]), key=_sort_key) for k in keys]
    flat = to_flat(base)
    cells = []
    for i, combo in enumerate(itertools.product(*axes)):
        cells.append({**flat, **dict(zip(keys, combo)), "seed": base.seed + i})
    return cells


def _run_cell(args):
    i, flat, out_dir = args
    try:
        cfg = from_flat(flat)
        res = train(cfg, out_dir)
        return i, res.final, None
    except LabError as e:
        return i, None, f"{type(e).__name__}: {e}"


def sweep(base: ExperimentConfig, grid: dict | None = None, out_dir=None, jobs: int = 1) -> list:
    """Train every grid cell; returns ``[(config_flat, MetricRecord | None, error | None)]``.

    A failing cell (bad config or divergence) gets an empty metric row and
    an entry in the failures file; the other cells are unaffected.
    """
    grid = default_grid(base) if grid is None else grid
    cells = grid_cells(base, grid)
    root = None if out_dir is None else Path(out_dir)
    tasks = [(i, flat, None if root is None else root / f"cell_{i:03d}") for i, flat in enumerate(cells)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    results.sort(key=lambda r: r[0])  # assemble in grid order regardless of completion order

    rows = [(cells[i], rec, err) for i, rec, err in results]
    if root is not None:
        root.mkdir(parents=True, exist_ok=True)
        write_text(root / SWEEP_FILE, sweep_csv(rows))
        failures = [f"cell_{i:03d}: {err}\n" for i, (_, _, err) in enumerate(rows) if err]
        write_text(root / FAILURES_FILE, "".join(failures))
    return rows


def sweep_csv(rows) -> str:
    n_metric = len(CSV_HEADER.split(","))
    lines = []
    for flat, rec, err in rows:
        names = [f"cfg_{k}" for k in flat]
        if not lines:
            lines.append(",".join([CSV_HEADER, *names]))
        metric = rec.csv_values() if rec is not None else [""] * n_metric
        values = [format_value(v) for v in flat.values()]
        lines.append(",".join(metric + values))
    return "\n".join(lines) + "\n"
