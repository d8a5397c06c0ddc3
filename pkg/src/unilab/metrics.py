"""Uniformity and alignment measurements on (pre-projection) representations."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import losses
from .errors import EmptyBatchError
from .numeric import cosine_matrix, logsumexp, normalize_rows_unit

CSV_HEADER = (
    "step,loss_total,loss_global,loss_uni_image,loss_uni_report,align_global,"
    "unif_local_image,unif_local_report,unif_global_image,unif_global_report"
)

# exponent scale of the Gaussian potential in the global uniformity measure
DEFAULT_T = 2.0


def local_uniformity(y, tau_metric: float) -> float:
    """Negated per-sample Gaussian uniformity; ranges from -1/tau (collapse) upward."""
    return -losses.uni_gauss(y, tau_metric)


def global_uniformity(y_bar, t: float = DEFAULT_T) -> float:
    """-log mean_{i,j} exp(-t ||y_i - y_j||^2) over unit-normalized rows, i == j included."""
    y = normalize_rows_unit(y_bar)
    n = y.shape[0]
    if n < 2:
        raise EmptyBatchError(f"global uniformity needs at least two samples, got {n}")
    diff = y[:, None, :] - y[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)
    return -(logsumexp(-t * d2) - 2.0 * math.log(n))


def global_alignment(g: losses.GlobalReps) -> float:
    """Mean cosine between paired pooled image and report representations."""
    c = cosine_matrix(np.asarray(g.zg_s), np.asarray(g.zg_r))
    return float(np.mean(np.diag(c)))


@dataclass(frozen=True)
class MetricRecord:
    step: int
    loss_total: float
    loss_global: float
    loss_uni_image: float
    loss_uni_report: float
    align_global: float
    unif_local_image: float
    unif_local_report: float
    unif_global_image: float
    unif_global_report: float

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for k, v in asdict(self).items() if k != "step")

    def csv_values(self) -> list[str]:
        return [str(self.step)] + [repr(float(getattr(self, f.name))) for f in fields(self)[1:]]


assert CSV_HEADER.split(",") == [f.name for f in fields(MetricRecord)]
