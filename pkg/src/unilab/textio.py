"""Plain-text dump formats for tensors, ragged batches and named tensor bundles.

Layouts::

    TENSOR v1 <rows> <cols>
    <row 0 values, space separated, shortest round-trip decimals>
    ...

    RAGGED v1 <modality> <N> <D>
    <N TENSOR blocks>

    PARAMS v1 <count>          (REPS v1 <count> for representation dumps)
    NAME <name>
    <TENSOR or RAGGED block>
    ...

Vectors are written as single-row tensors.
"""

from __future__ import annotations

import itertools

from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import DimensionError
from .numeric import RaggedBatch


class FormatError(DimensionError):
    pass


def _fmt(x: float) -> str:
    # repr of a Python float is the shortest string that round-trips
    return repr(float(x))


def dump_tensor(m) -> str:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise DimensionError(f"cannot dump rank-{m.ndim} tensor")
    lines = [f"TENSOR v1 {m.shape[0]} {m.shape[1]}"]
    lines.extend(" ".join(_fmt(x) for x in row) for row in m)
    return "\n".join(lines) + "\n"


def dump_ragged(batch: RaggedBatch) -> str:
    parts = [f"RAGGED v1 {batch.modality} {batch.n} {batch.d}\n"]
    parts.extend(dump_tensor(s) for s in batch)
    return "".join(parts)


def dump_named(named: dict, header: str = "PARAMS") -> str:
    parts = [f"{header} v1 {len(named)}\n"]
    for name, value in named.items():
        if any(c.isspace() for c in name):
            raise FormatError(f"tensor name may not contain whitespace: {name!r}")
        parts.append(f"NAME {name}\n")
        parts.append(dump_ragged(value) if isinstance(value, RaggedBatch) else dump_tensor(value))
    return "".join(parts)


def _next(lines: Iterator[str], what: str) -> str:
    try:
        return next(lines)
    except StopIteration:
        raise FormatError(f"expected {what}, got end of input") from None


def _header(lines: Iterator[str], kind: str) -> list[str]:
    line = _next(lines, f"{kind} header")
    fields = line.split()
    if len(fields) < 2 or fields[0] != kind or fields[1] != "v1":
        raise FormatError(f"expected '{kind} v1 ...', got {line!r}")
    return fields[2:]


def _read_tensor(lines: Iterator[str]) -> np.ndarray:
    rows, cols = (int(x) for x in _header(lines, "TENSOR"))
    out = np.empty((rows, cols), dtype=np.float64)
    for r in range(rows):
        vals = _next(lines, f"row {r}").split()
        if len(vals) != cols:
            raise FormatError(f"row {r}: expected {cols} values, got {len(vals)}")
        out[r] = [float(v) for v in vals]
    return out


def _read_ragged(lines: Iterator[str]) -> RaggedBatch:
    modality, n, d = _header(lines, "RAGGED")
    samples = [_read_tensor(lines) for _ in range(int(n))]
    batch = RaggedBatch(modality, samples)
    if batch.n and batch.d != int(d):
        raise FormatError(f"header says D={d}, blocks have D={batch.d}")
    return batch


def _lines(text: str) -> Iterator[str]:
    return (ln for ln in text.splitlines() if ln.strip())


def load_tensor(text: str) -> np.ndarray:
    return _read_tensor(_lines(text))


def load_ragged(text: str) -> RaggedBatch:
    return _read_ragged(_lines(text))


def load_named(text: str, header: str = "PARAMS") -> dict:
    lines = _lines(text)
    (count,) = _header(lines, header)
    out = {}
    for _ in range(int(count)):
        fields = _next(lines, "NAME line").split()
        if len(fields) != 2 or fields[0] != "NAME":
            raise FormatError(f"expected 'NAME <name>', got {' '.join(fields)!r}")
        name = fields[1]
        # peek at the block kind
        first = _next(lines, f"block for {name}")
        block = itertools.chain([first], lines)  # plain chain: must not close ``lines``
        out[name] = _read_ragged(block) if first.startswith("RAGGED") else _read_tensor(block)
    return out


def write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def read_text(path) -> str:
    return Path(path).read_text(encoding="utf-8")
