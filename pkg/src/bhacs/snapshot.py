"""Binary field snapshots.

Layout (all little endian)::

    b"BHACS1\\n"
    u32 n, u32 meta_len, meta_len bytes of UTF-8 JSON (metric spec, creation metadata)
    f64 e2, f64 e1, 6 x f64 Chern periods (NaN when the metric is not flat)
    n^4 * 16 f64 values, grid index (i1, i2, i3, i4) lexicographic, then row-major 4x4
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import DIM, Grid, MetricField, _metric

MAGIC = b"BHACS1\n"
_HEAD = struct.Struct("<II")
_SCALARS = struct.Struct("<8d")


class SnapshotFormatError(ValueError):
    pass


@dataclass
class Snapshot:
    J: np.ndarray
    metric_spec: str
    e2: float
    e1: float
    periods: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.J.shape[0]

    @property
    def grid(self) -> Grid:
        return Grid(self.n)


def parse_metric_spec(spec: str) -> MetricField:
    """``flat``, four diagonal entries or sixteen row-major entries (comma separated)."""
    spec = spec.strip()
    if spec in ("", "flat"):
        return MetricField.flat()
    try:
        vals = [float(v) for v in spec.replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise ValueError(f"bad metric spec {spec!r}") from exc
    if len(vals) == DIM:
        return MetricField(np.diag(vals))
    if len(vals) == DIM * DIM:
        return MetricField(np.array(vals).reshape(DIM, DIM))
    raise ValueError(f"metric spec needs 'flat', 4 or 16 numbers, got {len(vals)}")


def summarize(J: np.ndarray, metric: MetricField):
    from .energy import energy_e1, energy_e2_value
    from .topology import periods

    e2 = energy_e2_value(J, metric)
    e1 = energy_e1(J, metric)
    p = periods(J, metric) if metric.is_flat else np.full(6, np.nan)
    return e2, e1, p


def write_snapshot(path, J, metric: MetricField | None = None, meta: dict | None = None,
                   e2: float | None = None, e1: float | None = None,
                   periods: np.ndarray | None = None) -> Snapshot:
    metric = _metric(metric)
    J = np.ascontiguousarray(np.asarray(J, dtype="<f8"))
    n = J.shape[0]
    if J.shape != (n,) * DIM + (DIM, DIM):
        raise ValueError(f"expected a field of shape (n, n, n, n, 4, 4), got {J.shape}")
    if e2 is None or e1 is None or periods is None:
        c2, c1, cp = summarize(J, metric)
        e2 = c2 if e2 is None else e2
        e1 = c1 if e1 is None else e1
        periods = cp if periods is None else periods
    meta = dict(meta or {})
    meta.setdefault("metric", metric.spec())
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEAD.pack(n, len(blob)))
        fh.write(blob)
        fh.write(_SCALARS.pack(float(e2), float(e1), *[float(v) for v in periods]))
        fh.write(J.tobytes(order="C"))
    return Snapshot(J, meta["metric"], float(e2), float(e1), np.asarray(periods, dtype=float), meta)


def read_snapshot(path) -> Snapshot:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise SnapshotFormatError(f"{path}: bad magic")
    pos = len(MAGIC)
    if len(data) < pos + _HEAD.size:
        raise SnapshotFormatError(f"{path}: truncated header")
    n, meta_len = _HEAD.unpack_from(data, pos)
    pos += _HEAD.size
    if n < 1 or n > 4096:
        raise SnapshotFormatError(f"{path}: implausible grid size {n}")
    if len(data) < pos + meta_len + _SCALARS.size:
        raise SnapshotFormatError(f"{path}: truncated header")
    try:
        meta = json.loads(data[pos:pos + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotFormatError(f"{path}: corrupt metadata ({exc})") from exc
    pos += meta_len
    vals = _SCALARS.unpack_from(data, pos)
    pos += _SCALARS.size
    expected = n**DIM * DIM * DIM * 8
    payload = len(data) - pos
    if payload != expected:
        raise SnapshotFormatError(f"{path}: payload has {payload} bytes, expected {expected}")
    J = np.frombuffer(data, dtype="<f8", offset=pos).reshape((n,) * DIM + (DIM, DIM)).astype(float)
    return Snapshot(J, str(meta.get("metric", "flat")), vals[0], vals[1], np.array(vals[2:]), meta)
