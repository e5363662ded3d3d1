"""Inference-cost harness: warmup, repetition, nearest-rank median/IQR latency,
throughput, and CSV emission with a fixed schema.

One timed iteration is a complete t_out-step rollout. Timed regions run on a
monotonic ns clock with the BLAS thread pool pinned to one thread when
threadpoolctl is available.
"""
from __future__ import annotations

import csv
import math
import platform
import resource
import sys
import time
from contextlib import nullcontext
from dataclasses import dataclass, astuple, fields

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # best effort; timing is then subject to BLAS threading
    threadpool_limits = None


@dataclass
class TimingRecord:
    model: str
    params: int
    batch_size: int
    latency_ms_median: float
    latency_ms_p25: float
    latency_ms_p75: float
    throughput_samples_per_sec: float
    peak_mem_mb: str  # best-effort; empty string when unavailable
    device: str
    runtime_version: str
    timestamp: str
    status: str


CSV_COLUMNS = [f.name for f in fields(TimingRecord)]


@dataclass
class BenchConfig:
    batch_sizes: tuple = (1, 4, 32)
    warmup_iters: int = 20
    timed_iters: int = 50
    t_out: int = 10
    grid: tuple = (32, 32)
    t_in: int = 10

    def __post_init__(self):
        if self.timed_iters < 3:
            raise ValueError("timed_iters must be >= 3")


def nearest_rank_quartiles(samples):
    """(p25, median, p75) by the nearest-rank rule."""
    s = sorted(samples)
    n = len(s)

    def pick(q):
        return s[max(1, math.ceil(q * n)) - 1]

    return pick(0.25), pick(0.5), pick(0.75)


def _device_string():
    return platform.processor() or platform.machine() or "cpu"


def _runtime_version():
    return f"python-{sys.version_info.major}.{sys.version_info.minor};numpy-{np.__version__}"


def _timestamp():
    import datetime

    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _peak_rss_mb():
    # ru_maxrss is KiB on Linux
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


def time_model(model, cfg: BenchConfig, model_name=None, params=None, seed=0):
    """Warm up and time full rollouts per batch size; returns one record each.

    Warmup is re-run on every batch-size change. Inputs are random tensors of
    the correct shape. Allocation failures are recorded with status ``oom``
    and zeroed numerics instead of crashing the sweep.
    """
    if model_name is None:
        model_name = type(model).__name__
    if params is None:
        from .model import count_parameters

        try:
            params = count_parameters(model)[1]
        except (AttributeError, NotImplementedError):
            params = 0
    rng = np.random.default_rng(seed)
    h, w = cfg.grid
    records = []
    limiter = threadpool_limits(limits=1) if threadpool_limits else nullcontext()
    with limiter:
        for b in cfg.batch_sizes:
            status = "ok"
            med = p25 = p75 = tput = 0.0
            peak = ""
            try:
                window = rng.standard_normal((b, h, w, cfg.t_in)).astype(np.float32)
                for _ in range(cfg.warmup_iters):
                    model.rollout(window, cfg.t_out, validate=False)
                rss_before = _peak_rss_mb()
                samples = []
                for _ in range(cfg.timed_iters):
                    t0 = time.perf_counter_ns()
                    model.rollout(window, cfg.t_out, validate=False)
                    samples.append((time.perf_counter_ns() - t0) / 1e6)
                p25, med, p75 = nearest_rank_quartiles(samples)
                tput = b * 1000.0 / med
                delta = _peak_rss_mb() - rss_before
                peak = f"{delta:.1f}" if delta > 0 else ""
            except MemoryError:
                status = "oom"
            except Exception:
                status = "error"
            records.append(
                TimingRecord(
                    model=model_name,
                    params=params,
                    batch_size=b,
                    latency_ms_median=med,
                    latency_ms_p25=p25,
                    latency_ms_p75=p75,
                    throughput_samples_per_sec=tput,
                    peak_mem_mb=peak,
                    device=_device_string(),
                    runtime_version=_runtime_version(),
                    timestamp=_timestamp(),
                    status=status,
                )
            )
    return records


def write_records_csv(path, records):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(CSV_COLUMNS)
        for r in records:
            wr.writerow(list(astuple(r)))


def read_records_csv(path):
    """Parse and validate one timing CSV; raises on schema drift or bad rows."""
    with open(path, newline="") as f:
        rd = csv.reader(f)
        rows = list(rd)
    if not rows:
        raise ValueError(f"{path}: empty timing CSV")
    if rows[0] != CSV_COLUMNS:
        missing = [c for c in CSV_COLUMNS if c not in rows[0]]
        extra = [c for c in rows[0] if c not in CSV_COLUMNS]
        raise ValueError(f"{path}: schema drift (missing={missing}, extra={extra})")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_COLUMNS):
            raise ValueError(f"{path}: malformed row at line {lineno}: {row!r}")
        try:
            out.append(
                TimingRecord(
                    model=row[0],
                    params=int(row[1]),
                    batch_size=int(row[2]),
                    latency_ms_median=float(row[3]),
                    latency_ms_p25=float(row[4]),
                    latency_ms_p75=float(row[5]),
                    throughput_samples_per_sec=float(row[6]),
                    peak_mem_mb=row[7],
                    device=row[8],
                    runtime_version=row[9],
                    timestamp=row[10],
                    status=row[11],
                )
            )
        except ValueError as exc:
            raise ValueError(f"{path}: malformed row at line {lineno}: {exc}") from None
    return out


def aggregate(csv_paths, out_path):
    """Join per-model timing CSVs into one, sorted by (model, batch_size)."""
    records = []
    for p in csv_paths:
        records.extend(read_records_csv(p))
    records.sort(key=lambda r: (r.model, r.batch_size))
    write_records_csv(out_path, records)
    return records
