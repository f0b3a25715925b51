"""Batched inference latency harness.

Each network gets fresh random float32 weights and a random observation
batch; a pass is one forward plus reduction of the output to its scalar
mean (so the result is actually materialized). Warm-up passes run first
and are excluded from statistics. Timing uses a monotonic clock and runs
single-threaded per network to keep measurements comparable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .policy_net import ActorSpec, build_actor, count_params, forward_policy
from .tensor_core import Rng

DEFAULT_BATCH = 6000
DEFAULT_PASSES = 1000
DEFAULT_WARMUP = 10


@dataclass
class BenchReport:
    name: str
    total_params: int
    active_params: int
    batch_size: int
    passes: int
    warmup: int
    times: np.ndarray  # per timed pass, seconds

    @property
    def mean_seconds(self) -> float:
        return float(self.times.mean())

    @property
    def std_seconds(self) -> float:
        return float(self.times.std())


def bench_network(spec: ActorSpec, batch: int = DEFAULT_BATCH,
                  passes: int = DEFAULT_PASSES, warmup: int = DEFAULT_WARMUP,
                  seed: int = 0) -> BenchReport:
    if passes <= 0:
        raise ValueError("passes must be positive; nothing to measure")
    rng = Rng(seed)
    try:
        net = build_actor(spec, rng.child(0), dtype=np.float32)
        obs = rng.child(1).standard_normal((batch, spec.input_dim)).astype(np.float32)
    except MemoryError:
        raise MemoryError(
            f"allocation failed for batch {batch}; rerun with a smaller --batch") from None
    report = count_params(net)
    times = np.empty(passes)
    for _ in range(warmup):
        actions, _ = forward_policy(net, obs)
        float(actions.mean())
    for i in range(passes):
        t0 = time.perf_counter()
        actions, _ = forward_policy(net, obs)
        sink = float(actions.mean())
        times[i] = time.perf_counter() - t0
    del sink
    return BenchReport(name=spec.name or spec.kind,
                       total_params=report.weight_only_total,
                       active_params=report.weight_only_active,
                       batch_size=batch, passes=passes, warmup=warmup, times=times)


def run_bench(specs, batch: int = DEFAULT_BATCH, passes: int = DEFAULT_PASSES,
              warmup: int = DEFAULT_WARMUP, seed: int = 0) -> list:
    """Benchmark each spec; results sorted by active parameter count."""
    reports = [bench_network(s, batch, passes, warmup, seed) for s in specs]
    return sorted(reports, key=lambda r: r.active_params)


def percent_gap(slow: BenchReport, fast: BenchReport) -> float:
    """How much slower `slow` is than `fast`, in percent."""
    return 100.0 * (slow.mean_seconds - fast.mean_seconds) / fast.mean_seconds


def format_table(reports) -> str:
    header = f"{'network':<22}{'params':>12}{'active':>12}{'mean s':>12}{'std s':>12}"
    lines = [header, "-" * len(header)]
    for r in reports:
        lines.append(f"{r.name:<22}{r.total_params:>12,}{r.active_params:>12,}"
                     f"{r.mean_seconds:>12.6f}{r.std_seconds:>12.6f}")
    return "\n".join(lines)
