"""Timing harness for the time integrators."""

from __future__ import annotations

import csv
import time
from collections.abc import Sequence
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from . import solvers
from .discretization import canonical_drift
from .errors import ConfigError

__all__ = ["BenchRow", "StepTiming", "bench", "fit_exponent", "warm_up", "write_bench", "write_step_times"]


@dataclass(frozen=True)
class BenchRow:
    size: int
    scheme: str
    pixels: int
    iters: int
    tau: float
    factorizations: int
    factor_ms: float
    mean_step_ms: float
    total_ms: float
    ns_per_pixel_iter: float


@dataclass(frozen=True)
class StepTiming:
    size: int
    scheme: str
    step: int
    step_ms: float


def warm_up() -> None:
    """Trigger JIT compilation so it never lands inside a timed region."""
    rng = np.random.default_rng(0)
    v = rng.uniform(0.5, 1.5, (8, 8))
    solvers.step_aos(v, solvers.factorize_aos(canonical_drift(v), 1.0))


def fit_exponent(pixels: Sequence[float], times: Sequence[float]) -> float:
    """Slope of ``log(time)`` against ``log(pixels)``."""
    if len(pixels) < 2:
        raise ConfigError("need at least two sizes to fit a scaling exponent")
    return float(np.polyfit(np.log(pixels), np.log(times), 1)[0])


def _problem(size: int, seed: int):
    rng = np.random.default_rng(seed)
    v = rng.uniform(0.2, 1.0, (size, size))
    f = rng.uniform(0.2, 1.0, (size, size))
    return f, canonical_drift(v)


def bench(
    sizes: Sequence[int],
    iters: int = 100,
    schemes: Sequence[str] = ("aos",),
    tau: float = 1e3,
    tol: float = 1e-8,
    seed: int = 0,
) -> tuple[list[BenchRow], list[StepTiming]]:
    """Time ``iters`` steps of each scheme on random ``size x size`` problems.

    The explicit scheme runs at ``min(tau, 0.99 * tau_max)``. Setup cost
    (factorization for AOS, preconditioner for implicit, bound for
    explicit) is timed separately from the steps.
    """
    if any(s < 32 for s in sizes):
        raise ConfigError(f"bench sizes must be at least 32, got {list(sizes)}")
    if iters < 1:
        raise ConfigError("iters must be positive")
    for s in schemes:
        if s not in solvers.SCHEMES:
            raise ConfigError(f"unknown scheme {s!r}")
    warm_up()
    rows, steps = [], []
    for size in sizes:
        f, d = _problem(size, seed)
        for scheme in schemes:
            t0 = time.perf_counter()
            run_tau = tau
            if scheme == "aos":
                factors = solvers.factorize_aos(d, tau)
                bufs, work = [np.empty_like(f), np.empty_like(f)], np.empty_like(f)
                step = lambda x: solvers.step_aos(x, factors, bufs[bufs[0] is x], work)  # noqa: E731
            elif scheme == "implicit":
                system = solvers._BackwardEuler(d, tau)
                step = lambda x: system.solve(x, tol, 10_000)  # noqa: E731
            else:
                tau_max = solvers.check_explicit_bound(d)
                run_tau = min(tau, 0.99 * tau_max)
                step = lambda x: solvers.step_explicit(x, d, run_tau, tau_max)  # noqa: E731
            factor_ms = (time.perf_counter() - t0) * 1e3
            u = f
            times = []
            for k in range(1, iters + 1):
                t1 = time.perf_counter()
                u = step(u)
                dt = (time.perf_counter() - t1) * 1e3
                times.append(dt)
                steps.append(StepTiming(size, scheme, k, dt))
            total = factor_ms + sum(times)
            rows.append(
                BenchRow(
                    size, scheme, size * size, iters, run_tau, 1, factor_ms,
                    float(np.mean(times)), total, total * 1e6 / (size * size * iters),
                )
            )
    return rows, steps


def _write(rows, cls, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f.name for f in fields(cls)])
        for r in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in astuple(r)])


def write_bench(rows: Sequence[BenchRow], path: str | Path) -> None:
    _write(rows, BenchRow, path)


def write_step_times(rows: Sequence[StepTiming], path: str | Path) -> None:
    _write(rows, StepTiming, path)
