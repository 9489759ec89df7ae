"""Wall-time of model generation, one reservoir step and one readout step."""

from __future__ import annotations

import gc
import time
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

from ..dpg import build_dpg
from ..esn import ESNConfig, Readout, draw_dense, generate_dense, readout_step
from ..spectral import diagonalize
from .grid import canonical_method

TIMING_PHASES = ("generation", "reservoir_step", "readout_step")


@dataclass(frozen=True)
class TimingRow:
    method: str
    units: int
    phase: str
    median_s: float
    repeats: int


def median_time(fn: Callable[[], object], repeats: int = 5, min_time: float = 2e-3) -> float:
    """Median over ``repeats`` of the per-call time, each sample looping until ``min_time``.

    Garbage collection is paused while sampling, as :mod:`timeit` does.
    """
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        number = 1
        while True:
            t0 = time.perf_counter()
            for _ in range(number):
                fn()
            if time.perf_counter() - t0 >= min_time or number >= 1 << 20:
                break
            number *= 2
        samples = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            for _ in range(number):
                fn()
            samples.append((time.perf_counter() - t0) / number)
    finally:
        if gc_was_enabled:
            gc.enable()
    return float(np.median(samples))


def _generate(method: str, N: int, seed: int):
    config = ESNConfig(units=N, spectral_radius=0.9, seed=seed)
    if method == "normal":
        return generate_dense(config)
    if method == "diag":
        return diagonalize(generate_dense(config))
    return build_dpg(config, method[len("dpg-"):])


def _step_model(method: str, N: int, seed: int):
    # The step cost does not depend on how W or its spectrum was obtained, so
    # skip the O(N^3) eigensolver when only steps are timed.
    config = ESNConfig(units=N, spectral_radius=0.9, seed=seed)
    if method == "normal":
        return draw_dense(config)
    return build_dpg(config, "golden" if method == "diag" else method[len("dpg-"):])


def timing_suite(sizes: Sequence[int], methods: Sequence[str] = ("normal", "diag"),
                 phases: Sequence[str] = TIMING_PHASES, repeats: int = 5,
                 seed: int = 0) -> List[TimingRow]:
    """Median wall-times per (method, size, phase)."""
    methods = [canonical_method(m) for m in methods]
    for p in phases:
        if p not in TIMING_PHASES:
            raise ValueError(f"unknown phase {p!r}; expected one of {TIMING_PHASES}")
    rows = []
    rng = np.random.default_rng(seed)
    for method in methods:
        for N in sizes:
            model = None
            if "generation" in phases:
                samples = []
                for _ in range(repeats):
                    t0 = time.perf_counter()
                    model = _generate(method, N, seed)
                    samples.append(time.perf_counter() - t0)
                rows.append(TimingRow(method, N, "generation", float(np.median(samples)),
                                      repeats))
            if "reservoir_step" in phases:
                if model is None:
                    model = _step_model(method, N, seed)
                state = rng.uniform(-1, 1, N)
                drive = rng.uniform(-1, 1, N)
                if method == "normal":
                    fn = lambda: model.step(state, drive)  # noqa: E731
                else:
                    buf = np.empty(N)
                    fn = lambda: model.step(state, drive, out=buf)  # noqa: E731
                rows.append(TimingRow(method, N, "reservoir_step", median_time(fn, repeats),
                                      repeats))
            if "readout_step" in phases:
                basis = "original" if method == "normal" else "Q"
                ro = Readout(res_block=rng.standard_normal((N, 1)), bias_block=np.zeros((1, 1)),
                             basis=basis)
                state = rng.uniform(-1, 1, N)
                fn = lambda: readout_step(ro, state, basis=basis)  # noqa: E731
                rows.append(TimingRow(method, N, "readout_step", median_time(fn, repeats),
                                      repeats))
    return rows


def loglog_slope(sizes, times) -> float:
    """Least-squares slope of log(time) against log(size)."""
    return float(np.polyfit(np.log(sizes), np.log(times), 1)[0])
