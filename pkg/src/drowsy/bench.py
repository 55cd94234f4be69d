"""Repeated-training statistics and per-frame latency benchmarking."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .decision import DecisionConfig, DrowsinessState, step, step_no_measurement
from .fdnn import FdnnModel, evaluate, predict, train
from .imageproc import GrayImage, crop, normalize_eye
from .landmarks import LandmarkError, LandmarkSet, select_eye
from .metrics import RunStats
from .nncore import SgdConfig

log = logging.getLogger(__name__)

STAGES = ("preprocess", "inference", "decision")


def repeated_runs(train_set, val_set, cfg: SgdConfig, k: int = 10, base_seed: int | None = None,
                  force_same_seed: bool = False,
                  model_factory: Callable[[int], FdnnModel] = FdnnModel) -> RunStats:
    """Train ``k`` models with seeds ``base_seed + i`` and summarize validation accuracy (%).

    Runs that raise are recorded in ``RunStats.failures`` and left out of the
    statistics. ``force_same_seed`` gives every run ``base_seed``.
    """
    if k < 2:
        raise ValueError("repeated runs need k >= 2")
    base = cfg.seed if base_seed is None else base_seed
    accs, failures = [], []
    for i in range(k):
        seed = base if force_same_seed else base + i
        try:
            model = model_factory(seed)
            run_cfg = SgdConfig(cfg.learning_rate, cfg.momentum, cfg.batch_size, cfg.epochs, seed)
            train(model, train_set, val_set, run_cfg)
            acc, _ = evaluate(model, val_set)
        except Exception as exc:  # noqa: BLE001 - a failed run is reported, not fatal
            log.warning("run %d (seed %d) failed: %s", i, seed, exc)
            failures.append((i, f"{type(exc).__name__}: {exc}"))
            continue
        accs.append(100.0 * acc)
    return RunStats.from_accuracies(accs, failures)


@dataclass
class StageSummary:
    mean: float
    median: float
    p95: float

    @classmethod
    def of(cls, samples_ms) -> "StageSummary":
        a = np.asarray(samples_ms, dtype=np.float64)
        return cls(float(a.mean()), float(np.median(a)), float(np.percentile(a, 95)))


@dataclass
class LatencyReport:
    """Wall-clock milliseconds per frame, overall and per stage."""

    samples: list[float]
    stages: dict[str, list[float]]
    warmup: int
    mean: float = field(init=False)
    median: float = field(init=False)
    p95: float = field(init=False)

    def __post_init__(self):
        s = StageSummary.of(self.samples)
        self.mean, self.median, self.p95 = s.mean, s.median, s.p95

    def stage(self, name: str) -> StageSummary:
        return StageSummary.of(self.stages[name])

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stage", "mean_ms", "median_ms", "p95_ms", "frames", "warmup"])
        for name in STAGES:
            s = self.stage(name)
            w.writerow([name, f"{s.mean:.6f}", f"{s.median:.6f}", f"{s.p95:.6f}", len(self.samples), self.warmup])
        w.writerow(["total", f"{self.mean:.6f}", f"{self.median:.6f}", f"{self.p95:.6f}",
                    len(self.samples), self.warmup])
        return buf.getvalue()

    def samples_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame", *STAGES, "total"])
        for i, total in enumerate(self.samples):
            w.writerow([i, *(f"{self.stages[n][i]:.6f}" for n in STAGES), f"{total:.6f}"])
        return buf.getvalue()


def _preprocess(frame: GrayImage, lm: LandmarkSet | None):
    if lm is None:
        return normalize_eye(frame)
    try:
        sel = select_eye(lm, bounds=(frame.width, frame.height))
    except (LandmarkError, ValueError):
        return None
    return normalize_eye(crop(frame, sel.box))


def bench_latency(model: FdnnModel, frames: Sequence[GrayImage], cfg: DecisionConfig = DecisionConfig(),
                  landmarks: Sequence[LandmarkSet | None] | None = None, warmup: int = 10,
                  min_frames: int = 100) -> LatencyReport:
    """Time preprocess -> predict -> decision step for every frame.

    Frames are eye crops, or whole frames when ``landmarks`` is given. The
    first ``warmup`` passes (cycling through the frames) are not recorded.
    """
    if len(frames) < min_frames:
        raise ValueError(f"benchmark needs at least {min_frames} frames, got {len(frames)}")
    if landmarks is not None and len(landmarks) != len(frames):
        raise ValueError("need one landmark entry per frame")
    model.infer_mode()
    lms = landmarks if landmarks is not None else [None] * len(frames)
    for i in range(warmup):
        j = i % len(frames)
        px = _preprocess(frames[j], lms[j])
        if px is not None:
            predict(model, px)

    clock = time.perf_counter_ns
    state = DrowsinessState()
    totals, stages = [], {name: [] for name in STAGES}
    for frame, lm in zip(frames, lms):
        t0 = clock()
        px = _preprocess(frame, lm)
        t1 = clock()
        p = predict(model, px).p_closed if px is not None else None
        t2 = clock()
        state, _ = step(state, p, cfg) if p is not None else step_no_measurement(state, cfg)
        t3 = clock()
        # perf_counter_ns can report 0 for sub-resolution stages
        ms = [max(t1 - t0, 1) / 1e6, max(t2 - t1, 1) / 1e6, max(t3 - t2, 1) / 1e6]
        for name, v in zip(STAGES, ms):
            stages[name].append(v)
        totals.append(sum(ms))
    return LatencyReport(totals, stages, warmup)
