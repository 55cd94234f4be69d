import numpy as np
import pytest

from drowsy.bench import STAGES, bench_latency, repeated_runs
from drowsy.datasets import render_glyph, synth_face_frame
from drowsy.fdnn import FdnnModel, Label
from drowsy.nncore import SgdConfig


@pytest.fixture(scope="module")
def tiny_sets(small_corpus):
    idx = np.arange(len(small_corpus))
    return small_corpus.subset(idx[::5]), small_corpus.subset(idx[1::9])


def test_forced_seed_gives_zero_variance(tiny_sets):
    tr, va = tiny_sets
    r = repeated_runs(tr, va, SgdConfig(epochs=1, seed=3), k=3, force_same_seed=True)
    assert len(r.accuracies) == 3 and r.variance == 0 and r.stddev == 0


def test_distinct_seeds_are_ordered_by_index(tiny_sets):
    tr, va = tiny_sets
    seen = []

    def factory(seed):
        seen.append(seed)
        return FdnnModel(seed)

    r = repeated_runs(tr, va, SgdConfig(epochs=1), k=3, base_seed=10, model_factory=factory)
    assert seen == [10, 11, 12] and len(r.accuracies) == 3
    assert r.stddev ** 2 == pytest.approx(r.variance, rel=1e-6, abs=1e-12)


def test_failed_runs_are_recorded(tiny_sets):
    tr, va = tiny_sets

    def flaky(seed):
        if seed == 1:
            raise RuntimeError("diverged")
        return FdnnModel(seed)

    r = repeated_runs(tr, va, SgdConfig(epochs=1), k=3, base_seed=0, model_factory=flaky)
    assert len(r.accuracies) == 2
    assert r.failures == [(1, "RuntimeError: diverged")]


def test_k_must_be_at_least_two(tiny_sets):
    with pytest.raises(ValueError):
        repeated_runs(*tiny_sets, SgdConfig(epochs=1), k=1)


def crops(n, seed=0):
    rng = np.random.default_rng(seed)
    return [render_glyph(Label(i % 2), rng) for i in range(n)]


def test_latency_report_fields():
    rep = bench_latency(FdnnModel(), crops(100), warmup=3)
    assert len(rep.samples) == 100 and rep.warmup == 3
    assert all(s > 0 for s in rep.samples)
    for name in STAGES:
        assert len(rep.stages[name]) == 100
    assert rep.median <= rep.p95
    lines = rep.summary_csv().splitlines()
    assert lines[0].startswith("stage,mean_ms") and len(lines) == 5
    assert len(rep.samples_csv().splitlines()) == 101


def test_latency_with_landmarks():
    rng = np.random.default_rng(1)
    pairs = [synth_face_frame(Label(i % 2), rng, frame_id=i) for i in range(100)]
    lms = [lm for _, lm in pairs]
    lms[5] = None
    rep = bench_latency(FdnnModel(), [f for f, _ in pairs], landmarks=lms, warmup=2)
    assert len(rep.samples) == 100


def test_too_few_frames():
    with pytest.raises(ValueError):
        bench_latency(FdnnModel(), crops(10))


def test_median_is_stable_when_doubling_frames():
    m = FdnnModel()
    frames = crops(400, seed=2)
    a = bench_latency(m, frames[:200], warmup=20)
    b = bench_latency(m, frames, warmup=20)
    assert abs(b.stage("inference").median / a.stage("inference").median - 1) < 0.2
