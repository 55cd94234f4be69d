"""Time each stage of the per-frame pipeline on one CPU thread.

The budget at 6 fps is about 166 ms per frame.
"""

import numpy as np
from threadpoolctl import threadpool_limits

from drowsy.bench import STAGES, bench_latency
from drowsy.datasets import synth_face_frame
from drowsy.fdnn import FdnnModel, Label

rng = np.random.default_rng(1)
pairs = [synth_face_frame(Label(i % 2), rng, frame_id=i) for i in range(200)]
frames = [f for f, _ in pairs]
landmarks = [lm for _, lm in pairs]

with threadpool_limits(1):
    report = bench_latency(FdnnModel(), frames, landmarks=landmarks, warmup=10)

for name in STAGES:
    s = report.stage(name)
    print(f"{name:<11} mean {s.mean:.3f} ms  median {s.median:.3f} ms  p95 {s.p95:.3f} ms")
print(f"{'total':<11} mean {report.mean:.3f} ms, budget {1000 / 6:.1f} ms")
