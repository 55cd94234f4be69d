import json
import struct

import numpy as np
import pytest

from drowsy.datasets import render_glyph
from drowsy.fdnn import (
    FORMAT_VERSION, EyeSample, FdnnModel, Label, WeightFormatError, clone, load_weights, predict, save_weights,
    train,
)
from drowsy.imageproc import normalize_eye
from drowsy.nncore import NumericError, SgdConfig, ShapeError

N_PARAMS = 1_984_322


def param_count_oracle():
    # conv 3x3x1x32 + bias, dense 11*11*32 -> 512, dense 512 -> 2
    conv = 3 * 3 * 1 * 32 + 32
    flat = ((24 - 2) // 2) ** 2 * 32
    return conv + flat * 512 + 512 + 512 * 2 + 2


def test_layer_shapes_and_parameter_count():
    m = FdnnModel()
    shapes = m.shapes()
    assert shapes[0] == (22, 22, 32)
    assert shapes[2] == (11, 11, 32)
    assert shapes[4] == (3872,)
    assert shapes[5] == (512,)
    assert shapes[-1] == (2,)
    assert m.n_params() == param_count_oracle() == N_PARAMS


def test_three_channel_compat_mode(rng):
    m = FdnnModel(channels=3)
    assert m.shapes()[0] == (22, 22, 32)
    out = m.predict_proba(rng.uniform(0, 1, (2, 24, 24)))
    assert out.shape == (2, 2)


def test_eye_sample_invariants():
    EyeSample(np.zeros((24, 24)), Label.OPEN)
    with pytest.raises(ShapeError):
        EyeSample(np.zeros((24, 23)), Label.OPEN)
    with pytest.raises(ValueError):
        EyeSample(np.full((24, 24), 1.5), Label.OPEN)


def test_predict_deterministic_and_in_range(rng):
    m = FdnnModel(seed=3)
    x = rng.uniform(0, 1, (24, 24)).astype(np.float32)
    a, b = predict(m, x), predict(m, x)
    assert a == b
    assert 0 < a.p_closed < 1 and 0 < a.p_open < 1
    assert a.label == (Label.CLOSED if a.p_closed >= a.p_open else Label.OPEN)


def test_predict_preconditions(rng):
    m = FdnnModel()
    with pytest.raises(ShapeError):
        predict(m, np.zeros((20, 20)))
    m.train_mode()
    with pytest.raises(RuntimeError):
        predict(m, np.zeros((24, 24)))


def test_zero_learning_rate_leaves_params_unchanged(small_corpus):
    m = FdnnModel(seed=1)
    before = [p.copy() for p in m.params()]
    one = small_corpus.subset([0])
    train(m, one, small_corpus.subset([1, 200]), SgdConfig(learning_rate=0.0, epochs=1))
    assert all(np.array_equal(a, b) for a, b in zip(before, m.params()))


def test_training_is_reproducible(small_corpus):
    tr, va = small_corpus.subset(range(0, 300, 3)), small_corpus.subset(range(1, 300, 7))
    runs = []
    for _ in range(2):
        m = FdnnModel(seed=5)
        res = train(m, tr, va, SgdConfig(epochs=2, seed=9))
        runs.append((save_weights(m), [(r.train_loss, r.val_accuracy) for r in res.history]))
    assert runs[0] == runs[1]
    assert len(runs[0][1]) == 2


def test_separable_toy_reaches_full_accuracy():
    # left half bright vs right half bright: separable by a single linear unit
    rng = np.random.default_rng(2)
    x = rng.uniform(0.0, 0.3, (60, 24, 24)).astype(np.float32)
    y = np.arange(60) % 2
    x[y == 0, :, :12] += 0.6
    x[y == 1, :, 12:] += 0.6
    m = FdnnModel(seed=0)
    res = train(m, (x[:40], y[:40]), (x[40:], y[40:]), SgdConfig(epochs=50, batch_size=8, seed=0))
    assert res.history[-1].val_accuracy == 1.0


def test_empty_split_and_nan_loss(small_corpus):
    m = FdnnModel()
    empty = (np.zeros((0, 24, 24)), np.zeros(0, int))
    with pytest.raises(ValueError):
        train(m, empty, small_corpus, SgdConfig(epochs=1))
    m.params()[0][...] = np.nan
    with pytest.raises(NumericError):
        train(m, small_corpus.subset([0, 200]), small_corpus.subset([1, 201]), SgdConfig(epochs=1))


def test_select_best_restores_best_epoch(small_corpus):
    tr, va = small_corpus.subset(range(0, 300, 2)), small_corpus.subset(range(1, 300, 2))
    m = FdnnModel(seed=4)
    res = train(m, tr, va, SgdConfig(epochs=3, seed=4), select_best=True)
    best = max(r.val_accuracy for r in res.history)
    from drowsy.fdnn import evaluate
    assert evaluate(m, va)[0] == best


# -- weights file ----------------------------------------------------------------

def test_save_load_round_trip(rng):
    m = FdnnModel(seed=8)
    blob = save_weights(m)
    m2 = load_weights(blob)
    assert save_weights(m2) == blob
    x = rng.uniform(0, 1, (5, 24, 24))
    assert np.array_equal(m.predict_proba(x), m2.predict_proba(x))


def test_file_layout_and_size():
    blob = save_weights(FdnnModel())
    assert blob[:4] == b"FDNN"
    version, n_meta = struct.unpack("<II", blob[4:12])
    assert version == FORMAT_VERSION
    meta = json.loads(blob[12:12 + n_meta])
    assert meta["layers"][0] == {"kind": "conv2d", "kh": 3, "kw": 3, "cin": 1, "cout": 32}
    assert len(blob) == 12 + n_meta + 4 * N_PARAMS


def test_first_parameter_is_little_endian_float32():
    m = FdnnModel()
    blob = save_weights(m)
    n_meta = struct.unpack("<I", blob[8:12])[0]
    first = struct.unpack("<f", blob[12 + n_meta:16 + n_meta])[0]
    assert first == m.params()[0].ravel()[0]


@pytest.mark.parametrize("mutate, match", [
    (lambda b: b"XXXX" + b[4:], "magic"),
    (lambda b: b[:4] + struct.pack("<I", 2) + b[8:], "version"),
    (lambda b: b[:-1], "parameter bytes"),
    (lambda b: b[:10], "truncated"),
    (lambda b: b + b"\0\0\0\0", "parameter bytes"),
])
def test_load_rejects_bad_blobs(mutate, match):
    with pytest.raises(WeightFormatError, match=match):
        load_weights(mutate(save_weights(FdnnModel())))


def test_load_rejects_shape_mismatch():
    blob = save_weights(FdnnModel())
    n_meta = struct.unpack("<I", blob[8:12])[0]
    meta = json.loads(blob[12:12 + n_meta])
    meta["params"][0] = [3, 3, 1, 16]
    new = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    with pytest.raises(WeightFormatError):
        load_weights(blob[:8] + struct.pack("<I", len(new)) + new + blob[12 + n_meta:])


def test_clone_is_independent():
    m = FdnnModel()
    c = clone(m)
    c.params()[0][...] = 0
    assert m.params()[0].any()


def test_trained_model_labels_fresh_glyphs(small_model):
    # glyphs from a seed the training corpus never used, at the default noise
    rng = np.random.default_rng(99)
    for label in Label:
        x = np.stack([normalize_eye(render_glyph(label, rng)) for _ in range(40)])
        hits = sum(predict(small_model, img).label == label for img in x)
        assert hits >= 36, (label, hits)
