"""The FD-NN eye-state classifier: build, train, persist, predict.

Layer stack for a 24x24 single-channel eye crop::

    Conv2D 3x3, 1->32  ReLU  MaxPool 2x2  Dropout 0.25  Flatten
    Dense 3872->512  ReLU  Dense 512->2  Sigmoid

Output unit 0 is the probability the eye is closed, unit 1 that it is open.
"""

from __future__ import annotations

import copy
import enum
import hashlib
import json
import logging
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .metrics import roc_auc
from .nncore import (
    SGD, Conv2D, Dense, Dropout, Flatten, MaxPool2D, NumericError, ReLU, SgdConfig, ShapeError,
    Sequential, Sigmoid, cross_entropy,
)

log = logging.getLogger(__name__)

INPUT_SIZE = 24
MAGIC = b"FDNN"
FORMAT_VERSION = 1


class Label(enum.IntEnum):
    """Eye state. The value doubles as the output-unit index."""

    CLOSED = 0
    OPEN = 1


@dataclass(frozen=True, eq=False)
class EyeSample:
    pixels: np.ndarray  # (24, 24) float32 in [0, 1]
    label: Label

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.shape != (INPUT_SIZE, INPUT_SIZE):
            raise ShapeError(f"eye sample must be {INPUT_SIZE}x{INPUT_SIZE}, got {px.shape}")
        if np.any(px < 0) or np.any(px > 1):
            raise ValueError("eye sample values must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "label", Label(self.label))


@dataclass(frozen=True)
class Prediction:
    p_closed: float
    p_open: float
    label: Label


class WeightFormatError(ValueError):
    pass


class FdnnModel:
    """FD-NN with its parameters, a TRAIN/INFER mode flag and training metadata.

    ``channels=3`` replicates the grayscale input across three channels, for
    comparison with the 24x24x3 input some descriptions of the net use.
    """

    def __init__(self, seed: int = 0, channels: int = 1, dropout: float = 0.25):
        self.seed = seed
        self.channels = channels
        rng = np.random.default_rng(seed)
        conv_out = INPUT_SIZE - 2
        pooled = conv_out // 2
        self.dropout = Dropout(dropout, rng=np.random.default_rng([seed, 1]))
        self.net = Sequential([
            Conv2D(3, 3, channels, 32, rng=rng),
            ReLU(),
            MaxPool2D(2, 2, 2),
            self.dropout,
            Flatten(),
            Dense(pooled * pooled * 32, 512, rng=rng, init="he"),
            ReLU(),
            Dense(512, 2, rng=rng, init="glorot"),
            Sigmoid(),
        ])
        self.mode = "INFER"
        self.metadata = {"seed": seed, "epochs": 0, "config_digest": None}

    # -- plumbing used by train() ------------------------------------------

    def params(self):
        return self.net.params()

    def grads(self):
        return self.net.grads()

    def n_params(self) -> int:
        return self.net.n_params()

    def shapes(self):
        return self.net.shapes((INPUT_SIZE, INPUT_SIZE, self.channels))

    def train_mode(self):
        self.mode = "TRAIN"

    def infer_mode(self):
        self.mode = "INFER"

    def _prepare(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float32)
        if x.ndim == 2:
            x = x[None]
        if x.ndim == 3:
            x = x[..., None]
        if x.shape[1:3] != (INPUT_SIZE, INPUT_SIZE) or x.shape[3] not in (1, self.channels):
            raise ShapeError(f"expected (n, {INPUT_SIZE}, {INPUT_SIZE}[, c]) input, got {x.shape}")
        if x.shape[3] != self.channels:
            x = np.repeat(x, self.channels, axis=3)
        return x

    def forward(self, x) -> np.ndarray:
        """Batch forward; dropout is active only in TRAIN mode."""
        return self.net.forward(self._prepare(x), training=self.mode == "TRAIN")

    def backward(self, grad):
        return self.net.backward(grad)

    def predict_proba(self, x, batch_size: int = 256) -> np.ndarray:
        """(n, 2) sigmoid outputs in INFER mode, leaving the mode flag untouched."""
        x = self._prepare(x)
        out = [self.net.forward(x[i:i + batch_size], training=False) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, 2), np.float32)

    def layer_spec(self):
        spec = []
        for layer in self.net.layers:
            entry = {"kind": layer.kind}
            if isinstance(layer, Conv2D):
                entry.update(kh=layer.kh, kw=layer.kw, cin=layer.cin, cout=layer.cout)
            elif isinstance(layer, MaxPool2D):
                entry.update(ph=layer.ph, pw=layer.pw, stride=layer.stride)
            elif isinstance(layer, Dropout):
                entry.update(rate=layer.rate)
            elif isinstance(layer, Dense):
                entry.update(n_in=layer.n_in, n_out=layer.n_out)
            spec.append(entry)
        return spec


def predict(model: FdnnModel, pixels) -> Prediction:
    """Classify one 24x24 eye crop. Ties between the two units go to CLOSED."""
    if model.mode != "INFER":
        raise RuntimeError("predict needs the model in INFER mode")
    px = np.asarray(pixels)
    if px.shape not in ((INPUT_SIZE, INPUT_SIZE), (INPUT_SIZE, INPUT_SIZE, model.channels)):
        raise ShapeError(f"expected a {INPUT_SIZE}x{INPUT_SIZE} crop, got {px.shape}")
    p_closed, p_open = (float(v) for v in model.predict_proba(px[None])[0])
    return Prediction(p_closed, p_open, Label.CLOSED if p_closed >= p_open else Label.OPEN)


# -- training ---------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float
    val_auc: float | None


@dataclass
class TrainResult:
    model: FdnnModel
    history: list[EpochRecord] = field(default_factory=list)


def _arrays(data):
    if hasattr(data, "images") and hasattr(data, "labels"):
        return np.asarray(data.images, np.float32), np.asarray(data.labels, np.int64)
    images, labels = data
    return np.asarray(images, np.float32), np.asarray(labels, np.int64)


def one_hot(labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, 2), dtype=np.float32)
    out[np.arange(labels.size), labels] = 1
    return out


def evaluate(model: FdnnModel, data):
    """Accuracy and AUC (closed = positive) of ``model`` on ``data``."""
    x, y = _arrays(data)
    proba = model.predict_proba(x)
    pred = np.where(proba[:, 0] >= proba[:, 1], Label.CLOSED, Label.OPEN)
    acc = float(np.mean(pred == y))
    positives = y == Label.CLOSED
    auc = roc_auc(proba[:, 0], positives).auc if 0 < positives.sum() < len(y) else None
    return acc, auc


def config_digest(cfg: SgdConfig) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def train(model: FdnnModel, train_set, val_set, cfg: SgdConfig, select_best: bool = False) -> TrainResult:
    """Mini-batch SGD on per-unit cross-entropy for ``cfg.epochs`` epochs.

    Shuffling and dropout masks are drawn from generators seeded by
    ``cfg.seed``, so a run is a pure function of the starting weights, the
    data and the config. Returns the final-epoch weights unless
    ``select_best`` asks for the epoch with the best validation accuracy.
    """
    x, y = _arrays(train_set)
    vx, vy = _arrays(val_set)
    if len(x) == 0:
        raise ValueError("empty training split")
    if len(vx) == 0:
        raise ValueError("empty validation split")
    targets = one_hot(y)
    shuffle_rng = np.random.default_rng([cfg.seed, 0])
    model.dropout.rng = np.random.default_rng([cfg.seed, 1])
    opt = SGD(model.params(), lr=cfg.learning_rate, momentum=cfg.momentum)
    result = TrainResult(model)
    best = (-1.0, None)
    for epoch in range(1, cfg.epochs + 1):
        model.train_mode()
        order = shuffle_rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            out = model.forward(x[idx])
            loss, grad = cross_entropy(out, targets[idx])
            if not np.isfinite(loss):
                raise NumericError(f"loss became {loss} at epoch {epoch}")
            model.backward(grad)
            opt.step(model.grads())
            total += loss * len(idx)
        model.infer_mode()
        acc, auc = evaluate(model, (vx, vy))
        rec = EpochRecord(epoch, total / len(x), acc, auc)
        result.history.append(rec)
        log.info("epoch %d loss %.5f val_acc %.4f", epoch, rec.train_loss, acc)
        if select_best and acc > best[0]:
            best = (acc, [p.copy() for p in model.params()])
    if select_best and best[1] is not None:
        for p, saved in zip(model.params(), best[1]):
            p[...] = saved
    model.metadata.update(epochs=model.metadata.get("epochs", 0) + cfg.epochs,
                          config_digest=config_digest(cfg), train_seed=cfg.seed)
    return result


# -- persistence ------------------------------------------------------------

def save_weights(model: FdnnModel) -> bytes:
    """Serialize to ``FDNN | u32 version | u32 len | JSON | float32 LE params``."""
    meta = {
        "channels": model.channels,
        "layers": model.layer_spec(),
        "params": [list(p.shape) for p in model.params()],
        "seed": model.seed,
        "epochs": model.metadata.get("epochs", 0),
        "config_digest": model.metadata.get("config_digest"),
        "train_seed": model.metadata.get("train_seed"),
    }
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(blob)), blob]
    parts += [np.ascontiguousarray(p, dtype="<f4").tobytes() for p in model.params()]
    return b"".join(parts)


def load_weights(data: bytes) -> FdnnModel:
    if len(data) < 12:
        raise WeightFormatError("truncated header")
    if data[:4] != MAGIC:
        raise WeightFormatError(f"bad magic {data[:4]!r}")
    version, n_meta = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise WeightFormatError(f"unsupported version {version}")
    if len(data) < 12 + n_meta:
        raise WeightFormatError("truncated metadata")
    try:
        meta = json.loads(data[12:12 + n_meta])
    except ValueError as exc:
        raise WeightFormatError(f"unreadable metadata: {exc}") from None
    dropout = next((entry["rate"] for entry in meta.get("layers", []) if entry["kind"] == "dropout"), 0.25)
    model = FdnnModel(seed=meta.get("seed", 0), channels=meta.get("channels", 1), dropout=dropout)
    if meta.get("layers") != model.layer_spec():
        raise WeightFormatError("layer stack in file does not match the FD-NN definition")
    params = model.params()
    shapes = [tuple(s) for s in meta.get("params", [])]
    if shapes != [p.shape for p in params]:
        raise WeightFormatError(f"parameter shapes {shapes} do not match model {[p.shape for p in params]}")
    need = sum(p.size for p in params) * 4
    payload = data[12 + n_meta:]
    if len(payload) != need:
        raise WeightFormatError(f"expected {need} parameter bytes, found {len(payload)}")
    offset = 0
    for p in params:
        n = p.size * 4
        p[...] = np.frombuffer(payload, dtype="<f4", count=p.size, offset=offset).reshape(p.shape)
        offset += n
    model.metadata = {"seed": meta.get("seed", 0), "epochs": meta.get("epochs", 0),
                      "config_digest": meta.get("config_digest"), "train_seed": meta.get("train_seed")}
    return model


def clone(model: FdnnModel) -> FdnnModel:
    return copy.deepcopy(model)
