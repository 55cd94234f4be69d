"""Train the eye-state network on synthetic glyphs and save it.

This is a small run: 300 glyphs per class and a handful of epochs. The
full-size run (2000 per class, 50 epochs) is part of the acceptance suite.
"""

import sys
import tempfile
from pathlib import Path

from drowsy.datasets import SplitSpec, split, synth_corpus
from drowsy.fdnn import FdnnModel, evaluate, load_weights, save_weights, train
from drowsy.nncore import SgdConfig

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 10

corpus = synth_corpus(300, seed=42)
train_set, val_set = split(corpus, SplitSpec((0.7, 0.3), seed=42))
print(f"{len(train_set)} training and {len(val_set)} validation crops")

model = FdnnModel(seed=42)
print(f"{model.n_params():,} parameters")
result = train(model, train_set, val_set, SgdConfig(learning_rate=0.01, epochs=epochs, seed=42))
for rec in result.history:
    print(f"epoch {rec.epoch:2d}  loss {rec.train_loss:.4f}  val acc {rec.val_accuracy:.3f}  auc {rec.val_auc:.4f}")

blob = save_weights(model)
path = Path(tempfile.gettempdir()) / "fdnn_demo.weights"
path.write_bytes(blob)
restored = load_weights(path.read_bytes())
print(f"saved {len(blob):,} bytes to {path}; reloaded model scores {evaluate(restored, val_set)}")
