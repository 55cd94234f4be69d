"""Metrics with CLOSED as the positive class.

The first two confusion tables are the counts published for the small
network and for the VGG16 transfer model. The last part builds an ROC
curve from a handful of scores.
"""

from drowsy.metrics import ConfusionCounts, RunStats, precision_recall_accuracy, roc_auc

for name, counts in [("FD-NN", ConfusionCounts(558, 1, 603, 85)), ("VGG16", ConfusionCounts(426, 5, 395, 8))]:
    s = precision_recall_accuracy(counts)
    print(f"{name}: n={counts.total} precision {s.precision:.4f} recall {s.recall:.4f} accuracy {s.accuracy:.4f}")

scores = [0.9, 0.3, 0.6, 0.1]
labels = [True, True, False, False]
roc = roc_auc(scores, labels)
print(f"AUC {roc.auc}")
for t, f, p in zip(roc.thresholds, roc.fpr, roc.tpr):
    print(f"  threshold {t:>4}  fpr {f:.2f}  tpr {p:.2f}")

stats = RunStats.from_accuracies([97.9, 98.4, 98.1, 97.6, 98.8, 98.2, 97.7, 98.5, 98.0, 98.3])
print(f"ten runs: mean {stats.mean:.2f}% variance {stats.variance:.3f} stddev {stats.stddev:.3f}")
