"""Command-line entry point: ``drowsy <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Every command writes a ``*.provenance.json`` record of its full
configuration next to its outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bench import bench_latency
from .datasets import DatasetError, SplitSpec, load_corpus, render_synthetic, split, write_synthetic
from .decision import DecisionConfig, run_stream
from .fdnn import FdnnModel, Label, WeightFormatError, evaluate, load_weights, predict, save_weights, train
from .imageproc import (
    EYE_SIZE, InvalidRoiError, PgmError, RgbImage, crop, equalize_histogram, normalize_eye, read_netpbm,
    read_pgm, resize_bilinear, to_grayscale, write_pgm,
)
from .landmarks import DEFAULT_MARGIN, LandmarkError, parse_landmarks_csv, select_eye
from .metrics import confusion, precision_recall_accuracy, roc_auc
from .nncore import NumericError, SgdConfig

log = logging.getLogger("drowsy")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
NO_MEASUREMENT_SUFFIX = ".nomeasure"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fractions(text: str):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad split {text!r}, expected e.g. 0.7,0.3") from None


def write_provenance(path: Path, command: str, args: argparse.Namespace):
    record = {"command": command, "version": __version__,
              "args": {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}}
    Path(str(path) + ".provenance.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _frame_id(stem: str) -> int | None:
    m = re.search(r"(\d+)$", stem)
    return int(m.group(1)) if m else None


def _fmt(v):
    return "" if v is None else f"{v:.6f}"


# -- commands -------------------------------------------------------------

def cmd_synth(args) -> int:
    n = write_synthetic(args.out_dir, args.n, args.seed, args.noise)
    write_provenance(Path(args.out_dir) / "synth", "synth", args)
    print(f"wrote {n} glyphs to {args.out_dir}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    frames_dir, out_dir = Path(args.frames_dir), Path(args.out_dir)
    frames = sorted(p for p in frames_dir.iterdir() if p.suffix.lower() in (".pgm", ".ppm"))
    if not frames:
        raise DatasetError(f"no .pgm/.ppm frames in {frames_dir}")
    marks = {lm.frame_id: lm for lm in parse_landmarks_csv(Path(args.landmarks).read_text())}
    out_dir.mkdir(parents=True, exist_ok=True)
    written, matched = 0, set()
    for path in frames:
        fid = _frame_id(path.stem)
        lm = marks.get(fid)
        if lm is None:
            reason = f"no landmark row for frame id {fid}"
        else:
            matched.add(fid)
            try:
                img = read_netpbm(path.read_bytes())
                gray = to_grayscale(img) if isinstance(img, RgbImage) else img
                sel = select_eye(lm, margin=args.margin, square=not args.no_square,
                                 bounds=(gray.width, gray.height))
                eye = resize_bilinear(equalize_histogram(crop(gray, sel.box)), EYE_SIZE, EYE_SIZE)
            except (PgmError, LandmarkError, InvalidRoiError) as exc:
                reason = str(exc)
            else:
                (out_dir / f"{path.stem}.pgm").write_bytes(write_pgm(eye))
                written += 1
                continue
        log.warning("%s: %s", path.name, reason)
        (out_dir / f"{path.stem}{NO_MEASUREMENT_SUFFIX}").write_text(reason + "\n")
    unused = sorted(set(marks) - matched)
    if unused:
        log.warning("landmark rows without a frame: %s", ", ".join(map(str, unused)))
    write_provenance(out_dir / "preprocess", "preprocess", args)
    print(f"{written} of {len(frames)} frames cropped into {out_dir}")
    return EXIT_OK if written else EXIT_DATA


def _metric_block(name, model, part):
    acc, auc = evaluate(model, part)
    print(f"[{name}] n={len(part)} accuracy={acc:.4f} auc={'n/a' if auc is None else f'{auc:.4f}'}")


def cmd_train(args) -> int:
    corpus = load_corpus(args.data_dir)
    parts = split(corpus, SplitSpec(args.split, args.split_seed))
    cfg = SgdConfig(args.lr, args.momentum, args.batch_size, args.epochs, args.seed)
    model = FdnnModel(seed=args.seed, channels=args.channels)
    result = train(model, parts[0], parts[1], cfg, select_best=args.select_best)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(save_weights(model))
    history = Path(args.history) if args.history else out.with_suffix(".history.csv")
    with history.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_accuracy", "val_auc"])
        for r in result.history:
            w.writerow([r.epoch, f"{r.train_loss:.8f}", f"{r.val_accuracy:.6f}", _fmt(r.val_auc)])
    write_provenance(out, "train", args)
    write_provenance(history, "train", args)
    for name, part in zip(("train", "val", "test"), parts):
        _metric_block(name, model, part)
    return EXIT_OK


def _load_model(path) -> FdnnModel:
    return load_weights(Path(path).read_bytes())


def cmd_eval(args) -> int:
    model = _load_model(args.weights)
    corpus = load_corpus(args.data_dir)
    proba = model.predict_proba(corpus.images)
    pred = np.where(proba[:, 0] >= proba[:, 1], Label.CLOSED, Label.OPEN)
    counts = confusion(zip(pred, corpus.labels), positive=Label.CLOSED)
    scores = precision_recall_accuracy(counts)
    positives = corpus.labels == Label.CLOSED
    roc = roc_auc(proba[:, 0], positives) if 0 < positives.sum() < len(corpus) else None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "accuracy", "auc", "tp", "fp", "tn", "fn", "precision", "recall"])
        w.writerow([counts.total, _fmt(scores.accuracy), _fmt(roc.auc if roc else None),
                    counts.tp, counts.fp, counts.tn, counts.fn, _fmt(scores.precision), _fmt(scores.recall)])
    write_provenance(out, "eval", args)
    if args.roc and roc is not None:
        with open(args.roc, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "fpr", "tpr"])
            for t, f, p in zip(roc.thresholds, roc.fpr, roc.tpr):
                w.writerow([t, f, p])
        write_provenance(Path(args.roc), "eval", args)
    print(out.read_text(), end="")
    return EXIT_OK


def _stream_items(crops_dir: Path):
    items = [p for p in crops_dir.iterdir() if p.suffix in (".pgm", NO_MEASUREMENT_SUFFIX)]
    return sorted(items, key=lambda p: (p.stem, p.suffix))


def cmd_stream(args) -> int:
    model = _load_model(args.weights)
    model.infer_mode()
    cfg = DecisionConfig(args.fps, args.seconds, args.threshold)
    items = _stream_items(Path(args.crops_dir))
    probs, names = [], []
    for p in items:
        names.append(p.name)
        if p.suffix == NO_MEASUREMENT_SUFFIX:
            probs.append(None)
        else:
            probs.append(predict(model, normalize_eye(read_pgm(p.read_bytes()))).p_closed)
    result = run_stream(probs, cfg)
    sink = open(args.out, "w") if args.out else sys.stdout
    try:
        for i, (name, v) in enumerate(zip(names, result.verdicts)):
            sink.write(json.dumps({"type": "verdict", "frame": i, "t": round(i / cfg.fps, 6), "file": name,
                                   "class": v.classification.value, "p_closed": v.p_closed,
                                   "event": v.event.value, "counter": v.counter}) + "\n")
        for e in result.events:
            sink.write(json.dumps({"type": "event", **json.loads(e.to_json())}) + "\n")
        sink.write(json.dumps({"type": "summary", "frames": len(items), "alarms": result.alarms,
                               "longest_closed_run": result.longest_closed_run}) + "\n")
    finally:
        if sink is not sys.stdout:
            sink.close()
    if args.out:
        write_provenance(Path(args.out), "stream", args)
    return EXIT_OK


def cmd_bench(args) -> int:
    model = _load_model(args.weights)
    glyphs = render_synthetic((args.frames + 1) // 2, args.seed)
    frames = [img for _, _, img in glyphs][:args.frames]
    cfg = DecisionConfig()
    if args.single_thread:
        from threadpoolctl import threadpool_limits
        with threadpool_limits(1):
            report = bench_latency(model, frames, cfg, warmup=args.warmup)
    else:
        report = bench_latency(model, frames, cfg, warmup=args.warmup)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.summary_csv())
    write_provenance(out, "bench", args)
    if args.samples:
        Path(args.samples).write_text(report.samples_csv())
        write_provenance(Path(args.samples), "bench", args)
    print(report.summary_csv(), end="")
    return EXIT_OK


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="drowsy", description="Driver drowsiness detection pipeline.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic open/closed eye dataset tree")
    s.add_argument("out_dir", type=Path)
    s.add_argument("--n", type=int, default=2000, help="glyphs per class")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--noise", type=float, default=12.0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", help="crop 24x24 eye ROIs from frames + landmark CSV")
    s.add_argument("frames_dir", type=Path)
    s.add_argument("landmarks", type=Path)
    s.add_argument("out_dir", type=Path)
    s.add_argument("--margin", type=float, default=DEFAULT_MARGIN)
    s.add_argument("--no-square", action="store_true")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("train", help="train FD-NN on a dataset tree")
    s.add_argument("data_dir", type=Path)
    s.add_argument("--split", type=_fractions, default=(0.7, 0.3))
    s.add_argument("--split-seed", type=int, default=42)
    s.add_argument("--epochs", type=int, default=50)
    s.add_argument("--lr", type=float, default=0.01)
    s.add_argument("--momentum", type=float, default=0.0)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--channels", type=int, choices=(1, 3), default=1)
    s.add_argument("--select-best", action="store_true", help="keep the best-validation epoch")
    s.add_argument("--out", type=Path, default=Path("fdnn.weights"))
    s.add_argument("--history", type=Path, default=None)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="metrics of a weight file on a dataset tree")
    s.add_argument("weights", type=Path)
    s.add_argument("data_dir", type=Path)
    s.add_argument("--out", type=Path, default=Path("metrics.csv"))
    s.add_argument("--roc", type=Path, default=None, help="also write ROC points here")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("stream", help="run the alarm state machine over a crops directory")
    s.add_argument("weights", type=Path)
    s.add_argument("crops_dir", type=Path)
    s.add_argument("--fps", type=float, default=6.0)
    s.add_argument("--seconds", type=float, default=2.0)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--out", type=Path, default=None, help="write records here instead of stdout")
    s.set_defaults(func=cmd_stream)

    s = sub.add_parser("bench", help="per-frame latency benchmark")
    s.add_argument("weights", type=Path)
    s.add_argument("--frames", type=int, default=1000)
    s.add_argument("--warmup", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--single-thread", action="store_true")
    s.add_argument("--out", type=Path, default=Path("latency.csv"))
    s.add_argument("--samples", type=Path, default=None, help="also write per-frame samples here")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return args.func(args)
    except NumericError as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except (DatasetError, PgmError, LandmarkError, InvalidRoiError, WeightFormatError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except ValueError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
