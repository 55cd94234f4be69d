"""Labelled eye-crop corpora: disk loading, stratified splits, synthetic glyphs.

On disk a corpus is a directory with ``open/`` and ``closed/``
subdirectories of binary PGM files of any size. Every image is equalized,
resized to 24x24 and scaled into [0, 1] on load.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fdnn import INPUT_SIZE, EyeSample, Label
from .imageproc import GrayImage, PgmError, normalize_eye, read_pgm, write_pgm

CLASS_DIRS = {Label.CLOSED: "closed", Label.OPEN: "open"}
DEFAULT_NOISE = 12.0


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: Label
    origin: str


@dataclass
class Corpus:
    images: np.ndarray  # (n, 24, 24) float32
    labels: np.ndarray  # (n,) int64, Label values
    manifest: list[ManifestEntry]
    skipped: int = 0

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32).reshape(-1, INPUT_SIZE, INPUT_SIZE)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not len(self.images) == len(self.labels) == len(self.manifest):
            raise DatasetError("images, labels and manifest lengths differ")

    def __len__(self):
        return len(self.labels)

    @property
    def samples(self) -> list[EyeSample]:
        return [EyeSample(img, Label(lab)) for img, lab in zip(self.images, self.labels)]

    def counts(self) -> dict[Label, int]:
        return {lab: int(np.sum(self.labels == lab)) for lab in Label}

    def subset(self, idx) -> "Corpus":
        idx = np.asarray(idx, dtype=np.intp)
        return Corpus(self.images[idx], self.labels[idx], [self.manifest[i] for i in idx])

    def manifest_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["path", "label", "origin"])
        for e in self.manifest:
            w.writerow([e.path, e.label.name, e.origin])
        return buf.getvalue()


def load_corpus(root, origin: str | None = None) -> Corpus:
    """Load ``root/open/*.pgm`` and ``root/closed/*.pgm``.

    Order is canonical: CLOSED before OPEN, then by filename. Unreadable
    files are skipped with a warning and counted in ``Corpus.skipped``.
    """
    root = Path(root)
    origin = origin or root.name
    images, labels, manifest = [], [], []
    skipped = 0
    for label in sorted(Label):
        d = root / CLASS_DIRS[label]
        files = sorted(d.glob("*.pgm"), key=lambda p: p.name) if d.is_dir() else []
        if not files:
            raise DatasetError(f"no .pgm files in {d}")
        n_ok = 0
        for f in files:
            try:
                img = read_pgm(f.read_bytes())
            except (OSError, PgmError) as exc:
                warnings.warn(f"skipping {f}: {exc}", stacklevel=2)
                skipped += 1
                continue
            images.append(normalize_eye(img))
            labels.append(int(label))
            manifest.append(ManifestEntry(f"{CLASS_DIRS[label]}/{f.name}", label, origin))
            n_ok += 1
        if n_ok == 0:
            raise DatasetError(f"no readable images in {d}")
    return Corpus(np.stack(images), np.array(labels), manifest, skipped)


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, ...] = (0.7, 0.3)
    seed: int = 0

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        if len(fr) < 2:
            raise ValueError("a split needs at least two parts")
        if any(not 0 < f < 1 for f in fr):
            raise ValueError(f"every fraction must be in (0, 1), got {fr}")
        if abs(sum(fr) - 1) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {sum(fr)}")
        object.__setattr__(self, "fractions", fr)


def part_sizes(n: int, fractions) -> list[int]:
    """Largest-remainder rounding of ``n * f``; equal remainders favour the later part.

    Every part is within one sample of its exact share and the sizes sum to ``n``.
    """
    exact = [n * f for f in fractions]
    sizes = [math.floor(e + 1e-9) for e in exact]
    rem = [round(e - s, 9) for e, s in zip(exact, sizes)]
    order = sorted(range(len(sizes)), key=lambda j: (-rem[j], -j))
    for j in order[:n - sum(sizes)]:
        sizes[j] += 1
    return sizes


def _allocate(class_sizes: list[int], fractions) -> np.ndarray:
    """Integer (class x part) table with row sums = class sizes and column
    sums = :func:`part_sizes` of the total, every cell within one sample of
    its exact share ``class_size * fraction``.

    Rows start from largest-remainder rounding; column sums are then fixed by
    moving single samples between parts along augmenting paths, which finds
    a table whenever one exists inside those bounds.
    """
    fr = np.asarray(fractions, dtype=np.float64)
    quota = np.outer(class_sizes, fr)
    lo = np.maximum(np.ceil(quota - 1 - 1e-9), 0).astype(int)
    hi = np.floor(quota + 1 + 1e-9).astype(int)
    table = np.floor(quota + 1e-9).astype(int)
    for c, n in enumerate(class_sizes):
        short = n - table[c].sum()
        for j in np.argsort(-(quota[c] - table[c]), kind="stable")[:short]:
            table[c, j] += 1
    target = np.asarray(part_sizes(sum(class_sizes), fractions))
    while True:
        excess = table.sum(axis=0) - target
        if not excess.any():
            return table
        src = int(np.flatnonzero(excess > 0)[0])
        # breadth-first search over parts; edge a -> b via class c moves one
        # sample of class c from part a to part b
        prev = {src: None}
        queue, found = [src], None
        while queue and found is None:
            a = queue.pop(0)
            for b in range(len(fr)):
                if b in prev:
                    continue
                for c in range(len(class_sizes)):
                    if table[c, a] > lo[c, a] and table[c, b] < hi[c, b]:
                        prev[b] = (a, c)
                        queue.append(b)
                        if excess[b] < 0:
                            found = b
                        break
                if found is not None:
                    break
        if found is None:
            raise DatasetError(f"no stratified allocation of {class_sizes} into parts {target.tolist()}")
        b = found
        while prev[b] is not None:
            a, c = prev[b]
            table[c, a] -= 1
            table[c, b] += 1
            b = a


def split(corpus: Corpus, spec: SplitSpec) -> list[Corpus]:
    """Stratified, seeded partition of ``corpus`` into ``len(spec.fractions)`` parts."""
    if len(corpus) == 0:
        raise DatasetError("cannot split an empty corpus")
    classes = sorted(set(int(v) for v in corpus.labels))
    members = [np.flatnonzero(corpus.labels == c) for c in classes]
    table = _allocate([len(m) for m in members], spec.fractions)
    if np.any(table == 0):
        raise DatasetError(f"split {spec.fractions} leaves a class empty in some part: {table.tolist()}")
    rng = np.random.default_rng(spec.seed)
    parts = [[] for _ in spec.fractions]
    for m, row in zip(members, table):
        perm = rng.permutation(m)
        bounds = np.r_[0, np.cumsum(row)]
        for j in range(len(parts)):
            parts[j].append(perm[bounds[j]:bounds[j + 1]])
    return [corpus.subset(np.sort(np.concatenate(p))) for p in parts]


# -- synthetic eye glyphs -------------------------------------------------------

def render_glyph(label: Label, rng: np.random.Generator, noise: float = DEFAULT_NOISE,
                 size: int = INPUT_SIZE) -> GrayImage:
    """Draw one eye glyph.

    OPEN is a bright sclera ellipse with a dark iris disk; CLOSED is a
    single dark lid arc. Both sit on a flat skin tone with Gaussian noise.
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    skin = rng.uniform(110, 170)
    img = np.full((size, size), skin)
    c = (size - 1) / 2
    cx, cy = c + rng.uniform(-2, 2), c + rng.uniform(-2, 2)
    a = rng.uniform(6.5, 9.5)
    if label == Label.OPEN:
        b = rng.uniform(3.5, 5.5)
        sclera = ((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2 <= 1
        img[sclera] = rng.uniform(200, 240)
        r = rng.uniform(2.3, min(3.8, b))
        ix = cx + rng.uniform(-a / 3, a / 3)
        iris = ((xx - ix) ** 2 + (yy - cy) ** 2 <= r * r) & sclera
        img[iris] = rng.uniform(20, 60)
    else:
        bend = rng.uniform(0.01, 0.06)
        thick = rng.uniform(1.0, 2.2)
        arc = (np.abs(yy - (cy + bend * (xx - cx) ** 2)) <= thick / 2) & (np.abs(xx - cx) <= a)
        img[arc] = rng.uniform(20, 70)
    img += rng.normal(0.0, noise, size=img.shape)
    return GrayImage(np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8))


def render_synthetic(n_per_class: int, seed: int, noise: float = DEFAULT_NOISE):
    """Raw glyphs as (label, filename, image) triples in canonical corpus order."""
    if n_per_class < 1:
        raise ValueError("need at least one glyph per class")
    out = []
    for label in sorted(Label):
        rng = np.random.default_rng([seed, int(label)])
        name = CLASS_DIRS[label]
        for i in range(n_per_class):
            out.append((label, f"{name}_{i:05d}.pgm", render_glyph(label, rng, noise)))
    return out


def synth_corpus(n_per_class: int, seed: int, noise: float = DEFAULT_NOISE) -> Corpus:
    """Synthetic corpus, identical to loading the tree :func:`write_synthetic` produces."""
    glyphs = render_synthetic(n_per_class, seed, noise)
    images = np.stack([normalize_eye(img) for _, _, img in glyphs])
    labels = np.array([int(lab) for lab, _, _ in glyphs])
    manifest = [ManifestEntry(f"{CLASS_DIRS[lab]}/{name}", lab, "synth") for lab, name, _ in glyphs]
    return Corpus(images, labels, manifest)


def write_synthetic(root, n_per_class: int, seed: int, noise: float = DEFAULT_NOISE) -> int:
    root = Path(root)
    glyphs = render_synthetic(n_per_class, seed, noise)
    for label, name, img in glyphs:
        d = root / CLASS_DIRS[label]
        d.mkdir(parents=True, exist_ok=True)
        (d / name).write_bytes(write_pgm(img))
    return len(glyphs)


def _face_template(size: float, right_span: float, left_span: float) -> np.ndarray:
    """Rough 68-point frontal face in a ``size`` x ``size`` frame, iBUG order."""
    s = size / 96.0
    pts = np.zeros((68, 2))
    t = np.linspace(np.pi * 0.95, np.pi * 0.05, 17)
    pts[0:17] = np.c_[48 + 40 * np.cos(t), 40 + 48 * np.sin(t)]            # jaw
    pts[17:22] = np.c_[np.linspace(18, 42, 5), [30, 27, 26, 27, 29]]        # right brow
    pts[22:27] = np.c_[np.linspace(54, 78, 5), [29, 27, 26, 27, 30]]        # left brow
    pts[27:31] = np.c_[[48] * 4, np.linspace(38, 56, 4)]                    # nose bridge
    pts[31:36] = np.c_[np.linspace(40, 56, 5), [60, 61, 62, 61, 60]]        # nostrils
    for start, cx, span in ((36, 31.0, right_span), (42, 65.0, left_span)):
        x0, x1 = cx - span / 2, cx + span / 2
        xs = np.linspace(x0, x1, 4)
        pts[start:start + 6] = [(x0, 40), (xs[1], 37), (xs[2], 37), (x1, 40), (xs[2], 43), (xs[1], 43)]
    m = np.linspace(0, 2 * np.pi, 13)[:-1]
    pts[48:60] = np.c_[48 - 14 * np.cos(m), 74 + 5 * np.sin(m)]             # outer lip
    m = np.linspace(0, 2 * np.pi, 9)[:-1]
    pts[60:68] = np.c_[48 - 8 * np.cos(m), 74 + 2 * np.sin(m)]              # inner lip
    return pts * s


def synth_face_frame(label: Label, rng: np.random.Generator, size: int = 96, yaw: float = 0.0,
                     noise: float = DEFAULT_NOISE, frame_id: int = 0):
    """A face-sized frame with eye glyphs pasted at the eye landmarks.

    ``yaw`` in (-1, 1) shrinks one eye's span and widens the other, as a
    head turned away from the camera would. Returns (GrayImage, LandmarkSet).
    """
    from .imageproc import resize_bilinear
    from .landmarks import LandmarkSet, Side, eye_box

    base = 18.0
    pts = _face_template(size, base * (1 - yaw), base * (1 + yaw))
    lm = LandmarkSet(pts, frame_id)
    canvas = np.clip(rng.normal(rng.uniform(110, 170), noise, size=(size, size)), 0, 255)
    for side in (Side.RIGHT, Side.LEFT):
        box = eye_box(lm, side, bounds=(size, size))
        glyph = resize_bilinear(render_glyph(label, rng, noise), box.w, box.h)
        canvas[box.y0:box.y1, box.x0:box.x1] = glyph.pixels
    return GrayImage(np.floor(canvas + 0.5).astype(np.uint8)), lm
