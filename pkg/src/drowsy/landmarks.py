"""68-point facial landmarks and camera-facing eye selection.

Landmark numbering is 1-based, following the iBUG 300-W layout: points
37-42 outline the subject's right eye and 43-48 the left eye, with 37/40
and 43/46 at the eye corners.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass

import numpy as np

from .imageproc import CropBox

N_POINTS = 68
RIGHT_EYE = tuple(range(37, 43))
LEFT_EYE = tuple(range(43, 49))
EYE_CORNERS = {"RIGHT": (37, 40), "LEFT": (43, 46)}
DEFAULT_MARGIN = 0.4


class LandmarkError(ValueError):
    pass


class LandmarkParseError(LandmarkError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class Side(enum.Enum):
    RIGHT = "RIGHT"
    LEFT = "LEFT"


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    points: np.ndarray  # (68, 2) float64, row k holds landmark k+1
    frame_id: int = 0

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.shape != (N_POINTS, 2):
            raise LandmarkError(f"need {N_POINTS} (x, y) points, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)) or np.any(pts < 0):
            raise LandmarkError("landmark coordinates must be finite and non-negative")
        if self.frame_id < 0:
            raise LandmarkError(f"negative frame id {self.frame_id}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def point(self, k: int) -> np.ndarray:
        """Landmark ``k`` (1-based)."""
        return self.points[k - 1]

    def eye(self, side: Side) -> np.ndarray:
        idx = RIGHT_EYE if side is Side.RIGHT else LEFT_EYE
        return self.points[[k - 1 for k in idx]]


@dataclass(frozen=True)
class EyeSelection:
    side: Side
    span: float
    box: CropBox


def parse_landmarks_csv(text: str) -> list[LandmarkSet]:
    """Parse ``frame_id,x1,y1,...,x68,y68`` rows (137 fields each).

    A leading header row is recognised by a non-numeric first field and
    skipped. Blank lines are ignored.
    """
    out = []
    n_fields = 1 + 2 * N_POINTS
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not f.strip() for f in row):
            continue
        if lineno == 1 and not _is_number(row[0]):
            continue
        if len(row) != n_fields:
            raise LandmarkParseError(f"expected {n_fields} fields, got {len(row)}", lineno)
        try:
            frame_id = int(row[0])
            coords = [float(f) for f in row[1:]]
        except ValueError as exc:
            raise LandmarkParseError(f"non-numeric field ({exc})", lineno) from None
        try:
            out.append(LandmarkSet(np.reshape(coords, (N_POINTS, 2)), frame_id))
        except LandmarkError as exc:
            raise LandmarkParseError(str(exc), lineno) from None
    return out


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def corner_distance(lm: LandmarkSet, side: Side) -> float:
    a, b = EYE_CORNERS[side.value]
    dx, dy = lm.point(b) - lm.point(a)
    return math.hypot(dx, dy)


def eye_box(lm: LandmarkSet, side: Side, margin: float = DEFAULT_MARGIN, square: bool = True,
            bounds: tuple[int, int] | None = None) -> CropBox:
    """Crop box around the six landmarks of one eye.

    The landmarks' bounding box is grown by ``margin * width`` on every side,
    optionally squared about its centre, and snapped outward to whole
    pixels. ``bounds`` is the (width, height) of the frame to clamp into.
    """
    pts = lm.eye(side)
    (xmin, ymin), (xmax, ymax) = pts.min(axis=0), pts.max(axis=0)
    w = xmax - xmin
    if w <= 0:
        raise LandmarkError(f"{side.value} eye landmarks have zero width")
    pad = margin * w
    xmin, xmax, ymin, ymax = xmin - pad, xmax + pad, ymin - pad, ymax + pad
    if square:
        side_len = max(xmax - xmin, ymax - ymin)
        cx, cy = (xmin + xmax) / 2, (ymin + ymax) / 2
        xmin, xmax = cx - side_len / 2, cx + side_len / 2
        ymin, ymax = cy - side_len / 2, cy + side_len / 2
    x0, y0 = math.floor(xmin), math.floor(ymin)
    box = CropBox(x0, y0, max(math.ceil(xmax) - x0, 1), max(math.ceil(ymax) - y0, 1))
    if bounds is not None:
        box = box.clamp(*bounds)
    return box


def select_eye(lm: LandmarkSet, margin: float = DEFAULT_MARGIN, square: bool = True,
               bounds: tuple[int, int] | None = None) -> EyeSelection:
    """Pick the eye facing the camera: the one with the longer corner-to-corner span.

    Ties go to the right eye.
    """
    d_right = corner_distance(lm, Side.RIGHT)
    d_left = corner_distance(lm, Side.LEFT)
    if d_right == 0 and d_left == 0:
        raise LandmarkError(f"frame {lm.frame_id}: both eye spans are zero")
    side = Side.RIGHT if d_right >= d_left else Side.LEFT
    span = d_right if side is Side.RIGHT else d_left
    return EyeSelection(side, span, eye_box(lm, side, margin, square, bounds))
