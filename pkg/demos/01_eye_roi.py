"""From a whole frame to the 24x24 eye patch the classifier sees.

A rendered face is turned slightly so one eye looks wider. The wider eye
is the one nearer the camera, and that is the one we crop.
"""

import numpy as np

from drowsy.datasets import synth_face_frame
from drowsy.fdnn import Label
from drowsy.imageproc import crop, equalize_histogram, normalize_eye
from drowsy.landmarks import select_eye

rng = np.random.default_rng(0)
frame, landmarks = synth_face_frame(Label.OPEN, rng, size=96, yaw=0.3)
print(f"frame {frame.width}x{frame.height}")

sel = select_eye(landmarks, bounds=(frame.width, frame.height))
print(f"selected {sel.side.value} eye, corner span {sel.span:.1f} px, box {sel.box}")

patch = crop(frame, sel.box)
eq = equalize_histogram(patch)
print(f"crop intensities {patch.pixels.min()}..{patch.pixels.max()}, "
      f"after equalization {eq.pixels.min()}..{eq.pixels.max()}")

x = normalize_eye(patch)
print(f"classifier input {x.shape} {x.dtype}, mean {x.mean():.3f}")

# a coarse look at the patch: dark pixels as '#', bright as '.'
for row in x[::3]:
    print("".join("#" if v < 0.33 else "+" if v < 0.66 else "." for v in row[::2]))
