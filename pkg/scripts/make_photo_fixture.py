"""Regenerate tests/data/photos from scikit-image's bundled sample photos."""

from pathlib import Path

import numpy as np
import skimage.data as data
from PIL import Image

NAMES = [
    "astronaut", "brick", "camera", "chelsea", "clock", "coffee", "coins", "grass",
    "gravel", "hubble_deep_field", "immunohistochemistry", "microaneurysms", "moon",
    "page", "retina", "rocket", "text", "cell", "horse", "stereo_motorcycle",
]
MAX_SIDE = 160

out = Path(__file__).resolve().parent.parent / "tests" / "data" / "photos"
out.mkdir(parents=True, exist_ok=True)
for name in NAMES:
    arr = getattr(data, name)()
    if isinstance(arr, tuple):
        arr = arr[0]
    arr = np.asarray(arr)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    img = Image.fromarray(arr)
    img.thumbnail((MAX_SIDE, MAX_SIDE), Image.Resampling.LANCZOS)
    img.save(out / f"{name}.png", optimize=True)
    print(name, img.size)
