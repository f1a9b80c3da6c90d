"""64-bit DCT perceptual hashes and the Hamming metric.

The hash is the classical DCT variant:

1. convert to grayscale with BT.601 luma weights (0.299, 0.587, 0.114),
   computed in floating point;
2. bilinear resize to 32x32 (skipped when the raster is already 32x32);
3. unnormalised 2-D DCT-II;
4. keep the top-left 8x8 block of low-frequency coefficients;
5. take the median of the 63 non-DC coefficients; bit ``i`` is set iff
   coefficient ``i`` (row-major, DC included) exceeds that median.

Coefficients within ``1e-9 * max|block|`` of the median count as *not*
greater. This keeps bits that are analytically tied with the median (for
example the zero coefficients of a pure cosine grating) from flipping on
floating-point noise.

Bit 0 is the most significant bit of the integer, so the 16-char hex form
reads the 8x8 block in row-major order.
"""

from __future__ import annotations

import io
import os
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.fft import dctn
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import DecodeError
from .validation import HASH_MASK, as_hash

HASH_SIZE = 8
IMG_SIZE = 32
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
MEDIAN_TOL = 1e-9

_BIT_WEIGHTS = [1 << (63 - i) for i in range(64)]


def to_hex(h) -> str:
    return f"{as_hash(h):016x}"


def from_hex(text: str) -> int:
    return as_hash(text)


def hamming(a, b) -> int:
    """Number of differing bits between two 64-bit hashes."""
    return (as_hash(a) ^ as_hash(b)).bit_count()


if hasattr(np, "bitwise_count"):

    def hamming_many(a, b) -> np.ndarray:
        """Elementwise (broadcasting) Hamming distance of uint64 arrays."""
        x = np.bitwise_xor(np.asarray(a, dtype=np.uint64), np.asarray(b, dtype=np.uint64))
        return np.bitwise_count(x).astype(np.int64)

else:  # pragma: no cover - numpy < 2

    def hamming_many(a, b) -> np.ndarray:
        x = np.bitwise_xor(np.asarray(a, dtype=np.uint64), np.asarray(b, dtype=np.uint64))
        as_bytes = np.ascontiguousarray(x)[..., None].view(np.uint8)
        return np.unpackbits(as_bytes, axis=-1).sum(axis=-1).astype(np.int64)


def _open(image) -> Image.Image:
    if isinstance(image, Image.Image):
        return image
    try:
        if isinstance(image, (bytes, bytearray, memoryview)):
            img = Image.open(io.BytesIO(bytes(image)))
        elif isinstance(image, (str, os.PathLike)):
            img = Image.open(Path(image))
        else:
            raise DecodeError(f"unsupported image payload type {type(image).__name__}")
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"cannot decode image: {exc}") from exc
    return img


def to_luma(image) -> np.ndarray:
    """Decode ``image`` into a float64 grayscale array."""
    if isinstance(image, np.ndarray):
        arr = np.asarray(image, dtype=np.float64)
        if arr.ndim == 3 and arr.shape[2] in (3, 4):
            arr = arr[..., :3] @ LUMA_WEIGHTS
        elif arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[..., 0]
        elif arr.ndim != 2:
            raise DecodeError(f"cannot interpret array of shape {arr.shape} as an image")
    else:
        img = _open(image)
        if getattr(img, "n_frames", 1) > 1:
            raise DecodeError("animated images are not supported")
        if img.mode in ("L", "F", "I", "I;16"):
            arr = np.asarray(img, dtype=np.float64)
        else:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64) @ LUMA_WEIGHTS
    if arr.size == 0 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DecodeError("zero-area image")
    if not np.all(np.isfinite(arr)):
        raise DecodeError("image contains non-finite pixel values")
    return arr


def resize_luma(arr: np.ndarray, size: int = IMG_SIZE) -> np.ndarray:
    if arr.shape == (size, size):
        return arr
    img = Image.fromarray(arr.astype(np.float32), mode="F")
    return np.asarray(img.resize((size, size), Image.Resampling.BILINEAR), dtype=np.float64)


def bits_from_block(block: np.ndarray) -> int:
    """Pack an 8x8 coefficient block into a hash using the median rule."""
    flat = np.asarray(block, dtype=np.float64).ravel()
    median = np.median(flat[1:])
    tol = MEDIAN_TOL * float(np.max(np.abs(flat)))
    bits = flat > median + tol
    return sum(w for w, bit in zip(_BIT_WEIGHTS, bits) if bit) & HASH_MASK


def compute_phash(image) -> int:
    """Perceptual hash of ``image``.

    ``image`` may be a PIL image, a file path, raw encoded bytes, or a
    2-D (gray) / 3-D (RGB[A]) numpy array of pixel intensities.
    """
    luma = resize_luma(to_luma(image))
    coeffs = dctn(luma, type=2)
    return bits_from_block(coeffs[:HASH_SIZE, :HASH_SIZE])


class PHasher(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping images to 64-bit perceptual hashes.

    ``transform`` returns a uint64 array, or 16-char hex strings when
    ``output="hex"``.
    """

    def __init__(self, output: str = "int"):
        self.output = output

    def fit(self, X=None, y=None):
        if self.output not in ("int", "hex"):
            raise ValueError(f"output must be 'int' or 'hex', got {self.output!r}")
        self.n_features_out_ = 1
        return self

    def transform(self, X):
        if self.output not in ("int", "hex"):
            raise ValueError(f"output must be 'int' or 'hex', got {self.output!r}")
        hashes = [compute_phash(img) for img in X]
        if self.output == "hex":
            return np.array([to_hex(h) for h in hashes], dtype=object)
        return np.array(hashes, dtype=np.uint64)

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags
