"""Input validation helpers used by the estimators and module functions."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from numbers import Integral, Real

import numpy as np

from .exceptions import ConfigError

HASH_MASK = (1 << 64) - 1


def check_int_range(value, name: str, low: int | None = None, high: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if (low is not None and value < low) or (high is not None and value > high):
        raise ConfigError(f"{name}={value} outside [{low}, {high}]")
    return value


def check_real_range(
    value,
    name: str,
    low: float | None = None,
    high: float | None = None,
    *,
    low_inclusive: bool = True,
    high_inclusive: bool = True,
) -> float:
    if isinstance(value, bool) or not isinstance(value, Real):
        raise ConfigError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite, got {value}")
    if low is not None and (value < low or (value == low and not low_inclusive)):
        raise ConfigError(f"{name}={value} below allowed range")
    if high is not None and (value > high or (value == high and not high_inclusive)):
        raise ConfigError(f"{name}={value} above allowed range")
    return value


def as_hash(value) -> int:
    """Coerce an int, numpy integer or 16-char hex string to a 64-bit hash."""
    if isinstance(value, str):
        text = value.strip().lower()
        if text.startswith("0x"):
            text = text[2:]
        if not text or len(text) > 16:
            raise ConfigError(f"not a 64-bit hex hash: {value!r}")
        try:
            return int(text, 16)
        except ValueError:
            raise ConfigError(f"not a 64-bit hex hash: {value!r}") from None
    if isinstance(value, (Integral, np.integer)) and not isinstance(value, bool):
        value = int(value)
        if value < 0:
            # numpy int64 views of uint64 hashes
            value &= HASH_MASK
        if value > HASH_MASK:
            raise ConfigError(f"hash does not fit in 64 bits: {value:#x}")
        return value
    raise ConfigError(f"cannot interpret {value!r} as a hash")


def check_hashes(X) -> np.ndarray:
    """Validate a 1-D collection of hashes and return a uint64 array."""
    if isinstance(X, np.ndarray) and X.dtype == np.uint64:
        if X.ndim != 1:
            raise ConfigError(f"expected 1-D hashes, got shape {X.shape}")
        return X
    if isinstance(X, (str, bytes)) or not isinstance(X, Iterable):
        raise ConfigError("hashes must be a 1-D iterable")
    values = [as_hash(v) for v in X]
    return np.array(values, dtype=np.uint64)


def check_hash_mapping(hashes: Mapping) -> tuple[list[str], np.ndarray]:
    """Split an ``id -> hash`` mapping into sorted ids and a uint64 array."""
    if not isinstance(hashes, Mapping):
        raise ConfigError("hashes must be a mapping of id -> hash")
    ids = sorted(str(k) for k in hashes)
    if len(ids) != len(hashes):
        raise ConfigError("image ids collide after str() conversion")
    lookup = {str(k): v for k, v in hashes.items()}
    return ids, np.array([as_hash(lookup[i]) for i in ids], dtype=np.uint64)


def check_event_times(events, n_processes: int | None = None) -> list[np.ndarray]:
    """Per-process event times as sorted float arrays."""
    if isinstance(events, np.ndarray) and events.ndim == 1:
        events = [events]
    out = []
    for k, times in enumerate(events):
        arr = np.asarray(times, dtype=float).ravel()
        if arr.size and not np.all(np.isfinite(arr)):
            raise ConfigError(f"process {k} has non-finite event times")
        out.append(np.sort(arr))
    if n_processes is not None and len(out) != n_processes:
        raise ConfigError(f"expected {n_processes} processes, got {len(out)}")
    return out
