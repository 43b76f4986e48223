"""Bookkeeping for retained Fourier modes.

A retention count ``m`` keeps the ``m`` lowest-|k| frequencies of an
``n``-point spectrum: the nonnegative ones ``0 .. ceil(m/2)-1`` plus the
negative ones ``-1 .. -floor(m/2)``.  Packed mode tensors store them in
the interleaved order ``0, -1, +1, -2, +2, ...`` so that growing ``m``
only appends entries; existing entries never move.
"""

from __future__ import annotations

import numpy as np


def mode_frequencies(m):
    """Signed frequencies of the first ``m`` packed slots: 0, -1, 1, -2, 2, ..."""
    if m < 1:
        raise ValueError("retention count must be >= 1")
    out = np.empty(m, dtype=np.int64)
    out[0::2] = np.arange(0, (m + 1) // 2)
    out[1::2] = -np.arange(1, m // 2 + 1)
    return out


def gather_indices(m, n):
    """FFT-layout indices of the ``m`` retained modes of an ``n``-point axis."""
    if m > n:
        raise ValueError(f"cannot retain {m} modes from an axis of extent {n}")
    return mode_frequencies(m) % n


def gather_modes(spectrum, counts):
    """Pack the retained modes of the leading ``len(counts)`` axes."""
    out = spectrum
    for axis, m in enumerate(counts):
        out = np.take(out, gather_indices(m, spectrum.shape[axis]), axis=axis)
    return out


def scatter_modes(packed, grid_extents):
    """Adjoint of :func:`gather_modes`: place packed modes into zeros."""
    ndims = len(grid_extents)
    counts = packed.shape[:ndims]
    full = np.zeros(tuple(grid_extents) + packed.shape[ndims:], dtype=packed.dtype)
    index = np.ix_(*(gather_indices(m, n) for m, n in zip(counts, grid_extents)))
    full[index] = packed
    return full
