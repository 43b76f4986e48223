"""Learnable per-mode transforms on truncated Fourier spectra.

Weights are complex tensors of shape ``(M1[, M2], C, C)`` whose leading
axes follow the packed mode order of :mod:`incfno.modes` and hold the
``K`` effective modes per dimension plus ``b`` trainable buffer modes.
Buffer modes take part in the forward pass and receive gradients; they
exist so that the strength of not-yet-effective modes can be observed
and promoted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import modes, tape


@dataclass
class SpectralWeights:
    """Per-mode channel-mixing transform with effective/buffer bookkeeping."""

    weights: np.ndarray
    effective_modes: tuple[int, ...]
    buffer_modes: int

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.complex128)
        self.effective_modes = tuple(int(k) for k in np.atleast_1d(self.effective_modes))
        self.buffer_modes = int(self.buffer_modes)
        ndims = len(self.effective_modes)
        if self.weights.ndim != ndims + 2:
            raise ValueError(
                f"weights rank {self.weights.ndim} does not match {ndims} mode dimensions"
            )
        if self.weights.shape[-1] != self.weights.shape[-2]:
            raise ValueError("per-mode transform must be square over channels")
        if self.buffer_modes < 0 or any(k < 1 for k in self.effective_modes):
            raise ValueError("need effective modes >= 1 and buffer modes >= 0")
        for d, k in enumerate(self.effective_modes):
            if self.weights.shape[d] != k + self.buffer_modes:
                raise ValueError(
                    f"mode axis {d} has extent {self.weights.shape[d]}, "
                    f"expected K+b = {k + self.buffer_modes}"
                )
        if not np.all(np.isfinite(self.weights.view(np.float64))):
            raise ValueError("spectral weights contain NaN/Inf")

    @property
    def channels(self):
        return self.weights.shape[-1]

    @property
    def retained(self):
        """Total packed modes per dimension (K_d + b)."""
        return tuple(self.weights.shape[: len(self.effective_modes)])


def init_spectral_weights(effective_modes, buffer_modes, channels, init_scale, rng):
    """Fresh weights with re/im entries ~ Normal(0, init_scale^2)."""
    effective = tuple(int(k) for k in np.atleast_1d(effective_modes))
    shape = tuple(k + buffer_modes for k in effective) + (channels, channels)
    w = init_scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return SpectralWeights(w, effective, buffer_modes)


def truncate_modes(spectrum, retained):
    """Pack the lowest-|k| modes of the leading axes into a dense tensor."""
    retained = tuple(int(m) for m in np.atleast_1d(retained))
    spectrum = np.asarray(spectrum)
    for d, m in enumerate(retained):
        if m > spectrum.shape[d]:
            raise ValueError(
                f"cannot retain {m} modes from axis {d} of extent {spectrum.shape[d]}"
            )
    return modes.gather_modes(spectrum, retained)


def scatter_modes(packed, grid_extents):
    """Exact adjoint of :func:`truncate_modes`: zero-fill the full spectrum."""
    return modes.scatter_modes(np.asarray(packed), tuple(int(n) for n in grid_extents))


def fourier_conv_forward(v, weights, tp=None):
    """Transform, mix the retained modes through ``weights``, transform back.

    ``v`` is a real grid-by-channels array (or a tape node wrapping one);
    the result is the real part of the inverse transform, recorded on the
    tape when one is given.  ``weights`` may be a :class:`SpectralWeights`,
    a raw complex array, or a tape node.
    """
    w_val = weights.weights if isinstance(weights, SpectralWeights) else weights
    ndims = (w_val.value if isinstance(w_val, tape.Node) else w_val).ndim - 2
    axes = tuple(range(ndims))
    if tp is not None and not isinstance(v, tape.Node):
        v = tp.leaf(v)
    if tp is not None and not isinstance(w_val, tape.Node):
        w_val = tp.leaf(w_val)
    spectrum = tape.apply(tp, "dft", v, axes=axes)
    mixed = tape.apply(tp, "mode_contract", spectrum, w_val)
    return tape.apply(tp, "idft", mixed, axes=axes, real_output=True)


def frequency_strength(weights):
    """Per-dimension mode strengths: squared moduli summed over channels.

    Returns one nonnegative vector per mode dimension; along dimension
    ``d`` entry ``k`` sums ``|R|^2`` over every weight whose packed index
    on that axis is ``k`` (the marginal in 2D).
    """
    w = weights.weights if isinstance(weights, SpectralWeights) else np.asarray(weights)
    ndims = w.ndim - 2
    power = (w.real**2 + w.imag**2).astype(np.float64)
    out = []
    for d in range(ndims):
        other = tuple(ax for ax in range(w.ndim) if ax != d)
        out.append(power.sum(axis=other))
    return out


def expand_weights(weights, new_effective, init_scale, rng):
    """Grow effective modes, keeping every old entry at its old index.

    New entries (any index beyond the old extents) get re/im drawn i.i.d.
    from Normal(0, init_scale^2); with ``init_scale = 0`` the forward map
    is unchanged.
    """
    new_effective = tuple(int(k) for k in np.atleast_1d(new_effective))
    if len(new_effective) != len(weights.effective_modes):
        raise ValueError("dimension count changed during expansion")
    for k_new, k_old in zip(new_effective, weights.effective_modes):
        if k_new < k_old:
            raise ValueError(f"effective modes cannot shrink ({k_old} -> {k_new})")
    b = weights.buffer_modes
    c = weights.channels
    shape = tuple(k + b for k in new_effective) + (c, c)
    if init_scale == 0.0:
        fresh = np.zeros(shape, dtype=np.complex128)
    else:
        fresh = init_scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    old_block = tuple(slice(0, m) for m in weights.retained)
    fresh[old_block] = weights.weights
    return SpectralWeights(fresh, new_effective, b)
