"""Gaussian random fields on the periodic unit domain via spectral synthesis.

Fields are drawn from N(0, amplitude^2 (-Lap + tau^2 I)^(-alpha_cov)):
i.i.d. standard complex Gaussians per wavenumber, Hermitian symmetry
enforced so the field is real, each coefficient scaled by
``amplitude * (4 pi^2 |k|^2 + tau^2)^(-alpha_cov / 2)``, mode 0 zeroed
(zero-mean fields), then one inverse transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GrfConfig:
    tau: float = 5.0
    alpha_cov: float = 2.0
    amplitude: float = 1.0
    resolution: int = 1024
    seed: object = 0

    def validate(self):
        if self.tau <= 0 or self.amplitude < 0:
            raise ValueError("need tau > 0 and amplitude >= 0")
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")


def _hermitian_part(xi):
    """Project i.i.d. complex Gaussians onto conjugate-symmetric ones."""
    axes = tuple(range(xi.ndim))
    partner = np.conj(np.roll(np.flip(xi, axis=axes), 1, axis=axes))
    return (xi + partner) / np.sqrt(2.0)


def sample_grf(cfg, dims):
    """Draw one real field of shape ``(n,)`` or ``(n, n)``; seeded."""
    cfg.validate()
    if dims not in (1, 2):
        raise ValueError("dims must be 1 or 2")
    n = cfg.resolution
    rng = np.random.default_rng(cfg.seed)
    shape = (n,) * dims
    k = np.fft.fftfreq(n, d=1.0 / n)
    if dims == 1:
        k_sq = k**2
    else:
        k_sq = k[:, None] ** 2 + k[None, :] ** 2
    scale = cfg.amplitude * (4.0 * np.pi**2 * k_sq + cfg.tau**2) ** (-cfg.alpha_cov / 2.0)
    scale.reshape(-1)[0] = 0.0  # zero-mean field
    if n % 2 == 0:
        # drop the sign-ambiguous Nyquist slot so the samples pin down a
        # unique band-limited function (exact resampling across grids)
        nyq = np.abs(k) == n // 2
        for ax in range(dims):
            index = tuple(nyq if d == ax else slice(None) for d in range(dims))
            scale[index] = 0.0
    xi = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    coeff = (n**dims) * scale * _hermitian_part(xi)
    return np.ascontiguousarray(np.fft.ifftn(coeff).real)
