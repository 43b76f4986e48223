"""Reference PDE solvers that produce the training data.

``solve_burgers`` integrates the viscous Burgers equation
``u_t + (u^2/2)_x = nu u_xx`` on the periodic unit interval with a
pseudo-spectral method: 2/3-rule dealiasing on the quadratic term, exact
integrating factor for the diffusion, explicit RK4 for the advection,
advective-CFL-controlled steps.

``solve_darcy`` solves ``-div(a grad u) = 1`` on the unit square with
``u = 0`` on the boundary: second-order conservative 5-point finite
volumes with harmonic-mean face coefficients, conjugate gradients.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg


class SolverBlowupError(RuntimeError):
    """Time integration produced NaN/Inf; the message carries the step count."""


class ConvergenceError(RuntimeError):
    """The linear solve stagnated before reaching the requested residual."""


def solve_burgers(u0, nu, t_final=1.0, cfl=0.4):
    """March ``u0`` to ``u(., t_final)`` on the same grid."""
    u0 = np.asarray(u0, dtype=np.float64).reshape(-1)
    n = u0.size
    if n < 16:
        raise ValueError("need at least 16 grid points")
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    if t_final < 0:
        raise ValueError("t_final must be >= 0")

    k_int = np.fft.fftfreq(n, d=1.0 / n)
    k = 2.0 * np.pi * k_int
    dealias = np.abs(k_int) <= n / 3.0
    dx = 1.0 / n

    def advection(uhat):
        # 2/3 rule on both sides of the product: squaring a state that is
        # band-limited to N/3 can only alias above N/3, which is masked
        u = np.fft.ifft(np.where(dealias, uhat, 0.0)).real
        flux = np.fft.fft(0.5 * u * u)
        return -1j * k * np.where(dealias, flux, 0.0)

    uhat = np.fft.fft(u0)
    t = 0.0
    steps = 0
    while t < t_final:
        u = np.fft.ifft(uhat).real
        umax = max(float(np.max(np.abs(u))), 1e-12)
        dt = min(cfl * dx / umax, t_final - t)
        half = np.exp(-nu * k**2 * (dt / 2.0))
        full = half * half
        a = advection(uhat)
        b = advection(half * (uhat + (dt / 2.0) * a))
        c = advection(half * uhat + (dt / 2.0) * b)
        d = advection(full * uhat + dt * half * c)
        uhat = full * uhat + (dt / 6.0) * (full * a + 2.0 * half * (b + c) + d)
        t += dt
        steps += 1
        if steps % 64 == 0 and not np.all(np.isfinite(uhat.view(np.float64))):
            raise SolverBlowupError(f"non-finite spectrum after {steps} steps (t={t:.6g})")
    out = np.fft.ifft(uhat).real
    if not np.all(np.isfinite(out)):
        raise SolverBlowupError(f"non-finite solution after {steps} steps")
    return out


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def assemble_darcy_system(a):
    """Sparse operator and forcing over the interior of an inclusive grid."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 3:
        raise ValueError("coefficient must be square, at least 3x3")
    if np.min(a) <= 0:
        raise ValueError("coefficient must be strictly positive")
    n = a.shape[0]
    m = n - 2
    h2 = (1.0 / (n - 1)) ** 2

    west = _harmonic(a[0:-2, 1:-1], a[1:-1, 1:-1]) / h2
    east = _harmonic(a[1:-1, 1:-1], a[2:, 1:-1]) / h2
    south = _harmonic(a[1:-1, 0:-2], a[1:-1, 1:-1]) / h2
    north = _harmonic(a[1:-1, 1:-1], a[1:-1, 2:]) / h2

    idx = np.arange(m * m).reshape(m, m)
    rows, cols, vals = [], [], []

    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append((west + east + south + north).ravel())
    # dropped neighbors sit on the u = 0 boundary
    rows.append(idx[1:, :].ravel())
    cols.append(idx[:-1, :].ravel())
    vals.append(-west[1:, :].ravel())
    rows.append(idx[:-1, :].ravel())
    cols.append(idx[1:, :].ravel())
    vals.append(-east[:-1, :].ravel())
    rows.append(idx[:, 1:].ravel())
    cols.append(idx[:, :-1].ravel())
    vals.append(-south[:, 1:].ravel())
    rows.append(idx[:, :-1].ravel())
    cols.append(idx[:, 1:].ravel())
    vals.append(-north[:, :-1].ravel())

    mat = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m * m, m * m),
    )
    return mat, np.ones(m * m)


def solve_darcy(a, rtol=1e-10, maxiter=None):
    """Pressure field on the full grid, zero on the boundary."""
    mat, rhs = assemble_darcy_system(a)
    n = a.shape[0]
    if maxiter is None:
        maxiter = 200 * n
    u_int, info = cg(mat, rhs, rtol=rtol, atol=0.0, maxiter=maxiter)
    if info != 0:
        raise ConvergenceError(f"conjugate gradients stopped with status {info}")
    residual = np.linalg.norm(rhs - mat @ u_int) / np.linalg.norm(rhs)
    if residual >= 1e-8:
        raise ConvergenceError(f"relative residual {residual:.3e} above 1e-8")
    u = np.zeros((n, n))
    u[1:-1, 1:-1] = u_int.reshape(n - 2, n - 2)
    return u


def make_darcy_coefficient(field, hi, lo):
    """Two-level pushforward: ``hi`` where the field is >= 0, else ``lo``."""
    if not hi > lo > 0:
        raise ValueError("need hi > lo > 0")
    return np.where(np.asarray(field) >= 0, float(hi), float(lo))
