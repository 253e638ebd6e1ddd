"""Closed-form quantities of Wigner's semicircle law.

All functions accept scalars or numpy arrays and return the same shape
(scalars come back as Python ``float`` / ``complex``).

The Stieltjes transform uses the convention

    s(z) = int g_sc(x) / (x - z) dx,   Im z > 0,

so that ``Im s(z) > 0`` and ``s(z) ~ -1/z`` at infinity.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError

__all__ = [
    "density",
    "cdf",
    "stieltjes",
    "b_of_z",
    "quantile",
    "psi",
    "edge_distance",
    "envelope_constants",
]

# bracket width at which quantile bisection stops
_QUANTILE_BRACKET = 1e-13


def _scalar(out, like):
    if np.ndim(like) == 0:
        return out.item()
    return out


def _finite_real(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _upper_half(z):
    arr = np.asarray(z, dtype=complex)
    if not np.all(np.isfinite(arr)):
        raise DomainError("z must be finite")
    if np.any(arr.imag <= 0):
        raise DomainError("z must lie in the open upper half-plane (Im z > 0)")
    return arr


def density(x):
    """Semicircle density ``sqrt((4 - x^2)_+) / (2 pi)``."""
    arr = _finite_real(x)
    out = np.sqrt(np.maximum(4.0 - arr * arr, 0.0)) / (2.0 * np.pi)
    return _scalar(out, x)


def cdf(x):
    """Semicircle distribution function in closed form."""
    arr = _finite_real(x)
    c = np.clip(arr, -2.0, 2.0)
    out = 0.5 + c * np.sqrt(4.0 - c * c) / (4.0 * np.pi) + np.arcsin(c / 2.0) / np.pi
    out = np.where(arr <= -2.0, 0.0, np.where(arr >= 2.0, 1.0, np.clip(out, 0.0, 1.0)))
    return _scalar(out, x)


def stieltjes(z):
    """Stieltjes transform ``s(z) = -z/2 + sqrt(z^2/4 - 1)`` on ``Im z > 0``.

    The square root is taken with non-negative imaginary part, which selects
    the Herglotz branch. The value is formed as the reciprocal of the other
    root of ``s^2 + z s + 1 = 0`` (the roots multiply to one), which avoids
    cancellation for large ``|z|``.
    """
    zz = _upper_half(z)
    r = np.sqrt(zz * zz / 4.0 - 1.0)
    r = np.where(r.imag < 0, -r, r)
    out = 1.0 / (-zz / 2.0 - r)
    return _scalar(out, z)


def b_of_z(z):
    """``b(z) = z + 2 s(z)``; satisfies ``|b|^2 = |z^2 - 4|``."""
    zz = _upper_half(z)
    out = zz + 2.0 * np.asarray(stieltjes(zz))
    return _scalar(out, z)


def quantile(j, n):
    """Classical location ``gamma_j`` with ``cdf(gamma_j) = j / n``.

    Found by bisection on ``[-2, 2]`` down to a bracket of 1e-13. The upper
    end of the final bracket is returned, so ``j = n`` gives exactly 2 and
    ``j = n/2`` gives exactly 0. ``j`` may be an integer array.
    """
    n = int(n)
    jj = np.asarray(j)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not np.issubdtype(jj.dtype, np.integer):
        if not np.all(jj == np.round(jj)):
            raise ValueError("j must be an integer index")
        jj = jj.astype(np.int64)
    if np.any(jj < 1) or np.any(jj > n):
        raise ValueError(f"j must satisfy 1 <= j <= n = {n}")
    target = jj.astype(float) / n
    # cdf rounds to 1 before the edge, so the top quantile is pinned
    top = jj == n
    lo = np.full(target.shape, -2.0)
    hi = np.full(target.shape, 2.0)
    while np.any(hi - lo > _QUANTILE_BRACKET):
        mid = 0.5 * (lo + hi)
        above = np.asarray(cdf(mid)) >= target
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    hi = np.where(top, 2.0, hi)
    return _scalar(hi, j)


def psi(z, p, n):
    """``Im s(z) + p / (n v)``, the scale governing resolvent fluctuations."""
    if p < 1 or n < 1:
        raise DomainError("psi requires p >= 1 and n >= 1")
    zz = _upper_half(z)
    out = np.asarray(stieltjes(zz)).imag + p / (n * zz.imag)
    return _scalar(out, z)


def edge_distance(u):
    """Distance ``||u| - 2|`` of a real location to the nearest spectral edge."""
    arr = _finite_real(u, "u")
    return _scalar(np.abs(np.abs(arr) - 2.0), u)


def envelope_constants(values, scale):
    """Tightest ``(c, C)`` with ``c * scale <= values <= C * scale`` pointwise.

    Used to report the unspecified constants in two-sided bounds such as
    ``c sqrt(gamma + v) <= |b(z)| <= C sqrt(gamma + v)``.
    """
    ratio = np.asarray(values, dtype=float) / np.asarray(scale, dtype=float)
    if ratio.size == 0 or not np.all(np.isfinite(ratio)):
        raise ValueError("envelope needs a nonempty set of finite ratios")
    return float(ratio.min()), float(ratio.max())

