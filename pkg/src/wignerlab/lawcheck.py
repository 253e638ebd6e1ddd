"""Empirical checks of semicircle-law statements on simulated spectra.

Nothing here asserts an unspecified absolute constant: bounds are evaluated
with all constants set to 1 and the constant that would make them hold is
reported instead.

Quantile convention (used throughout): the 0.5 level is the ordinary median
(midpoint of the two central values for even counts); every other level
``q`` is the nearest-rank order statistic ``x_(ceil(q N))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import semicircle
from .errors import ContractError
from .spectral import SpectralData, counting, stieltjes

__all__ = [
    "QUANTILE_LEVELS",
    "GridSpec",
    "LawReport",
    "ScalingFit",
    "RigidityReport",
    "SmoothingTerms",
    "empirical_quantile",
    "kolmogorov_distance",
    "mean_esd_distance",
    "local_law_scan",
    "imag_law_outside",
    "window_density",
    "rigidity_report",
    "delocalization_report",
    "smoothing_bound",
    "smoothing_parameters",
    "scaling_fit",
    "beta_diagnostic",
]

QUANTILE_LEVELS = (0.5, 0.9, 0.99)


def empirical_quantile(values, q: float) -> float:
    """Quantile of ``values`` under the package convention (see module doc)."""
    x = np.sort(np.asarray(values, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("quantile of an empty sample")
    if not 0.0 < q <= 1.0:
        raise ValueError("quantile level must lie in (0, 1]")
    if q == 0.5:
        return float(np.median(x))
    return float(x[max(0, math.ceil(q * x.size) - 1)])


@dataclass(frozen=True)
class GridSpec:
    """Evaluation points ``u + i v`` with ``v`` bounded below by ``1/n``.

    ``v0 = A0 log(n) / n`` is the lower edge of the local-law region.
    """

    u: tuple
    v: tuple
    n: int
    A0: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "u", tuple(float(x) for x in np.atleast_1d(self.u)))
        object.__setattr__(self, "v", tuple(float(x) for x in np.atleast_1d(self.v)))
        if not self.u or not self.v:
            raise ValueError("grid needs at least one u and one v value")
        if min(self.v) <= 0:
            raise ValueError("all v values must be positive")
        if min(self.v) < 1.0 / self.n * (1 - 1e-12):
            raise ValueError(f"v_min = {min(self.v):g} is below the eigenvalue spacing 1/n = {1 / self.n:g}")

    @property
    def v0(self) -> float:
        return self.A0 * math.log(self.n) / self.n

    @classmethod
    def build(cls, n, A0=4.0, u=(0.0,), v_count=8, v_max=0.5, v_min_factor=1.0):
        """Log-spaced ``v`` from ``v_min_factor * v0`` up to ``v_max``."""
        v0 = A0 * math.log(n) / n
        lo = v_min_factor * v0
        if lo >= v_max:
            raise ValueError(f"v_min = {lo:g} is not below v_max = {v_max:g}")
        return cls(tuple(u), tuple(np.geomspace(lo, v_max, int(v_count))), int(n), float(A0))

    def points(self) -> np.ndarray:
        """All grid points, ``u`` major, as a flat complex array."""
        uu, vv = np.meshgrid(self.u, self.v, indexing="ij")
        return (uu + 1j * vv).ravel()


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares line ``y = slope * x + intercept`` (in logs when log-log)."""

    slope: float
    intercept: float
    max_residual: float
    slope_stderr: float
    points: int


@dataclass
class LawReport:
    """Aggregated statistics from a set of replicas.

    ``grid_rows`` holds one dict per grid point with quantiles of
    ``|Lambda_n|`` (bulk points only, else NaN), ``|Im Lambda_n|`` and
    ``n v |Lambda_n|``.
    """

    n: int
    replicas: int
    grid_rows: list = field(default_factory=list)
    kolmogorov: list = field(default_factory=list)
    rigidity_max: list = field(default_factory=list)
    delocalization: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)


def kolmogorov_distance(spec) -> float:
    """``sup_x |F_n(x) - G_sc(x)|``, exact: evaluated at both sides of every jump."""
    lam = spec.eigenvalues if isinstance(spec, SpectralData) else np.sort(np.asarray(spec, dtype=float))
    n = lam.size
    g = np.asarray(semicircle.cdf(lam))
    # ties: right limit counts every equal eigenvalue, left limit none
    right = np.searchsorted(lam, lam, side="right") / n
    left = np.searchsorted(lam, lam, side="left") / n
    return float(max(np.abs(right - g).max(), np.abs(left - g).max()))


def mean_esd_distance(replicas) -> float:
    """``sup_x |mean_r F_n^{(r)}(x) - G_sc(x)|`` over the union of jump points."""
    specs = list(replicas)
    if not specs:
        raise ValueError("mean_esd_distance needs at least one replica")
    sizes = {s.n for s in specs}
    if len(sizes) != 1:
        raise ValueError(f"replicas have mixed dimensions {sorted(sizes)}")
    pooled = np.sort(np.concatenate([s.eigenvalues for s in specs]))
    total = pooled.size
    g = np.asarray(semicircle.cdf(pooled))
    right = np.searchsorted(pooled, pooled, side="right") / total
    left = np.searchsorted(pooled, pooled, side="left") / total
    return float(max(np.abs(right - g).max(), np.abs(left - g).max()))


def _lambda_matrix(samples, z):
    s = np.asarray(semicircle.stieltjes(z))
    return np.stack([np.asarray(stieltjes(spec, z)) - s for spec in samples])


def _quantile_keys(prefix):
    return [f"{prefix}_q{int(round(q * 100))}" for q in QUANTILE_LEVELS]


def _quantile_block(values, prefix):
    return {key: empirical_quantile(values, q) for key, q in zip(_quantile_keys(prefix), QUANTILE_LEVELS)}


def local_law_scan(samples, grid: GridSpec) -> LawReport:
    """Quantiles of ``|Lambda_n|``, ``|Im Lambda_n|`` and ``n v |Lambda_n|`` per grid point."""
    samples = list(samples)
    if not samples:
        raise ValueError("local_law_scan needs at least one replica")
    z = grid.points()
    lam = _lambda_matrix(samples, z)
    n = samples[0].n
    rows = []
    for k, zk in enumerate(z):
        u, v = zk.real, zk.imag
        col = lam[:, k]
        row = {"u": u, "v": v}
        if abs(u) <= 2.0 + v:
            row.update(_quantile_block(np.abs(col), "abs"))
            row.update(_quantile_block(n * v * np.abs(col), "nv_abs"))
        else:
            row.update({key: math.nan for key in _quantile_keys("abs")})
            row.update({key: math.nan for key in _quantile_keys("nv_abs")})
        row.update(_quantile_block(np.abs(col.imag), "imag"))
        rows.append(row)
    return LawReport(n=n, replicas=len(samples), grid_rows=rows)


def _outside_envelope(n, gamma, v, p):
    # four-term bound on E|Im Lambda|^p with every constant equal to 1
    g = gamma + v
    nv = n * v
    total = (
        p**p / (n**p * g**p)
        + p ** (2 * p) / (nv ** (2 * p) * g ** (p / 2))
        + 1.0 / (n**p * v ** (p / 2) * g ** (p / 2))
        + p ** (p / 2) / (nv ** (3 * p / 2) * g ** (p / 4))
    )
    return total ** (1.0 / p)


def imag_law_outside(samples, u_values, v_values, p: int = 2) -> dict:
    """Compare ``|Im Lambda_n|`` outside ``[-2, 2]`` with the four-term envelope.

    Returns per-point rows (quantiles, moment, envelope) and the smallest
    prefactor that lifts the envelope above every 99% quantile.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("imag_law_outside needs at least one replica")
    u_values = np.atleast_1d(np.asarray(u_values, dtype=float))
    if np.any(np.abs(u_values) <= 2.0):
        raise ValueError("imag_law_outside needs every |u| > 2")
    n = samples[0].n
    uu, vv = np.meshgrid(u_values, np.atleast_1d(v_values), indexing="ij")
    z = (uu + 1j * vv).ravel()
    lam = np.abs(_lambda_matrix(samples, z).imag)
    rows = []
    prefactor = 0.0
    for k, zk in enumerate(z):
        u, v = zk.real, zk.imag
        env = _outside_envelope(n, abs(abs(u) - 2.0), v, p)
        row = {"u": u, "v": v, "envelope": env}
        row.update(_quantile_block(lam[:, k], "imag"))
        row["moment"] = float(np.mean(lam[:, k] ** p) ** (1.0 / p))
        prefactor = max(prefactor, row["imag_q99"] / env)
        rows.append(row)
    return {"n": n, "p": p, "rows": rows, "prefactor": prefactor}


def window_density(spec: SpectralData, x: float, xi: float) -> float:
    """Eigenvalue count in ``[x - xi/2n, x + xi/2n]`` divided by ``xi``."""
    if not xi > 0:
        raise ValueError("window width xi must be positive")
    half = xi / (2.0 * spec.n)
    return counting(spec, x - half, x + half) / xi


@dataclass(frozen=True)
class RigidityReport:
    """Deviations ``|lambda_j - gamma_j|`` and their normalized form.

    ``gamma_j`` solves ``G_sc(gamma_j) = j/n``, so ``gamma_n = 2`` and the
    top eigenvalue carries an intrinsic O(n^{-2/3}) offset. Indices are 1-based
    in ``argmax`` fields.
    """

    deviations: np.ndarray
    normalized: np.ndarray
    bulk_max: float
    bulk_argmax: int
    overall_max: float
    overall_argmax: int
    edge_max: float


def _bulk_range(n):
    return max(1, math.ceil(n / 10)), max(1, math.floor(9 * n / 10))


def rigidity_report(spec) -> RigidityReport:
    """Normalized rigidity ``r_j = |lambda_j - gamma_j| n^{2/3} min(j, n+1-j)^{1/3}``."""
    lam = spec.eigenvalues if isinstance(spec, SpectralData) else np.asarray(spec, dtype=float)
    n = lam.size
    j = np.arange(1, n + 1)
    gamma = np.asarray(semicircle.quantile(j, n)).reshape(-1)
    dev = np.abs(lam - gamma)
    r = dev * n ** (2.0 / 3.0) * np.minimum(j, n + 1 - j) ** (1.0 / 3.0)
    lo, hi = _bulk_range(n)
    bulk = r[lo - 1 : hi]
    edge = np.concatenate([r[: lo - 1], r[hi:]])
    return RigidityReport(
        deviations=dev,
        normalized=r,
        bulk_max=float(bulk.max()),
        bulk_argmax=int(lo + np.argmax(bulk)),
        overall_max=float(r.max()),
        overall_argmax=int(1 + np.argmax(r)),
        edge_max=float(edge.max()) if edge.size else 0.0,
    )


def delocalization_report(spec: SpectralData) -> float:
    """``n max_{j,k} |u_jk|^2 / log n``."""
    if spec.eigenvectors is None:
        raise ContractError("delocalization needs eigenvectors")
    n = spec.n
    if n < 2:
        raise ValueError("delocalization statistic needs n >= 2")
    return float(n * np.max(spec.eigenvectors**2) / math.log(n))


@dataclass(frozen=True)
class SmoothingTerms:
    """The four terms of the smoothing inequality with unit constants."""

    global_term: float
    v0_term: float
    eps_term: float
    local_term: float
    local_argmax: float
    panels_u: int
    panels_v: int

    @property
    def total(self) -> float:
        return self.global_term + self.v0_term + self.eps_term + self.local_term

    def as_tuple(self):
        return (self.global_term, self.v0_term, self.eps_term, self.local_term)


_SMOOTHING_A = math.sqrt(2.0) + 1.0


def smoothing_parameters(n: int, A0: float = 1.0):
    """``(v0, eps)`` with ``v0 = A0 log n / n`` and ``eps = (2 (sqrt2 + 1) v0)^{2/3}``.

    This choice saturates the precondition ``2(sqrt2 + 1) v0 <= eps^{3/2}``.
    """
    v0 = A0 * math.log(n) / n
    return v0, (2.0 * _SMOOTHING_A * v0) ** (2.0 / 3.0)


def _simpson_weights(panels):
    w = np.ones(panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


def _term_global(f, V, u_cut, panels):
    u = np.linspace(-u_cut, u_cut, panels + 1)
    z = u + 1j * V
    diff = np.abs(np.asarray(f(z)) - np.asarray(semicircle.stieltjes(z)))
    h = 2.0 * u_cut / panels
    body = float(h * np.dot(_simpson_weights(panels), diff))
    # |f - s| decays like u^-2, so each tail is about U |f - s|(+-U)
    tail = u_cut * (diff[0] + diff[-1])
    return body + tail


class _LocalIntegrand:
    """``(f - s)(x + iv) v`` on a log-v grid, reusing values across halvings."""

    def __init__(self, f, v0, xs, V):
        self.f = f
        self.xs = xs
        self.lo = np.log(v0 / np.sqrt(2.0 - np.abs(xs)))
        self.hi = math.log(V)
        self.panels = 0
        self.values = None

    def _eval(self, t):
        logv = self.lo[:, None] + (self.hi - self.lo)[:, None] * t[None, :]
        v = np.exp(logv)
        z = self.xs[:, None] + 1j * v
        return (np.asarray(self.f(z)) - np.asarray(semicircle.stieltjes(z))) * v

    def integral(self, panels):
        if self.values is not None and panels == 2 * self.panels:
            fresh = self._eval((np.arange(panels // 2) * 2 + 1) / panels)
            merged = np.empty((self.xs.size, panels + 1), dtype=complex)
            merged[:, ::2] = self.values
            merged[:, 1::2] = fresh
            self.values = merged
        else:
            self.values = self._eval(np.linspace(0.0, 1.0, panels + 1))
        self.panels = panels
        res = (self.values @ _simpson_weights(panels)) * (self.hi - self.lo) / panels
        k = int(np.argmax(np.abs(res)))
        return 2.0 * float(np.abs(res[k])), float(self.xs[k])


def smoothing_bound(
    f,
    v0: float,
    eps: float,
    V: float = 4.0,
    u_cut: float = 20.0,
    x_points: int = 1001,
    panels_u: int | None = None,
    panels_v: int | None = None,
    rtol: float = 1e-3,
) -> SmoothingTerms:
    """Evaluate the four terms of the smoothing inequality for transform ``f``.

    ``f`` maps a complex array to the Stieltjes transform values of the
    distribution under test. Terms: ``int |f - s|(u + iV) du`` over
    ``|u| <= u_cut`` plus a tail estimate, ``v0``, ``eps^{3/2}`` and
    ``2 sup_x |int_{v'(x)}^V (f - s)(x + iv) dv|`` with
    ``v'(x) = v0 / sqrt(2 - |x|)`` on ``{2 - |x| >= eps/2}``; the inner
    integral runs in ``log v``.

    Composite Simpson; a panel count left as None is doubled from 64 until
    the term changes by less than ``rtol`` relative.
    """
    if not (v0 > 0 and V > 0):
        raise ValueError("smoothing_bound needs v0 > 0 and V > 0")
    if not 0.0 < eps < 0.5:
        raise ValueError(f"smoothing_bound needs 0 < eps < 1/2, got eps = {eps:g}")
    if 2.0 * _SMOOTHING_A * v0 > eps**1.5 * (1.0 + 1e-12):
        raise ValueError(
            f"precondition 2(sqrt2+1) v0 <= eps^(3/2) fails: {2 * _SMOOTHING_A * v0:.6g} > {eps**1.5:.6g}"
        )
    xs = np.linspace(-2.0 + eps / 2.0, 2.0 - eps / 2.0, int(x_points))

    def refine(evaluate, fixed):
        if fixed is not None:
            return evaluate(fixed), fixed
        panels = 64
        prev = evaluate(panels)
        while panels < 2**14:
            panels *= 2
            cur = evaluate(panels)
            a, b = np.atleast_1d(cur)[0], np.atleast_1d(prev)[0]
            if abs(a - b) <= rtol * abs(a):
                break
            prev = cur
        return cur, panels

    g, pu = refine(lambda k: _term_global(f, V, u_cut, k), panels_u)
    local = _LocalIntegrand(f, v0, xs, V)
    (loc, xarg), pv = refine(local.integral, panels_v)
    return SmoothingTerms(float(g), v0, eps**1.5, loc, xarg, pu, pv)


def scaling_fit(x, y, loglog: bool = True) -> ScalingFit:
    """Least-squares slope/intercept of ``y`` on ``x`` (both logged if ``loglog``)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("scaling_fit needs at least 3 matching (x, y) points")
    if loglog:
        if np.any(x <= 0) or np.any(y <= 0):
            raise ValueError("log-log fit needs strictly positive x and y")
        x, y = np.log(x), np.log(y)
    design = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    dof = x.size - 2
    sxx = float(((x - x.mean()) ** 2).sum())
    stderr = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 and sxx > 0 else math.nan
    return ScalingFit(float(coef[0]), float(coef[1]), float(np.abs(resid).max()), stderr, int(x.size))


def beta_diagnostic(ns, sup_values) -> ScalingFit:
    """Effective log power: slope of ``log sup_u n v0 |Lambda_n|`` against ``log log n``."""
    ns = np.asarray(ns, dtype=float)
    return scaling_fit(np.log(ns), sup_values, loglog=True)
