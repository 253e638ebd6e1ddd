"""Spectra, resolvents and the self-consistent equation of a Wigner sample.

``R(z) = (W - z)^{-1}`` is evaluated through a single eigendecomposition,
``R_jk = sum_l u_l(j) u_l(k) / (lambda_l - z)``. Minor resolvents
``R^{(j)}`` (row and column ``j`` removed) come from the Schur relation

    R^{(j)}_kl = R_kl - R_kj R_jl / R_jj,

and the Schur complement formula for ``R_jj`` splits into the four error
terms ``eps_1j .. eps_4j`` whose weighted average ``T_n`` closes the
equation ``1 + z m_n + m_n^2 = T_n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import semicircle
from .ensemble import WignerSample
from .errors import ContractError, DegeneracyError, DomainError, NumericalError

__all__ = [
    "SpectralData",
    "EpsilonParts",
    "SelfConsistencyRecord",
    "DEGENERACY_THRESHOLD",
    "eigendecompose",
    "esd_cdf",
    "counting",
    "stieltjes",
    "resolvent",
    "resolvent_diagonal",
    "resolvent_entries",
    "direct_resolvent",
    "minor_resolvent_diag",
    "direct_minor_resolvent_diag",
    "epsilon_decomposition",
    "t_statistic",
    "lambda_bound_constant",
    "perturbation_expansion_residual",
    "identity_residuals",
]

DEGENERACY_THRESHOLD = 1e-14


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Ascending eigenvalues and, optionally, eigenvectors stored as rows."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(self.eigenvalues.size)

    @classmethod
    def from_eigenvalues(cls, values):
        """Synthetic spectrum (sorted on entry), e.g. placed at quantiles."""
        return cls(np.sort(np.asarray(values, dtype=float)))


def _matrix(sample):
    return sample.entries if isinstance(sample, WignerSample) else np.asarray(sample, dtype=float)


def eigendecompose(sample, want_vectors: bool = True) -> SpectralData:
    """Full symmetric eigendecomposition (LAPACK ``syevd`` via numpy)."""
    w = _matrix(sample)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ContractError("eigendecompose needs a square matrix")
    if not np.array_equal(w, w.T):
        raise ContractError("eigendecompose needs an exactly symmetric matrix")
    try:
        if want_vectors:
            lam, vec = np.linalg.eigh(w)
            return SpectralData(lam, np.ascontiguousarray(vec.T))
        return SpectralData(np.linalg.eigvalsh(w))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition did not converge: {exc}") from exc


def esd_cdf(spec: SpectralData, x):
    """Empirical distribution ``F_n(x) = #{j: lambda_j <= x} / n``."""
    out = np.searchsorted(spec.eigenvalues, np.asarray(x, dtype=float), side="right") / spec.n
    return out.item() if np.ndim(x) == 0 else out


def counting(spec: SpectralData, a: float, b: float) -> int:
    """Number of eigenvalues in the closed interval ``[a, b]``."""
    if a > b:
        raise ValueError(f"counting needs a <= b, got [{a}, {b}]")
    lam = spec.eigenvalues
    return int(np.searchsorted(lam, b, side="right") - np.searchsorted(lam, a, side="left"))


def _check_z(z):
    zz = np.asarray(z, dtype=complex)
    if np.any(zz.imag <= 0) or not np.all(np.isfinite(zz)):
        raise DomainError("z must lie in the open upper half-plane (Im z > 0)")
    return zz


def stieltjes(spec: SpectralData, z):
    """``m_n(z) = (1/n) sum_j 1 / (lambda_j - z)``; vectorized over ``z``."""
    zz = _check_z(z)
    flat = zz.reshape(-1)
    lam = spec.eigenvalues
    out = np.empty(flat.shape, dtype=complex)
    # chunk so that the (len(z), n) work array stays small
    step = max(1, 2**22 // max(lam.size, 1))
    for i in range(0, flat.size, step):
        out[i : i + step] = (1.0 / (lam[None, :] - flat[i : i + step, None])).mean(axis=1)
    out = out.reshape(zz.shape)
    return out.item() if np.ndim(z) == 0 else out


def _vectors(spec):
    if spec.eigenvectors is None:
        raise ContractError("this operation needs eigenvectors (want_vectors=True)")
    return spec.eigenvectors


def resolvent(spec: SpectralData, z) -> np.ndarray:
    """Full resolvent matrix ``(W - z)^{-1}``."""
    u = _vectors(spec)
    w = 1.0 / (spec.eigenvalues - complex(_check_z(z)))
    return (u.T * w) @ u


def resolvent_diagonal(spec: SpectralData, z) -> np.ndarray:
    """``R_jj(z) = sum_l u_l(j)^2 / (lambda_l - z)`` for all ``j``."""
    u = _vectors(spec)
    w = 1.0 / (spec.eigenvalues - complex(_check_z(z)))
    return w @ (u * u)


def resolvent_entries(spec: SpectralData, z, rows) -> np.ndarray:
    """Rows ``R_{j,:}`` for ``j`` in ``rows``; shape ``(len(rows), n)``."""
    u = _vectors(spec)
    rows = np.atleast_1d(np.asarray(rows, dtype=int))
    w = 1.0 / (spec.eigenvalues - complex(_check_z(z)))
    return (u[:, rows].T * w) @ u


def direct_resolvent(sample, z) -> np.ndarray:
    """Resolvent by dense complex solve; the independent route for checks."""
    w = _matrix(sample)
    zc = complex(_check_z(z))
    return np.linalg.solve(w - zc * np.eye(w.shape[0]), np.eye(w.shape[0], dtype=complex))


def _check_pivot(rjj, rows):
    bad = np.abs(rjj) < DEGENERACY_THRESHOLD
    if np.any(bad):
        raise DegeneracyError(f"|R_jj| below {DEGENERACY_THRESHOLD:g} at rows {list(np.asarray(rows)[bad])}")


def minor_resolvent_diag(sample, spec: SpectralData, z, j: int):
    """Diagonal of ``R^{(j)}`` (indices ``k != j`` in order) and its trace."""
    n = spec.n
    if not 0 <= j < n:
        raise ValueError(f"row index {j} out of range for n = {n}")
    row = resolvent_entries(spec, z, [j])[0]
    diag = resolvent_diagonal(spec, z)
    _check_pivot(row[j : j + 1], [j])
    minor = diag - row * row / row[j]
    minor = np.delete(minor, j)
    return minor, complex(minor.sum())


def direct_minor_resolvent_diag(sample, z, j: int):
    """Same as :func:`minor_resolvent_diag` from an eigendecomposition of the minor."""
    w = _matrix(sample)
    keep = np.delete(np.arange(w.shape[0]), j)
    sub = eigendecompose(w[np.ix_(keep, keep)], want_vectors=True)
    d = resolvent_diagonal(sub, z)
    return d, complex(d.sum())


@dataclass(frozen=True)
class EpsilonParts:
    """The four error terms of row ``j`` and the Schur denominator pieces."""

    j: int
    eps1: complex
    eps2: complex
    eps3: complex
    eps4: complex
    r_jj: complex
    quad_form: complex

    @property
    def total(self) -> complex:
        return self.eps1 + self.eps2 + self.eps3 + self.eps4

    def schur_value(self, z) -> complex:
        """``1 / (-z + X_jj/sqrt(n) - (1/n) sum_{k,l} X_jk X_jl R^{(j)}_kl)``."""
        return 1.0 / (-complex(z) + self.eps1 - self.quad_form)


def _schur_terms(w, spec, z, rows):
    """Vectorized row quantities behind the eps-decomposition.

    Returns ``R_jj``, ``x^T R^{(j)} x``, ``sum_k W_jk^2 R^{(j)}_kk`` and
    ``Tr R^{(j)}`` for each requested row, with ``x`` the off-diagonal part
    of row ``j`` of ``W``.
    """
    u = _vectors(spec)
    zc = complex(z)
    wl = 1.0 / (spec.eigenvalues - zc)
    rows = np.asarray(rows, dtype=int)
    diag = wl @ (u * u)
    r_rows = (u[:, rows].T * wl) @ u
    r_jj = r_rows[np.arange(rows.size), rows]
    _check_pivot(r_jj, rows)
    y = w[rows, :].copy()
    y[np.arange(rows.size), rows] = 0.0
    proj = u @ y.T
    yry = (wl[:, None] * proj * proj).sum(axis=0)
    yr_j = (y * r_rows).sum(axis=1)
    quad = yry - yr_j * yr_j / r_jj
    y2 = y * y
    diag_sum = y2 @ diag - (y2 * r_rows * r_rows).sum(axis=1) / r_jj
    r2_jj = (r_rows * r_rows).sum(axis=1)
    trace = diag.sum()
    trace_minor = trace - r2_jj / r_jj
    return r_jj, quad, diag_sum, trace_minor, trace


def _eps_parts(w, spec, z, rows):
    n = spec.n
    rows = np.asarray(rows, dtype=int)
    r_jj, quad, diag_sum, tr_minor, tr = _schur_terms(w, spec, z, rows)
    eps1 = np.diag(w)[rows].astype(complex)
    eps2 = -(quad - diag_sum)
    eps3 = -(diag_sum - tr_minor / n)
    eps4 = (tr - tr_minor) / n
    return r_jj, quad, (eps1, eps2, eps3, eps4)


def epsilon_decomposition(sample: WignerSample, z, j: int, spec: SpectralData | None = None):
    """The four error terms of row ``j`` (0-based) at spectral parameter ``z``."""
    _check_z(z)
    if spec is None:
        spec = eigendecompose(sample, want_vectors=True)
    w = _matrix(sample)
    r_jj, quad, eps = _eps_parts(w, spec, z, [j])
    e1, e2, e3, e4 = (complex(e[0]) for e in eps)
    return EpsilonParts(j, e1, e2, e3, e4, complex(r_jj[0]), complex(quad[0]))


@dataclass(frozen=True)
class SelfConsistencyRecord:
    """``m_n``, ``T_n``, ``Lambda_n = m_n - s`` and the identity residuals at one ``z``."""

    z: complex
    m_n: complex
    t_n: complex
    lambda_n: complex
    s: complex
    residual: float
    ratio_residual: float
    flagged_rows: tuple = field(default_factory=tuple)

    @property
    def b(self) -> complex:
        return self.z + 2.0 * self.s

    @property
    def b_n(self) -> complex:
        return self.b + self.lambda_n


def t_statistic(sample: WignerSample, z, spec: SpectralData | None = None) -> SelfConsistencyRecord:
    """Evaluate ``T_n = (1/n) sum_j eps_j R_jj`` and the self-consistent identities.

    Rows whose pivot ``|R_jj|`` is degenerate are skipped and listed in
    ``flagged_rows``; the identity then only holds approximately.
    """
    zc = complex(_check_z(z))
    if spec is None:
        spec = eigendecompose(sample, want_vectors=True)
    w = _matrix(sample)
    n = spec.n
    rows = np.arange(n)
    diag = resolvent_diagonal(spec, zc)
    good = np.abs(diag) >= DEGENERACY_THRESHOLD
    flagged = tuple(int(k) for k in rows[~good])
    r_jj, _, eps = _eps_parts(w, spec, zc, rows[good])
    m = complex(stieltjes(spec, zc))
    t = complex((sum(eps) * r_jj).sum() / n)
    s = complex(semicircle.stieltjes(zc))
    lam = m - s
    residual = abs(1.0 + zc * m + m * m - t)
    ratio = abs(lam * (zc + m + s) - t)
    return SelfConsistencyRecord(zc, m, t, lam, s, residual, ratio, flagged)


def lambda_bound_constant(records) -> float:
    """Smallest ``C`` with ``|Lambda_n| <= C min(|T_n|/|b|, sqrt|T_n|)`` over ``records``."""
    ratios = []
    for rec in records:
        scale = min(abs(rec.t_n) / abs(rec.b), math.sqrt(abs(rec.t_n)))
        if scale > 0:
            ratios.append(abs(rec.lambda_n) / scale)
    if not ratios:
        raise ValueError("no record with nonzero T_n")
    return max(ratios)


def _perturbation_matrix_step(t_mat, m_mat, a, b):
    # (T E^{(a,b)}) M without forming E
    if a == b:
        return np.outer(t_mat[:, a], m_mat[a, :])
    return np.outer(t_mat[:, b], m_mat[a, :]) + np.outer(t_mat[:, a], m_mat[b, :])


def perturbation_expansion_residual(
    sample: WignerSample, z, a: int, b: int, m: int, remainder: bool = True, probes=None
) -> float:
    """Max entrywise gap between ``R`` and its order-``m`` resolvent expansion.

    With ``U = W - W_ab E^{(a,b)}`` and ``T = (U - z)^{-1}``,

        R = T + sum_{mu=1}^m (-W_ab)^mu (T E)^mu T + (-W_ab)^{m+1} (T E)^{m+1} R,

    (``W_ab = X_ab / sqrt(n)``) is exact. With ``remainder=False`` the last
    term is dropped and the truncation error is returned instead. The probe
    set is ``(a,a), (a,b), (b,b)`` plus three pseudo-random pairs.
    """
    w = _matrix(sample)
    n = w.shape[0]
    if not (0 <= a < n and 0 <= b < n):
        raise ValueError(f"perturbation indices ({a}, {b}) out of range for n = {n}")
    if m < 0:
        raise ValueError("expansion order m must be >= 0")
    zc = complex(_check_z(z))
    wab = w[a, b]
    u_mat = w.copy()
    u_mat[a, b] = 0.0
    u_mat[b, a] = 0.0
    eye = np.eye(n)
    t_mat = np.linalg.solve(u_mat - zc * eye, eye.astype(complex))
    r_mat = np.linalg.solve(w - zc * eye, eye.astype(complex))
    series = t_mat.copy()
    power = t_mat
    for mu in range(1, m + 1):
        power = _perturbation_matrix_step(t_mat, power, a, b)
        series = series + (-wab) ** mu * power
    if remainder:
        tail = r_mat
        for _ in range(m + 1):
            tail = _perturbation_matrix_step(t_mat, tail, a, b)
        series = series + (-wab) ** (m + 1) * tail
    if probes is None:
        rng = np.random.default_rng([n, a, b])
        probes = [(a, a), (a, b), (b, b)] + [tuple(p) for p in rng.integers(0, n, size=(3, 2))]
    return max(abs(r_mat[j, k] - series[j, k]) for j, k in probes)


def identity_residuals(sample: WignerSample, z, spec: SpectralData | None = None) -> dict:
    """Max residual of every exact identity at one ``z``, keyed by identity name."""
    zc = complex(_check_z(z))
    if spec is None:
        spec = eigendecompose(sample, want_vectors=True)
    n = spec.n
    v = zc.imag
    rec = t_statistic(sample, zc, spec)
    r_full = resolvent(spec, zc)
    ward_rows = np.abs((np.abs(r_full) ** 2).sum(axis=0) - np.diag(r_full).imag / v).max()
    ward_avg = abs((np.abs(r_full) ** 2).sum() / n - rec.m_n.imag / v)
    recon = 0.0
    interlace = 0.0
    for j in range(n):
        parts = epsilon_decomposition(sample, zc, j, spec)
        recon = max(recon, abs(parts.schur_value(zc) - parts.r_jj))
        rep = -1.0 / (zc + rec.m_n) + parts.total * parts.r_jj / (zc + rec.m_n)
        recon = max(recon, abs(rep - parts.r_jj))
        interlace = max(interlace, n * abs(parts.eps4) - 1.0 / v)
    pert = max(
        perturbation_expansion_residual(sample, zc, 0, 1, 2),
        perturbation_expansion_residual(sample, zc, n // 2, n // 2, 1),
    )
    return {
        "self_consistency": rec.residual / (1.0 + abs(zc) ** 2),
        "lambda_ratio": rec.ratio_residual,
        "ward_row": float(ward_rows),
        "ward_average": float(ward_avg),
        "eps_reconstruction": float(recon),
        "perturbation_expansion": float(pert),
        "interlacing_excess": float(interlace),
    }
