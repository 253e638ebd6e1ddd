import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wignerlab import semicircle, spectral
from wignerlab.ensemble import Gaussian, Rademacher, WignerSample, sample_wigner
from wignerlab.errors import ContractError, DegeneracyError, DomainError

Z_VALUES = [0.1 + 0.05j, -1.3 + 0.3j, 2.4 + 0.15j, 0.7 + 2.0j]


def direct_minor_resolvent(w, z, j):
    keep = np.delete(np.arange(w.shape[0]), j)
    sub = w[np.ix_(keep, keep)]
    return np.linalg.inv(sub - z * np.eye(sub.shape[0]))


def test_eigendecompose_reconstructs(gaussian_sample):
    spec = spectral.eigendecompose(gaussian_sample)
    u = spec.eigenvectors
    assert np.allclose(u.T @ np.diag(spec.eigenvalues) @ u, gaussian_sample.entries, atol=1e-12)
    assert np.all(np.diff(spec.eigenvalues) >= 0)


def test_eigendecompose_contracts():
    with pytest.raises(ContractError):
        spectral.eigendecompose(np.ones((2, 3)))
    w = np.array([[0.0, 1.0], [1.0 + 1e-9, 0.0]])
    with pytest.raises(ContractError):
        spectral.eigendecompose(w)
    spec = spectral.eigendecompose(np.eye(3), want_vectors=False)
    with pytest.raises(ContractError):
        spectral.resolvent(spec, 1j)


def test_esd_cdf_and_counting():
    spec = spectral.SpectralData.from_eigenvalues([0.5, -1.0, 0.5, 2.0])
    assert spectral.esd_cdf(spec, 0.5) == 0.75
    assert spectral.esd_cdf(spec, -3.0) == 0.0
    assert spectral.counting(spec, -1.0, 0.5) == 3
    assert spectral.counting(spec, 0.6, 1.9) == 0
    with pytest.raises(ValueError):
        spectral.counting(spec, 1.0, 0.0)


@pytest.mark.parametrize("z", Z_VALUES)
def test_resolvent_matches_dense_solve(gaussian_sample, z):
    spec = spectral.eigendecompose(gaussian_sample)
    ref = spectral.direct_resolvent(gaussian_sample, z)
    assert np.abs(spectral.resolvent(spec, z) - ref).max() < 1e-10
    assert np.abs(spectral.resolvent_diagonal(spec, z) - np.diag(ref)).max() < 1e-10
    assert np.abs(spectral.resolvent_entries(spec, z, [3, 7]) - ref[[3, 7]]).max() < 1e-10
    assert abs(spectral.stieltjes(spec, z) - np.trace(ref) / spec.n) < 1e-12


def test_stieltjes_derivative_by_finite_difference(rademacher_sample):
    spec = spectral.eigendecompose(rademacher_sample)
    z, h = 0.4 + 0.3j, 1e-5
    fd = (spectral.stieltjes(spec, z + h) - spectral.stieltjes(spec, z - h)) / (2 * h)
    r = spectral.resolvent(spec, z)
    assert abs(fd - np.trace(r @ r) / spec.n) < 1e-7


def test_stieltjes_domain_and_shape(rademacher_sample):
    spec = spectral.eigendecompose(rademacher_sample, want_vectors=False)
    assert spectral.stieltjes(spec, np.array([[1j, 2j]])).shape == (1, 2)
    with pytest.raises(DomainError):
        spectral.stieltjes(spec, 0.5)


@pytest.mark.parametrize("seed", range(3))
def test_minor_resolvent_matches_minor_eigendecomposition(seed):
    sample = sample_wigner(20, Gaussian(), seed=seed)
    spec = spectral.eigendecompose(sample)
    for j in (0, 9, 19):
        diag, tr = spectral.minor_resolvent_diag(sample, spec, 0.3 + 0.1j, j)
        ref, ref_tr = spectral.direct_minor_resolvent_diag(sample, 0.3 + 0.1j, j)
        assert np.abs(diag - ref).max() < 1e-10
        assert abs(tr - ref_tr) < 1e-9
    with pytest.raises(ValueError):
        spectral.minor_resolvent_diag(sample, spec, 1j, 20)


@pytest.mark.parametrize("z", Z_VALUES)
def test_epsilon_parts_match_direct_minor(rademacher_sample, z):
    w = rademacher_sample.entries
    n = w.shape[0]
    spec = spectral.eigendecompose(rademacher_sample)
    j = 5
    parts = spectral.epsilon_decomposition(rademacher_sample, z, j, spec)
    rj = direct_minor_resolvent(w, z, j)
    y = np.delete(w[j], j)
    q = y @ rj @ y
    d = (y * y) @ np.diag(rj)
    r_full = spectral.direct_resolvent(rademacher_sample, z)
    assert parts.eps1 == pytest.approx(w[j, j])
    assert abs(parts.eps2 + (q - d)) < 1e-10
    assert abs(parts.eps3 + (d - np.trace(rj) / n)) < 1e-10
    assert abs(parts.eps4 - (np.trace(r_full) - np.trace(rj)) / n) < 1e-10
    assert abs(parts.schur_value(z) - r_full[j, j]) < 1e-10


def test_t_statistic_self_consistency(gaussian_sample):
    spec = spectral.eigendecompose(gaussian_sample)
    for z in Z_VALUES:
        rec = spectral.t_statistic(gaussian_sample, z, spec)
        assert rec.residual <= 1e-10 * (1 + abs(z) ** 2)
        assert rec.ratio_residual <= 1e-10
        assert rec.flagged_rows == ()
        assert rec.b == pytest.approx(z + 2 * rec.s)
        assert rec.lambda_n == pytest.approx(rec.m_n - semicircle.stieltjes(z))


def test_lambda_bound_constant_is_positive(gaussian_sample):
    spec = spectral.eigendecompose(gaussian_sample)
    recs = [spectral.t_statistic(gaussian_sample, z, spec) for z in Z_VALUES]
    assert 0 < spectral.lambda_bound_constant(recs) < np.inf


def test_perturbation_expansion_exact_and_truncated(rademacher_sample):
    z = 0.2 + 0.5j
    for m in (0, 1, 3):
        assert spectral.perturbation_expansion_residual(rademacher_sample, z, 2, 9, m) < 1e-12
    # without the remainder the error shrinks with the order
    trunc = [spectral.perturbation_expansion_residual(rademacher_sample, z, 2, 9, m, remainder=False) for m in (0, 1, 2)]
    assert trunc[0] > trunc[1] > trunc[2]
    assert spectral.perturbation_expansion_residual(rademacher_sample, z, 4, 4, 2) < 1e-12
    with pytest.raises(ValueError):
        spectral.perturbation_expansion_residual(rademacher_sample, z, 0, 40, 1)


@settings(max_examples=25, deadline=None)
@given(
    st.integers(0, 2**32),
    st.floats(-3, 3),
    st.floats(0.05, 2.0),
)
def test_identity_residuals_property(seed, u, v):
    sample = sample_wigner(12, Rademacher(), seed=seed)
    res = spectral.identity_residuals(sample, complex(u, v))
    assert res["self_consistency"] <= 1e-8
    assert res["lambda_ratio"] <= 1e-8
    assert res["ward_row"] <= 1e-9
    assert res["ward_average"] <= 1e-9
    assert res["eps_reconstruction"] <= 1e-8
    assert res["perturbation_expansion"] <= 1e-8
    assert res["interlacing_excess"] <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.01, 3.0))
def test_ward_identity_property(seed, v):
    sample = sample_wigner(15, Gaussian(), seed=seed)
    spec = spectral.eigendecompose(sample)
    r = spectral.resolvent(spec, complex(0.3, v))
    assert np.allclose((np.abs(r) ** 2).sum(axis=1), np.diag(r).imag / v, rtol=1e-9, atol=1e-12)


def test_degenerate_pivot_is_flagged():
    w = np.array([[1.0, 1.0], [1.0, 0.0]])
    sample = WignerSample.from_entries(w)
    spec = spectral.eigendecompose(sample)
    # R_00 = (w_11 - z) / det(W - z) vanishes as z -> w_11 = 0
    z = 1e-16j
    with pytest.raises(DegeneracyError):
        spectral.minor_resolvent_diag(sample, spec, z, 0)
    assert spectral.t_statistic(sample, z, spec).flagged_rows == (0,)
