import math
from functools import partial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from wignerlab import lawcheck, semicircle
from wignerlab.ensemble import Gaussian, Rademacher, sample_wigner
from wignerlab.errors import ContractError
from wignerlab.spectral import SpectralData, eigendecompose, stieltjes


def quantile_spectrum(n):
    return SpectralData.from_eigenvalues(semicircle.quantile(np.arange(1, n + 1), n))


@pytest.fixture(scope="module")
def spectra():
    return [eigendecompose(sample_wigner(64, Rademacher(), seed=s)) for s in range(6)]


def test_quantile_convention():
    assert lawcheck.empirical_quantile([1.0, 3.0], 0.5) == 2.0
    assert lawcheck.empirical_quantile([5.0] * 7, 0.99) == 5.0
    vals = np.arange(1, 11, dtype=float)
    assert lawcheck.empirical_quantile(vals, 0.9) == 9.0
    assert lawcheck.empirical_quantile(vals, 0.99) == 10.0
    assert lawcheck.empirical_quantile(np.arange(1, 101), 0.99) == 99.0
    with pytest.raises(ValueError):
        lawcheck.empirical_quantile([], 0.5)


def test_kolmogorov_hand_cases():
    assert lawcheck.kolmogorov_distance(np.array([0.0])) == pytest.approx(0.5)
    assert lawcheck.kolmogorov_distance(quantile_spectrum(50)) == pytest.approx(1 / 50, abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_kolmogorov_matches_scipy_kstest(seed):
    spec = eigendecompose(sample_wigner(80, Gaussian(), seed=seed), want_vectors=False)
    ref = stats.kstest(spec.eigenvalues, semicircle.cdf).statistic
    assert lawcheck.kolmogorov_distance(spec) == pytest.approx(ref, abs=1e-14)


def test_kolmogorov_with_ties():
    lam = np.array([-1.0, 0.0, 0.0, 1.0])
    grid = np.concatenate([lam - 1e-12, lam, np.linspace(-3, 3, 20001)])
    ecdf = np.searchsorted(np.sort(lam), grid, side="right") / lam.size
    brute = np.abs(ecdf - semicircle.cdf(grid)).max()
    assert lawcheck.kolmogorov_distance(lam) == pytest.approx(brute, abs=1e-9)


def test_mean_esd_distance(spectra):
    assert lawcheck.mean_esd_distance(spectra[:1]) == pytest.approx(lawcheck.kolmogorov_distance(spectra[0]))
    assert lawcheck.mean_esd_distance(spectra) <= np.mean([lawcheck.kolmogorov_distance(s) for s in spectra]) + 1e-15
    with pytest.raises(ValueError):
        lawcheck.mean_esd_distance([spectra[0], quantile_spectrum(10)])


def test_grid_spec_validation():
    g = lawcheck.GridSpec.build(256, A0=4.0, u=(0.0, 2.5), v_count=5)
    assert g.points().size == 10
    assert min(g.v) == pytest.approx(g.v0)
    with pytest.raises(ValueError):
        lawcheck.GridSpec((0.0,), (1e-4,), 100)
    with pytest.raises(ValueError):
        lawcheck.GridSpec.build(16, A0=4.0, v_min_factor=4.0)


def test_local_law_scan(spectra):
    grid = lawcheck.GridSpec((0.0, 3.0), (0.2, 0.5), 64)
    report = lawcheck.local_law_scan(spectra, grid)
    assert report.replicas == 6 and len(report.grid_rows) == 4
    bulk = report.grid_rows[0]
    m = np.array([stieltjes(s, 0.2j) for s in spectra]) - semicircle.stieltjes(0.2j)
    assert bulk["abs_q50"] == pytest.approx(np.median(np.abs(m)))
    assert bulk["nv_abs_q99"] == pytest.approx(64 * 0.2 * np.abs(m).max())
    outside = report.grid_rows[2]
    assert math.isnan(outside["abs_q50"]) and outside["imag_q99"] >= 0


def test_imag_law_outside(spectra):
    out = lawcheck.imag_law_outside(spectra, [2.5, -3.0], [0.1, 1.0], p=2)
    assert len(out["rows"]) == 4
    assert out["prefactor"] > 0
    for row in out["rows"]:
        assert row["imag_q99"] <= out["prefactor"] * row["envelope"] * (1 + 1e-12)
    with pytest.raises(ValueError):
        lawcheck.imag_law_outside(spectra, [1.5], [0.1])


def test_window_density():
    spec = quantile_spectrum(1000)
    assert lawcheck.window_density(spec, 0.0, 10.0) == pytest.approx(1 / math.pi, rel=0.35)
    with pytest.raises(ValueError):
        lawcheck.window_density(spec, 0.0, 0.0)


def test_rigidity_of_quantile_spectrum_is_zero():
    rep = lawcheck.rigidity_report(quantile_spectrum(100))
    assert rep.overall_max == 0.0 and rep.edge_max == 0.0


def test_rigidity_normalization():
    n = 100
    lam = semicircle.quantile(np.arange(1, n + 1), n).copy()
    lam[49] += 0.01
    rep = lawcheck.rigidity_report(lam)
    assert rep.bulk_argmax == 50
    assert rep.bulk_max == pytest.approx(0.01 * n ** (2 / 3) * 50 ** (1 / 3))
    assert lawcheck._bulk_range(n) == (10, 90)


def test_delocalization_extremes():
    n = 16
    ident = SpectralData(np.arange(n, dtype=float), np.eye(n))
    assert lawcheck.delocalization_report(ident) == pytest.approx(n / math.log(n))
    from scipy.linalg import hadamard

    flat = SpectralData(np.arange(n, dtype=float), hadamard(n) / math.sqrt(n))
    assert lawcheck.delocalization_report(flat) == pytest.approx(1 / math.log(n))
    with pytest.raises(ContractError):
        lawcheck.delocalization_report(SpectralData(np.zeros(3)))


def test_smoothing_parameters_saturate_precondition():
    v0, eps = lawcheck.smoothing_parameters(512)
    assert 2 * (math.sqrt(2) + 1) * v0 == pytest.approx(eps**1.5)


def test_smoothing_self_test():
    v0, eps = lawcheck.smoothing_parameters(512)
    terms = lawcheck.smoothing_bound(semicircle.stieltjes, v0, eps, x_points=201)
    assert terms.global_term < 1e-6 and terms.local_term < 1e-6
    assert terms.v0_term == v0 and terms.eps_term == pytest.approx(eps**1.5)


def test_smoothing_step_halving_stable():
    spec = quantile_spectrum(256)
    f = partial(stieltjes, spec)
    v0, eps = lawcheck.smoothing_parameters(256)
    coarse = lawcheck.smoothing_bound(f, v0, eps, x_points=201)
    fine = lawcheck.smoothing_bound(f, v0, eps, x_points=201, panels_u=2 * coarse.panels_u, panels_v=2 * coarse.panels_v)
    assert abs(fine.global_term - coarse.global_term) <= 0.01 * coarse.global_term
    assert abs(fine.local_term - coarse.local_term) <= 0.01 * coarse.local_term


@pytest.mark.parametrize(
    "v0,eps,match",
    [(0.0, 0.1, "v0 > 0"), (0.01, 0.6, "eps < 1/2"), (0.05, 0.1, "precondition")],
)
def test_smoothing_preconditions(v0, eps, match):
    with pytest.raises(ValueError, match=match):
        lawcheck.smoothing_bound(semicircle.stieltjes, v0, eps)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-5, 5))
def test_scaling_fit_recovers_power_law(slope, logc):
    x = np.array([128.0, 256.0, 512.0, 1024.0])
    fit = lawcheck.scaling_fit(x, math.exp(logc) * x**slope)
    assert fit.slope == pytest.approx(slope, abs=1e-9)
    assert fit.intercept == pytest.approx(logc, abs=1e-8)
    assert fit.max_residual < 1e-9


def test_scaling_fit_validation():
    with pytest.raises(ValueError):
        lawcheck.scaling_fit([1, 2], [1, 2])
    with pytest.raises(ValueError):
        lawcheck.scaling_fit([1, 2, 3], [1, -2, 3])
    lin = lawcheck.scaling_fit([0, 1, 2], [1, 3, 5], loglog=False)
    assert lin.slope == pytest.approx(2.0)


def test_beta_diagnostic():
    ns = np.array([64.0, 256.0, 1024.0, 4096.0])
    fit = lawcheck.beta_diagnostic(ns, np.log(ns) ** 2)
    assert fit.slope == pytest.approx(2.0)
