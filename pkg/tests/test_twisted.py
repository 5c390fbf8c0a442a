from math import pi

import numpy as np
import pytest

from htype_spectral.special_fn import laguerre_fn, multi_indices, special_hermite
from htype_spectral.twisted import (
    SeriesHypothesisError,
    TwistedField,
    TwistedGrid,
    conjugate_exponent,
    laguerre_field,
    project_k,
    projector_norm_estimate,
    rho_exponent,
    series_partial_sum,
    twisted_convolve,
    twisted_laplacian_apply,
    vertical_gain,
)


def _grid_for(lam):
    half = 14.0 / np.sqrt(lam) + 2
    return TwistedGrid(1, half, int(np.ceil(2 * half / (0.22 / np.sqrt(lam)))) | 1)


@pytest.fixture(scope="module")
def shifted_gaussian():
    grid = TwistedGrid(1, 16.0, 97)
    pts = grid.points()
    vals = np.exp(-0.5 * np.sum((pts - np.array([2.0, -1.0])) ** 2, -1)) * np.exp(0.5j * pts[..., 1])
    return TwistedField(vals, 1.0, grid)


@pytest.fixture(scope="module")
def pieces(shifted_gaussian):
    return [project_k(shifted_gaussian, k) for k in range(25)]


def test_grid_validation():
    with pytest.raises(ValueError):
        TwistedGrid(1, 4.0, 10)
    with pytest.raises(ValueError):
        TwistedField(np.zeros((3, 3)), 1.0, TwistedGrid(1, 4.0, 5))


def test_convolution_with_zero():
    grid = TwistedGrid(1, 6.0, 41)
    g = laguerre_field(1, 1.0, grid)
    out = twisted_convolve(g, g.like(np.zeros(grid.shape)))
    assert np.all(out.samples == 0)


def test_convolution_mismatch_rejected():
    a = laguerre_field(0, 1.0, TwistedGrid(1, 6.0, 41))
    with pytest.raises(ValueError):
        twisted_convolve(a, laguerre_field(0, 2.0, a.grid))
    with pytest.raises(ValueError):
        twisted_convolve(a, laguerre_field(0, 1.0, TwistedGrid(1, 6.0, 43)))


@pytest.mark.parametrize("lam", [1.0, 4.0])
def test_laguerre_twisted_convolution_identity(lam):
    grid = _grid_for(lam)
    worst = 0.0
    for j in range(5):
        for k in range(5):
            a, b = laguerre_field(j, lam, grid), laguerre_field(k, lam, grid)
            out = twisted_convolve(a, b).samples
            ref = (2 * pi / lam) * (j == k) * a.samples
            worst = max(worst, np.linalg.norm(out - ref) / np.linalg.norm((2 * pi / lam) * a.samples))
    assert worst < 1e-6


def test_convolution_brute_force_oracle():
    lam = 1.3
    grid = TwistedGrid(1, 9.0, 91)
    pts = grid.points()
    g_fn = lambda p: np.exp(-0.5 * np.sum((p - np.array([0.4, 0.0])) ** 2, -1))
    h_fn = lambda p: np.exp(-0.3 * np.sum(p**2, -1)) * (1 + 0.5j * p[..., 0])
    out = twisted_convolve(TwistedField(g_fn(pts), lam, grid), TwistedField(h_fn(pts), lam, grid))
    c = (grid.n - 1) // 2
    # dense quadrature on a finer, independent grid
    fine = np.linspace(-12, 12, 481)
    W = np.stack(np.meshgrid(fine, fine, indexing="ij"), -1)
    cell = (fine[1] - fine[0]) ** 2
    for i, j in [(c, c), (c + 10, c - 5), (c - 20, c + 3)]:
        x = pts[i, j]
        phase = np.exp(0.5j * lam * (x[1] * W[..., 0] - x[0] * W[..., 1]))
        oracle = np.sum(g_fn(x - W) * h_fn(W) * phase) * cell
        assert abs(out.samples[i, j] - oracle) < 1e-8


def test_projector_on_its_own_eigenfunction():
    grid = _grid_for(1.0)
    phi0 = laguerre_field(0, 1.0, grid)
    out = project_k(phi0, 0)
    assert np.abs(out.samples - phi0.samples).max() < 1e-6
    with pytest.raises(ValueError):
        project_k(phi0, -1)


def test_projector_algebra(shifted_gaussian, pieces):
    norm = shifted_gaussian.norm()
    for j in (0, 5, 12):
        for k in (0, 5, 12):
            out = project_k(pieces[k], j)
            ref = pieces[k].samples * (j == k)
            assert np.linalg.norm(out.samples - ref) * np.sqrt(shifted_gaussian.grid.cell) / norm < 1e-6


def test_projector_completeness(shifted_gaussian, pieces):
    total = sum(p.samples for p in pieces)
    err = np.linalg.norm(total - shifted_gaussian.samples) / np.linalg.norm(shifted_gaussian.samples)
    assert err < 1e-4


def test_projector_convolution_vs_spectral(shifted_gaussian, pieces):
    for k in (0, 3, 8):
        spec = project_k(shifted_gaussian, k, "spectral", n_max=40)
        assert np.linalg.norm(spec.samples - pieces[k].samples) / np.linalg.norm(shifted_gaussian.samples) < 1e-6


def test_laplacian_on_special_hermite():
    lam = 1.5
    grid = TwistedGrid(1, 10.0, 101)
    pts = grid.points()
    for a, b in [(0, 0), (2, 1), (1, 3)]:
        f = TwistedField(special_hermite((a,), (b,), lam, pts), lam, grid)
        expected = -lam * (2 * a + 1) * f.samples
        spec = twisted_laplacian_apply(f, "spectral", n_max=8)
        assert np.abs(spec.field.samples - expected).max() < 1e-6 * np.abs(expected).max()
        fd = twisted_laplacian_apply(f, "fd")
        assert np.abs(fd.field.samples - expected).max() < 1e-3 * np.abs(expected).max()


def test_laplacian_eigenrelation_on_projection(shifted_gaussian, pieces):
    norm = np.linalg.norm(shifted_gaussian.samples)
    for k in (0, 3, 8, 12):
        res = twisted_laplacian_apply(pieces[k], "spectral", n_max=40)
        assert res.warning is None
        resid = np.linalg.norm(res.field.samples + (2 * k + 1) * pieces[k].samples) / norm
        assert resid < 1e-5


def test_laplacian_spectral_vs_fd_on_gaussian():
    grid = TwistedGrid(1, 10.0, 161)
    g = TwistedField(np.exp(-0.5 * np.sum(grid.points() ** 2, -1)), 1.0, grid)
    spec = twisted_laplacian_apply(g, "spectral", n_max=32).field.samples
    fd = twisted_laplacian_apply(g, "fd").field.samples
    assert np.linalg.norm(spec - fd) / np.linalg.norm(spec) < 1e-3


def test_laplacian_tail_warning():
    grid = TwistedGrid(1, 10.0, 81)
    g = TwistedField(np.exp(-0.5 * np.sum((grid.points() - 4.0) ** 2, -1)) * np.exp(3j * grid.points()[..., 0]), 1.0, grid)
    res = twisted_laplacian_apply(g, "spectral", n_max=4)
    assert res.warning is not None and res.tail > 1e-6
    with pytest.raises(ValueError):
        twisted_laplacian_apply(g, "nope")


def test_rho_exponent():
    assert rho_exponent(2, 1) == 0
    assert rho_exponent(6, 1) == pytest.approx(-1 / 3)
    inv = 1 / 6
    assert inv - 0.5 == pytest.approx(2 * (0.5 - inv) - 1)
    assert rho_exponent(np.inf, 1) == 0
    assert rho_exponent(np.inf, 2) == 1
    # continuity at the d=2 breakpoint r = 10/3
    r = 10 / 3
    assert rho_exponent(r - 1e-9, 2) == pytest.approx(rho_exponent(r + 1e-9, 2), abs=1e-8)
    with pytest.raises(ValueError):
        rho_exponent(1.5, 1)


def test_conjugate_exponent():
    assert conjugate_exponent(1) == np.inf
    assert conjugate_exponent(np.inf) == 1
    assert conjugate_exponent(4) == pytest.approx(4 / 3)


def test_projector_norm_exact_cases():
    for k in (0, 3, 9):
        assert projector_norm_estimate(k, 2, 2).value == 1.0
    # L^2 -> L^inf norm is the L^2 norm of a kernel row: (2 pi)^{-1} ||phi_k||_2
    grid = TwistedGrid(1, 25.0, 501)
    for k in (0, 4):
        row = laguerre_fn(k, 1.0, grid.points())
        brute = (2 * pi) ** -1 * np.sqrt(np.sum(row**2) * grid.cell)
        assert projector_norm_estimate(k, 2, np.inf).value == pytest.approx(brute, rel=1e-8)
    assert projector_norm_estimate(0, 2, np.inf).value == pytest.approx((2 * pi) ** -0.5, rel=1e-12)


def test_projector_norm_homogeneity():
    for r in (6.0, np.inf):
        one = projector_norm_estimate(3, 2, r, lam_abs=1.0).value
        four = projector_norm_estimate(3, 2, r, lam_abs=4.0).value
        assert four / one == pytest.approx(4 ** (0.5 - (0 if np.isinf(r) else 1 / r)), rel=1e-4)


def test_projector_norm_lower_bound_path():
    est = projector_norm_estimate(2, 1.0, np.inf)
    assert est.kind == "lower-bound" and est.value > 0 and est.certificate["witness"]
    with pytest.raises(ValueError):
        projector_norm_estimate(2, 3.0, 4.0)


def test_series_convergence_case_one():
    short = series_partial_sum(1, 1, 1, 1, 1000)
    long = series_partial_sum(1, 1, 1, 1, 10000)
    assert long.exponent == pytest.approx(2.0)
    assert abs(long.at(10000) - short.at(1000)) / long.at(10000) < 1e-3
    # sum over odd squares is pi^2/8; the remaining tail is about 1/(4K)
    assert pi**2 / 8 - long.at(10000) == pytest.approx(1 / (4 * 10000), rel=1e-3)
    assert np.all(np.diff(long.partial_sums) > 0)
    assert long.at(10000) - short.at(1000) <= short.tail_bound
    assert pi**2 / 8 - short.at(1000) <= short.tail_bound


def test_series_vertical_gain_bound():
    for m in (1, 2, 3, 5):
        top = 2 * (m + 1) / (m + 3)
        for r in np.linspace(1, top, 5):
            assert vertical_gain(m, r) >= 2 * m / (m + 1) - 1e-12 >= 1 - 1e-12


def test_series_rejects_excluded_case():
    with pytest.raises(SeriesHypothesisError, match=r"\(m, p\) = \(1, 2\)"):
        series_partial_sum(2, 1, 1, 1, 10)
    with pytest.raises(SeriesHypothesisError):
        series_partial_sum(1, 1.9, 1, 3, 10)


def test_series_measured_path():
    res = series_partial_sum(2, 1, 1, 3, 20, norm_source="measured")
    bound = series_partial_sum(2, 1, 1, 3, 20, norm_source="bound")
    assert np.all(res.partial_sums <= bound.partial_sums + 1e-12)
