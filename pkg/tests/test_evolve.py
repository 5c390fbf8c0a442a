import numpy as np
import pytest

from htype_spectral.evolve import (
    LocalizationSpec,
    WaveData,
    bernstein_ratio,
    duhamel,
    duhamel_stack,
    forced_mode_solution,
    fractional_ratio,
    frequency_localize,
    initial_data,
    localize_coeffs,
    pde_residual,
    schrodinger_propagate,
    schrodinger_stack,
    smooth_step,
    stack_norms,
    wave_energy,
    wave_propagate,
    wave_stacks,
)
from htype_spectral.gft import (
    SpaceField,
    SpaceGrid,
    SpaceTimeField,
    forward,
    inverse,
    inverse_stack,
)
from htype_spectral.norms import fitted_exponent

TIMES = np.linspace(0.0, 4.0, 64)


@pytest.fixture(scope="module")
def short_grid():
    return SpaceGrid(1, 1, 8.0, 41, 14.0, 77)


@pytest.fixture(scope="module")
def short_data(short_grid, heis, quad48):
    u0 = initial_data("gaussian", short_grid, heis, carrier=2.0)
    return u0, forward(u0, heis, quad48, 20)


# ---------------------------------------------------------------- Schrodinger


def test_schrodinger_at_zero_is_round_trip(gaussian_field, gaussian_coeffs, heis, quad48):
    u = schrodinger_propagate(gaussian_field, [0.0], heis, quad48, 20, coeffs=gaussian_coeffs)
    back = inverse(gaussian_coeffs, gaussian_field.grid)
    np.testing.assert_allclose(u.samples[0], back.samples, rtol=0, atol=1e-14)
    assert np.linalg.norm(u.samples[0] - gaussian_field.samples) <= 1e-5 * np.linalg.norm(gaussian_field.samples)


def test_schrodinger_is_unitary(gaussian_coeffs):
    norms = stack_norms(gaussian_coeffs, schrodinger_stack(gaussian_coeffs, TIMES))
    assert np.max(np.abs(norms - norms[0])) <= 1e-10 * norms[0]


def test_schrodinger_group_law(gaussian_coeffs):
    F = gaussian_coeffs
    s, t = 0.7, 1.9
    at_s = F.like(schrodinger_stack(F, [s])[0])
    composed = schrodinger_stack(at_s, [t])[0]
    direct = schrodinger_stack(F, [s + t])[0]
    assert np.max(np.abs(composed - direct)) <= 1e-12 * np.max(np.abs(direct))


def test_schrodinger_grid_norm_preserved(short_data, heis, quad48):
    u0, F = short_data
    u = schrodinger_propagate(u0, [0.0, 0.5, 1.0], heis, quad48, 20, coeffs=F)
    norms = [u.at(i).norm() for i in range(3)]
    assert max(norms) - min(norms) <= 1e-3 * norms[0]


def test_schrodinger_solves_pde(short_data, heis, quad48):
    u0, F = short_data
    ts = np.linspace(0.0, 0.2, 17)
    u = schrodinger_propagate(u0, ts, heis, quad48, 20, coeffs=F)
    assert pde_residual(u, None, heis) < 1e-3


def test_rescaling_law(gaussian_field, heis, quad48):
    # u0 o delta_Lam^{-1} on the dilated grid evolves into u(Lam^{-2} t) o delta_Lam^{-1}
    lam_scale = 2.0
    ts = np.array([0.0, 0.4, 1.3])
    base = schrodinger_propagate(gaussian_field, ts, heis, quad48, 20)
    grid = gaussian_field.grid.dilated(lam_scale)
    scaled = schrodinger_propagate(
        SpaceField(gaussian_field.samples, grid), ts * lam_scale**2, heis, quad48.scaled(lam_scale**-2), 20
    )
    assert np.max(np.abs(scaled.samples - base.samples)) <= 1e-10 * np.max(np.abs(base.samples))


# ---------------------------------------------------------------- wave


def test_wave_zero_velocity_starts_at_u0(short_data, heis, quad48):
    u0, F = short_data
    zero = u0.like(np.zeros_like(u0.samples))
    u = wave_propagate(WaveData(u0, zero), [0.0], heis, quad48, 20)
    back = inverse(F, u0.grid)
    np.testing.assert_allclose(u.samples[0], back.samples, rtol=0, atol=1e-13)


def test_wave_energy_conserved(short_grid, short_data, heis, quad48):
    _, Fu = short_data
    v0 = initial_data("coherent", short_grid, heis, x0=[0.5, 0.0], xi0=[0.0, 0.5])
    Fv = forward(v0, heis, quad48, 20)
    energy = wave_energy(Fu, Fv, TIMES)
    assert np.max(np.abs(energy - energy[0])) <= 1e-8 * energy[0]


def test_wave_single_mode_is_cosine(gaussian_coeffs, grid65):
    F = gaussian_coeffs
    blocks = np.zeros_like(F.blocks)
    node, a, b = 17, 2, 5
    blocks[node, a, b] = 1.0
    mode = F.like(blocks)
    zero = F.like(np.zeros_like(blocks))
    ts = np.array([0.0, 0.8, 2.5])
    u, _ = wave_stacks(mode, zero, ts)
    omega = np.sqrt(F.spectrum()[node, a])
    np.testing.assert_allclose(u[:, node, a, b], np.cos(omega * ts), atol=1e-15)
    assert np.count_nonzero(u) == np.count_nonzero(np.cos(omega * ts))
    fields = inverse_stack(mode, u, grid65)
    still = inverse(mode, grid65).samples
    for i, t in enumerate(ts):
        np.testing.assert_allclose(fields[i], np.cos(omega * t) * still, atol=1e-14)


def test_wave_data_grid_mismatch(grid65, short_grid):
    with pytest.raises(ValueError):
        WaveData(SpaceField(np.zeros(grid65.shape), grid65), SpaceField(np.zeros(short_grid.shape), short_grid))


# ---------------------------------------------------------------- Duhamel


def test_duhamel_zero_source(short_data):
    _, F = short_data
    out = duhamel_stack(lambda s: np.zeros_like(F.blocks), F, TIMES[:8])
    assert np.all(out == 0)


def test_duhamel_forced_oscillator_oracle(short_data):
    _, F = short_data
    mu = F.spectrum()
    mu0 = 2.3
    got = duhamel_stack(lambda s: np.exp(1j * mu0 * s) * F.blocks, F, TIMES, n_gl=24)
    exact = forced_mode_solution(mu.reshape(-1), mu0, TIMES).reshape((TIMES.size,) + mu.shape)[..., None] * F.blocks[None]
    assert np.max(np.abs(got - exact)) <= 1e-6 * np.max(np.abs(exact))


def test_duhamel_linear_in_source(short_data, rng):
    _, F = short_data
    c = complex(rng.normal(), rng.normal())
    f1 = lambda s: np.exp(1.1j * s) * F.blocks
    f2 = lambda s: np.cos(0.4 * s) * F.blocks.conj()
    ts = TIMES[:16]
    lhs = duhamel_stack(lambda s: f1(s) + c * f2(s), F, ts)
    rhs = duhamel_stack(f1, F, ts) + c * duhamel_stack(f2, F, ts)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(lhs))


def test_duhamel_solves_inhomogeneous_pde(short_data, short_grid, heis, quad48):
    u0, _ = short_data
    ts = np.linspace(0.0, 0.2, 17)
    src = SpaceTimeField(np.exp(1j * ts)[:, None, None, None] * u0.samples[None], ts, short_grid)
    u = duhamel(src, ts, heis, quad48, 20)
    assert pde_residual(u, src, heis) < 1e-3


def test_duhamel_rejects_bad_times(short_data, short_grid, heis, quad48):
    u0, F = short_data
    with pytest.raises(ValueError):
        duhamel_stack(lambda s: F.blocks, F, [0.5, 0.2])
    ts = np.linspace(0.0, 0.1, 5)
    src = SpaceTimeField(np.repeat(u0.samples[None], 5, axis=0), ts, short_grid)
    with pytest.raises(ValueError):
        duhamel(src, [0.0, 0.5], heis, quad48, 8)


# ---------------------------------------------------------------- localization


def test_smooth_step_limits():
    s = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    np.testing.assert_array_equal(smooth_step(s)[[0, 1, 3, 4]], [0, 0, 1, 1])
    assert smooth_step(0.5) == pytest.approx(0.5)


def test_annulus_vanishes_near_zero():
    spec = LocalizationSpec("annulus", 2.0)
    mu = np.linspace(0, 0.25 * 4, 50)
    assert np.all(spec(mu) == 0)
    assert spec(4.0) == 1.0


@pytest.mark.parametrize(
    "kwargs",
    [dict(kind="disc", Lam=1.0), dict(kind="ball", Lam=0.0), dict(kind="annulus", Lam=1.0, lo=0.6, lo_flat=0.5)],
)
def test_localization_spec_validation(kwargs):
    with pytest.raises(ValueError):
        LocalizationSpec(**kwargs)


def test_wide_ball_is_identity(gaussian_coeffs):
    F = gaussian_coeffs
    wide = LocalizationSpec("ball", np.sqrt(F.spectrum().max()))
    np.testing.assert_array_equal(localize_coeffs(F, wide).blocks, F.blocks)


def test_nested_profiles_compose_to_inner(gaussian_coeffs):
    F = gaussian_coeffs
    inner, outer = LocalizationSpec("ball", 2.0), LocalizationSpec("ball", 4.0)
    twice = localize_coeffs(localize_coeffs(F, inner), outer)
    once = localize_coeffs(F, inner)
    np.testing.assert_array_equal(twice.blocks, once.blocks)


def test_localized_data_is_fixed_by_wider_profile(gaussian_coeffs, grid65):
    F = gaussian_coeffs
    loc = localize_coeffs(F, LocalizationSpec("annulus", 2.0))
    # the wider profile is flat on the whole support of the narrow one
    wide = LocalizationSpec("annulus", 2.0, lo=0.05, lo_flat=0.25, hi_flat=4.0, hi=8.0)
    again = localize_coeffs(loc, wide)
    f = inverse(loc, grid65).samples
    g = inverse(again, grid65).samples
    assert np.max(np.abs(f - g)) <= 1e-10 * np.max(np.abs(f))


def test_frequency_localize_matches_coefficient_route(gaussian_field, gaussian_coeffs, heis, quad48):
    spec = LocalizationSpec("ball", 3.0)
    direct = frequency_localize(gaussian_field, spec, heis, quad48, 20)
    ref = inverse(localize_coeffs(gaussian_coeffs, spec), gaussian_field.grid)
    np.testing.assert_allclose(direct.samples, ref.samples, rtol=0, atol=1e-13)


# ---------------------------------------------------------------- Bernstein


def test_bernstein_trivial_word(gaussian_field, heis):
    for p in (1.0, 2.0, 4.0, np.inf):
        assert bernstein_ratio(gaussian_field, (), p, p, 1.0, heis) == 1.0


def test_bernstein_rejects_bad_exponents(gaussian_field, heis):
    with pytest.raises(ValueError):
        bernstein_ratio(gaussian_field, (0,), 4.0, 2.0, 1.0, heis)


@pytest.mark.parametrize("beta,p,q", [((0,), 2.0, 2.0), ((0, 1), 2.0, 4.0), ((1,), 1.0, np.inf)])
def test_bernstein_dilation_regression(gaussian_field, heis, beta, p, q):
    # f_Lam = f o delta_Lam lives at frequency scale Lam; sample it on the shrunken grid
    Q = heis.homogeneous_dim
    inv = lambda r: 0.0 if np.isinf(r) else 1.0 / r
    scales = [1.0, 2.0, 4.0, 8.0]
    ratios, raw = [], []
    for lam_scale in scales:
        f = SpaceField(gaussian_field.samples, gaussian_field.grid.dilated(1.0 / lam_scale))
        ratios.append(bernstein_ratio(f, beta, p, q, lam_scale, heis))
        raw.append(ratios[-1] * lam_scale ** (len(beta) + Q * (inv(p) - inv(q))))
    assert fitted_exponent(scales, raw) == pytest.approx(len(beta) + Q * (inv(p) - inv(q)), abs=0.1)
    assert max(ratios) / min(ratios) < 1.01


@pytest.mark.parametrize("p", [2.0, 4.0])
def test_fractional_bernstein_bounded_both_ways(short_data, heis, quad48, p):
    base, _ = short_data
    sigma = 1.0
    ratios = []
    for lam_scale in (1.0, 2.0, 4.0):
        grid = base.grid.dilated(1.0 / lam_scale)
        F = forward(SpaceField(base.samples, grid), heis, quad48.scaled(lam_scale**2), 20)
        F = localize_coeffs(F, LocalizationSpec("annulus", 2.0 * lam_scale))
        ratios.append(fractional_ratio(F, grid, sigma, p, lam_scale))
    ratios = np.array(ratios)
    # annulus support mu / (2 Lam)^2 in [1/4, 4] puts the symbol between 1 and 4 (times Lam)
    assert np.all(ratios > 0.25) and np.all(ratios < 8.0)
    assert np.ptp(ratios) <= 1e-6 * ratios.max()
    if p == 2.0:
        assert np.all((ratios >= 1.0 - 1e-9) & (ratios <= 4.0 + 1e-9))
