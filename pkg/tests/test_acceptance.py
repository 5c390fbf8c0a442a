"""One test per acceptance criterion; each prints a PASS/FAIL line with the measured figures."""

import time
import warnings

import numpy as np
import pytest
from numpy.polynomial.hermite import hermgauss

from htype_spectral.cli import projector_scan
from htype_spectral.evolve import (
    duhamel,
    initial_data,
    pde_residual,
    schrodinger_stack,
    stack_norms,
    wave_energy,
)
from htype_spectral.fan import CutoffSpec, kappa_sigma, tt_star_check
from htype_spectral.gft import (
    SpaceField,
    SpaceGrid,
    SpaceTimeField,
    TruncationWarning,
    forward,
    inverse,
    plancherel_norm,
)
from htype_spectral.evolve import bernstein_ratio
from htype_spectral.norms import MixedNormSpec, admissible_check, dilation_scan, fitted_exponent
from htype_spectral.special_fn import (
    gauss_hermite_rule,
    hermite_table,
    multi_hermite,
    multi_indices,
    special_hermite_table,
)
from htype_spectral.twisted import (
    SeriesHypothesisError,
    TwistedField,
    TwistedGrid,
    laguerre_field,
    project_k,
    rho_exponent,
    series_partial_sum,
    twisted_convolve,
    twisted_laplacian_apply,
)

INF = np.inf


def _report(log, number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} | {detail}"
    log.append(line)
    print(line)
    return ok


# ---------------------------------------------------------------- 1


def test_criterion_01_basis_integrity(acceptance_log):
    start = time.perf_counter()
    rule = gauss_hermite_rule(64)
    tab = hermite_table(32, rule.nodes) * np.sqrt(rule.weights * np.exp(rule.nodes**2))
    r_hermite = np.abs(tab @ tab.T - np.eye(33)).max()

    lam = 2.0
    nodes, weights = hermgauss(40)
    xi = nodes / np.sqrt(lam)
    w = weights * np.exp(nodes**2) / np.sqrt(lam)
    X, Y = np.meshgrid(xi, xi, indexing="ij")
    pts = np.stack([X, Y], axis=-1)
    idx = multi_indices(2, 6)
    vals = np.array([multi_hermite(a, lam, pts) for a in idx])
    gram = np.einsum("aij,bij,ij->ab", vals, vals, np.outer(w, w))
    r_multi = np.abs(gram - np.eye(len(idx))).max()

    axis = np.linspace(-14, 14, 281)
    h = axis[1] - axis[0]
    A, B = np.meshgrid(axis, axis, indexing="ij")
    idx1 = multi_indices(1, 4)
    sh = special_hermite_table(idx1, 1.3, np.stack([A, B], axis=-1)).reshape(len(idx1) ** 2, -1)
    r_special = np.abs(np.conj(sh) @ sh.T * h * h - np.eye(len(idx1) ** 2)).max()

    elapsed = time.perf_counter() - start
    worst = max(r_hermite, r_multi, r_special)
    ok = worst < 1e-8 and elapsed < 30
    detail = f"gram residuals h={r_hermite:.2e} Phi_a={r_multi:.2e} Phi_ab={r_special:.2e} (tol 1e-8), {elapsed:.1f}s (< 30s)"
    assert _report(acceptance_log, 1, "basis integrity", ok, detail)


# ---------------------------------------------------------------- 2


def test_criterion_02_twisted_convolution_identity(acceptance_log):
    worst = 0.0
    for lam in (1.0, 4.0):
        half = 14.0 / np.sqrt(lam) + 2
        grid = TwistedGrid(1, half, int(np.ceil(2 * half / (0.22 / np.sqrt(lam)))) | 1)
        phis = [laguerre_field(k, lam, grid) for k in range(5)]
        for j in range(5):
            for k in range(5):
                conv = twisted_convolve(phis[j], phis[k]).samples
                target = (2 * np.pi / lam) * phis[j].samples * (j == k)
                scale = (2 * np.pi / lam) * np.linalg.norm(phis[j].samples)
                worst = max(worst, np.linalg.norm(conv - target) / scale)
    ok = worst < 1e-6
    assert _report(acceptance_log, 2, "twisted convolution identity", ok, f"max rel error {worst:.2e} (tol 1e-6)")


# ---------------------------------------------------------------- 3


def test_criterion_03_projector_algebra(acceptance_log):
    grid = TwistedGrid(1, 16.0, 97)
    pts = grid.points()
    g = TwistedField(np.exp(-0.5 * np.sum((pts - np.array([2.0, -1.0])) ** 2, -1)), 1.0, grid)
    norm = np.linalg.norm(g.samples)
    pieces = [project_k(g, k) for k in range(13)]
    algebra = 0.0
    for j in range(13):
        for k in range(13):
            out = project_k(pieces[k], j).samples
            algebra = max(algebra, np.linalg.norm(out - pieces[k].samples * (j == k)) / norm)
    eigen = 0.0
    for k in range(13):
        lap = twisted_laplacian_apply(pieces[k], "spectral", n_max=40).field.samples
        eigen = max(eigen, np.linalg.norm(lap + (2 * k + 1) * pieces[k].samples) / norm)
    ok = algebra < 1e-5 and eigen < 1e-5
    detail = f"Lambda_j Lambda_k residual {algebra:.2e}, eigenrelation residual {eigen:.2e} (tol 1e-5, k<=12)"
    assert _report(acceptance_log, 3, "projector algebra", ok, detail)


# ---------------------------------------------------------------- 4


def test_criterion_04_plancherel_and_inversion(acceptance_log, grid65, heis, quad48, suite_fields):
    start = time.perf_counter()
    names = list(suite_fields)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        coeffs = forward([suite_fields[n] for n in names], heis, quad48, 24)
    worst_p = worst_r = 0.0
    for name, F in zip(names, coeffs):
        f = suite_fields[name]
        n = f.norm()
        worst_p = max(worst_p, abs(plancherel_norm(F) - n) / n)
        back = inverse(F, grid65)
        worst_r = max(worst_r, back.like(back.samples - f.samples).norm() / n)
    elapsed = time.perf_counter() - start
    ok = worst_p < 1e-5 and worst_r < 1e-5 and elapsed < 120
    detail = f"Plancherel {worst_p:.2e}, round trip {worst_r:.2e} (tol 1e-5) on {len(names)} fields, {elapsed:.1f}s (< 120s)"
    assert _report(acceptance_log, 4, "Plancherel and inversion", ok, detail)


# ---------------------------------------------------------------- 5


def test_criterion_05_projector_norm_exponent(acceptance_log):
    start = time.perf_counter()
    ks = [4, 8, 16, 24, 32, 40]
    parts, ok = [], True
    for r in (6.0, INF):
        rows = projector_scan(ks, r, 1)
        slope = float(np.polyfit(np.log([2 * k + 1 for k in ks]), np.log([row[1] for row in rows]), 1)[0])
        limit = rho_exponent(r, 1) / 2 + 0.1
        single_constant = all(row[1] <= row[2] * (1 + 1e-12) for row in rows)
        ok &= slope <= limit and single_constant
        parts.append(f"r={r:g}: slope {slope:.4f} <= {limit:.4f}, C={rows[0][2] / (2 * ks[0] + 1) ** (rho_exponent(r, 1) / 2):.4g}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 300
    assert _report(acceptance_log, 5, "projector norm growth exponent", ok, "; ".join(parts) + f", {elapsed:.1f}s (< 300s)")


# ---------------------------------------------------------------- 6


def test_criterion_06_series_convergence(acceptance_log):
    short = series_partial_sum(1, 1, 1, 1, 1000)
    long = series_partial_sum(1, 1, 1, 1, 10000)
    gap = abs(long.at(10000) - short.at(1000)) / long.at(10000)
    majorant_ok = long.at(10000) - short.at(1000) <= short.tail_bound
    adm = admissible_check(2, 4, INF, 1, 1)
    try:
        series_partial_sum(2, 1, 1, 1, 10)
        series_rejects = False
    except SeriesHypothesisError:
        series_rejects = True
    ok = gap < 1e-3 and majorant_ok and not adm.admissible and series_rejects
    detail = (
        f"|S_1e4 - S_1e3|/S_1e4 = {gap:.2e} (tol 1e-3), tail majorant {short.tail_bound:.2e} covers it: {majorant_ok}, "
        f"(m,p)=(1,2) rejected: {not adm.admissible and series_rejects}"
    )
    assert _report(acceptance_log, 6, "series convergence", ok, detail)


# ---------------------------------------------------------------- 7


def test_criterion_07_tt_star_three_way(acceptance_log, heis):
    start = time.perf_counter()
    grid = SpaceGrid(1, 1, 6.0, 33, 12.0, 32)
    X = grid.x_points()
    Z = grid.z_axis
    f0 = np.exp(-(X**2).sum(-1) / 2)[..., None] * np.exp(-(Z**2) / 8) * np.cos(Z)
    times = np.linspace(0, 16, 32, endpoint=False)
    envelope = np.exp(-((times - 8) ** 2) / 8) * np.exp(1.5j * times)
    f = SpaceTimeField(envelope[:, None, None, None] * f0[None], times, grid)
    rep = tt_star_check(f, CutoffSpec(1.0, 2.0), heis, k_max=12, n_mu=16, n_max=24)
    elapsed = time.perf_counter() - start
    ok = rep.max_l2() < 1e-3 and elapsed < 600
    pairs = ", ".join(f"{k} {v:.2e}" for k, v in rep.l2.items())
    detail = f"pairwise rel L2 {pairs} (tol 1e-3) on 33x33x32 x 32 times, {elapsed:.1f}s (< 600s)"
    assert _report(acceptance_log, 7, "TT* three-way agreement", ok, detail)


# ---------------------------------------------------------------- 8


def test_criterion_08_propagator_physics(acceptance_log, heis, quad48, gaussian_coeffs):
    F = gaussian_coeffs
    times = np.linspace(0.0, 4.0, 64)
    norms = stack_norms(F, schrodinger_stack(F, times))
    unitarity = float(np.abs(norms / norms[0] - 1).max())
    energy = wave_energy(F, F.like(0.5j * F.blocks), times)
    energy_drift = float(np.abs(energy / energy[0] - 1).max())

    grid = SpaceGrid(1, 1, 8.0, 41, 14.0, 77)
    u0 = initial_data("gaussian", grid, heis, carrier=2.0)
    ts = np.linspace(0.0, 0.2, 17)
    src = SpaceTimeField(np.exp(1j * ts)[:, None, None, None] * u0.samples[None], ts, grid)
    residual = pde_residual(duhamel(src, ts, heis, quad48, 20), src, heis)

    ok = unitarity < 1e-10 and energy_drift < 1e-8 and residual < 1e-3
    detail = f"unitarity drift {unitarity:.2e} (1e-10), wave energy drift {energy_drift:.2e} (1e-8), Duhamel residual {residual:.2e} (1e-3)"
    assert _report(acceptance_log, 8, "propagator physics", ok, detail)


# ---------------------------------------------------------------- 9


def test_criterion_09_scaling_exponents(acceptance_log, heis, quad48):
    grid = SpaceGrid(1, 1, 8.0, 41, 14.0, 77)
    u0 = initial_data("gaussian", grid, heis, quad48, 20)
    times = np.linspace(0.0, 2.0, 33)
    spec = MixedNormSpec(INF, 4, 4)
    sch = dilation_scan(u0, [1.0, 2.0, 4.0, 8.0], spec, structure=heis, quad=quad48, n_max=20, times=times)
    wav = dilation_scan(u0, [1.0, 2.0, 4.0], spec, "wave", structure=heis, quad=quad48, n_max=20, times=times)
    e_mixed = abs(sch.mixed_exponent - sch.expected_mixed)
    e_l2 = abs(sch.l2_exponent - 2.0)
    e_wave = abs(wav.mixed_exponent - wav.expected_mixed)

    Q = heis.homogeneous_dim
    beta, p, q = (0, 1), 2.0, 4.0
    target = len(beta) + Q * (1 / p - 1 / q)
    scales = [1.0, 2.0, 4.0, 8.0]
    raw = []
    for s in scales:
        f = SpaceField(u0.samples, grid.dilated(1 / s))
        raw.append(bernstein_ratio(f, beta, p, q, s, heis) * s**target)
    e_bern = abs(fitted_exponent(scales, raw) - target)

    ok = e_mixed < 1e-6 and e_l2 < 1e-6 and e_wave < 1e-6 and e_bern < 0.1
    detail = (
        f"Schrodinger mixed {sch.mixed_exponent:.9f} vs {sch.expected_mixed:g}, L2 {sch.l2_exponent:.9f} vs 2, "
        f"wave {wav.mixed_exponent:.9f} vs {wav.expected_mixed:g} (tol 1e-6); Bernstein error {e_bern:.2e} (tol 0.1)"
    )
    assert _report(acceptance_log, 9, "scaling exponents", ok, detail)


# ---------------------------------------------------------------- 10


def test_criterion_10_strichartz_ratio_stability(acceptance_log, heis, quad48, gaussian_field):
    tab = dilation_scan(
        gaussian_field, [1.0, 2.0, 4.0, 8.0], MixedNormSpec(INF, 4, 4), sigma=1.0, structure=heis, quad=quad48,
        n_max=20, times=np.linspace(0.0, 2.0, 33),
    )
    ratios = np.array([r.ratio for r in tab.rows])
    spread = float(np.ptp(ratios) / ratios.min())
    ok = spread < 0.02
    detail = "ratios " + ", ".join(f"{r:.9g}" for r in ratios) + f"; spread {spread:.2e} (tol 2e-2)"
    assert _report(acceptance_log, 10, "Strichartz ratio stability", ok, detail)


# ---------------------------------------------------------------- 11


def test_criterion_11_kernel_bound(acceptance_log, heis):
    grid = SpaceGrid(1, 1, 6.0, 17, 8.0, 17)
    times = np.linspace(-8.0, 8.0, 64)
    kf = kappa_sigma(CutoffSpec(1.0, 2.0), grid, times, heis, k_max=24, n_mu=40)
    ok = kf.sup() < kf.bound
    detail = f"sup {kf.sup():.9g} < bound {kf.bound:.9g}, margin {kf.margin():.3e} (series tail {kf.tail_bound:.3e})"
    assert _report(acceptance_log, 11, "kernel bound", ok, detail)
