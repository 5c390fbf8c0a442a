"""Schrodinger and wave propagators, Duhamel terms and frequency localization.

Everything is a spectral multiplier in mu = |lam| (2|a| + d): the
Schrodinger flow i u_t = Delta_H u multiplies coefficients by exp(i t mu),
the wave flow by exp(+-i t sqrt(mu)).  Time stepping appears only in the
finite-difference residual checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import pi
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import roots_legendre

from .gft import (
    LambdaQuadrature,
    SpaceField,
    SpaceGrid,
    SpaceTimeField,
    SpectralCoeffs,
    forward,
    inverse,
    inverse_stack,
    lambda_quadrature,
    plancherel_norm,
)
from .group_core import HTypeStructure, heisenberg


def _coeffs(u0: SpaceField, structure, quad, n_max, coeffs):
    if coeffs is not None:
        return coeffs
    s = structure or heisenberg(u0.grid.d)
    return forward(u0, s, quad, n_max)


# ------------------------------------------------------------------ Schrodinger


def schrodinger_stack(F: SpectralCoeffs, times: Sequence[float]) -> np.ndarray:
    """exp(i t mu) F for each t; shape (n_t, nodes, n_idx, n_idx)."""
    mu = F.spectrum()
    times = np.asarray(times, dtype=float)
    return np.exp(1j * times[:, None, None] * mu[None])[..., None] * F.blocks[None]


def schrodinger_propagate(
    u0: SpaceField,
    times: Sequence[float],
    structure: HTypeStructure | None = None,
    quad: LambdaQuadrature | None = None,
    n_max: int = 24,
    coeffs: SpectralCoeffs | None = None,
) -> SpaceTimeField:
    F = _coeffs(u0, structure, quad, n_max, coeffs)
    times = np.asarray(times, dtype=float)
    return SpaceTimeField(inverse_stack(F, schrodinger_stack(F, times), u0.grid), times, u0.grid)


def stack_norms(F: SpectralCoeffs, stack: np.ndarray) -> np.ndarray:
    """Plancherel norm of every time slice of a coefficient stack."""
    mass = np.sum(np.abs(stack) ** 2, axis=(2, 3))
    return np.sqrt(mass @ F.plancherel_weights())


# ------------------------------------------------------------------ wave


@dataclass
class WaveData:
    u0: SpaceField
    v0: SpaceField

    def __post_init__(self) -> None:
        if self.u0.grid != self.v0.grid:
            raise ValueError("initial position and velocity must share a grid")


def wave_split(Fu: SpectralCoeffs, Fv: SpectralCoeffs) -> tuple[np.ndarray, np.ndarray]:
    """Gamma_+- = (F(u0) +- F(v0) / (i sqrt(mu))) / 2."""
    mu = Fu.spectrum()
    if np.any(np.abs(Fv.blocks) > 0) and np.min(mu) <= 1e-12:
        raise ValueError("velocity data needs a spectrum bounded away from 0")
    root = np.sqrt(mu)[..., None]
    return 0.5 * (Fu.blocks + Fv.blocks / (1j * root)), 0.5 * (Fu.blocks - Fv.blocks / (1j * root))


def wave_stacks(Fu: SpectralCoeffs, Fv: SpectralCoeffs, times: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients of u(t) and of its time derivative."""
    gp, gm = wave_split(Fu, Fv)
    root = np.sqrt(Fu.spectrum())[None, ..., None]
    t = np.asarray(times, dtype=float)[:, None, None, None]
    ep, em = np.exp(1j * t * root), np.exp(-1j * t * root)
    u = gp[None] * ep + gm[None] * em
    ut = 1j * root * (gp[None] * ep - gm[None] * em)
    return u, ut


def wave_energy(Fu: SpectralCoeffs, Fv: SpectralCoeffs, times: Sequence[float]) -> np.ndarray:
    """||d_t u||^2 + ||grad_H u||^2 per time, with ||grad_H u||^2 = sum mu |u_hat|^2."""
    u, ut = wave_stacks(Fu, Fv, times)
    w = Fu.plancherel_weights()
    mu = Fu.spectrum()[None, ..., None]
    kinetic = np.sum(np.abs(ut) ** 2, axis=(2, 3)) @ w
    potential = np.sum(mu * np.abs(u) ** 2, axis=(2, 3)) @ w
    return kinetic + potential


def wave_propagate(
    data: WaveData,
    times: Sequence[float],
    structure: HTypeStructure | None = None,
    quad: LambdaQuadrature | None = None,
    n_max: int = 24,
) -> SpaceTimeField:
    s = structure or heisenberg(data.u0.grid.d)
    Fu, Fv = forward([data.u0, data.v0], s, quad, n_max)
    u, _ = wave_stacks(Fu, Fv, times)
    times = np.asarray(times, dtype=float)
    return SpaceTimeField(inverse_stack(Fu, u, data.u0.grid), times, data.u0.grid)


# ------------------------------------------------------------------ Duhamel


def duhamel_stack(
    source: Callable[[float], np.ndarray], template: SpectralCoeffs, times: Sequence[float], n_gl: int = 24
) -> np.ndarray:
    """-i int_0^t exp(i (t - s) mu) f_hat(s) ds at increasing ``times``.

    Each panel [t_{j-1}, t_j] gets its own Gauss-Legendre rule and the
    running value is carried forward by exp(i (t_j - t_{j-1}) mu), so the
    phase per panel stays small.  ``source(s)`` returns blocks of f(s).
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be nonnegative and increasing")
    mu = template.spectrum()[..., None]
    xs, ws = roots_legendre(n_gl)
    acc = np.zeros_like(template.blocks)
    prev = 0.0
    out = []
    for t in times:
        h = t - prev
        if h > 0:
            acc = np.exp(1j * h * mu) * acc
            for s, w in zip(prev + 0.5 * h * (xs + 1), 0.5 * h * ws):
                acc = acc + w * np.exp(1j * (t - s) * mu) * source(float(s))
        out.append(-1j * acc)
        prev = t
    return np.stack(out)


def source_interpolant(f: SpaceTimeField, structure: HTypeStructure, quad: LambdaQuadrature | None, n_max: int):
    """Coefficient trajectories of f, cubic-spline interpolated in time."""
    coeffs = forward([f.at(i) for i in range(f.times.size)], structure, quad, n_max)
    stack = np.stack([c.blocks for c in coeffs])
    spline = CubicSpline(f.times, stack, axis=0)
    return coeffs[0], lambda s: spline(s)


def duhamel(
    f: SpaceTimeField,
    times: Sequence[float],
    structure: HTypeStructure | None = None,
    quad: LambdaQuadrature | None = None,
    n_max: int = 24,
    n_gl: int = 24,
) -> SpaceTimeField:
    """Solution of i u_t - Delta_H u = f with u(0) = 0."""
    s = structure or heisenberg(f.grid.d)
    template, src = source_interpolant(f, s, quad, n_max)
    times = np.asarray(times, dtype=float)
    if times.min() < f.times.min() or times.max() > f.times.max():
        raise ValueError("output times must lie inside the sampled source window")
    stack = duhamel_stack(src, template, times, n_gl)
    return SpaceTimeField(inverse_stack(template, stack, f.grid), times, f.grid)


def forced_mode_solution(mu: np.ndarray, mu0: float, t: np.ndarray) -> np.ndarray:
    """Scalar oracle: -i int_0^t exp(i (t - s) mu) exp(i mu0 s) ds."""
    t = np.asarray(t, dtype=float)[:, None]
    delta = mu0 - np.asarray(mu)[None, :]
    return -1j * np.exp(1j * t * mu) * (np.exp(1j * delta * t) - 1) / (1j * delta)


def pde_residual(u: SpaceTimeField, f: SpaceTimeField | None, structure: HTypeStructure) -> float:
    """||i u_t - Delta_H u - f|| / (||Delta_H u|| + ||f||) on interior times.

    u_t uses 4th-order centred differences and Delta_H the spectral sub-Laplacian.
    """
    from .gft import sublaplacian

    dt = u.dt
    n = u.times.size
    if n < 5:
        raise ValueError("need at least 5 time samples")
    num = lap_mass = src_mass = 0.0
    for i in range(2, n - 2):
        ut = (u.samples[i - 2] - 8 * u.samples[i - 1] + 8 * u.samples[i + 1] - u.samples[i + 2]) / (12 * dt)
        lap = sublaplacian(u.at(i), structure).samples
        res = 1j * ut - lap - (f.samples[i] if f is not None else 0)
        num += float(np.sum(np.abs(res) ** 2))
        lap_mass += float(np.sum(np.abs(lap) ** 2))
        if f is not None:
            src_mass += float(np.sum(np.abs(f.samples[i]) ** 2))
    den = np.sqrt(lap_mass) + np.sqrt(src_mass)
    return float(np.sqrt(num) / den) if den > 0 else float(np.sqrt(num))


# ------------------------------------------------------------------ localization


def smooth_step(s) -> np.ndarray:
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    a = np.where(s > 0, np.exp(-1 / np.where(s > 0, s, 1.0)), 0.0)
    b = np.where(s < 1, np.exp(-1 / np.where(s < 1, 1 - s, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class LocalizationSpec:
    """Profile phi(mu / Lam^2).

    ball: 1 on [0, inner], 0 beyond outer.
    annulus: 0 below lo, 1 on [lo_flat, hi_flat], 0 beyond hi.
    """

    kind: str
    Lam: float
    lo: float = 0.25
    lo_flat: float = 0.5
    hi_flat: float = 2.0
    hi: float = 4.0

    def __post_init__(self) -> None:
        if self.kind not in ("ball", "annulus"):
            raise ValueError("kind must be 'ball' or 'annulus'")
        if not self.Lam > 0:
            raise ValueError("Lam must be positive")
        if not self.hi_flat < self.hi:
            raise ValueError("need hi_flat < hi")
        if self.kind == "annulus" and not 0 < self.lo < self.lo_flat <= self.hi_flat:
            raise ValueError("annulus needs 0 < lo < lo_flat <= hi_flat")

    def profile(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        upper = 1 - smooth_step((s - self.hi_flat) / (self.hi - self.hi_flat))
        if self.kind == "ball":
            return upper
        return upper * smooth_step((s - self.lo) / (self.lo_flat - self.lo))

    def __call__(self, mu) -> np.ndarray:
        return self.profile(np.asarray(mu) / self.Lam**2)


def localize_coeffs(F: SpectralCoeffs, spec: LocalizationSpec) -> SpectralCoeffs:
    from .gft import apply_multiplier

    return apply_multiplier(F, spec)


def frequency_localize(
    u0: SpaceField,
    spec: LocalizationSpec,
    structure: HTypeStructure | None = None,
    quad: LambdaQuadrature | None = None,
    n_max: int = 24,
) -> SpaceField:
    F = _coeffs(u0, structure, quad, n_max, None)
    return inverse(localize_coeffs(F, spec), u0.grid)


# ------------------------------------------------------------------ left-invariant derivatives

_FD1 = np.array([1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12])


def _diff(samples: np.ndarray, axis: int, h: float) -> np.ndarray:
    """4th-order centred first derivative, zero padding outside the box."""
    pad = [(2, 2) if a == axis else (0, 0) for a in range(samples.ndim)]
    padded = np.pad(samples, pad)
    n = samples.shape[axis]
    out = np.zeros_like(samples)
    for offset, w in zip(range(-2, 3), _FD1):
        if w:
            out = out + w * np.take(padded, np.arange(n) + 2 + offset, axis=axis)
    return out / h


def left_invariant_fd(f: SpaceField, i: int, structure: HTypeStructure) -> SpaceField:
    """X_i f = d_i f - 1/2 sum_a (L[a] x)_i d_{z_a} f by 4th-order differences."""
    g = f.grid
    out = _diff(f.samples, i, g.dx)
    x = g.x_points()
    for a in range(g.m):
        coef = (x @ structure.brackets[a].T)[..., i]
        out = out - 0.5 * coef.reshape(g.x_shape + (1,) * g.m) * _diff(f.samples, 2 * g.d + a, g.dz)
    return f.like(out)


def apply_word(f: SpaceField, beta: Sequence[int], structure: HTypeStructure) -> SpaceField:
    """X^beta f for a word beta = (i_1, ..., i_k) of horizontal directions."""
    out = f
    for i in reversed(list(beta)):
        out = left_invariant_fd(out, i, structure)
    return out


def bernstein_ratio(
    f: SpaceField, beta: Sequence[int], p: float, q: float, Lam: float, structure: HTypeStructure
) -> float:
    """||X^beta f||_q / (Lam^{|beta| + Q (1/p - 1/q)} ||f||_p)."""
    if not 1 <= p <= q:
        raise ValueError("need 1 <= p <= q")
    Q = structure.homogeneous_dim
    inv = lambda r: 0.0 if np.isinf(r) else 1.0 / r
    num = apply_word(f, beta, structure).norm(q)
    den = f.norm(p)
    if den == 0:
        raise ValueError("zero field")
    return num / (Lam ** (len(beta) + Q * (inv(p) - inv(q))) * den)


def fractional_ratio(F: SpectralCoeffs, grid: SpaceGrid, sigma: float, p: float, Lam: float) -> float:
    """||(-Delta_H)^{sigma/2} f||_p / (Lam^sigma ||f||_p) for f with coefficients F."""
    from .gft import apply_multiplier

    f = inverse(F, grid)
    g = inverse(apply_multiplier(F, lambda mu: mu ** (sigma / 2)), grid)
    return g.norm(p) / (Lam**sigma * f.norm(p))


# ------------------------------------------------------------------ data families


def _packet(z: np.ndarray, width: float, carrier: float) -> np.ndarray:
    r2 = np.sum(z**2, axis=-1)
    return np.exp(-r2 / (2 * width**2)) * np.cos(carrier * z[..., 0])


def initial_data(
    name: str,
    grid: SpaceGrid,
    structure: HTypeStructure | None = None,
    quad: LambdaQuadrature | None = None,
    n_max: int = 24,
    **params,
) -> SpaceField:
    """Named initial data.

    gaussian(width, z_width, carrier); coherent(x0, xi0, ...);
    hermite_mode(lam, alpha, beta, spread); bgx-transport (order-0 band of a Gaussian).
    Vertical profiles are exp(-|z|^2/(2 z_width^2)) cos(carrier z_1).
    """
    s = structure or heisenberg(grid.d)
    x = grid.x_points()
    z = grid.z_points()
    width = float(params.get("width", 1.0))
    zw = float(params.get("z_width", 2.0))
    carrier = float(params.get("carrier", 3.0))
    vertical = _packet(z, zw, carrier)
    if name == "gaussian":
        horiz = np.exp(-np.sum(x**2, axis=-1) / (2 * width**2))
    elif name == "coherent":
        x0 = np.asarray(params.get("x0", np.zeros(2 * grid.d)), dtype=float)
        xi0 = np.asarray(params.get("xi0", np.zeros(2 * grid.d)), dtype=float)
        horiz = np.exp(-np.sum((x - x0) ** 2, axis=-1) / (2 * width**2) + 1j * (x @ xi0))
    elif name in ("hermite_mode", "bgx-transport"):
        quad = quad or lambda_quadrature(s.m)
        if name == "hermite_mode":
            lam0 = float(params.get("lam", 3.0))
            spread = float(params.get("spread", 0.5))
            alpha = tuple(params.get("alpha", (0,) * grid.d))
            beta = tuple(params.get("beta", (0,) * grid.d))
            from .special_fn import multi_indices

            idx = [tuple(r) for r in multi_indices(s.d, n_max)]
            blocks = np.zeros((len(quad), len(idx), len(idx)), dtype=complex)
            bump = np.exp(-((quad.rho - lam0) ** 2) / (2 * spread**2))
            blocks[:, idx.index(alpha), idx.index(beta)] = bump
            F = SpectralCoeffs(s, quad, n_max, blocks)
        else:
            base = SpaceField(np.exp(-np.sum(x**2, axis=-1) / (2 * width**2))[(...,) + (None,) * grid.m] * vertical, grid)
            F = forward(base, s, quad, n_max)
            F = F.like(np.where((F.orders == 0)[None, :, None], F.blocks, 0))
        return inverse(F, grid)
    else:
        raise ValueError(f"unknown initial-data family {name!r}")
    return SpaceField(horiz[(...,) + (None,) * grid.m] * vertical, grid)


def schwartz_suite(grid: SpaceGrid) -> dict[str, SpaceField]:
    """Five Schwartz surrogates with vertical spectrum inside the default band."""
    x = grid.x_points()
    z = grid.z_points()
    r2 = np.sum(x**2, axis=-1)
    exp = lambda a: a[(...,) + (None,) * grid.m]
    packet = _packet(z, 2.0, 3.0)
    shift = np.zeros(2 * grid.d)
    shift[0], shift[-1] = 0.7, -0.4
    freq = np.zeros(2 * grid.d)
    freq[0], freq[-1] = 0.5, 0.3
    widths = np.linspace(0.8, 1.3, 2 * grid.d)
    poly = x[..., 0] ** 2 - x[..., -1] + 0.5 * x[..., 0] * x[..., -1]
    second = np.exp(-np.sum(z**2, axis=-1) / 8) * np.sin(3.5 * z[..., 0])
    e0 = np.zeros(2 * grid.d)
    e0[0] = 1.0
    e1 = np.zeros(2 * grid.d)
    e1[-1] = -1.2
    return {
        "gaussian": SpaceField(exp(np.exp(-r2 / 2)) * packet, grid),
        "coherent": SpaceField(exp(np.exp(-np.sum((x - shift) ** 2, axis=-1) / 2 + 1j * (x @ freq))) * packet, grid),
        "anisotropic": SpaceField(exp(np.exp(-np.sum(x**2 / (2 * widths**2), axis=-1))) * packet, grid),
        "hermite_mixture": SpaceField(exp(poly * np.exp(-r2 / 2)) * packet, grid),
        "two_bumps": SpaceField(
            exp(np.exp(-np.sum((x - e0) ** 2, axis=-1)) + 0.5 * np.exp(-np.sum((x - e1) ** 2, axis=-1) / 1.5)) * second,
            grid,
        ),
    }


__all__ = [
    "schrodinger_stack",
    "schrodinger_propagate",
    "stack_norms",
    "WaveData",
    "wave_split",
    "wave_stacks",
    "wave_energy",
    "wave_propagate",
    "duhamel_stack",
    "source_interpolant",
    "duhamel",
    "forced_mode_solution",
    "pde_residual",
    "smooth_step",
    "LocalizationSpec",
    "localize_coeffs",
    "frequency_localize",
    "left_invariant_fd",
    "apply_word",
    "bernstein_ratio",
    "fractional_ratio",
    "initial_data",
    "schwartz_suite",
]
