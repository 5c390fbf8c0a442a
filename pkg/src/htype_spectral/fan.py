"""Fan measures, spectral slices and the kernels kappa_mu, kappa_Sigma.

The fan is the set of (mu, lam) with mu = |lam| (2k + d).  Every discrete
fan used here is a list of levels k, each carrying lam-nodes and dlam
weights, so mu is always induced from lam and the constraint holds
exactly.

Conventions (checked by the test-suite):

* time transform  f^mu(x, z) = int f(t, x, z) exp(-i mu t) dt;
* vertical transform f^nu(x) = int f(x, z) exp(-i nu.z) dz;
* the node lam of a coefficient block synthesizes the vertical
  frequency nu = -lam, so Lambda_k^nu uses the Hermite rows of node -nu.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import factorial, pi
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special
from scipy.special import roots_legendre

from .gft import (
    LambdaQuadrature,
    SpaceField,
    SpaceGrid,
    SpaceTimeField,
    SpectralCoeffs,
    TruncationWarning,
    _node_table,
    central_ft_many,
    sphere_rule,
)
from .group_core import HTypeStructure
from .special_fn import laguerre_fn, multi_indices, multiplicity
from .twisted import _D1, _D2, TwistedGrid, _fd, difference_axis, twisted_kernel_sum


class KernelConsistencyError(RuntimeError):
    """Two evaluations of the same kernel disagree beyond tolerance."""


# ------------------------------------------------------------------ cutoff


@dataclass(frozen=True)
class CutoffSpec:
    """Smooth bump psi(mu) = exp(1 - 1/(1 - s^2)), s = (2 mu - a - b)/(b - a), zero off (a, b)."""

    a: float
    b: float

    def __post_init__(self) -> None:
        if not 0 < self.a < self.b:
            raise ValueError("cutoff support needs 0 < a < b")

    def __call__(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        s = (2 * mu - self.a - self.b) / (self.b - self.a)
        out = np.zeros_like(s)
        inside = np.abs(s) < 1
        out[inside] = np.exp(1 - 1 / (1 - s[inside] ** 2))
        return np.clip(out, 0.0, 1.0)

    def moment(self, power: float) -> float:
        """int psi(mu) mu^power dmu."""
        val, _ = integrate.quad(lambda mu: float(self(mu)) * mu**power, self.a, self.b, epsabs=0, epsrel=1e-13, limit=200)
        return val

    def rule(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        xs, ws = roots_legendre(n)
        half = 0.5 * (self.b - self.a)
        return half * xs + 0.5 * (self.a + self.b), half * ws


# ------------------------------------------------------------------ fan quadrature


@dataclass
class FanLevel:
    k: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def rho(self) -> np.ndarray:
        return np.linalg.norm(self.nodes, axis=1)

    def mu(self, d: int) -> np.ndarray:
        return self.rho * (2 * self.k + d)


@dataclass
class FanQuadrature:
    d: int
    m: int
    levels: list[FanLevel]

    @property
    def k_max(self) -> int:
        return self.levels[-1].k

    def pair_count(self) -> int:
        return sum(level.nodes.shape[0] for level in self.levels)


@dataclass(frozen=True)
class FanNode:
    k: int
    lam: np.ndarray
    mu: float
    weight: float


def fan_nodes(lam_nodes, k_max: int, d: int) -> list[FanNode]:
    """Discretized fan points (k, lam, mu) with weight (2 pi)^{-d-m} |lam|^d w_lam."""
    if k_max < 0:
        raise ValueError("K_max must be nonnegative")
    if isinstance(lam_nodes, LambdaQuadrature):
        nodes, weights = lam_nodes.nodes, lam_nodes.weights
    else:
        nodes = np.atleast_2d(np.asarray(lam_nodes, dtype=float))
        if nodes.shape[0] == 1 and nodes.shape[1] > 1 and np.ndim(lam_nodes) == 1:
            nodes = nodes.T
        weights = np.ones(nodes.shape[0])
    m = nodes.shape[1]
    out = []
    for lam, w in zip(nodes, weights):
        rho = float(np.linalg.norm(lam))
        for k in range(k_max + 1):
            out.append(FanNode(k, lam.copy(), rho * (2 * k + d), (2 * pi) ** (-d - m) * rho**d * float(w)))
    return out


def inherited_fan(quad: LambdaQuadrature, k_max: int, d: int) -> FanQuadrature:
    """Every level reuses the group-dual lam grid."""
    levels = [FanLevel(k, quad.nodes, quad.weights) for k in range(k_max + 1)]
    return FanQuadrature(d, quad.m, levels)


def fan_quadrature(psi: CutoffSpec, k_max: int, d: int, m: int, n_mu: int = 16, n_angular: int = 6) -> FanQuadrature:
    """Levels whose induced mu values are the Gauss-Legendre nodes of supp psi.

    lam = omega mu_j / (2k + d) and dlam = rho^{m-1} dmu dsigma / (2k + d).
    """
    mus, wmu = psi.rule(n_mu)
    dirs, wdir = sphere_rule(m, n_angular)
    levels = []
    for k in range(k_max + 1):
        rho = mus / (2 * k + d)
        nodes = (dirs[:, None, :] * rho[None, :, None]).reshape(-1, m)
        weights = (wdir[:, None] * (wmu * rho ** (m - 1) / (2 * k + d))[None, :]).reshape(-1)
        levels.append(FanLevel(k, nodes, weights))
    return FanQuadrature(d, m, levels)


# ------------------------------------------------------------------ fan data


@dataclass
class FanData:
    """Blocks Theta(lam; a, b) with |a| = k on level k; b runs over |b| <= n_max."""

    structure: HTypeStructure
    fan: FanQuadrature
    n_max: int
    blocks: list[np.ndarray]
    indices: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.indices = multi_indices(self.structure.d, self.n_max)
        n_idx = self.indices.shape[0]
        if len(self.blocks) != len(self.fan.levels):
            raise ValueError("one block per fan level is required")
        for level, blk in zip(self.fan.levels, self.blocks):
            want = (level.nodes.shape[0], multiplicity(level.k, self.structure.d), n_idx)
            if blk.shape != want:
                raise ValueError(f"level {level.k}: block shape {blk.shape} != {want}")

    def row_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.indices.sum(axis=1) == k)

    def measure(self, level: FanLevel, psi: CutoffSpec | None) -> np.ndarray:
        d, m = self.structure.d, self.structure.m
        w = (2 * pi) ** (-d - m) * level.weights * level.rho**d
        return w * psi(level.mu(d)) if psi is not None else w

    def inner(self, other: "FanData", psi: CutoffSpec | None = None) -> complex:
        total = 0j
        for level, a, b in zip(self.fan.levels, self.blocks, other.blocks):
            total += np.sum(self.measure(level, psi) * np.einsum("nab,nab->n", a, np.conj(b)))
        return complex(total)

    def norm(self, psi: CutoffSpec | None = None) -> float:
        return float(np.sqrt(max(self.inner(self, psi).real, 0.0)))

    def like(self, blocks: list[np.ndarray]) -> "FanData":
        return FanData(self.structure, self.fan, self.n_max, blocks)


def fan_identity(structure: HTypeStructure, fan: FanQuadrature, n_max: int) -> FanData:
    idx = multi_indices(structure.d, n_max)
    blocks = []
    for level in fan.levels:
        rows = np.flatnonzero(idx.sum(axis=1) == level.k)
        blk = np.zeros((level.nodes.shape[0], rows.size, idx.shape[0]), dtype=complex)
        blk[:, np.arange(rows.size), rows] = 1.0
        blocks.append(blk)
    return FanData(structure, fan, n_max, blocks)


def integrate_fan(theta: FanData, psi: CutoffSpec) -> complex:
    """(2 pi)^{-d-m} sum_a int Theta(mu, lam, a, a) psi(mu) |lam|^d dlam."""
    total = 0j
    for level, blk in zip(theta.fan.levels, theta.blocks):
        rows = theta.row_indices(level.k)
        diag = blk[:, np.arange(rows.size), rows].sum(axis=1)
        total += np.sum(theta.measure(level, psi) * diag)
    return complex(total)


def pullback(F: SpectralCoeffs, k_max: int) -> FanData:
    """Theta = theta o pr on the fan inheriting the lam grid of F."""
    fan = inherited_fan(F.quad, k_max, F.structure.d)
    blocks = [F.blocks[:, F.orders == level.k, :] for level in fan.levels]
    return FanData(F.structure, fan, F.n_max, blocks)


# ------------------------------------------------------------------ restriction / extension


def _pairs(fan: FanQuadrature) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    ks = np.concatenate([np.full(lv.nodes.shape[0], lv.k) for lv in fan.levels])
    nodes = np.concatenate([lv.nodes for lv in fan.levels])
    weights = np.concatenate([lv.weights for lv in fan.levels])
    mus = np.linalg.norm(nodes, axis=1) * (2 * ks + fan.d)
    return ks, nodes, weights, mus


def _grouped_pairs(fan: FanQuadrature):
    """Yield (lam, [(level index, node index, flat position, k), ...]) grouped by lam-node."""
    groups: dict[bytes, tuple[np.ndarray, list]] = {}
    pos = 0
    for li, lv in enumerate(fan.levels):
        for n in range(lv.nodes.shape[0]):
            key = lv.nodes[n].tobytes()
            groups.setdefault(key, (lv.nodes[n], []))[1].append((li, n, pos, lv.k))
            pos += 1
    return list(groups.values())


class _TableCache:
    def __init__(self, structure: HTypeStructure, indices: np.ndarray, xpts: np.ndarray) -> None:
        self.structure, self.indices, self.xpts = structure, indices, xpts
        self._store: dict[bytes, np.ndarray] = {}

    def rows(self, lam: np.ndarray, k: int) -> np.ndarray:
        key = np.asarray(lam, dtype=float).tobytes()
        if key not in self._store:
            n_idx = self.indices.shape[0]
            self._store = {key: _node_table(self.structure, self.indices, lam, self.xpts).reshape(n_idx, n_idx, -1)}
        table = self._store[key]
        return table[self.indices.sum(axis=1) == k]


def _time_vertical_transform(f: SpaceTimeField, mus: np.ndarray, nus: np.ndarray) -> np.ndarray:
    """int int f(t, x, z) exp(-i mu t - i nu.z) dt dz per pair; shape (n_pairs, n_x points)."""
    g = f.grid
    zpts = g.z_points().reshape(-1, g.m)
    n_t = f.times.size
    data = f.samples.reshape(n_t, -1, zpts.shape[0]).transpose(1, 0, 2).reshape(-1, n_t * zpts.shape[0])
    out = np.empty((mus.size, data.shape[0]), dtype=complex)
    chunk = 256
    for s in range(0, mus.size, chunk):
        sl = slice(s, s + chunk)
        phase = np.exp(-1j * (mus[sl, None, None] * f.times[None, :, None] + (nus[sl] @ zpts.T)[:, None, :]))
        out[sl] = (data @ (phase.reshape(phase.shape[0], -1).T * (f.dt * g.z_cell))).T
    return out


def restrict(f: SpaceTimeField, structure: HTypeStructure, fan: FanQuadrature, n_max: int = 24) -> FanData:
    """Theta(lam, a, b) = F_G[f^mu](lam, a, b) with mu = |lam| (2|a| + d), |a| = k per level."""
    d = structure.d
    n_max = max(n_max, fan.k_max)
    ks, nodes, _, mus = _pairs(fan)
    band = pi / f.dt
    if np.any(mus > band):
        raise ValueError(f"fan mu up to {mus.max():.3f} exceeds the time-grid band {band:.3f}")
    # F_G uses the vertical transform at -lam
    vals = _time_vertical_transform(f, mus, -nodes)
    indices = multi_indices(d, n_max)
    cache = _TableCache(structure, indices, f.grid.x_points().reshape(-1, 2 * d))
    blocks = [np.empty((lv.nodes.shape[0], multiplicity(lv.k, d), indices.shape[0]), dtype=complex) for lv in fan.levels]
    for lam, members in _grouped_pairs(fan):
        rho = float(np.linalg.norm(lam))
        for li, n, pos, k in members:
            rows = cache.rows(lam, k)
            blocks[li][n] = rows @ vals[pos] * ((2 * pi) ** (d / 2) * rho ** (-d / 2) * f.grid.x_cell)
    return FanData(structure, fan, n_max, blocks)


def extend(theta: FanData, psi: CutoffSpec, grid: SpaceGrid, times: np.ndarray) -> SpaceTimeField:
    """(2 pi)^{-d-m} sum_k int |lam|^d psi(mu) exp(i mu t) sum Theta conj(E_ab^lam) dlam."""
    s = theta.structure
    d, m = s.d, s.m
    times = np.asarray(times, dtype=float)
    ks, nodes, weights, mus = _pairs(theta.fan)
    xpts = grid.x_points().reshape(-1, 2 * d)
    zpts = grid.z_points().reshape(-1, m)
    cache = _TableCache(s, theta.indices, xpts)
    horizontal = np.empty((mus.size, xpts.shape[0]), dtype=complex)
    for lam, members in _grouped_pairs(theta.fan):
        rho = float(np.linalg.norm(lam))
        for li, n, pos, k in members:
            rows = cache.rows(lam, k)
            blk = theta.blocks[li][n]
            horizontal[pos] = np.einsum("ab,abx->x", blk, np.conj(rows)) * (2 * pi) ** (d / 2) * rho ** (-d / 2)
    amp = (2 * pi) ** (-d - m) * weights * np.linalg.norm(nodes, axis=1) ** d * psi(mus)
    return SpaceTimeField(_assemble(horizontal, amp, mus, -nodes, times, zpts, grid), times, grid)


def _assemble(horizontal, amp, mus, nus, times, zpts, grid) -> np.ndarray:
    """sum_pairs amp exp(i mu t + i nu.z) horizontal(x) on the (t, x, z) grid."""
    phase = amp[:, None, None] * np.exp(1j * (mus[:, None, None] * times[None, :, None] + (nus @ zpts.T)[:, None, :]))
    out = horizontal.T @ phase.reshape(mus.size, -1)  # (x, t * z)
    out = out.reshape(horizontal.shape[1], times.size, zpts.shape[0]).transpose(1, 0, 2)
    return out.reshape((times.size,) + grid.shape)


# ------------------------------------------------------------------ kernels


def sphere_average(rho, r, m: int) -> np.ndarray:
    """int_{S^{m-1}} exp(i rho omega.z) dsigma(omega) with r = |z|."""
    arg = np.asarray(rho * r, dtype=float)
    if m == 1:
        return 2 * np.cos(arg)
    if m == 3:
        return 4 * pi * np.sinc(arg / pi)
    nu = m / 2 - 1
    safe = np.where(arg == 0, 1.0, arg)
    val = (2 * pi) ** (m / 2) * safe ** (-nu) * special.jv(nu, safe)
    return np.where(arg == 0, 2 * pi ** (m / 2) / special.gamma(m / 2), val)


def _z_radius(z: np.ndarray, m: int) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return np.abs(z[..., 0]) if m == 1 else np.linalg.norm(z, axis=-1)


def fan_series(d: int, m: int, k_max: int | None = None) -> float:
    """sum_k (k+d-1)! / (k! (2k+d)^{d+m}); the full series when k_max is None."""
    if k_max is not None:
        k = np.arange(k_max + 1)
        return float(np.sum(special.comb(k + d - 1, k) * (2 * k + d) ** (-(d + m)))) * factorial(d - 1)
    head_n = 200_000
    k = np.arange(head_n, dtype=float)
    head = float(np.sum(special.comb(k + d - 1, k) * (2 * k + d) ** (-(d + m))))
    return (head + _series_tail(d, m, head_n - 1)) * factorial(d - 1)


def _series_tail(d: int, m: int, k_max: int) -> float:
    """Majorant of sum_{k > K} binom(k+d-1, k) (2k+d)^{-d-m} via binom <= (2k+d)^{d-1}/(d-1)!."""
    return float(2.0 ** (-1 - m) * special.zeta(1 + m, k_max + 1 + d / 2)) / factorial(d - 1)


@dataclass
class KernelValues:
    values: np.ndarray
    tail_bound: float
    bound: float


def kappa_mu(mu: float, x: np.ndarray, z: np.ndarray, structure: HTypeStructure, k_max: int = 24) -> KernelValues:
    """kappa_mu(x, z) = mu^{d+m-1} (2 pi)^{-d-m} sum_k (2k+d)^{-d-m} int_S e_k^{mu omega/(2k+d)} dsigma.

    ``x`` and ``z`` broadcast against each other (trailing axes 2d and m).
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    d, m = structure.d, structure.m
    x = np.asarray(x, dtype=float)
    r = _z_radius(z, m)
    pref = mu ** (d + m - 1) * (2 * pi) ** (-d - m)
    total = 0
    for k in range(k_max + 1):
        nu = mu / (2 * k + d)
        total = total + (2 * k + d) ** (-d - m) * laguerre_fn(k, nu, x) * sphere_average(nu, r, m)
    values = pref * total
    vol = float(sphere_average(1.0, 0.0, m))
    tail = vol * pref * _series_tail(d, m, k_max)
    bound = vol * pref * fan_series(d, m) / factorial(d - 1)
    if tail > 1e-6 * max(float(np.max(np.abs(values))), 1e-300):
        warnings.warn(f"kappa_mu truncation at K_max={k_max}: tail bound {tail:.3e}", TruncationWarning, stacklevel=2)
    return KernelValues(values, tail, bound)


@dataclass
class KernelField:
    samples: np.ndarray
    times: np.ndarray
    grid: SpaceGrid
    bound: float
    tail_bound: float
    path_discrepancy: float = 0.0
    notes: list[str] = field(default_factory=list)

    def sup(self) -> float:
        return float(np.max(np.abs(self.samples)))

    def margin(self) -> float:
        return self.bound - self.sup()

    def to_csv(self, path: str, digits: int = 12) -> None:
        write_kernel_csv(self, path, digits)


def kernel_bound(psi: CutoffSpec, d: int, m: int, power: float | None = None) -> float:
    """vol(S) ||mu^{d+m-1} psi||_1 (2 pi)^{-d-m} ((d-1)!)^{-1} sum_k (k+d-1)!/(k! (2k+d)^{d+m})."""
    vol = float(sphere_average(1.0, 0.0, m))
    power = d + m - 1 if power is None else power
    return vol * psi.moment(power) * (2 * pi) ** (-d - m) * fan_series(d, m) / factorial(d - 1)


def _grid_kernel(
    weights_mu: np.ndarray,
    mus: np.ndarray,
    times: np.ndarray,
    grid: SpaceGrid,
    structure: HTypeStructure,
    k_max: int,
    lam_of_mu: Callable[[np.ndarray, int], np.ndarray],
    time_freq: np.ndarray,
) -> np.ndarray:
    """sum_j sum_k weights_mu[j] exp(i time_freq[j] t) (2k+d)^{-d-m} S(lam_jk |z|) phi_k^{lam_jk}(x)."""
    d, m = structure.d, structure.m
    xpts = grid.x_points().reshape(-1, 2 * d)
    r = _z_radius(grid.z_points().reshape(-1, m), m)
    spatial = np.zeros((mus.size, xpts.shape[0], r.size), dtype=complex)
    for k in range(k_max + 1):
        lams = lam_of_mu(mus, k)
        for j, lam in enumerate(lams):
            spatial[j] += (2 * k + d) ** (-d - m) * np.outer(laguerre_fn(k, lam, xpts), sphere_average(lam, r, m))
    tphase = weights_mu[None, :] * np.exp(1j * np.outer(times, time_freq))
    out = tphase @ spatial.reshape(mus.size, -1)
    return out.reshape((times.size,) + grid.shape)


def _mu_integral_kernel(weights_mu, mus, times, grid, structure, k_max, power_scale, time_freq) -> np.ndarray:
    d, m = structure.d, structure.m
    xpts = grid.x_points().reshape(-1, 2 * d)
    zpts = grid.z_points().reshape(-1, m)
    slices = np.empty((mus.size, xpts.shape[0] * zpts.shape[0]), dtype=complex)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        for j, mu in enumerate(mus):
            kv = kappa_mu(mu, xpts[:, None, :], zpts[None, :, :], structure, k_max)
            slices[j] = kv.values.reshape(-1) * power_scale[j]
    tphase = weights_mu[None, :] * np.exp(1j * np.outer(times, time_freq))
    return (tphase @ slices).reshape((times.size,) + grid.shape)


def kappa_sigma(
    psi: CutoffSpec,
    grid: SpaceGrid,
    times: np.ndarray,
    structure: HTypeStructure,
    k_max: int = 24,
    n_mu: int = 40,
    tol: float = 1e-4,
) -> KernelField:
    """kappa_Sigma_psi(t, x, z) = int exp(i mu t) kappa_mu(x, z) psi(mu) dmu by two routes."""
    d, m = structure.d, structure.m
    times = np.asarray(times, dtype=float)
    mus, wmu = psi.rule(n_mu)
    pref = (2 * pi) ** (-d - m) * mus ** (d + m - 1) * psi(mus) * wmu
    direct = _grid_kernel(pref, mus, times, grid, structure, k_max, lambda mu, k: mu / (2 * k + d), mus)
    mus2, wmu2 = psi.rule(n_mu + 9)
    via_slices = _mu_integral_kernel(wmu2 * psi(mus2), mus2, times, grid, structure, k_max, np.ones(mus2.size), mus2)
    scale = max(float(np.max(np.abs(direct))), 1e-300)
    gap = float(np.max(np.abs(direct - via_slices))) / scale
    if gap > tol:
        raise KernelConsistencyError(f"k-sum and mu-integral kernels differ by {gap:.3e}")
    vol = float(sphere_average(1.0, 0.0, m))
    tail = vol * psi.moment(d + m - 1) * (2 * pi) ** (-d - m) * _series_tail(d, m, k_max)
    return KernelField(direct, times, grid, kernel_bound(psi, d, m), tail, gap)


def kappa_origin_oracle(psi: CutoffSpec, t: np.ndarray, d: int, m: int, k_max: int, power: float | None = None) -> np.ndarray:
    """kappa(t, 0, 0) = sum_k mult(k) (2k+d)^{-d-m} (2 pi)^{-d-m} vol(S) int exp(i mu t) psi mu^{power} dmu."""
    power = d + m - 1 if power is None else power
    vol = float(sphere_average(1.0, 0.0, m))
    series = sum(multiplicity(k, d) * (2 * k + d) ** (-d - m) for k in range(k_max + 1))
    out = []
    for tv in np.atleast_1d(t):
        parts = []
        for weight in ("cos", "sin"):
            val, _ = integrate.quad(
                lambda mu: float(psi(mu)) * mu**power, psi.a, psi.b, weight=weight, wvar=float(tv), epsabs=1e-14, limit=400
            )
            parts.append(val)
        out.append(parts[0] + 1j * parts[1])
    return vol * series * (2 * pi) ** (-d - m) * np.array(out)


def wave_kernel(
    psi: CutoffSpec,
    sign: int,
    grid: SpaceGrid,
    times: np.ndarray,
    structure: HTypeStructure,
    k_max: int = 24,
    n_mu: int = 40,
    tol: float = 1e-4,
) -> KernelField:
    """kappa_Sigma^{+-}(t, x, z) from the explicit k-sum with weight mu^{2d+2m-1}.

    The compact form 2 int exp(+-i mu t) kappa_{mu^2}(x, z) psi(mu) w(mu) dmu is
    evaluated with w(mu) = mu as a cross-check; the note records how far the
    weight mu^{d+m} would be from the k-sum.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    d, m = structure.d, structure.m
    times = np.asarray(times, dtype=float)
    mus, wmu = psi.rule(n_mu)
    pref = 2 * (2 * pi) ** (-d - m) * mus ** (2 * d + 2 * m - 1) * psi(mus) * wmu
    explicit = _grid_kernel(pref, mus, times, grid, structure, k_max, lambda mu, k: mu**2 / (2 * k + d), sign * mus)
    mus2, wmu2 = psi.rule(n_mu + 9)
    compact = _mu_integral_kernel(2 * wmu2 * psi(mus2), mus2**2, times, grid, structure, k_max, mus2, sign * mus2)
    scale = max(float(np.max(np.abs(explicit))), 1e-300)
    gap = float(np.max(np.abs(explicit - compact))) / scale
    if gap > tol:
        raise KernelConsistencyError(f"wave kernel k-sum and compact forms differ by {gap:.3e}")
    alt = psi.moment(d + m + 2 * (d + m - 1)) / psi.moment(2 * d + 2 * m - 1)
    note = f"compact form with weight mu^(d+m) would rescale the origin value by {alt:.6g}"
    vol = float(sphere_average(1.0, 0.0, m))
    bound = 2 * vol * psi.moment(2 * d + 2 * m - 1) * (2 * pi) ** (-d - m) * fan_series(d, m) / factorial(d - 1)
    tail = 2 * vol * psi.moment(2 * d + 2 * m - 1) * (2 * pi) ** (-d - m) * _series_tail(d, m, k_max)
    return KernelField(explicit, times, grid, bound, tail, gap, [note])


def write_kernel_csv(kf: KernelField, path: str, digits: int = 12) -> None:
    """Rows t,x,z,re,im along the x_1 and z_1 axes (the kernel is radial in each layer)."""
    g = kf.grid
    c = (g.n_x - 1) // 2
    x_sel = (slice(None),) + (c,) * (2 * g.d - 1)
    zc = (g.n_z - 1) // 2
    z_sel = (slice(None),) + (zc,) * (g.m - 1)
    line = kf.samples[(slice(None),) + x_sel + z_sel]
    fmt = f"{{:.{digits}g}}".format
    with open(path, "w", newline="\n") as fh:
        fh.write("t,x,z,re,im\n")
        for ti, t in enumerate(kf.times):
            for xi, xv in enumerate(g.x_axis):
                for zi, zv in enumerate(g.z_axis):
                    val = line[ti, xi, zi]
                    fh.write(",".join(fmt(v) for v in (t, xv, zv, val.real, val.imag)) + "\n")


# ------------------------------------------------------------------ slices and TT*


def _slice_terms(mu: float, structure: HTypeStructure, k_max: int, n_angular: int = 6):
    """(k, nu, weight) with weight mu^{m-1} (2 pi)^{-m} (2k+d)^{-m} w_omega."""
    d, m = structure.d, structure.m
    dirs, wdir = sphere_rule(m, n_angular)
    out = []
    for k in range(k_max + 1):
        for omega, w in zip(dirs, wdir):
            nu = omega * mu / (2 * k + d)
            out.append((k, nu, mu ** (m - 1) * (2 * pi) ** (-m) * (2 * k + d) ** (-m) * w))
    return out


def _laguerre_difference_kernel(k: int, nu_abs: float, tgrid: TwistedGrid) -> np.ndarray:
    ax = difference_axis(tgrid)
    pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
    return laguerre_fn(k, nu_abs, pts)


def _lambda_k_convolution(g: np.ndarray, k: int, nu: np.ndarray, tgrid: TwistedGrid) -> np.ndarray:
    """Lambda_k^nu g = (2 pi)^{-1} |nu| (g x_nu phi_k), Heisenberg d = 1, kernel on the difference grid."""
    nu_val = float(nu[0])
    kern = _laguerre_difference_kernel(k, abs(nu_val), tgrid)
    return abs(nu_val) / (2 * pi) * twisted_kernel_sum(kern, g.reshape(tgrid.shape), tgrid, -0.5 * nu_val).reshape(-1)


def spectral_slice(
    f: SpaceField,
    mu: float,
    structure: HTypeStructure,
    k_max: int = 24,
    method: str = "projector",
    n_max: int = 24,
) -> SpaceField:
    """P_mu f = mu^{m-1} (2 pi)^{-m} sum_k (2k+d)^{-m} int_S exp(i mu_k omega.z) Lambda_k f^{mu_k omega} dsigma.

    ``method='projector'`` uses special Hermite rows; ``'convolution'`` uses
    f * e_k, i.e. twisted convolution with Laguerre functions (H^1 only).
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    return SpaceField(_slice_many(f.samples[None], f.grid, mu, structure, k_max, method, n_max)[0], f.grid)


def _slice_many(samples, grid, mu, structure, k_max, method, n_max) -> np.ndarray:
    """P_mu applied to a stack of fields sharing a grid."""
    d, m = structure.d, structure.m
    if method == "convolution" and not (structure.is_heisenberg and d == 1):
        raise NotImplementedError("the convolution form is implemented for H^1")
    if method not in ("projector", "convolution"):
        raise ValueError(f"unknown slice method {method!r}")
    terms = _slice_terms(mu, structure, k_max)
    nus = np.array([t[1] for t in terms])
    zpts = grid.z_points().reshape(-1, m)
    xpts = grid.x_points().reshape(-1, 2 * d)
    n_f = samples.shape[0]
    out = np.zeros((n_f, xpts.shape[0], zpts.shape[0]), dtype=complex)
    tgrid = grid.twisted_grid()
    indices = multi_indices(d, max(n_max, k_max))
    cache = _TableCache(structure, indices, xpts)
    for fi in range(n_f):
        fnu = central_ft_many(SpaceField(samples[fi], grid), nus)
        for (k, nu, w), g in zip(terms, fnu):
            if method == "projector":
                rows = cache.rows(-nu, k).reshape(-1, xpts.shape[0])
                proj = np.conj(rows).T @ (rows @ g) * grid.x_cell
            else:
                proj = _lambda_k_convolution(g, k, nu, tgrid)
            out[fi] += w * np.outer(proj, np.exp(1j * (zpts @ nu)))
    return out.reshape((n_f,) + grid.shape)


def vertical_mode_apply(h: np.ndarray, nu: np.ndarray, structure: HTypeStructure, tgrid: TwistedGrid) -> np.ndarray:
    """D_nu h = Delta h - i (J_nu x) . grad h - |nu|^2 |x|^2 h / 4 by 4th-order differences.

    J_nu = sum_a nu_a L[a]; this is the sub-Laplacian on exp(i nu.z) h(x).
    """
    h = np.asarray(h, dtype=complex).reshape(tgrid.shape)
    pts = tgrid.points()
    jmat = np.einsum("a,aij->ij", np.asarray(nu, float), structure.brackets)
    drift = pts @ jmat.T
    out = -0.25 * float(np.dot(nu, nu)) * np.sum(pts**2, axis=-1) * h
    for i in range(2 * structure.d):
        out += _fd(h, i, _D2, tgrid.spacing, 2) - 1j * drift[..., i] * _fd(h, i, _D1, tgrid.spacing, 1)
    return out


def slice_eigen_residual(f: SpaceField, mu: float, structure: HTypeStructure, k_max: int = 24, n_max: int = 24) -> float:
    """||Delta_H P_mu f + mu P_mu f|| / ||mu P_mu f|| with Delta_H by finite differences per vertical mode.

    Only points at least two cells from the horizontal boundary enter the norm.
    """
    grid = f.grid
    d, m = structure.d, structure.m
    tgrid = grid.twisted_grid()
    xpts = grid.x_points().reshape(-1, 2 * d)
    zpts = grid.z_points().reshape(-1, m)
    cache = _TableCache(structure, multi_indices(d, max(n_max, k_max)), xpts)
    terms = _slice_terms(mu, structure, k_max)
    fnu = central_ft_many(f, np.array([t[1] for t in terms]))
    field_sum = np.zeros((xpts.shape[0], zpts.shape[0]), dtype=complex)
    resid = np.zeros_like(field_sum)
    for (k, nu, w), g in zip(terms, fnu):
        rows = cache.rows(-nu, k).reshape(-1, xpts.shape[0])
        proj = np.conj(rows).T @ (rows @ g) * grid.x_cell
        lap = vertical_mode_apply(proj, nu, structure, tgrid).reshape(-1)
        wave = np.exp(1j * (zpts @ nu))
        field_sum += w * np.outer(proj, wave)
        resid += w * np.outer(lap + mu * proj, wave)
    inner = np.ones(tgrid.shape, dtype=bool)
    for a in range(2 * d):
        sl = [slice(None)] * (2 * d)
        sl[a] = np.r_[0:2, tgrid.n - 2 : tgrid.n]
        inner[tuple(sl)] = False
    mask = inner.reshape(-1)
    return float(np.linalg.norm(resid[mask]) / np.linalg.norm(mu * field_sum[mask]))


def time_transform(f: SpaceTimeField, mus: np.ndarray) -> np.ndarray:
    """f^mu = sum_t f(t) exp(-i mu t) dt for each mu; shape (n_mu, *grid.shape)."""
    phase = np.exp(-1j * np.outer(mus, f.times)) * f.dt
    return np.tensordot(phase, f.samples, axes=([1], [0]))


def slice_integral(f: SpaceTimeField, psi: CutoffSpec, structure: HTypeStructure, k_max: int, n_mu: int, n_max: int = 24) -> SpaceTimeField:
    """int psi(mu) exp(i mu t) P_mu(f^mu) dmu with P_mu in projector form."""
    mus, wmu = psi.rule(n_mu)
    fmu = time_transform(f, mus)
    acc = np.zeros_like(f.samples)
    for j, mu in enumerate(mus):
        sl = _slice_many(fmu[j][None], f.grid, mu, structure, k_max, "projector", n_max)[0]
        acc += (wmu[j] * psi(mu)) * np.exp(1j * mu * f.times)[(slice(None),) + (None,) * sl.ndim] * sl[None]
    return SpaceTimeField(acc, f.times, f.grid)


def convolve_kappa(f: SpaceTimeField, psi: CutoffSpec, structure: HTypeStructure, k_max: int, n_mu: int) -> SpaceTimeField:
    """f *_G kappa_Sigma_psi through the partial Fourier transform of the kernel (H^1).

    Time and vertical convolutions become products; the horizontal part is
    the twisted convolution of f^{mu, nu} with phi_k^{|nu|}.
    """
    if not (structure.is_heisenberg and structure.d == 1):
        raise NotImplementedError("kernel convolution is implemented for H^1")
    d, m = 1, 1
    grid = f.grid
    tgrid = grid.twisted_grid()
    mus, wmu = psi.rule(n_mu)
    horizontal, amps, mu_list, nu_list = [], [], [], []
    fmu_all = time_transform(f, mus)
    for j, mu in enumerate(mus):
        terms = [(k, om * mu / (2 * k + d)) for k in range(k_max + 1) for om in (1.0, -1.0)]
        nus = np.array([[nu] for _, nu in terms])
        fnu = central_ft_many(SpaceField(fmu_all[j], grid), nus)
        for (k, nu), g in zip(terms, fnu):
            kern = _laguerre_difference_kernel(k, abs(nu), tgrid)
            horizontal.append(twisted_kernel_sum(kern, g.reshape(tgrid.shape), tgrid, -0.5 * nu).reshape(-1))
            amps.append(wmu[j] * psi(mu) * mu ** (d + m - 1) * (2 * pi) ** (-d - m) * (2 * k + d) ** (-d - m))
            mu_list.append(mu)
            nu_list.append([nu])
    zpts = grid.z_points().reshape(-1, m)
    out = _assemble(np.array(horizontal), np.array(amps, dtype=float), np.array(mu_list), np.array(nu_list), f.times, zpts, grid)
    return SpaceTimeField(out, f.times, grid)


@dataclass
class TTStarReport:
    l2: dict[str, float]
    sup: dict[str, float]
    worst_point: dict[str, tuple]
    fields: dict[str, SpaceTimeField]

    def max_l2(self) -> float:
        return max(self.l2.values())

    def passed(self, tol: float = 1e-3) -> bool:
        return self.max_l2() < tol


def tt_star_check(
    f: SpaceTimeField,
    psi: CutoffSpec,
    structure: HTypeStructure,
    k_max: int = 12,
    n_mu: int = 16,
    n_max: int = 24,
) -> TTStarReport:
    """Compare E(R f), f * kappa_Sigma_psi and int psi exp(i mu t) P_mu(f^mu) dmu."""
    fan = fan_quadrature(psi, k_max, structure.d, structure.m, n_mu)
    theta = restrict(f, structure, fan, n_max)
    paths = {
        "extension_restriction": extend(theta, psi, f.grid, f.times),
        "kernel_convolution": convolve_kappa(f, psi, structure, k_max, n_mu),
        "slice_integral": slice_integral(f, psi, structure, k_max, n_mu, n_max),
    }
    names = list(paths)
    l2, sup, worst = {}, {}, {}
    for i in range(3):
        for j in range(i + 1, 3):
            a, b = paths[names[i]].samples, paths[names[j]].samples
            key = f"{names[i]}~{names[j]}"
            scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
            l2[key] = float(np.linalg.norm(a - b) / scale)
            diff = np.abs(a - b)
            sup[key] = float(diff.max() / max(np.abs(a).max(), 1e-300))
            worst[key] = tuple(int(v) for v in np.unravel_index(np.argmax(diff), diff.shape))
    return TTStarReport(l2, sup, worst, paths)


__all__ = [
    "KernelConsistencyError",
    "CutoffSpec",
    "FanLevel",
    "FanQuadrature",
    "FanNode",
    "fan_nodes",
    "inherited_fan",
    "fan_quadrature",
    "FanData",
    "fan_identity",
    "integrate_fan",
    "pullback",
    "restrict",
    "extend",
    "sphere_average",
    "fan_series",
    "KernelValues",
    "kappa_mu",
    "KernelField",
    "kernel_bound",
    "kappa_sigma",
    "kappa_origin_oracle",
    "wave_kernel",
    "write_kernel_csv",
    "spectral_slice",
    "vertical_mode_apply",
    "slice_eigen_residual",
    "time_transform",
    "slice_integral",
    "convolve_kappa",
    "TTStarReport",
    "tt_star_check",
]
