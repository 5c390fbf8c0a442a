"""Group Fourier transform on an H-type group, sampled on a box grid.

Scalar coefficients are ``F(lam, a, b) = int f E_ab^lam``.  Because
``E_ab^lam(x, z) = exp(i lam.z) E_ab^lam(x, 0)`` the transform factors
into a vertical Fourier integral followed by an expansion in special
Hermite functions evaluated at ``T_lam^{-1} x``.  Frequencies come from a
polar product rule on a band ``[lam_min, lam_max]``; the Plancherel
weight is ``(2 pi)^{-d-m} |lam|^d``.
"""

from __future__ import annotations

import json
import os
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from math import gamma, pi
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import roots_legendre

from .group_core import HTypeStructure, diagonalize_j, heisenberg
from .special_fn import multi_indices, special_hermite_table
from .twisted import TwistedField, TwistedGrid

THREADS_ENV = "HTYPE_SPECTRAL_THREADS"
TAIL_WARNING = 1e-4


class TruncationWarning(UserWarning):
    """The Hermite truncation misses a noticeable share of the mass."""


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def ordered_map(func: Callable, items: Sequence) -> list:
    """Map preserving order; results are combined by the caller in index order."""
    workers = worker_count()
    if workers == 1 or len(items) < 2:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


# ------------------------------------------------------------------ grids


@dataclass(frozen=True)
class SpaceGrid:
    """Centred uniform box: n_x points on [-x_half, x_half] per horizontal axis,
    n_z points on [-z_half, z_half] per vertical axis."""

    d: int
    m: int
    x_half: float
    n_x: int
    z_half: float
    n_z: int

    def __post_init__(self) -> None:
        if self.n_x < 3 or self.n_z < 2:
            raise ValueError("grid needs at least 3 horizontal and 2 vertical points")
        if self.n_x % 2 == 0:
            raise ValueError("n_x must be odd so that the box is symmetric about 0")
        if self.x_half <= 0 or self.z_half <= 0:
            raise ValueError("box half widths must be positive")

    @property
    def x_axis(self) -> np.ndarray:
        return np.linspace(-self.x_half, self.x_half, self.n_x)

    @property
    def z_axis(self) -> np.ndarray:
        return np.linspace(-self.z_half, self.z_half, self.n_z)

    @property
    def dx(self) -> float:
        return 2 * self.x_half / (self.n_x - 1)

    @property
    def dz(self) -> float:
        return 2 * self.z_half / (self.n_z - 1)

    @property
    def x_cell(self) -> float:
        return self.dx ** (2 * self.d)

    @property
    def z_cell(self) -> float:
        return self.dz**self.m

    @property
    def x_shape(self) -> tuple[int, ...]:
        return (self.n_x,) * (2 * self.d)

    @property
    def z_shape(self) -> tuple[int, ...]:
        return (self.n_z,) * self.m

    @property
    def shape(self) -> tuple[int, ...]:
        return self.x_shape + self.z_shape

    def x_points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.x_axis] * (2 * self.d)), indexing="ij")
        return np.stack(mesh, axis=-1)

    def z_points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.z_axis] * self.m), indexing="ij")
        return np.stack(mesh, axis=-1)

    def nyquist(self) -> float:
        return pi / self.dz

    def twisted_grid(self) -> TwistedGrid:
        return TwistedGrid(self.d, self.x_half, self.n_x)

    def dilated(self, scale: float) -> "SpaceGrid":
        return replace(self, x_half=self.x_half * scale, z_half=self.z_half * scale**2)

    def to_dict(self) -> dict:
        return {"d": self.d, "m": self.m, "x_half": self.x_half, "n_x": self.n_x, "z_half": self.z_half, "n_z": self.n_z}


@dataclass
class SpaceField:
    samples: np.ndarray
    grid: SpaceGrid

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.shape != self.grid.shape:
            raise ValueError(f"samples {self.samples.shape} do not match grid {self.grid.shape}")

    def norm(self, p: float = 2.0) -> float:
        vals = np.abs(self.samples)
        if np.isinf(p):
            return float(vals.max())
        return float((np.sum(vals**p) * self.grid.x_cell * self.grid.z_cell) ** (1 / p))

    def inner(self, other: "SpaceField") -> complex:
        return complex(np.vdot(other.samples, self.samples) * self.grid.x_cell * self.grid.z_cell)

    def boundary_ratio(self) -> float:
        vals = np.abs(self.samples)
        peak = vals.max()
        if peak == 0:
            return 0.0
        edge = max(max(np.take(vals, 0, axis=a).max(), np.take(vals, -1, axis=a).max()) for a in range(vals.ndim))
        return float(edge / peak)

    def like(self, samples: np.ndarray) -> "SpaceField":
        return SpaceField(samples, self.grid)


@dataclass
class SpaceTimeField:
    samples: np.ndarray
    times: np.ndarray
    grid: SpaceGrid

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=complex)
        self.times = np.asarray(self.times, dtype=float)
        if self.samples.shape != (self.times.size,) + self.grid.shape:
            raise ValueError("space-time samples must have shape (n_t, *grid.shape)")

    def at(self, index: int) -> SpaceField:
        return SpaceField(self.samples[index], self.grid)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 1.0

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.samples) ** 2) * self.dt * self.grid.x_cell * self.grid.z_cell))


# ------------------------------------------------------------------ frequencies


@dataclass(frozen=True)
class LambdaQuadrature:
    """Polar product rule on {lam_min <= |lam| <= lam_max}.

    ``weights`` already include the radial Jacobian rho^{m-1}.
    """

    nodes: np.ndarray
    weights: np.ndarray
    lam_min: float
    lam_max: float
    n_radial: int

    @property
    def m(self) -> int:
        return self.nodes.shape[1]

    @property
    def rho(self) -> np.ndarray:
        return np.linalg.norm(self.nodes, axis=1)

    def __len__(self) -> int:
        return self.nodes.shape[0]

    def to_dict(self) -> dict:
        return {"lam_min": self.lam_min, "lam_max": self.lam_max, "n_radial": self.n_radial, "n_nodes": len(self)}

    def alias_free_half_width(self) -> float:
        """Largest |z| reproduced by the inverse: pi over the widest radial gap."""
        rho = np.unique(np.round(self.rho, 14))
        edges = np.concatenate([[self.lam_min], rho, [self.lam_max]])
        return float(pi / np.max(np.diff(edges)) * 2)

    def scaled(self, factor: float) -> "LambdaQuadrature":
        """Rule for the band multiplied by ``factor`` (dilations act on lam by Lambda^{-2})."""
        return LambdaQuadrature(
            self.nodes * factor, self.weights * factor**self.m, self.lam_min * factor, self.lam_max * factor, self.n_radial
        )


def sphere_rule(m: int, n_angular: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Directions and weights integrating over S^{m-1} (total = surface area)."""
    if m == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if m == 2:
        ang = 2 * pi * np.arange(2 * n_angular) / (2 * n_angular)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1), np.full(ang.size, 2 * pi / ang.size)
    if m == 3:
        ct, wt = roots_legendre(n_angular)
        ph = 2 * pi * np.arange(2 * n_angular) / (2 * n_angular)
        st = np.sqrt(1 - ct**2)
        dirs = np.stack(
            [np.outer(st, np.cos(ph)).ravel(), np.outer(st, np.sin(ph)).ravel(), np.repeat(ct, ph.size)], axis=1
        )
        return dirs, np.repeat(wt, ph.size) * (2 * pi / ph.size)
    raise NotImplementedError("sphere rules are provided for m <= 3")


def sphere_volume(m: int) -> float:
    return float(np.sum(sphere_rule(m)[1])) if m <= 3 else float(2 * pi ** (m / 2) / gamma(m / 2))


def lambda_quadrature(
    m: int, lam_min: float = 0.05, lam_max: float = 8.0, n_radial: int = 48, n_angular: int = 6
) -> LambdaQuadrature:
    if not 0 < lam_min < lam_max:
        raise ValueError("need 0 < lam_min < lam_max")
    xs, ws = roots_legendre(n_radial)
    rho = 0.5 * (lam_max - lam_min) * xs + 0.5 * (lam_max + lam_min)
    wr = 0.5 * (lam_max - lam_min) * ws * rho ** (m - 1)
    dirs, wd = sphere_rule(m, n_angular)
    nodes = (dirs[:, None, :] * rho[None, :, None]).reshape(-1, m)
    weights = (wd[:, None] * wr[None, :]).reshape(-1)
    return LambdaQuadrature(nodes, weights, lam_min, lam_max, n_radial)


# ------------------------------------------------------------------ coefficients


@dataclass
class SpectralCoeffs:
    structure: HTypeStructure
    quad: LambdaQuadrature
    n_max: int
    blocks: np.ndarray
    tails: np.ndarray | None = None
    indices: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.indices = multi_indices(self.structure.d, self.n_max)
        n_idx = self.indices.shape[0]
        self.blocks = np.asarray(self.blocks, dtype=complex)
        if self.blocks.shape != (len(self.quad), n_idx, n_idx):
            raise ValueError(f"blocks must have shape {(len(self.quad), n_idx, n_idx)}")

    @property
    def orders(self) -> np.ndarray:
        return self.indices.sum(axis=1)

    def spectrum(self) -> np.ndarray:
        """mu = |lam| (2|a| + d) per (node, row index)."""
        return self.quad.rho[:, None] * (2 * self.orders[None, :] + self.structure.d)

    def plancherel_weights(self) -> np.ndarray:
        d, m = self.structure.d, self.structure.m
        return (2 * pi) ** (-d - m) * self.quad.weights * self.quad.rho**d

    def like(self, blocks: np.ndarray) -> "SpectralCoeffs":
        return SpectralCoeffs(self.structure, self.quad, self.n_max, blocks, self.tails)

    def inner(self, other: "SpectralCoeffs") -> complex:
        per_node = np.einsum("nab,nab->n", self.blocks, np.conj(other.blocks))
        return complex(np.sum(self.plancherel_weights() * per_node))

    def tail_fraction(self) -> float:
        """Horizontal mass lost to the N_max truncation, relative to the total."""
        if self.tails is None or not self.tails.size:
            return 0.0
        m = self.structure.m
        lost = float(np.sum(self.quad.weights * self.tails)) * (2 * pi) ** (-m)
        kept = float(np.sum(self.plancherel_weights() * np.sum(np.abs(self.blocks) ** 2, axis=(1, 2))))
        total = kept + lost
        return lost / total if total > 0 else 0.0


def _node_table(s: HTypeStructure, indices: np.ndarray, lam: np.ndarray, xpts: np.ndarray) -> np.ndarray:
    """Phi_ab^{|lam|}(T_lam^{-1} x) with pairs flattened; shape (n_idx^2, n_points)."""
    rot = diagonalize_j(lam, s)
    rotated = xpts @ rot
    rho = float(np.linalg.norm(lam))
    table = special_hermite_table(indices, rho, rotated)
    return table.reshape(indices.shape[0] ** 2, -1)


def central_ft_many(f: SpaceField, lams: np.ndarray) -> np.ndarray:
    """f^lam(x) = int f(x, z) exp(-i lam.z) dz for each row of ``lams``; shape (n_lam, n_x points)."""
    g = f.grid
    zpts = g.z_points().reshape(-1, g.m)
    phase = np.exp(-1j * (np.atleast_2d(lams) @ zpts.T)) * g.z_cell
    flat = f.samples.reshape(-1, zpts.shape[0])
    return (flat @ phase.T).T


def central_ft(f: SpaceField, lam) -> TwistedField:
    """Vertical Fourier transform at one frequency, as a field on the horizontal grid."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(np.abs(lam) > f.grid.nyquist()):
        raise ValueError(f"|lam| exceeds the Nyquist band {f.grid.nyquist():.3f} of the z-grid")
    vals = central_ft_many(f, lam[None, :])[0].reshape(f.grid.x_shape)
    return TwistedField(vals, float(np.linalg.norm(lam)), f.grid.twisted_grid())


def forward(
    f: SpaceField | Sequence[SpaceField],
    structure: HTypeStructure | None = None,
    quad: LambdaQuadrature | None = None,
    n_max: int = 24,
) -> SpectralCoeffs | list[SpectralCoeffs]:
    """Scalar coefficients F(lam, a, b) = int f E_ab^lam for one or several fields."""
    many = not isinstance(f, SpaceField)
    fields = list(f) if many else [f]
    grid = fields[0].grid
    if any(fl.grid != grid for fl in fields):
        raise ValueError("all fields must share a grid")
    s = structure or heisenberg(grid.d)
    if (s.d, s.m) != (grid.d, grid.m):
        raise ValueError("structure and grid dimensions differ")
    quad = quad or lambda_quadrature(s.m)
    if quad.lam_max > grid.nyquist():
        raise ValueError(f"lam_max={quad.lam_max} exceeds the z-grid Nyquist band {grid.nyquist():.3f}")
    indices = multi_indices(s.d, n_max)
    n_idx = indices.shape[0]
    xpts = grid.x_points().reshape(-1, 2 * s.d)
    # F uses the vertical transform at -lam because E carries exp(+i lam.z)
    neg = [central_ft_many(fl, -quad.nodes) for fl in fields]
    d = s.d

    def one_node(i: int):
        lam = quad.nodes[i]
        rho = float(np.linalg.norm(lam))
        table = _node_table(s, indices, lam, xpts)
        scale = (2 * pi) ** (d / 2) * rho ** (-d / 2) * grid.x_cell
        out = []
        for vals in neg:
            coeffs = table @ vals[i] * scale
            grid_mass = float(np.sum(np.abs(vals[i]) ** 2) * grid.x_cell)
            cap = float(np.sum(np.abs(coeffs) ** 2)) * rho**d / (2 * pi) ** d
            out.append((coeffs.reshape(n_idx, n_idx), max(grid_mass - cap, 0.0)))
        return out

    results = ordered_map(one_node, list(range(len(quad))))
    coeffs = []
    for j in range(len(fields)):
        blocks = np.stack([results[i][j][0] for i in range(len(quad))])
        tails = np.array([results[i][j][1] for i in range(len(quad))])
        coeff = SpectralCoeffs(s, quad, n_max, blocks, tails)
        frac = coeff.tail_fraction()
        if frac > TAIL_WARNING:
            warnings.warn(f"N_max={n_max} truncation tail is {frac:.3e} of the Plancherel mass", TruncationWarning)
        coeffs.append(coeff)
    return coeffs if many else coeffs[0]


def synthesize_nodes(F: SpectralCoeffs, stacks: np.ndarray, grid: SpaceGrid) -> np.ndarray:
    """Horizontal synthesis per node: G[n, t, x] = c sum_ab stacks[t, n, a, b] conj(Phi_ab(T^{-1} x)).

    ``stacks`` has shape (n_t, n_nodes, n_idx, n_idx).
    """
    s = F.structure
    d = s.d
    xpts = grid.x_points().reshape(-1, 2 * d)
    n_t = stacks.shape[0]
    weights = F.plancherel_weights()

    def one_node(i: int) -> np.ndarray:
        lam = F.quad.nodes[i]
        rho = float(np.linalg.norm(lam))
        table = _node_table(s, F.indices, lam, xpts)
        scale = (2 * pi) ** (d / 2) * rho ** (-d / 2) * weights[i]
        return (stacks[:, i].reshape(n_t, -1) @ np.conj(table)) * scale

    return np.stack(ordered_map(one_node, list(range(len(F.quad)))))


def inverse_stack(F: SpectralCoeffs, stacks: np.ndarray, grid: SpaceGrid, time_phases: np.ndarray | None = None) -> np.ndarray:
    """Fields for a stack of coefficient sets; returns shape (n_t, *grid.shape)."""
    if (grid.d, grid.m) != (F.structure.d, F.structure.m):
        raise ValueError("grid and coefficient dimensions differ")
    per_node = synthesize_nodes(F, stacks, grid)  # (n_nodes, n_t, n_xpts)
    zpts = grid.z_points().reshape(-1, grid.m)
    zphase = np.exp(-1j * (F.quad.nodes @ zpts.T))  # (n_nodes, n_zpts)
    n_nodes, n_t, n_xp = per_node.shape
    out = np.tensordot(per_node, zphase, axes=([0], [0]))  # (n_t, n_xp, n_zpts)
    return out.reshape((n_t,) + grid.shape)


def inverse(F: SpectralCoeffs, grid: SpaceGrid) -> SpaceField:
    """f(x, z) = (2 pi)^{-d-m} sum_nodes w |lam|^d sum_ab F conj(E_ab^lam(x, z))."""
    return SpaceField(inverse_stack(F, F.blocks[None], grid)[0], grid)


def inverse_many(coeffs: Sequence[SpectralCoeffs], grid: SpaceGrid) -> list[SpaceField]:
    """Invert several coefficient sets sharing nodes and N_max, building each table once."""
    stacks = np.stack([F.blocks for F in coeffs])
    out = inverse_stack(coeffs[0], stacks, grid)
    return [SpaceField(sample, grid) for sample in out]


def plancherel_norm(F: SpectralCoeffs) -> float:
    mass = np.sum(np.abs(F.blocks) ** 2, axis=(1, 2))
    return float(np.sqrt(np.sum(F.plancherel_weights() * mass)))


def apply_multiplier(F: SpectralCoeffs, phi: Callable[[np.ndarray], np.ndarray]) -> SpectralCoeffs:
    """F(lam, a, b) -> phi(|lam|(2|a| + d)) F(lam, a, b)."""
    factor = np.asarray(phi(F.spectrum()))
    return F.like(F.blocks * factor[:, :, None])


def sobolev_norm(F: SpectralCoeffs, sigma: float) -> float:
    """Homogeneous H^sigma norm through the multiplier mu^{sigma/2}."""
    if sigma < 0 and F.quad.lam_min <= 0:
        raise ValueError("negative sigma needs a spectrum bounded away from 0")
    return plancherel_norm(apply_multiplier(F, lambda mu: mu ** (sigma / 2)))


def reality_residual(F: SpectralCoeffs) -> float:
    """max |F(-lam) - conj F(lam)| / max |F| for Heisenberg coefficients of a real field."""
    if F.structure.m != 1 or not F.structure.is_heisenberg or F.structure.d != 1:
        raise ValueError("reality pairing is implemented for H^1")
    half = len(F.quad) // 2
    plus, minus = F.blocks[:half], F.blocks[half:]
    scale = np.max(np.abs(F.blocks)) or 1.0
    return float(np.max(np.abs(minus - np.conj(plus))) / scale)


# ------------------------------------------------------------------ sub-Laplacian


def _spectral_derivative(samples: np.ndarray, axis: int, spacing: float) -> np.ndarray:
    n = samples.shape[axis]
    freq = 2j * pi * np.fft.fftfreq(n, d=spacing)
    shape = [1] * samples.ndim
    shape[axis] = n
    return np.fft.ifft(freq.reshape(shape) * np.fft.fft(samples, axis=axis), axis=axis)


def horizontal_derivative(f: SpaceField, i: int, structure: HTypeStructure) -> SpaceField:
    """X_i f with X_i = d/dx_i - 1/2 sum_{a,j} L[a]_{ij} x_j d/dz_a, spectrally."""
    g = f.grid
    d2 = 2 * g.d
    xpts = g.x_points()
    out = _spectral_derivative(f.samples, i, g.dx)
    for a in range(g.m):
        coef = xpts @ structure.brackets[a][i]
        dz = _spectral_derivative(f.samples, d2 + a, g.dz)
        out = out - 0.5 * coef.reshape(g.x_shape + (1,) * g.m) * dz
    return f.like(out)


def sublaplacian(f: SpaceField, structure: HTypeStructure) -> SpaceField:
    total = np.zeros_like(f.samples)
    for i in range(2 * f.grid.d):
        total += horizontal_derivative(horizontal_derivative(f, i, structure), i, structure).samples
    return f.like(total)


# ------------------------------------------------------------------ binary layout

_MAGIC = b"HTSC"


def save_coeffs(F: SpectralCoeffs, path: str, grid: SpaceGrid | None = None) -> None:
    """Header (magic, d, m, N_max, node count) then little-endian float64 data.

    Data order: nodes (n x m), weights (n), blocks as (re, im) pairs in
    C order.  A JSON sidecar ``path + '.json'`` stores the metadata.
    """
    s = F.structure
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<4i", s.d, s.m, F.n_max, len(F.quad)))
        fh.write(np.ascontiguousarray(F.quad.nodes, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(F.quad.weights, dtype="<f8").tobytes())
        pairs = np.stack([F.blocks.real, F.blocks.imag], axis=-1)
        fh.write(np.ascontiguousarray(pairs, dtype="<f8").tobytes())
    meta = {"structure": s.to_dict(), "quadrature": F.quad.to_dict(), "n_max": F.n_max}
    if grid is not None:
        meta["grid"] = grid.to_dict()
    with open(path + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_coeffs(path: str) -> SpectralCoeffs:
    from .group_core import structure_from_dict

    with open(path + ".json") as fh:
        meta = json.load(fh)
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a spectral coefficient file")
        d, m, n_max, n_nodes = struct.unpack("<4i", fh.read(16))
        nodes = np.frombuffer(fh.read(8 * n_nodes * m), dtype="<f8").reshape(n_nodes, m)
        weights = np.frombuffer(fh.read(8 * n_nodes), dtype="<f8").copy()
        n_idx = multi_indices(d, n_max).shape[0]
        raw = np.frombuffer(fh.read(), dtype="<f8").reshape(n_nodes, n_idx, n_idx, 2)
    q = meta["quadrature"]
    quad = LambdaQuadrature(nodes.copy(), weights, q["lam_min"], q["lam_max"], q["n_radial"])
    return SpectralCoeffs(structure_from_dict(meta["structure"]), quad, n_max, raw[..., 0] + 1j * raw[..., 1])


__all__ = [
    "THREADS_ENV",
    "worker_count",
    "SpaceGrid",
    "SpaceField",
    "SpaceTimeField",
    "LambdaQuadrature",
    "sphere_rule",
    "sphere_volume",
    "lambda_quadrature",
    "SpectralCoeffs",
    "central_ft",
    "central_ft_many",
    "forward",
    "synthesize_nodes",
    "inverse_stack",
    "inverse",
    "inverse_many",
    "TruncationWarning",
    "plancherel_norm",
    "apply_multiplier",
    "sobolev_norm",
    "reality_residual",
    "horizontal_derivative",
    "sublaplacian",
    "save_coeffs",
    "load_coeffs",
]
