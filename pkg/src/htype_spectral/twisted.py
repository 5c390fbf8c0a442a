"""Twisted convolution on C^d, the eigenprojectors of the twisted Laplacian,
projector norm estimates and the spectral series that controls the
restriction estimate.

Fields live on a centred uniform grid with an odd number of points per
axis, so differences of grid points are again grid points.  Coordinates
are ordered (x_1..x_d, y_1..y_d) and ``Im(x . conj(w)) = y.w_x - x.w_y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, pi

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import roots_genlaguerre

from .special_fn import indices_of_order, laguerre_fn, multi_indices, special_hermite_table


@dataclass(frozen=True)
class TwistedGrid:
    d: int
    half_width: float
    n: int

    def __post_init__(self) -> None:
        if self.n % 2 == 0 or self.n < 3:
            raise ValueError("twisted grids need an odd number (>= 3) of points per axis")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n)

    @property
    def spacing(self) -> float:
        return 2 * self.half_width / (self.n - 1)

    @property
    def cell(self) -> float:
        return self.spacing ** (2 * self.d)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * (2 * self.d)

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis] * (2 * self.d)), indexing="ij")
        return np.stack(mesh, axis=-1)


@dataclass
class TwistedField:
    samples: np.ndarray
    lam_abs: float
    grid: TwistedGrid

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.shape != self.grid.shape:
            raise ValueError(f"samples shape {self.samples.shape} does not match grid {self.grid.shape}")
        if self.lam_abs <= 0:
            raise ValueError("lam_abs must be positive")

    def norm(self, p: float = 2.0) -> float:
        vals = np.abs(self.samples)
        if np.isinf(p):
            return float(vals.max())
        return float((np.sum(vals**p) * self.grid.cell) ** (1.0 / p))

    def boundary_ratio(self) -> float:
        """Largest boundary magnitude relative to the field maximum."""
        vals = np.abs(self.samples)
        peak = vals.max()
        if peak == 0:
            return 0.0
        edge = 0.0
        for axis in range(vals.ndim):
            edge = max(edge, np.take(vals, 0, axis=axis).max(), np.take(vals, -1, axis=axis).max())
        return float(edge / peak)

    def like(self, samples: np.ndarray) -> "TwistedField":
        return TwistedField(samples, self.lam_abs, self.grid)


def laguerre_field(k: int, lam_abs: float, grid: TwistedGrid) -> TwistedField:
    return TwistedField(laguerre_fn(k, lam_abs, grid.points()), lam_abs, grid)


# ------------------------------------------------------------ convolution


def _twisted_sum_planar(g: np.ndarray, h: np.ndarray, axis: np.ndarray, coef: float, cell: float, block: int = 48) -> np.ndarray:
    """sum_w g(x - w) h(w) exp(i coef (x2 w1 - x1 w2)) cell for d = 1.

    For each row index of x the inner sum over w2 is a linear convolution,
    done by FFT; the outer sum over w1 carries the remaining phase.
    """
    n = axis.size
    c = (n - 1) // 2
    padded = np.zeros((3 * n, n), dtype=complex)
    padded[n : 2 * n] = g
    out = np.empty((n, n), dtype=complex)
    phase_outer = np.exp(1j * coef * np.outer(axis, axis))  # [i2, j1] -> exp(i coef x2 w1)
    j1 = np.arange(n)
    for start in range(0, n, block):
        rows = np.arange(start, min(start + block, n))
        shifted = padded[(rows[:, None] - j1[None, :] + c) + n]  # [i1, j1, :] = g(x1 - w1, .)
        weights = h[None, :, :] * np.exp(-1j * coef * np.outer(axis[rows], axis))[:, None, :]
        conv = fftconvolve(shifted, weights, axes=2)[:, :, c : c + n]  # [i1, j1, i2]
        out[rows] = np.einsum("kj,ijk->ik", phase_outer, conv)
    return out * cell


def _twisted_sum_brute(g: np.ndarray, h: np.ndarray, grid: TwistedGrid, coef: float) -> np.ndarray:
    d, n = grid.d, grid.n
    c = (n - 1) // 2
    idx = np.indices(grid.shape).reshape(2 * d, -1).T
    pts = grid.points().reshape(-1, 2 * d)
    gflat = g.reshape(-1)
    hflat = h.reshape(-1)
    out = np.zeros(idx.shape[0], dtype=complex)
    strides = np.array([n ** (2 * d - 1 - a) for a in range(2 * d)])
    for i, (xi, xp) in enumerate(zip(idx, pts)):
        diff = xi[None, :] - idx + c
        valid = np.all((diff >= 0) & (diff < n), axis=1)
        gv = gflat[(diff[valid] * strides).sum(axis=1)]
        wv = pts[valid]
        im = wv[:, :d] @ xp[d:] - wv[:, d:] @ xp[:d]
        out[i] = np.sum(gv * hflat[valid] * np.exp(1j * coef * im))
    return out.reshape(grid.shape) * grid.cell


def twisted_sum(g: np.ndarray, h: np.ndarray, grid: TwistedGrid, coef: float) -> np.ndarray:
    """Quadrature of int g(x - w) h(w) exp(i coef Im(x . conj(w))) dw on the grid."""
    if grid.d == 1:
        return _twisted_sum_planar(np.asarray(g, complex), np.asarray(h, complex), grid.axis, coef, grid.cell)
    return _twisted_sum_brute(np.asarray(g, complex), np.asarray(h, complex), grid, coef)


def twisted_kernel_sum(kernel: np.ndarray, h: np.ndarray, grid: TwistedGrid, coef: float, block: int = 48) -> np.ndarray:
    """sum_w K(x - w) h(w) exp(i coef Im(x . conj(w))) cell for d = 1.

    ``kernel`` is sampled on the difference grid, shape (2n - 1, 2n - 1),
    so no part of K(x - w) is lost for x, w inside the box.
    """
    if grid.d != 1:
        raise NotImplementedError("difference-grid twisted sums are implemented for d = 1")
    n = grid.n
    axis = grid.axis
    kernel = np.asarray(kernel, dtype=complex)
    if kernel.shape != (2 * n - 1, 2 * n - 1):
        raise ValueError("kernel must be sampled on the (2n-1)^2 difference grid")
    out = np.empty((n, n), dtype=complex)
    phase_outer = np.exp(1j * coef * np.outer(axis, axis))
    j1 = np.arange(n)
    for start in range(0, n, block):
        rows = np.arange(start, min(start + block, n))
        shifted = kernel[rows[:, None] - j1[None, :] + n - 1]  # [i1, j1, :] = K(x1 - w1, .)
        weights = np.asarray(h, complex)[None, :, :] * np.exp(-1j * coef * np.outer(axis[rows], axis))[:, None, :]
        conv = fftconvolve(shifted, weights, axes=2)[:, :, n - 1 : 2 * n - 1]
        out[rows] = np.einsum("kj,ijk->ik", phase_outer, conv)
    return out * grid.cell


def difference_axis(grid: TwistedGrid) -> np.ndarray:
    return grid.spacing * np.arange(-(grid.n - 1), grid.n)


def twisted_convolve(g: TwistedField, h: TwistedField) -> TwistedField:
    """g x_lam h (x) = int g(x - w) h(w) exp(i lam/2 Im(x . conj(w))) dw."""
    if g.grid != h.grid:
        raise ValueError("twisted convolution needs fields on the same grid")
    if not np.isclose(g.lam_abs, h.lam_abs, rtol=0, atol=1e-14):
        raise ValueError("twisted convolution needs fields at the same frequency")
    return g.like(twisted_sum(g.samples, h.samples, g.grid, 0.5 * g.lam_abs))


# ------------------------------------------------------------ projectors


@dataclass
class SpectralExpansion:
    """Coefficients <g, Phi_ab> for |a|, |b| <= n_max and the captured mass."""

    indices: np.ndarray
    coeffs: np.ndarray
    captured: float
    total: float

    @property
    def tail(self) -> float:
        return max(self.total - self.captured, 0.0) / self.total if self.total > 0 else 0.0


def expand(g: TwistedField, n_max: int) -> tuple[SpectralExpansion, np.ndarray]:
    idx = multi_indices(g.grid.d, n_max)
    table = special_hermite_table(idx, g.lam_abs, g.grid.points())
    flat = table.reshape(idx.shape[0], idx.shape[0], -1)
    coeffs = (np.conj(flat) @ g.samples.reshape(-1) * g.grid.cell).reshape(-1)
    total = g.norm() ** 2
    return SpectralExpansion(idx, coeffs, float(np.sum(np.abs(coeffs) ** 2)), total), flat


def project_k(g: TwistedField, k: int, method: str = "convolution", n_max: int | None = None) -> TwistedField:
    """Lambda_k g, the projection onto span{Phi_ab : |a| = k}.

    ``convolution`` uses (2 pi)^{-d} lam^d g x_lam phi_k; ``spectral``
    sums <g, Phi_ab> Phi_ab over |a| = k, |b| <= n_max.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    d = g.grid.d
    if method == "convolution":
        phi = laguerre_fn(k, g.lam_abs, g.grid.points())
        out = twisted_sum(g.samples, phi, g.grid, 0.5 * g.lam_abs)
        return g.like(out * (2 * pi) ** (-d) * g.lam_abs**d)
    if method == "spectral":
        n_max = n_max if n_max is not None else k + 24
        rows = indices_of_order(d, k)
        cols = multi_indices(d, n_max)
        both = np.concatenate([rows, cols])
        table = special_hermite_table(both, g.lam_abs, g.grid.points())
        block = table[: rows.shape[0], rows.shape[0] :].reshape(rows.shape[0] * cols.shape[0], -1)
        coeffs = np.conj(block) @ g.samples.reshape(-1) * g.grid.cell
        return g.like((coeffs @ block).reshape(g.grid.shape))
    raise ValueError(f"unknown projector method {method!r}")


_D1 = np.array([1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12])
_D2 = np.array([-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12])


def _fd(samples: np.ndarray, axis: int, stencil: np.ndarray, h: float, power: int) -> np.ndarray:
    padded = np.pad(samples, [(2, 2) if a == axis else (0, 0) for a in range(samples.ndim)])
    n = samples.shape[axis]
    out = np.zeros_like(samples)
    for offset, weight in zip(range(-2, 3), stencil):
        if weight:
            out = out + weight * np.take(padded, np.arange(n) + 2 + offset, axis=axis)
    return out / h**power


@dataclass
class LaplacianResult:
    field: TwistedField
    tail: float
    warning: str | None = None


def twisted_laplacian_apply(g: TwistedField, method: str = "spectral", n_max: int = 32) -> LaplacianResult:
    """Twisted Laplacian Delta - i lam sum_j (y_j d/dx_j - x_j d/dy_j) - lam^2 |x|^2 / 4.

    This is the action of the sub-Laplacian on the mode exp(i lam z); its
    eigenfunctions are Phi_ab^lam with eigenvalue -lam (2|a| + d).
    """
    lam, d = g.lam_abs, g.grid.d
    if method == "spectral":
        exp, flat = expand(g, n_max)
        order = exp.indices.sum(axis=1)
        eig = -lam * (2 * order + d)
        out = (eig[:, None] * exp.coeffs.reshape(len(order), -1)).reshape(-1) @ flat.reshape(-1, flat.shape[-1])
        warn = None if exp.tail <= 1e-6 else f"expansion tail {exp.tail:.2e} exceeds 1e-6 of the norm"
        return LaplacianResult(g.like(out.reshape(g.grid.shape)), exp.tail, warn)
    if method == "fd":
        h = g.grid.spacing
        s = g.samples
        pts = g.grid.points()
        out = np.zeros_like(s)
        for a in range(2 * d):
            out += _fd(s, a, _D2, h, 2)
        for j in range(d):
            xj, yj = pts[..., j], pts[..., j + d]
            dx = _fd(s, j, _D1, h, 1)
            dy = _fd(s, j + d, _D1, h, 1)
            out += -1j * lam * (yj * dx - xj * dy)
        out += -0.25 * lam**2 * np.sum(pts**2, axis=-1) * s
        return LaplacianResult(g.like(out), 0.0, None)
    raise ValueError(f"unknown method {method!r}")


# ------------------------------------------------------------ exponents


def rho_exponent(r: float, d: int) -> float:
    """Koch-Tataru growth exponent for the L^2 -> L^r norm of the projectors."""
    if d < 1:
        raise ValueError("d must be positive")
    if r < 2:
        raise ValueError("rho is defined for r >= 2")
    inv = 0.0 if np.isinf(r) else 1.0 / r
    breakpoint_inv = (2 * d - 1) / (2 * (2 * d + 1))
    if inv >= breakpoint_inv:
        return inv - 0.5
    return 2 * d * (0.5 - inv) - 1.0


def conjugate_exponent(p: float) -> float:
    if p == 1:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1.0)


@dataclass
class NormEstimate:
    value: float
    kind: str
    iterations: int = 0
    converged: bool = True
    certificate: dict = field(default_factory=dict)


def _laguerre_l2_squared(k: int, lam_abs: float, d: int) -> float:
    """||phi_k^lam||_2^2 by Gauss-Laguerre quadrature in t = lam |x|^2 / 2."""
    nodes, weights = roots_genlaguerre(k + 2, d - 1)
    vals = laguerre_fn(k, 1.0, np.sqrt(2 * nodes)[:, None] * np.eye(2 * d)[0][None, :])
    poly = vals * np.exp(nodes / 2)
    sphere = 2 * pi**d / np.prod(np.arange(1, d)) if d > 1 else 2 * pi
    return float(sphere * 0.5 * (2.0 / lam_abs) ** d * np.sum(weights * poly**2))


def _range_grid(k: int, width: int, lam_abs: float, d: int) -> TwistedGrid:
    top = k + width
    radius = np.sqrt(4.0 * (2 * top + d + 1) / lam_abs) + 7.0 / np.sqrt(lam_abs)
    step = 0.6 * np.pi / (np.sqrt(lam_abs * (2 * top + d + 1)) + 2.0)
    n = int(np.ceil(2 * radius / step)) | 1
    return TwistedGrid(d, radius, n)


def _row_block(rows: np.ndarray, cols: np.ndarray, lam_abs: float, flat_pts: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Phi_{ab}(x) for a in rows, b in cols, shape (len(rows)*len(cols), points); chunked over points."""
    both = np.concatenate([rows, cols])
    nr = rows.shape[0]
    out = np.empty((nr * cols.shape[0], flat_pts.shape[0]), dtype=complex)
    for start in range(0, flat_pts.shape[0], chunk):
        block = special_hermite_table(both, lam_abs, flat_pts[start : start + chunk])
        out[:, start : start + chunk] = block[:nr, nr:].reshape(nr * cols.shape[0], -1)
    return out


def projector_norm_estimate(
    k: int,
    p: float,
    r: float,
    d: int = 1,
    lam_abs: float = 1.0,
    width: int = 16,
    max_iter: int = 200,
    tol: float = 1e-10,
) -> NormEstimate:
    """Estimate of the L^p -> L^r norm of Lambda_k at frequency lam_abs.

    For p = 2 the value is exact (r = 2, inf) or a power-iteration
    maximum over the range of Lambda_k restricted to |b| <= k + width.
    For p < 2 the value is a lower bound over Laguerre and coherent-state
    test functions.
    """
    if not (1 <= p <= 2 <= r):
        raise ValueError("need 1 <= p <= 2 <= r")
    if p == 2 and r == 2:
        return NormEstimate(1.0, "exact")
    if p == 2 and np.isinf(r):
        row = (2 * pi) ** (-d) * lam_abs**d * np.sqrt(_laguerre_l2_squared(k, lam_abs, d))
        return NormEstimate(float(row), "exact", certificate={"kernel_row_l2": float(row)})
    grid = _range_grid(k, width, lam_abs, d)
    pts = grid.points()
    rows = indices_of_order(d, k)
    cols = multi_indices(d, k + width)
    basis = _row_block(rows, cols, lam_abs, pts.reshape(-1, pts.shape[-1]))
    cell = grid.cell
    if p == 2:
        coeffs = np.zeros(basis.shape[0], dtype=complex)
        # start from phi_k, which lies in the range and concentrates at the origin
        diag = [i * cols.shape[0] + int(np.where((cols == rows[i]).all(axis=1))[0][0]) for i in range(rows.shape[0])]
        coeffs[diag] = 1.0
        coeffs /= np.linalg.norm(coeffs)
        value, converged, it = 0.0, False, 0
        for it in range(1, max_iter + 1):
            g = coeffs @ basis
            new_value = float((np.sum(np.abs(g) ** r) * cell) ** (1 / r))
            grad = np.abs(g) ** (r - 2) * g
            nxt = np.conj(basis) @ grad * cell
            nxt /= np.linalg.norm(nxt)
            if abs(new_value - value) <= tol * new_value:
                value, converged = new_value, True
                break
            value, coeffs = new_value, nxt
        mass = float(np.sum(np.abs(coeffs @ basis) ** 2) * cell)
        return NormEstimate(
            value,
            "power-iteration",
            it,
            converged,
            {"grid_points": grid.n, "grid_l2_of_unit_maximizer": mass, "basis_size": basis.shape[0]},
        )
    # p < 2: lower bound over a witness family
    best, witness = 0.0, ""
    for scale in (0.5, 1.0, 2.0):
        for name, samples in _witness_family(k, lam_abs * scale, grid):
            norm_p = float((np.sum(np.abs(samples) ** p) * cell) ** (1 / p))
            if norm_p == 0:
                continue
            proj = (np.conj(basis) @ samples.reshape(-1) * cell) @ basis
            norm_r = float(np.max(np.abs(proj))) if np.isinf(r) else float((np.sum(np.abs(proj) ** r) * cell) ** (1 / r))
            if norm_r / norm_p > best:
                best, witness = norm_r / norm_p, f"{name}@{scale}"
    return NormEstimate(best, "lower-bound", certificate={"witness": witness})


def _witness_family(k: int, lam_abs: float, grid: TwistedGrid):
    pts = grid.points()
    yield "laguerre", laguerre_fn(k, lam_abs, pts)
    for shift in (0.5, 1.0, 2.0):
        offset = np.zeros(pts.shape[-1])
        offset[0] = shift * np.sqrt((2 * k + 1) / lam_abs)
        yield f"coherent{shift}", np.exp(-0.25 * lam_abs * np.sum((pts - offset) ** 2, axis=-1))


# ------------------------------------------------------------ series


class SeriesHypothesisError(ValueError):
    pass


def vertical_gain(m: int, r: float) -> float:
    """m (1/r - 1/r')."""
    rc = conjugate_exponent(r)
    return m * (1.0 / r - (0.0 if np.isinf(rc) else 1.0 / rc))


def series_hypotheses(p: float, r: float, m: int) -> list[str]:
    problems = []
    if not 1 <= p <= 2:
        problems.append(f"p={p} outside [1, 2]")
    top = 2 * (m + 1) / (m + 3)
    if not 1 <= r <= top:
        problems.append(f"r={r} outside [1, 2(m+1)/(m+3)] = [1, {top:g}]")
    if m == 1 and p == 2:
        problems.append("(m, p) = (1, 2) is excluded: the series diverges logarithmically")
    return problems


@dataclass
class SeriesResult:
    partial_sums: np.ndarray
    exponent: float
    tail_bound: float
    norm_source: str

    def at(self, big_k: int) -> float:
        return float(self.partial_sums[big_k])


def series_partial_sum(
    p: float, r: float, d: int, m: int, big_k: int, norm_source: str = "bound"
) -> SeriesResult:
    """Partial sums S_K of sum_k ||Lambda_k||_{p->p'} / (2k+d)^{m(1/r-1/r') + d(1/p-1/p')}."""
    problems = series_hypotheses(p, r, m)
    if problems:
        raise SeriesHypothesisError("; ".join(problems))
    pc = conjugate_exponent(p)
    denom = vertical_gain(m, r) + d * (1.0 / p - (0.0 if np.isinf(pc) else 1.0 / pc))
    ks = np.arange(big_k + 1)
    base = 2.0 * ks + d
    if norm_source == "bound":
        growth = rho_exponent(pc, d)
        norms = base**growth
    elif norm_source == "measured":
        if p != 2:
            raise ValueError("measured projector norms are only available for p = 2")
        growth = 0.0
        norms = np.array([projector_norm_estimate(int(k), 2.0, 2.0, d).value for k in ks])
    else:
        raise ValueError("norm_source must be 'bound' or 'measured'")
    gamma = denom - growth
    terms = norms / base**denom
    partial = np.cumsum(terms)
    if gamma > 1:
        tail = (2.0 * big_k + d) ** (1.0 - gamma) / (2.0 * (gamma - 1.0))
    else:
        tail = np.inf
    return SeriesResult(partial, gamma, float(tail), norm_source)


__all__ = [
    "TwistedGrid",
    "TwistedField",
    "laguerre_field",
    "twisted_sum",
    "twisted_convolve",
    "twisted_kernel_sum",
    "difference_axis",
    "SpectralExpansion",
    "expand",
    "project_k",
    "LaplacianResult",
    "twisted_laplacian_apply",
    "rho_exponent",
    "conjugate_exponent",
    "NormEstimate",
    "projector_norm_estimate",
    "SeriesHypothesisError",
    "vertical_gain",
    "series_hypotheses",
    "SeriesResult",
    "series_partial_sum",
]
