"""Mixed Lebesgue norms L^r_v L^q_t L^p_h, admissibility, Strichartz scans."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .evolve import schrodinger_stack, wave_stacks
from .gft import (
    LambdaQuadrature,
    SpaceField,
    SpaceGrid,
    SpaceTimeField,
    forward,
    inverse_stack,
    lambda_quadrature,
    sobolev_norm,
)
from .group_core import HTypeStructure, heisenberg


def _inv(p: float) -> float:
    return 0.0 if np.isinf(p) else 1.0 / p


def dual(p: float) -> float:
    if p == 1:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1)


@dataclass(frozen=True)
class MixedNormSpec:
    """Exponents applied outer to inner: vertical r, time q, horizontal p."""

    r: float
    q: float
    p: float

    def __post_init__(self) -> None:
        for name in ("r", "q", "p"):
            val = getattr(self, name)
            if not (val >= 1):
                raise ValueError(f"{name}={val} must lie in [1, inf]")

    def scaling_exponent(self, d: int, m: int, time_weight: int = 2) -> float:
        """E with ||u_Lam|| = Lam^E ||u|| under (t, x, z) -> (Lam^w t, Lam x, Lam^2 z)."""
        return 2 * m * _inv(self.r) + time_weight * _inv(self.q) + 2 * d * _inv(self.p)


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _lp(values: np.ndarray, weights: np.ndarray, p: float, axes: tuple[int, ...]) -> np.ndarray:
    """L^p over ``axes`` of |values| with product weights (already broadcast)."""
    if np.isinf(p):
        return np.max(values, axis=axes)
    return np.sum(weights * values**p, axis=axes) ** (1 / p)


def _axis_weights(grid_axes: Sequence[tuple[int, float]], ndim: int, positions: Sequence[int]) -> np.ndarray:
    w = np.ones([1] * ndim)
    for pos, (n, h) in zip(positions, grid_axes):
        shape = [1] * ndim
        shape[pos] = n
        w = w * trapezoid_weights(n, h).reshape(shape)
    return w


def mixed_norm_array(
    samples: np.ndarray, times: np.ndarray, grid: SpaceGrid, spec: MixedNormSpec
) -> float:
    """Nested trapezoid norm of samples (t, x..., z...): horizontal, then time, then vertical."""
    vals = np.abs(samples)
    d2, m = 2 * grid.d, grid.m
    nd = vals.ndim
    x_axes = tuple(range(1, 1 + d2))
    wx = _axis_weights([(grid.n_x, grid.dx)] * d2, nd, x_axes)
    inner = _lp(vals, wx, spec.p, x_axes)  # (t, z...)
    dt = float(times[1] - times[0]) if times.size > 1 else 1.0
    wt = _axis_weights([(times.size, dt)], inner.ndim, (0,)) if times.size > 1 else np.ones([1] * inner.ndim)
    middle = _lp(inner, wt, spec.q, (0,))  # (z...)
    wz = _axis_weights([(grid.n_z, grid.dz)] * m, middle.ndim, tuple(range(m)))
    return float(_lp(middle, wz, spec.r, tuple(range(m))))


def mixed_norm(u: SpaceTimeField, spec: MixedNormSpec) -> float:
    return mixed_norm_array(u.samples, u.times, u.grid, spec)


# ------------------------------------------------------------------ admissibility


@dataclass
class Admissibility:
    admissible: bool
    sigma: float
    diagnostics: list[str] = field(default_factory=list)


def admissible_check(p: float, q: float, r: float, d: int, m: int, equation: str = "schrodinger") -> Admissibility:
    """Constraints of the Strichartz theorems and the regularity cost sigma."""
    if equation not in ("schrodinger", "wave"):
        raise ValueError("equation must be 'schrodinger' or 'wave'")
    Q = 2 * d + 2 * m
    notes: list[str] = []
    for name, val in (("p", p), ("q", q), ("r", r)):
        if not val >= 2:
            notes.append(f"{name}={val} outside [2, inf]")
    if p > q:
        notes.append(f"p={p} > q={q}")
    if p > r:
        notes.append(f"p={p} > r={r}")
    if m == 1:
        if not np.isinf(r):
            notes.append(f"r>=2+4/(m-1) unsatisfiable for m=1 unless r=inf (got r={r})")
    elif r < 2 + 4 / (m - 1):
        notes.append(f"r={r} < 2+4/(m-1)={2 + 4 / (m - 1):.6g}")
    if m == 1 and p == 2:
        notes.append("(m,p)=(1,2) is excluded")
    if equation == "schrodinger":
        budget = 2 * _inv(q) + 2 * d * _inv(p) + 2 * m * _inv(r)
        sigma = Q / 2 - budget
        if budget > Q / 2 + 1e-14:
            notes.append(f"2/q+2d/p+2m/r={budget:.6g} exceeds Q/2={Q / 2}")
    else:
        budget = _inv(q) + 2 * d * _inv(p) + 2 * m * _inv(r)
        sigma = (Q - 2) / 2 - budget
        if budget > (Q - 2) / 2 + 1e-14:
            notes.append(f"1/q+2d/p+2m/r={budget:.6g} exceeds (Q-2)/2={(Q - 2) / 2}")
    return Admissibility(not notes, float(sigma), notes)


# ------------------------------------------------------------------ Strichartz ratios


@dataclass
class StrichartzResult:
    ratio: float
    mixed: float
    sobolev: float
    l2: float
    sigma: float
    refined_change: float | None = None
    flagged: list[str] = field(default_factory=list)


def _solution_samples(u0, v0, times, equation, structure, quad, n_max, grid=None):
    grid = grid or u0.grid
    if equation == "schrodinger":
        F = forward(u0, structure, quad, n_max)
        return F, None, inverse_stack(F, schrodinger_stack(F, times), grid)
    Fu, Fv = forward([u0, v0], structure, quad, n_max)
    u, _ = wave_stacks(Fu, Fv, times)
    return Fu, Fv, inverse_stack(Fu, u, grid)


def strichartz_ratio(
    u0: SpaceField,
    spec: MixedNormSpec,
    equation: str = "schrodinger",
    sigma: float | None = None,
    structure: HTypeStructure | None = None,
    quad: LambdaQuadrature | None = None,
    n_max: int = 24,
    times: np.ndarray | None = None,
    v0: SpaceField | None = None,
    refine: bool = False,
    allow_inadmissible: bool = False,
) -> StrichartzResult:
    """||u||_{L^r_v L^q_t L^p_h} on the time window over the H^sigma size of the data.

    For the wave equation the data size is ||grad_H u0||_{H^sigma} + ||v0||_{H^sigma}.
    """
    s = structure or heisenberg(u0.grid.d)
    adm = admissible_check(spec.p, spec.q, spec.r, s.d, s.m, equation)
    flagged = [] if adm.admissible else ["outside the admissible set: " + "; ".join(adm.diagnostics)]
    if flagged and not allow_inadmissible:
        raise ValueError(flagged[0])
    sigma = adm.sigma if sigma is None else float(sigma)
    if sigma < adm.sigma - 1e-12:
        raise ValueError(f"sigma={sigma} is below the exponent {adm.sigma} required by (p,q,r)")
    quad = quad or lambda_quadrature(s.m)
    times = np.linspace(0.0, 4.0, 64) if times is None else np.asarray(times, dtype=float)
    if equation == "wave" and v0 is None:
        v0 = u0.like(np.zeros_like(u0.samples))
    F, Fv, samples = _solution_samples(u0, v0, times, equation, s, quad, n_max)
    if np.all(F.blocks == 0) and (Fv is None or np.all(Fv.blocks == 0)):
        raise ValueError("zero initial data: ratio undefined")
    mixed = mixed_norm_array(samples, times, u0.grid, spec)
    if equation == "schrodinger":
        size = sobolev_norm(F, sigma)
    else:
        size = sobolev_norm(F, sigma + 1) + sobolev_norm(Fv, sigma)
    change = None
    if refine:
        fine = SpaceGrid(u0.grid.d, u0.grid.m, u0.grid.x_half, u0.grid.n_x, u0.grid.z_half, 2 * u0.grid.n_z - 1)
        if equation == "schrodinger":
            fine_samples = inverse_stack(F, schrodinger_stack(F, times), fine)
        else:
            fine_samples = inverse_stack(F, wave_stacks(F, Fv, times)[0], fine)
        fine_mixed = mixed_norm_array(fine_samples, times, fine, spec)
        change = abs(fine_mixed - mixed) / mixed
    from .gft import plancherel_norm

    return StrichartzResult(mixed / size, mixed, size, plancherel_norm(F), sigma, change, flagged)


# ------------------------------------------------------------------ dilation scans


@dataclass
class DilationRow:
    Lam: float
    mixed: float
    l2: float
    sobolev: float
    ratio: float


@dataclass
class DilationTable:
    rows: list[DilationRow]
    mixed_exponent: float
    l2_exponent: float
    ratio_exponent: float
    expected_mixed: float
    expected_l2: float

    def to_csv(self, digits: int = 12) -> str:
        fmt = f"{{:.{digits}g}}".format
        lines = ["Lam,mixed,l2,sobolev,ratio"]
        for r in self.rows:
            lines.append(",".join(fmt(v) for v in (r.Lam, r.mixed, r.l2, r.sobolev, r.ratio)))
        return "\n".join(lines) + "\n"


def fitted_exponent(scales: Sequence[float], values: Sequence[float]) -> float:
    slope, _ = np.polyfit(np.log(scales), np.log(values), 1)
    return float(slope)


def dilation_scan(
    u0: SpaceField,
    Lams: Sequence[float],
    spec: MixedNormSpec,
    equation: str = "schrodinger",
    sigma: float | None = None,
    structure: HTypeStructure | None = None,
    quad: LambdaQuadrature | None = None,
    n_max: int = 24,
    times: np.ndarray | None = None,
    v0: SpaceField | None = None,
) -> DilationTable:
    """Run the family u0_Lam = u0 o delta_Lam^{-1} through the full pipeline.

    Grid, lam-band and time window are rescaled with Lam: (x, z) by (Lam, Lam^2),
    lam by Lam^{-2}, t by Lam^2 (Schrodinger) or Lam (wave).
    """
    s = structure or heisenberg(u0.grid.d)
    quad = quad or lambda_quadrature(s.m)
    times = np.linspace(0.0, 4.0, 64) if times is None else np.asarray(times, dtype=float)
    adm = admissible_check(spec.p, spec.q, spec.r, s.d, s.m, equation)
    sigma = adm.sigma if sigma is None else float(sigma)
    time_weight = 2 if equation == "schrodinger" else 1
    if equation == "wave" and v0 is None:
        v0 = u0.like(np.zeros_like(u0.samples))
    rows = []
    for Lam in Lams:
        grid = u0.grid.dilated(Lam)
        uL = SpaceField(u0.samples, grid)
        vL = SpaceField(v0.samples, grid) if v0 is not None else None
        qL = quad.scaled(Lam**-2)
        tL = times * Lam**time_weight
        F, Fv, samples = _solution_samples(uL, vL, tL, equation, s, qL, n_max)
        mixed = mixed_norm_array(samples, tL, grid, spec)
        from .gft import plancherel_norm

        if equation == "schrodinger":
            size = sobolev_norm(F, sigma)
        else:
            size = sobolev_norm(F, sigma + 1) + sobolev_norm(Fv, sigma)
        rows.append(DilationRow(float(Lam), mixed, plancherel_norm(F), size, mixed / size))
    scales = [r.Lam for r in rows]
    return DilationTable(
        rows,
        fitted_exponent(scales, [r.mixed for r in rows]),
        fitted_exponent(scales, [r.l2 for r in rows]),
        fitted_exponent(scales, [r.ratio for r in rows]),
        spec.scaling_exponent(s.d, s.m, time_weight),
        float(s.d + s.m),
    )


# ------------------------------------------------------------------ Hausdorff-Young


@dataclass
class HausdorffYoungReport:
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs

    @property
    def holds(self) -> bool:
        return self.ratio <= 1 + 1e-10


def hausdorff_young_check(f: SpaceField | SpaceTimeField, a: float, b: float, pad: int = 4) -> HausdorffYoungReport:
    """Compare ||F_z f||_{L^{b'}_nu L^{a'}} with ||f||_{L^b_z L^{a'}}.

    F_z f(nu) = int f(z) exp(-2 pi i nu.z) dz (unit Hausdorff-Young constant);
    the inner norm runs over all non-vertical variables.
    """
    if b > min(a, dual(a)):
        raise ValueError(
            f"b={b} > min(a, a')={min(a, dual(a)):.6g}: the Minkowski steps need b <= a and b <= a'"
        )
    grid = f.grid
    m = grid.m
    samples = f.samples if isinstance(f, SpaceTimeField) else f.samples[None]
    dt = f.dt if isinstance(f, SpaceTimeField) else 1.0
    inner_cell = grid.x_cell * dt
    zaxes = tuple(range(samples.ndim - m, samples.ndim))
    shape = [pad * grid.n_z] * m
    spec = np.fft.fftn(samples, s=shape, axes=zaxes) * grid.z_cell
    dnu = 1.0 / (pad * grid.n_z * grid.dz)
    ap = dual(a)
    bp = dual(b)
    inner_axes = tuple(range(samples.ndim - m))

    def inner_norm(arr):
        vals = np.abs(arr)
        if np.isinf(ap):
            return np.max(vals, axis=inner_axes)
        return (np.sum(vals**ap, axis=inner_axes) * inner_cell) ** (1 / ap)

    def outer(vals, p, cell):
        if np.isinf(p):
            return float(np.max(vals))
        return float((np.sum(vals**p) * cell) ** (1 / p))

    lhs = outer(inner_norm(spec), bp, dnu**m)
    rhs = outer(inner_norm(samples), b, grid.z_cell)
    return HausdorffYoungReport(lhs, rhs)


__all__ = [
    "dual",
    "MixedNormSpec",
    "trapezoid_weights",
    "mixed_norm_array",
    "mixed_norm",
    "Admissibility",
    "admissible_check",
    "StrichartzResult",
    "strichartz_ratio",
    "DilationRow",
    "DilationTable",
    "fitted_exponent",
    "dilation_scan",
    "HausdorffYoungReport",
    "hausdorff_young_check",
]
