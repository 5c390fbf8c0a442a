"""Hermite, Laguerre and special Hermite functions, and matrix coefficients
of the Schrodinger representation.

Conventions
-----------
* ``h_k`` are the L^2-normalized Hermite functions, evaluated by the
  three-term recurrence on the normalized functions themselves.
* The Schrodinger representation of H^d at frequency ``r > 0`` acts by
  ``pi_r(x, y, z) f(xi) = exp(i r (z + xi.y + x.y/2)) f(xi + x)``.
* ``E_ab^lam(p) = <pi_lam(p) Phi_a, Phi_b>`` and the special Hermite
  function is ``Phi_ab^r(x) = (2 pi)^{-d/2} r^{d/2} E_ab^r(x, 0)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial, pi

import numpy as np
from scipy.special import roots_hermite

from .group_core import DualFrequency, GroupPoint, HTypeStructure, to_heisenberg


@dataclass(frozen=True)
class QuadratureRule1D:
    nodes: np.ndarray
    weights: np.ndarray
    exact_degree: int
    kind: str

    def __post_init__(self) -> None:
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["node", "weight"])
        for node, weight in zip(self.nodes, self.weights):
            writer.writerow([repr(float(node)), repr(float(weight))])
        return buf.getvalue()


@lru_cache(maxsize=32)
def gauss_hermite_rule(n: int) -> QuadratureRule1D:
    """n-point rule for the weight exp(-t^2)."""
    nodes, weights = roots_hermite(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule1D(nodes, weights, 2 * n - 1, "gauss-hermite")


def trapezoid_rule(half_width: float, n: int) -> QuadratureRule1D:
    nodes = np.linspace(-half_width, half_width, n)
    weights = np.full(n, nodes[1] - nodes[0])
    return QuadratureRule1D(nodes, weights, 1, "trapezoid")


# ---------------------------------------------------------------- Hermite


def hermite_table(n_max: int, t) -> np.ndarray:
    """Values h_0..h_{n_max} at t; shape (n_max + 1, *t.shape)."""
    t = np.asarray(t, dtype=float)
    out = np.empty((n_max + 1,) + t.shape)
    out[0] = pi**-0.25 * np.exp(-0.5 * t * t)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * t * out[0]
    for k in range(1, n_max):
        out[k + 1] = t * np.sqrt(2.0 / (k + 1)) * out[k] - np.sqrt(k / (k + 1)) * out[k - 1]
    return out


def hermite_1d(k: int, t):
    if k < 0:
        raise ValueError("Hermite index must be nonnegative")
    return hermite_table(k, t)[k]


def multi_indices(d: int, n_max: int) -> np.ndarray:
    """All alpha in N^d with |alpha| <= n_max, ordered by |alpha| then lexicographically."""
    out = []
    for order in range(n_max + 1):
        out.extend(_compositions(order, d))
    return np.array(out, dtype=int).reshape(-1, d)


def indices_of_order(d: int, k: int) -> np.ndarray:
    return np.array(_compositions(k, d), dtype=int).reshape(-1, d)


def _compositions(total: int, parts: int) -> list[tuple[int, ...]]:
    if parts == 1:
        return [(total,)]
    out = []
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            out.append((first,) + rest)
    return out


def multiplicity(k: int, d: int) -> int:
    """Number of alpha in N^d with |alpha| = k."""
    return comb(k + d - 1, k)


def multi_hermite(alpha, lam_abs: float, xi) -> np.ndarray:
    """Phi_alpha^lam(xi) = lam^{d/4} prod_j h_{alpha_j}(lam^{1/2} xi_j); xi has trailing axis d."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=int))
    if lam_abs <= 0:
        raise ValueError("lam_abs must be positive")
    xi = np.asarray(xi, dtype=float)
    d = alpha.size
    if xi.shape[-1] != d:
        raise ValueError("xi must have trailing dimension d")
    scaled = np.sqrt(lam_abs) * xi
    val = np.full(xi.shape[:-1], lam_abs ** (d / 4.0))
    for j, a in enumerate(alpha):
        val = val * hermite_1d(int(a), scaled[..., j])
    return val


def apply_hermite_operator(samples: np.ndarray, spacing: float, lam_abs: float, coords: list[np.ndarray]) -> np.ndarray:
    """H(lam) = sum_j (-d^2/dxi_j^2 + lam^2 xi_j^2) on a uniform grid.

    Derivatives are spectral (FFT) so the result is accurate for
    functions that decay well inside the box.
    """
    samples = np.asarray(samples)
    out = np.zeros(samples.shape, dtype=complex)
    for axis, coord in enumerate(coords):
        n = samples.shape[axis]
        freq = 2 * pi * np.fft.fftfreq(n, d=spacing)
        shape = [1] * samples.ndim
        shape[axis] = n
        second = np.fft.ifft(-(freq**2).reshape(shape) * np.fft.fft(samples, axis=axis), axis=axis)
        out += -second + lam_abs**2 * coord.reshape(shape) ** 2 * samples
    return out


# ---------------------------------------------------------------- Laguerre


def laguerre_scaled(k: int, order: float, t) -> np.ndarray:
    """L_k^order(t) exp(-t/2) by forward recurrence on the scaled values."""
    t = np.asarray(t, dtype=float)
    damp = np.exp(-0.5 * t)
    prev = damp
    if k == 0:
        return prev
    cur = (1.0 + order - t) * damp
    for j in range(1, k):
        prev, cur = cur, ((2 * j + 1 + order - t) * cur - (j + order) * prev) / (j + 1)
    return cur


def laguerre_fn(k: int, lam_abs: float, x) -> np.ndarray:
    """phi_k^lam(x) = L_k^{d-1}(lam |x|^2 / 2) exp(-lam |x|^2 / 4); x has trailing axis 2d."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if lam_abs <= 0:
        raise ValueError("lam_abs must be positive")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] % 2:
        raise ValueError("x must have even trailing dimension 2d")
    d = x.shape[-1] // 2
    return laguerre_scaled(k, d - 1, 0.5 * lam_abs * np.sum(x * x, axis=-1))


# ------------------------------------------------- matrix coefficients, d=1


def heisenberg_coefficient_table(n_max: int, u, v) -> np.ndarray:
    """E_ab(u, v, 0) for the unit-frequency Schrodinger representation of H^1.

    Closed form through normalized Laguerre recurrences; returns an array
    of shape (n_max + 1, n_max + 1, *u.shape).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    w = (u + 1j * v) / np.sqrt(2.0)
    r = (u * u + v * v) / 2.0
    out = np.empty((n_max + 1, n_max + 1) + u.shape, dtype=complex)
    start = np.exp(-0.5 * r).astype(complex)
    for j in range(n_max + 1):
        if j > 0:
            start = start * w / np.sqrt(j)
        prev = start
        out[j, 0] = prev
        if j > 0:
            out[0, j] = (-1) ** j * np.conj(prev)
        if n_max - j >= 1:
            cur = (1.0 + j - r) * prev / np.sqrt(1.0 + j)
            for b in range(1, n_max - j + 1):
                out[b + j, b] = cur
                if j > 0:
                    out[b, b + j] = (-1) ** j * np.conj(cur)
                if b + j == n_max:
                    break
                nxt = ((2 * b + 1 + j - r) * cur - np.sqrt(b * (b + j)) * prev) / np.sqrt((b + 1) * (b + 1 + j))
                prev, cur = cur, nxt
    return out


def special_hermite_table(indices: np.ndarray, lam_abs: float, x) -> np.ndarray:
    """Phi_{alpha beta}^lam at points x for all pairs in ``indices``.

    Returns shape (n_idx, n_idx, *x.shape[:-1]) with entry [a, b] equal to
    Phi_{indices[a], indices[b]}^lam(x).
    """
    indices = np.asarray(indices, dtype=int)
    x = np.asarray(x, dtype=float)
    d = indices.shape[1]
    if x.shape[-1] != 2 * d:
        raise ValueError("x must have trailing dimension 2d")
    n_max = int(indices.max()) if indices.size else 0
    scale = np.sqrt(lam_abs)
    result = None
    for j in range(d):
        tab = heisenberg_coefficient_table(n_max, scale * x[..., j], scale * x[..., j + d])
        factor = tab[indices[:, j][:, None], indices[:, j][None, :]]
        result = factor if result is None else result * factor
    return result * ((2 * pi) ** (-d / 2) * lam_abs ** (d / 2))


def special_hermite(alpha, beta, lam_abs: float, x) -> np.ndarray:
    alpha = np.atleast_1d(np.asarray(alpha, dtype=int))
    beta = np.atleast_1d(np.asarray(beta, dtype=int))
    if lam_abs <= 0:
        raise ValueError("lam_abs must be positive")
    table = special_hermite_table(np.stack([alpha, beta]), lam_abs, x)
    return table[0, 1]


def _coefficient_quadrature_1d(a: int, b: int, u: np.ndarray, v: np.ndarray, n_nodes: int) -> np.ndarray:
    """E_ab(u, v, 0) on H^1 by Gauss-Hermite quadrature.

    With the shift xi = eta - u/2 the integrand becomes
    exp(i eta v) h_a(eta + u/2) h_b(eta - u/2), whose Gaussian factor
    exp(-eta^2) is absorbed by the rule.
    """
    rule = gauss_hermite_rule(n_nodes)
    eta = rule.nodes
    plus = eta[None, :] + 0.5 * u[:, None]
    minus = eta[None, :] - 0.5 * u[:, None]
    ha = hermite_table(a, plus)[a]
    hb = hermite_table(b, minus)[b]
    integrand = ha * hb * np.exp(eta * eta)[None, :] * np.exp(1j * eta[None, :] * v[:, None])
    return integrand @ rule.weights


def matrix_coefficient(alpha, beta, lam, p: GroupPoint, s: HTypeStructure, n_nodes: int | None = None) -> np.ndarray:
    """E_ab^lam(p) through the projection onto H^d and 1-D quadrature."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=int))
    beta = np.atleast_1d(np.asarray(beta, dtype=int))
    if alpha.size != s.d or beta.size != s.d:
        raise ValueError("multi-indices must have length d")
    freq = lam if isinstance(lam, DualFrequency) else DualFrequency(lam)
    heis = to_heisenberg(p, freq, s)
    rho = freq.rho
    u = np.sqrt(rho) * np.atleast_2d(heis.x)
    zeta = np.atleast_1d(heis.z[..., 0])
    if n_nodes is None:
        span = float(np.max(np.abs(u))) if u.size else 0.0
        n_nodes = int(max(96, 2 * (alpha.max() + beta.max()) + 40 + 4 * span * span))
        n_nodes = min(n_nodes, 400)
    val = np.exp(1j * rho * zeta)
    for j in range(s.d):
        val = val * _coefficient_quadrature_1d(int(alpha[j]), int(beta[j]), u[:, j], u[:, j + s.d], n_nodes)
    return val.reshape(np.shape(heis.z)[:-1])


def matrix_coefficient_closed(alpha, beta, lam, p: GroupPoint, s: HTypeStructure) -> np.ndarray:
    """Same quantity as :func:`matrix_coefficient` from the closed-form table."""
    freq = lam if isinstance(lam, DualFrequency) else DualFrequency(lam)
    heis = to_heisenberg(p, freq, s)
    rho = freq.rho
    phi = special_hermite(alpha, beta, rho, heis.x)
    return np.exp(1j * rho * heis.z[..., 0]) * phi * (2 * pi) ** (s.d / 2) * rho ** (-s.d / 2)


def e_k_diag(k: int, lam, p: GroupPoint, s: HTypeStructure) -> np.ndarray:
    """Sum of E_aa^lam(p) over |alpha| = k."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    total = None
    for alpha in indices_of_order(s.d, k):
        term = matrix_coefficient(alpha, alpha, lam, p, s)
        total = term if total is None else total + term
    return total


def e_k_closed(k: int, lam, p: GroupPoint, s: HTypeStructure) -> np.ndarray:
    """exp(i lam.z) phi_k^{|lam|}(x), the closed form of :func:`e_k_diag`."""
    freq = lam if isinstance(lam, DualFrequency) else DualFrequency(lam)
    return np.exp(1j * (p.z @ freq.lam)) * laguerre_fn(k, freq.rho, p.x)


__all__ = [
    "QuadratureRule1D",
    "gauss_hermite_rule",
    "trapezoid_rule",
    "hermite_table",
    "hermite_1d",
    "multi_indices",
    "indices_of_order",
    "multiplicity",
    "multi_hermite",
    "apply_hermite_operator",
    "laguerre_scaled",
    "laguerre_fn",
    "heisenberg_coefficient_table",
    "special_hermite_table",
    "special_hermite",
    "matrix_coefficient",
    "matrix_coefficient_closed",
    "e_k_diag",
    "e_k_closed",
]
