"""H-type group structure: group law, dilations, J-maps and the projection
onto the Heisenberg group.

Coordinates are exponential coordinates ``(x, z)`` with ``x`` in R^{2d}
(horizontal layer) and ``z`` in R^m (centre).  The bracket matrices
``L[a]`` encode ``[e_i, e_j] = sum_a L[a][i, j] f_a``, so the product is

    (x, z) . (x', z') = (x + x', z_a + z'_a + 1/2 x^T L[a] x').

All functions accept batched points: the trailing axis holds the
coordinates, leading axes are broadcast.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class StructureError(ValueError):
    """Raised when bracket matrices do not define a valid H-type group."""


@dataclass(frozen=True)
class HTypeStructure:
    """Dimensions and bracket matrices of a step-2 group.

    Parameters
    ----------
    d : int
        Half the horizontal rank.
    m : int
        Dimension of the centre.
    brackets : ndarray, shape (m, 2d, 2d)
        Antisymmetric structure matrices.
    """

    d: int
    m: int
    brackets: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.d < 1 or self.m < 1:
            raise StructureError("d and m must be positive integers")
        mats = np.asarray(self.brackets, dtype=float)
        if mats.shape != (self.m, 2 * self.d, 2 * self.d):
            raise StructureError(
                f"brackets must have shape {(self.m, 2 * self.d, 2 * self.d)}, got {mats.shape}"
            )
        mats = mats.copy()
        mats.setflags(write=False)
        object.__setattr__(self, "brackets", mats)

    @property
    def horizontal_dim(self) -> int:
        return 2 * self.d

    @property
    def homogeneous_dim(self) -> int:
        return 2 * self.d + 2 * self.m

    @property
    def is_heisenberg(self) -> bool:
        return self.m == 1 and np.array_equal(self.brackets[0], _heisenberg_bracket(self.d))

    def to_json(self) -> str:
        payload: dict = {"d": self.d, "m": self.m}
        if not self.is_heisenberg:
            payload["L"] = [mat.tolist() for mat in self.brackets]
        return json.dumps(payload)

    def to_dict(self) -> dict:
        return json.loads(self.to_json())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HTypeStructure):
            return NotImplemented
        return self.d == other.d and self.m == other.m and np.array_equal(self.brackets, other.brackets)

    def __hash__(self) -> int:
        return hash((self.d, self.m, self.brackets.tobytes()))


def _heisenberg_bracket(d: int) -> np.ndarray:
    eye = np.eye(d)
    zero = np.zeros((d, d))
    return np.block([[zero, eye], [-eye, zero]])


def heisenberg(d: int = 1) -> HTypeStructure:
    """Heisenberg group H^d with [X_j, Y_j] = Z."""
    return HTypeStructure(d, 1, _heisenberg_bracket(d)[None])


def quaternionic(copies: int = 1) -> HTypeStructure:
    """Quaternionic H-type group with centre R^3 and horizontal layer H^copies.

    The brackets are left multiplication by the imaginary units i, j, k on
    each quaternion block, so d = 2 * copies.
    """
    qi = np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], dtype=float)
    qj = np.array([[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]], dtype=float)
    qk = np.array([[0, 0, 0, -1], [0, 0, -1, 0], [0, 1, 0, 0], [1, 0, 0, 0]], dtype=float)
    mats = np.stack([np.kron(np.eye(copies), q) for q in (qi, qj, qk)])
    return HTypeStructure(2 * copies, 3, mats)


def structure_from_dict(payload: dict) -> HTypeStructure:
    try:
        d = int(payload["d"])
        m = int(payload["m"])
    except (KeyError, TypeError, ValueError) as exc:
        raise StructureError(f"structure needs integer fields 'd' and 'm': {exc}") from exc
    if "L" not in payload or payload["L"] is None:
        if m != 1:
            raise StructureError("'L' may only be omitted for the Heisenberg case m=1")
        return heisenberg(d)
    return HTypeStructure(d, m, np.asarray(payload["L"], dtype=float))


def structure_from_json(text: str) -> HTypeStructure:
    return structure_from_dict(json.loads(text))


@dataclass(frozen=True)
class GroupPoint:
    """A point (x, z); arrays may carry leading batch axes."""

    x: np.ndarray
    z: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.z))):
            raise ValueError("group point coordinates must be finite")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x, self.z], axis=-1)


@dataclass(frozen=True)
class DualFrequency:
    """Nonzero element lambda of the dual of the centre."""

    lam: np.ndarray

    def __post_init__(self) -> None:
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        if lam.ndim != 1:
            raise ValueError("lambda must be a vector")
        if not np.all(np.isfinite(lam)) or np.linalg.norm(lam) == 0.0:
            raise ValueError("lambda must be finite and nonzero")
        object.__setattr__(self, "lam", lam)

    @property
    def rho(self) -> float:
        return float(np.linalg.norm(self.lam))

    @property
    def omega(self) -> np.ndarray:
        return self.lam / self.rho


def _check_point(p: GroupPoint, s: HTypeStructure) -> None:
    if p.x.shape[-1] != s.horizontal_dim or p.z.shape[-1] != s.m:
        raise ValueError(
            f"point dimensions ({p.x.shape[-1]}, {p.z.shape[-1]}) do not match structure "
            f"({s.horizontal_dim}, {s.m})"
        )


def bracket_form(x: np.ndarray, y: np.ndarray, s: HTypeStructure) -> np.ndarray:
    """Vector of x^T L[a] y over a, broadcast over leading axes."""
    return np.einsum("...i,aij,...j->...a", x, s.brackets, y)


def group_multiply(a: GroupPoint, b: GroupPoint, s: HTypeStructure) -> GroupPoint:
    _check_point(a, s)
    _check_point(b, s)
    return GroupPoint(a.x + b.x, a.z + b.z + 0.5 * bracket_form(a.x, b.x, s))


def group_inverse(p: GroupPoint) -> GroupPoint:
    return GroupPoint(-p.x, -p.z)


def dilate(p: GroupPoint, lam_scale: float) -> GroupPoint:
    if not lam_scale > 0:
        raise ValueError("dilation factor must be positive")
    return GroupPoint(lam_scale * p.x, lam_scale**2 * p.z)


def j_map(mu: DualFrequency | np.ndarray, s: HTypeStructure) -> np.ndarray:
    """Skew map J_mu with g(J_mu X, Y) = <mu, [X, Y]>.

    In coordinates this is sum_a mu_a L[a]^T, which makes the Heisenberg
    map equal to the standard symplectic block [[0, -I], [I, 0]].
    """
    vec = mu.lam if isinstance(mu, DualFrequency) else DualFrequency(mu).lam
    if vec.shape != (s.m,):
        raise ValueError(f"frequency must have length {s.m}")
    return np.einsum("a,aji->ij", vec, s.brackets)


def standard_symplectic(d: int) -> np.ndarray:
    eye = np.eye(d)
    zero = np.zeros((d, d))
    return np.block([[zero, -eye], [eye, zero]])


def diagonalize_j(lam: DualFrequency | np.ndarray, s: HTypeStructure, tol: float = 1e-10) -> np.ndarray:
    """Orthogonal T with J_lam = |lam| T J T^{-1}.

    Columns are built as pairs (u_j, J_omega u_j), where u_j is the
    normalized residual of the first standard basis vector (lowest index
    with the largest residual) outside the span of the previous pairs.
    The choice is deterministic and gives T = I for Heisenberg, lam > 0.
    """
    freq = lam if isinstance(lam, DualFrequency) else DualFrequency(lam)
    jw = j_map(freq.omega, s)
    n = s.horizontal_dim
    resid = float(np.max(np.abs(jw @ jw + np.eye(n))))
    if resid > 1e-8:
        raise StructureError(f"J_omega^2 != -I (residual {resid:.3e}); no symplectic rotation exists")
    d = s.d
    cols_u: list[np.ndarray] = []
    cols_v: list[np.ndarray] = []
    basis = np.eye(n)
    for _ in range(d):
        span = np.array(cols_u + cols_v).reshape(-1, n)
        best, best_norm = None, -1.0
        for e in basis:
            r = e - span.T @ (span @ e) if span.size else e.copy()
            nrm = float(np.linalg.norm(r))
            if nrm > best_norm + tol:
                best, best_norm = r, nrm
        u = best / best_norm
        v = jw @ u
        cols_u.append(u)
        cols_v.append(v)
    return np.column_stack(cols_u + cols_v)


def to_heisenberg(p: GroupPoint, lam: DualFrequency | np.ndarray, s: HTypeStructure) -> GroupPoint:
    """The homomorphism (x, z) -> (T_lam^{-1} x, omega . z) onto H^d."""
    _check_point(p, s)
    freq = lam if isinstance(lam, DualFrequency) else DualFrequency(lam)
    rot = diagonalize_j(freq, s)
    return GroupPoint(p.x @ rot, (p.z @ freq.omega)[..., None])


@dataclass
class ValidationReport:
    passed: bool
    max_residual: float
    messages: list[str]
    witness: np.ndarray | None = None


def validate_htype(s: HTypeStructure, n_samples: int = 64, seed: int = 0, tol: float = 1e-10) -> ValidationReport:
    """Check antisymmetry, linear independence and J_mu^2 = -|mu|^2 I."""
    messages: list[str] = []
    passed = True
    anti = float(max(np.max(np.abs(mat + mat.T)) for mat in s.brackets))
    if anti > tol:
        passed = False
        messages.append(f"brackets not antisymmetric (residual {anti:.3e})")
    flat = s.brackets.reshape(s.m, -1)
    if np.linalg.matrix_rank(flat) < s.m:
        passed = False
        messages.append("bracket matrices are linearly dependent")
    rng = np.random.default_rng(seed)
    samples = rng.standard_normal((n_samples, s.m))
    samples /= np.linalg.norm(samples, axis=1, keepdims=True)
    eye = np.eye(s.horizontal_dim)
    worst, witness = 0.0, None
    for mu in samples:
        jm = np.einsum("a,aji->ij", mu, s.brackets)
        res = float(np.max(np.abs(jm @ jm + eye)))
        if res > worst:
            worst, witness = res, mu
    if worst > tol:
        passed = False
        messages.append(f"J_mu^2 = -|mu|^2 I violated, residual {worst:.3e}")
    max_res = max(anti, worst)
    return ValidationReport(passed, max_res, messages, None if passed else witness)


def random_points(s: HTypeStructure, n: int, rng: np.random.Generator, scale: float = 1.0) -> GroupPoint:
    return GroupPoint(scale * rng.standard_normal((n, s.horizontal_dim)), scale * rng.standard_normal((n, s.m)))


def sphere_points(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    pts = rng.standard_normal((n, m))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


__all__: Sequence[str] = [
    "StructureError",
    "HTypeStructure",
    "GroupPoint",
    "DualFrequency",
    "ValidationReport",
    "heisenberg",
    "quaternionic",
    "structure_from_dict",
    "structure_from_json",
    "bracket_form",
    "group_multiply",
    "group_inverse",
    "dilate",
    "j_map",
    "standard_symplectic",
    "diagonalize_j",
    "to_heisenberg",
    "validate_htype",
    "random_points",
    "sphere_points",
]
