"""Isentropic Euler with damping: pressure laws, coefficient matrices and transforms.

State arrays carry the three unknowns ``(rho, u1, u2)`` on their last axis;
characteristic arrays carry ``(v1, v2, v3)`` the same way.  Everything here
is a pure function and works on scalars or arbitrary leading grid shapes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SQRT_HALF = math.sqrt(2.0) / 2.0

#: Orthogonal involution that diagonalizes the x-coefficient matrix.
S0 = np.array(
    [
        [SQRT_HALF, SQRT_HALF, 0.0],
        [SQRT_HALF, -SQRT_HALF, 0.0],
        [0.0, 0.0, 1.0],
    ]
)

DEFAULT_RHO_FLOOR = 0.1
DEFAULT_TOL_EIG = 1e-10


class VacuumError(ValueError):
    """Total density fell to or below the vacuum floor."""


class DegenerateCharacteristicError(ValueError):
    """A characteristic speed normal to the boundary vanishes."""


@dataclass(frozen=True)
class PressureLaw:
    """Power law ``P(rho_hat) = kappa * rho_hat**gamma``."""

    gamma: float = 3.0
    kappa: float = 1.0 / 3.0

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError(f"gamma must be > 1, got {self.gamma}")
        if not self.kappa > 0.0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")

    @property
    def r2(self) -> float:
        return self.kappa * self.gamma

    @property
    def r(self) -> float:
        return math.sqrt(self.r2)


@dataclass(frozen=True)
class ModelParams:
    """Damping rate ``k``, boundary speed ``s`` and pressure law.

    The plain constructor accepts any real ``s`` (analysis of the boundary
    counting rule); use :meth:`solver` when the parameters drive a time
    integration, which is only supported for ``0 < s < r``.
    """

    k: float
    s: float
    pressure: PressureLaw = PressureLaw()

    def __post_init__(self):
        if not self.k > 0.0:
            raise ValueError(f"k must be > 0, got {self.k}")
        if not math.isfinite(self.s):
            raise ValueError(f"s must be finite, got {self.s}")

    @property
    def r(self) -> float:
        return self.pressure.r

    @classmethod
    def solver(cls, k: float, s: float, pressure: PressureLaw = PressureLaw()) -> "ModelParams":
        params = cls(k, s, pressure)
        params.require_solver_regime()
        return params

    def require_solver_regime(self):
        if not 0.0 < self.s < self.r:
            raise ValueError(f"s must satisfy 0 < s < r (r={self.r:.6g}), got s={self.s}")


@dataclass(frozen=True)
class CoeffMatrices:
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    s3: np.ndarray


def pressure_props(law: PressureLaw, rho_hat):
    """Return ``(P, P')`` at total density ``rho_hat``."""
    rho_hat = np.asarray(rho_hat, dtype=float)
    if np.any(rho_hat <= 0.0):
        raise VacuumError("pressure evaluated at non-positive total density")
    p = law.kappa * rho_hat**law.gamma
    dp = law.kappa * law.gamma * rho_hat ** (law.gamma - 1.0)
    if p.ndim == 0:
        return float(p), float(dp)
    return p, dp


def check_vacuum(rho, rho_floor: float = DEFAULT_RHO_FLOOR):
    rho = np.asarray(rho)
    if np.any(1.0 + rho < rho_floor):
        worst = float(np.min(1.0 + rho))
        raise VacuumError(f"total density {worst:.6g} below vacuum floor {rho_floor}")


def b_coefficient(law: PressureLaw, rho, rho_floor: float = DEFAULT_RHO_FLOOR):
    """``r**2 - P'(1 + rho) / (1 + rho)``; vanishes at ``rho = 0``."""
    check_vacuum(rho, rho_floor)
    rho_hat = 1.0 + np.asarray(rho, dtype=float)
    # kappa*gamma*rho_hat**(gamma-2) == P'(rho_hat)/rho_hat, without the division
    b = law.r2 * (1.0 - rho_hat ** (law.gamma - 2.0))
    if b.ndim == 0:
        return float(b)
    return b


def assemble_matrices(params: ModelParams) -> CoeffMatrices:
    s, r, k = params.s, params.r, params.k
    a1 = np.array([[-s, r, 0.0], [r, -s, 0.0], [0.0, 0.0, -s]])
    a2 = np.array([[0.0, 0.0, r], [0.0, 0.0, 0.0], [r, 0.0, 0.0]])
    a3 = np.diag([0.0, k, k])
    s0 = S0.copy()
    return CoeffMatrices(
        a1=a1,
        a2=a2,
        a3=a3,
        s0=s0,
        s1=s0 @ a1 @ s0,
        s2=s0 @ a2 @ s0,
        s3=s0 @ a3 @ s0,
    )


def characteristic_speeds(params: ModelParams) -> np.ndarray:
    """Diagonal of ``S0 A1 S0``: x-speeds of ``(v1, v2, v3)``."""
    s, r = params.s, params.r
    return np.array([-s + r, -s - r, -s])


def count_incoming_characteristics(params: ModelParams, tol_eig: float = DEFAULT_TOL_EIG):
    """Number of boundary conditions needed at ``x = 0`` and what they prescribe.

    Each strictly positive x-speed carries information into the half space,
    so one linear combination of ``(rho, u1, u2)`` (a row of ``S0``) must be
    given at the boundary per positive speed.
    """
    speeds = characteristic_speeds(params)
    if np.any(np.abs(speeds) < tol_eig):
        raise DegenerateCharacteristicError(
            f"characteristic boundary: speeds {speeds.tolist()} contain a zero "
            f"(s={params.s}, r={params.r})"
        )
    incoming = np.flatnonzero(speeds > 0.0)
    return int(incoming.size), [S0[i].copy() for i in incoming]


def to_diagonal(w):
    """``V = S0 W`` along the last axis."""
    return np.asarray(w, dtype=float) @ S0


def from_diagonal(v):
    """Inverse of :func:`to_diagonal`; ``S0`` is its own inverse."""
    return np.asarray(v, dtype=float) @ S0


def nonlinear_terms(w, grad_w, law: PressureLaw, rho_floor: float = DEFAULT_RHO_FLOOR):
    """Right-hand side ``H`` of the scaled system.

    Parameters
    ----------
    w : array (..., 3)
        ``(rho, u1, u2)``.
    grad_w : array (..., 3, 2)
        ``grad_w[..., c, 0]`` is the x-derivative of component ``c``,
        ``grad_w[..., c, 1]`` the y-derivative.
    """
    w = np.asarray(w, dtype=float)
    g = np.asarray(grad_w, dtype=float)
    r = law.r
    rho, u1, u2 = w[..., 0], w[..., 1], w[..., 2]
    b = b_coefficient(law, rho, rho_floor)
    div_rho_u = g[..., 0, 0] * u1 + g[..., 0, 1] * u2 + rho * (g[..., 1, 0] + g[..., 2, 1])
    h = np.empty_like(w)
    h[..., 0] = -r * div_rho_u
    h[..., 1] = -r * (u1 * g[..., 1, 0] + u2 * g[..., 1, 1]) + b / r * g[..., 0, 0]
    h[..., 2] = -r * (u1 * g[..., 2, 0] + u2 * g[..., 2, 1]) + b / r * g[..., 0, 1]
    return h


def physical_to_scaled(rho_tilde, u_tilde, params: ModelParams):
    """Map total density and physical velocity to the scaled perturbation."""
    rho_tilde = np.asarray(rho_tilde, dtype=float)
    u_tilde = np.asarray(u_tilde, dtype=float)
    if np.any(rho_tilde <= 0.0):
        raise VacuumError("total density must be positive")
    w = np.empty(rho_tilde.shape + (3,))
    w[..., 0] = rho_tilde - 1.0
    w[..., 1:] = u_tilde / params.r
    return w


def scaled_to_physical(w, params: ModelParams):
    """Inverse of :func:`physical_to_scaled`; returns ``(rho_tilde, u_tilde)``."""
    w = np.asarray(w, dtype=float)
    rho_tilde = w[..., 0] + 1.0
    if np.any(rho_tilde <= 0.0):
        raise VacuumError("total density must be positive")
    return rho_tilde, w[..., 1:] * params.r


def wedge_map(x_tilde, t, params: ModelParams):
    """Fix the moving boundary ``x_tilde = s t`` at ``x = 0``."""
    return x_tilde - params.s * t
