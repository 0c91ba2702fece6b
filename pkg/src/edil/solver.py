"""Finite-difference solver for the damped isentropic system on the half space.

Spatial scheme: first-order upwinding of each characteristic variable in x,
global Lax-Friedrichs splitting in y, pointwise damping and nonlinear terms.
Time stepping is Heun (SSP-RK2) with the boundary closure imposed after each
stage.

The characteristic x-speeds are ``r - s > 0`` for ``v1`` and ``-(s + r)``,
``-s`` for ``v2``, ``v3``.  So ``v1`` enters through ``x = 0`` (where it is
set to zero) and leaves through ``x = lx``; ``v2`` and ``v3`` leave through
``x = 0`` and are set to the far-field value zero at ``x = lx``.  Outgoing
variables need no closure: the upwind stencil at the exit node only looks
inside the domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .grid import Field, Grid2D, derivative, gradient, hk_norm_sq, l2_norm_sq
from .model import (
    DEFAULT_RHO_FLOOR,
    SQRT_HALF,
    ModelParams,
    VacuumError,
    check_vacuum,
    nonlinear_terms,
)

BLOWUP_LIMIT = 1e6
COMPAT_TOL = 1e-12


class SolverError(RuntimeError):
    """Time integration aborted; carries where and when it happened."""

    def __init__(self, message, step=None, time=None, node=None):
        detail = []
        if step is not None:
            detail.append(f"step={step}")
        if time is not None:
            detail.append(f"t={time:.6g}")
        if node is not None:
            detail.append(f"node={tuple(int(n) for n in node)}")
        super().__init__(message + (f" ({', '.join(detail)})" if detail else ""))
        self.step = step
        self.time = time
        self.node = node


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class MmsDescriptor:
    """Manufactured target ``W*(x, y, t) = A (1 + sin(omega t)/2) b(x) b(y) weights``.

    ``b`` is the compactly supported ``(1 - z**2)**4`` bump, so ``W*`` and its
    first three derivatives vanish at the wall and the characteristic
    boundary condition holds exactly.
    """

    amplitude: float
    xc: float
    yc: float
    wx: float
    wy: float
    weights: tuple = (1.0, 0.5, -0.5)
    omega: float = 1.0

    @classmethod
    def for_grid(cls, grid: Grid2D, amplitude: float) -> "MmsDescriptor":
        return cls(amplitude, 0.5 * grid.lx, 0.0, 0.3 * grid.lx, 0.5 * grid.ly)

    def _profile(self, x, y):
        bx, dbx = bump((x - self.xc) / self.wx, 4)
        by, dby = bump((y - self.yc) / self.wy, 4)
        return bx * by, dbx / self.wx * by, bx * dby / self.wy

    def exact(self, x, y, t):
        phi, _, _ = self._profile(x, y)
        g = 1.0 + 0.5 * math.sin(self.omega * t)
        return self.amplitude * g * phi[..., None] * np.asarray(self.weights)

    def derivatives(self, x, y, t):
        """``(W*, dW*/dt, grad W*)`` with the gradient laid out as ``(..., 3, 2)``."""
        phi, phix, phiy = self._profile(x, y)
        wts = np.asarray(self.weights)
        g = 1.0 + 0.5 * math.sin(self.omega * t)
        gt = 0.5 * self.omega * math.cos(self.omega * t)
        a = self.amplitude
        w = a * g * phi[..., None] * wts
        wt = a * gt * phi[..., None] * wts
        grad = a * g * np.stack([phix[..., None] * wts, phiy[..., None] * wts], axis=-1)
        return w, wt, grad


@dataclass
class RunConfig:
    cfl: float = 0.45
    t_final: float = 1.0
    rho_floor: float = DEFAULT_RHO_FLOOR
    mms: Optional[MmsDescriptor] = None
    cadence: int = 10
    nonlinear: bool = True

    def __post_init__(self):
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError(f"cfl must be in (0, 1], got {self.cfl}")
        if not self.t_final > 0.0:
            raise ValueError(f"t_final must be > 0, got {self.t_final}")
        if self.cadence < 1:
            raise ValueError(f"cadence must be >= 1, got {self.cadence}")
        if not 0.0 < self.rho_floor < 1.0:
            raise ValueError(f"rho_floor must be in (0, 1), got {self.rho_floor}")


def bump(z, power: int = 3):
    """``(1 - z**2)**power`` on ``|z| < 1``, zero outside, with its derivative."""
    z = np.asarray(z, dtype=float)
    inside = np.abs(z) < 1.0
    base = np.where(inside, 1.0 - z * z, 0.0)
    val = base**power
    dval = np.where(inside, -2.0 * power * z * base ** (power - 1), 0.0)
    return val, dval


# --- spatial operator -------------------------------------------------------


def transport_tendency(data: np.ndarray, grid: Grid2D, params: ModelParams) -> np.ndarray:
    """``-(A1 W_x + A2 W_y + A3 W)`` discretized; the linear part of the system."""
    s, r, k = params.s, params.r, params.k
    rho, u1, u2 = data[..., 0], data[..., 1], data[..., 2]
    v1 = SQRT_HALF * (rho + u1)
    v2 = SQRT_HALF * (rho - u1)

    # characteristic transport in x: v_t + c v_x = 0
    dv1 = -(r - s) * derivative(v1, "x", "left", grid)
    dv2 = (s + r) * derivative(v2, "x", "right", grid)
    dv3 = s * derivative(u2, "x", "right", grid)

    out = np.empty_like(data)
    out[..., 0] = SQRT_HALF * (dv1 + dv2)
    out[..., 1] = SQRT_HALF * (dv1 - dv2)
    out[..., 2] = dv3

    # y: centered flux difference plus Lax-Friedrichs dissipation at speed r
    up = np.roll(data, -1, axis=1)
    dn = np.roll(data, 1, axis=1)
    half_dy = 0.5 / grid.dy
    out += r * half_dy * (up - 2.0 * data + dn)
    out[..., 0] -= r * half_dy * (up[..., 2] - dn[..., 2])
    out[..., 2] -= r * half_dy * (up[..., 0] - dn[..., 0])

    out[..., 1] -= k * u1
    out[..., 2] -= k * u2
    return out


def state_gradient(data: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Centered gradient of all components, shaped ``(nx, ny, 3, 2)``."""
    return gradient(data, grid)


def compute_rhs(
    f: Field,
    params: ModelParams,
    *,
    nonlinear: bool = True,
    rho_floor: float = DEFAULT_RHO_FLOOR,
    forcing: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Tendency ``dW/dt`` of the semi-discrete system (boundary rows included)."""
    data = f.data
    if not np.all(np.isfinite(data)):
        raise SolverError("non-finite value in state", time=f.time)
    check_vacuum(data[..., 0], rho_floor)
    out = transport_tendency(data, f.grid, params)
    if nonlinear:
        out += nonlinear_terms(data, state_gradient(data, f.grid), params.pressure, rho_floor)
    if forcing is not None:
        out += forcing
    return out


def cfl_dt(grid: Grid2D, params: ModelParams, cfl: float) -> float:
    return cfl / ((abs(params.s) + params.r) / grid.dx + params.r / grid.dy)


def impose_boundary(data: np.ndarray) -> np.ndarray:
    """In-place characteristic closure on a raw ``(nx, ny, 3)`` array."""
    # x = 0: v1 = 0, keep v2 and v3
    half_diff = 0.5 * (data[0, :, 0] - data[0, :, 1])
    data[0, :, 0] = half_diff
    data[0, :, 1] = -half_diff
    # x = lx: v2 = v3 = 0, keep v1
    half_sum = 0.5 * (data[-1, :, 0] + data[-1, :, 1])
    data[-1, :, 0] = half_sum
    data[-1, :, 1] = half_sum
    data[-1, :, 2] = 0.0
    return data


def apply_boundary(f: Field, params: ModelParams | None = None) -> Field:
    return Field(f.grid, impose_boundary(f.data.copy()), f.time)


def heun_step(data, t, dt, tendency: Callable[[np.ndarray, float], np.ndarray]):
    """One SSP-RK2 step; returns ``(new_state, predictor)``."""
    pred = impose_boundary(data + dt * tendency(data, t))
    new = impose_boundary(0.5 * (data + pred + dt * tendency(pred, t + dt)))
    return new, pred


def _guard(data, step_index, t):
    finite = np.isfinite(data)
    if not np.all(finite):
        node = np.argwhere(~finite)[0][:2]
        raise SolverError("non-finite value", step=step_index, time=t, node=node)
    mag = np.abs(data)
    peak = float(mag.max())
    if peak > BLOWUP_LIMIT:
        node = np.unravel_index(int(np.argmax(mag)), data.shape)[:2]
        raise SolverError(f"blow-up: |W| = {peak:.3g} exceeds {BLOWUP_LIMIT:g}",
                          step=step_index, time=t, node=node)


def make_tendency(grid: Grid2D, params: ModelParams, config: RunConfig):
    mms = config.mms
    x, y = grid.mesh()

    def tendency(data, t):
        forcing = None
        if mms is not None:
            forcing = mms_forcing(mms, x, y, t, params, config.rho_floor, config.nonlinear)
        return compute_rhs(Field(grid, data, t), params, nonlinear=config.nonlinear,
                           rho_floor=config.rho_floor, forcing=forcing)

    return tendency


def step(f: Field, params: ModelParams, config: RunConfig, dt: float | None = None,
         *, step_index: int | None = None, tendency=None) -> Field:
    """Advance one Heun step; the wall condition holds exactly on return."""
    if dt is None:
        dt = cfl_dt(f.grid, params, config.cfl)
    if tendency is None:
        tendency = make_tendency(f.grid, params, config)
    try:
        new, _ = heun_step(f.data, f.time, dt, tendency)
    except VacuumError as exc:
        raise SolverError(f"vacuum guard: {exc}", step=step_index, time=f.time) from exc
    _guard(new, step_index, f.time + dt)
    return Field(f.grid, new, f.time + dt)


def check_compatibility(f: Field, tol: float = COMPAT_TOL):
    trace = np.abs(f.data[0, :, 0] + f.data[0, :, 1])
    if trace.max() > tol:
        raise PreconditionError(
            f"initial data violate (rho + u1)|x=0 = 0: max |rho + u1| = {trace.max():.3g}"
        )


@dataclass
class RunResult:
    field: Field
    n_steps: int
    dt: float
    monitors: Sequence = field(default_factory=list)


def step_schedule(t0: float, t_final: float, dt_max: float):
    """Uniform step count and size covering ``[t0, t_final]`` without exceeding ``dt_max``."""
    span = t_final - t0
    n = max(1, math.ceil(span / dt_max - 1e-9))
    return n, span / n


def run(initial: Field, params: ModelParams, config: RunConfig,
        monitors: Sequence[Callable[[Field, int], None]] = ()) -> RunResult:
    """Integrate to ``config.t_final``, calling each monitor every ``cadence`` steps."""
    params.require_solver_regime()
    check_compatibility(initial)
    initial.validate(config.rho_floor)
    n_steps, dt = step_schedule(initial.time, config.t_final, cfl_dt(initial.grid, params, config.cfl))
    tendency = make_tendency(initial.grid, params, config)

    f = initial.copy()
    for mon in monitors:
        mon(f, 0)
    for n in range(1, n_steps + 1):
        f = step(f, params, config, dt, step_index=n, tendency=tendency)
        if n == n_steps:
            f.time = config.t_final
        if n % config.cadence == 0 or n == n_steps:
            for mon in monitors:
                mon(f, n)
    return RunResult(f, n_steps, dt, list(monitors))


# --- manufactured solutions ---------------------------------------------------


def mms_forcing(desc: MmsDescriptor, x, y, t, params: ModelParams,
                rho_floor: float = DEFAULT_RHO_FLOOR, nonlinear: bool = True):
    """Source making ``desc`` an exact solution: ``W*_t + A1 W*_x + A2 W*_y + A3 W* - H(W*)``."""
    s, r, k = params.s, params.r, params.k
    w, wt, g = desc.derivatives(x, y, t)
    wx, wy = g[..., 0], g[..., 1]
    f = wt.copy()
    f[..., 0] += -s * wx[..., 0] + r * wx[..., 1] + r * wy[..., 2]
    f[..., 1] += r * wx[..., 0] - s * wx[..., 1] + k * w[..., 1]
    f[..., 2] += -s * wx[..., 2] + r * wy[..., 0] + k * w[..., 2]
    if nonlinear:
        f -= nonlinear_terms(w, g, params.pressure, rho_floor)
    return f


def mms_initial(desc: MmsDescriptor, grid: Grid2D, t: float = 0.0) -> Field:
    x, y = grid.mesh()
    return Field(grid, desc.exact(x, y, t), t)


def mms_error(f: Field, desc: MmsDescriptor) -> float:
    """L2 distance between a field and the manufactured target at the field's time."""
    x, y = f.grid.mesh()
    return math.sqrt(l2_norm_sq(f.data - desc.exact(x, y, f.time), f.grid))


# --- initial data -------------------------------------------------------------


def _scale_to_delta(data: np.ndarray, grid: Grid2D, delta: float, order: int) -> np.ndarray:
    impose_compatibility(data)
    if delta == 0.0:
        return np.zeros_like(data)
    norm = math.sqrt(hk_norm_sq(data, order, grid))
    if norm == 0.0:
        raise ValueError("bump profile vanishes on the grid; check centers and widths")
    return data * (delta / norm)


def impose_compatibility(data: np.ndarray) -> np.ndarray:
    """Correct ``u1`` on the wall row so that ``rho + u1 = 0`` there."""
    data[0, :, 1] = -data[0, :, 0]
    return data


def bump_data(grid: Grid2D, delta: float, center=(3.0, 0.0), width=(1.5, 1.5),
              weights=(1.0, 0.5, -0.5), order: int = 2) -> Field:
    """Tensor-product C2 bump with ``||W||_order = delta``."""
    x, y = grid.mesh()
    bx, _ = bump((x - center[0]) / width[0], 3)
    by, _ = bump((y - center[1]) / width[1], 3)
    data = (bx * by)[..., None] * np.asarray(weights, dtype=float)
    return Field(grid, _scale_to_delta(data, grid, delta, order))


def random_bump_data(grid: Grid2D, delta: float, n_bumps: int = 3, seed: int = 0,
                     order: int = 2) -> Field:
    """Sum of seeded random bumps kept away from the x ends, scaled to ``delta``."""
    rng = np.random.default_rng(seed)
    x, y = grid.mesh()
    data = np.zeros((grid.nx, grid.ny, 3))
    for _ in range(n_bumps):
        wx = rng.uniform(0.08, 0.2) * grid.lx
        wy = rng.uniform(0.1, 0.3) * grid.ly
        xc = rng.uniform(wx, grid.lx - wx)
        yc = rng.uniform(-0.5 * grid.ly, 0.5 * grid.ly)
        amp = rng.normal(size=3)
        bx, _ = bump((x - xc) / wx, 3)
        by, _ = bump((y - yc) / wy, 3)
        data += (bx * by)[..., None] * amp
    return Field(grid, _scale_to_delta(data, grid, delta, order))
