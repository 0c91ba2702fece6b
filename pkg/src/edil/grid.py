"""Truncated half-space grid, stencils and the discrete norms built on them.

Arrays are indexed ``[i, j, ...]`` with ``i`` along x (node 0 on the wall
``x = 0``) and ``j`` along the periodic y direction.  Trailing axes (state
components, derivative slots) are carried through untouched.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import DEFAULT_RHO_FLOOR, check_vacuum

DUMP_MAGIC = b"EDIL1"
_DUMP_HEADER = struct.Struct("<5sQQddd")

DEFAULT_K_CAP = 2
MAX_K_CAP = 4

BIASES = ("left", "right", "centered")


@dataclass(frozen=True)
class Grid2D:
    lx: float
    ly: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError("lx and ly must be positive")
        if self.nx < 8 or self.ny < 8:
            raise ValueError("nx and ny must be at least 8")

    @property
    def dx(self) -> float:
        return self.lx / (self.nx - 1)

    @property
    def dy(self) -> float:
        return 2.0 * self.ly / self.ny

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    @property
    def y(self) -> np.ndarray:
        return -self.ly + np.arange(self.ny) * self.dy

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    @property
    def shape(self):
        return (self.nx, self.ny)

    def x_weights(self) -> np.ndarray:
        w = np.full(self.nx, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w


@dataclass
class Field:
    """Grid samples of ``W = (rho, u1, u2)`` at one instant."""

    grid: Grid2D
    data: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape != (self.grid.nx, self.grid.ny, 3):
            raise ValueError(
                f"field data shape {self.data.shape} does not match grid "
                f"{(self.grid.nx, self.grid.ny, 3)}"
            )

    @classmethod
    def zeros(cls, grid: Grid2D, time: float = 0.0) -> "Field":
        return cls(grid, np.zeros((grid.nx, grid.ny, 3)), time)

    def copy(self) -> "Field":
        return Field(self.grid, self.data.copy(), self.time)

    def validate(self, rho_floor: float = DEFAULT_RHO_FLOOR):
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError("field contains non-finite values")
        check_vacuum(self.data[..., 0], rho_floor)


def _check_shape(a: np.ndarray, grid: Grid2D):
    if a.shape[:2] != (grid.nx, grid.ny):
        raise ValueError(f"array shape {a.shape[:2]} does not match grid {(grid.nx, grid.ny)}")


def derivative(a, axis: str, bias: str, grid: Grid2D) -> np.ndarray:
    """First derivative along ``axis`` ("x" or "y").

    ``bias="left"`` takes the backward difference (information arriving from
    smaller coordinates), ``"right"`` the forward difference, both first
    order.  ``"centered"`` is second order.  At the x ends, where a stencil
    would leave the grid, a one-sided stencil of the same order is used; y is
    periodic.
    """
    a = np.asarray(a, dtype=float)
    _check_shape(a, grid)
    if bias not in BIASES:
        raise ValueError(f"unknown bias {bias!r}")

    if axis == "y":
        h = grid.dy
        if bias == "left":
            return (a - np.roll(a, 1, axis=1)) / h
        if bias == "right":
            return (np.roll(a, -1, axis=1) - a) / h
        return (np.roll(a, -1, axis=1) - np.roll(a, 1, axis=1)) / (2.0 * h)

    if axis != "x":
        raise ValueError(f"unknown axis {axis!r}")
    h = grid.dx
    out = np.empty_like(a)
    if bias == "left":
        out[1:] = (a[1:] - a[:-1]) / h
        out[0] = (a[1] - a[0]) / h
    elif bias == "right":
        out[:-1] = (a[1:] - a[:-1]) / h
        out[-1] = (a[-1] - a[-2]) / h
    else:
        out[1:-1] = (a[2:] - a[:-2]) / (2.0 * h)
        out[0] = (-3.0 * a[0] + 4.0 * a[1] - a[2]) / (2.0 * h)
        out[-1] = (3.0 * a[-1] - 4.0 * a[-2] + a[-3]) / (2.0 * h)
    return out


def gradient(a, grid: Grid2D) -> np.ndarray:
    """Centered gradient; a new last axis holds ``(d/dx, d/dy)``."""
    return np.stack(
        [derivative(a, "x", "centered", grid), derivative(a, "y", "centered", grid)], axis=-1
    )


def l2_norm_sq(a, grid: Grid2D) -> float:
    """Trapezoid in x, uniform in periodic y; trailing axes are summed."""
    a = np.asarray(a, dtype=float)
    _check_shape(a, grid)
    sq = a * a
    if sq.ndim > 2:
        sq = sq.reshape(grid.nx, grid.ny, -1).sum(axis=-1)
    return float(grid.x_weights() @ sq.sum(axis=1) * grid.dy)


def mixed_derivatives(a, order: int, grid: Grid2D):
    """All ``d^p/dx^p d^q/dy^q a`` with ``p + q == order``, centered."""
    out = []
    for p in range(order, -1, -1):
        d = np.asarray(a, dtype=float)
        for _ in range(p):
            d = derivative(d, "x", "centered", grid)
        for _ in range(order - p):
            d = derivative(d, "y", "centered", grid)
        out.append(d)
    return out


def check_order(order: int, cap: int = DEFAULT_K_CAP):
    if cap > MAX_K_CAP:
        raise ValueError(f"derivative cap {cap} exceeds hard limit {MAX_K_CAP}")
    if order < 0 or order > cap:
        raise ValueError(f"derivative order {order} outside [0, {cap}]")
    if order > DEFAULT_K_CAP:
        warnings.warn(
            f"order-{order} finite-difference norms are dominated by discretization noise",
            RuntimeWarning,
            stacklevel=3,
        )


def hk_norm_sq(a, order: int, grid: Grid2D, cap: int = DEFAULT_K_CAP) -> float:
    """Discrete ``||a||_order^2``: sum of L2 norms of every mixed derivative up to ``order``."""
    check_order(order, cap)
    total = 0.0
    for kk in range(order + 1):
        total += sum(l2_norm_sq(d, grid) for d in mixed_derivatives(a, kk, grid))
    return total


def boundary_trace_norm_sq(a, grid: Grid2D) -> float:
    """Periodic quadrature of the ``x = 0`` row, trailing axes summed."""
    a = np.asarray(a, dtype=float)
    _check_shape(a, grid)
    return float(np.sum(a[0] * a[0]) * grid.dy)


@dataclass(frozen=True)
class Accumulator:
    """Running trapezoid integral over time of a sampled scalar."""

    value: float = 0.0
    last_t: float | None = None
    last_sample: float | None = field(default=None, repr=False)


def accumulate(acc: Accumulator, sample: float, t: float) -> Accumulator:
    if acc.last_t is None:
        return Accumulator(0.0, t, sample)
    if t < acc.last_t:
        raise ValueError(f"time went backwards: {t} < {acc.last_t}")
    value = acc.value + 0.5 * (t - acc.last_t) * (sample + acc.last_sample)
    return Accumulator(value, t, sample)


def write_dump(path, f: Field):
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(_DUMP_HEADER.pack(DUMP_MAGIC, g.nx, g.ny, g.lx, g.ly, f.time))
        fh.write(np.ascontiguousarray(f.data, dtype="<f8").tobytes())


def read_dump(path) -> Field:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, nx, ny, lx, ly, t = _DUMP_HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    data = np.frombuffer(raw, dtype="<f8", offset=_DUMP_HEADER.size)
    if data.size != nx * ny * 3:
        raise ValueError(f"{path}: expected {nx * ny * 3} values, found {data.size}")
    return Field(Grid2D(lx, ly, nx, ny), data.reshape(nx, ny, 3).astype(float), t)
