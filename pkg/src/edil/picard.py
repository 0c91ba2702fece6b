"""Picard iteration for local existence: frozen-coefficient linear problems.

Iterate ``m + 1`` solves the linear system whose transport coefficients are
frozen at iterate ``m``.  All iterates share one uniform time grid; for each
Heun step the frozen coefficients are the iterate-``m`` states at the two
stage times.  Besides the states, each trajectory keeps its Heun predictors
so that the difference system can be replayed exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid import Field, Grid2D, l2_norm_sq
from .model import DEFAULT_RHO_FLOOR, ModelParams, b_coefficient, check_vacuum
from .solver import (
    RunConfig,
    SolverError,
    _guard,
    cfl_dt,
    check_compatibility,
    impose_boundary,
    state_gradient,
    step_schedule,
    transport_tendency,
)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 50
CONTRACTION = 0.5
PROBE_ITER = 3
MIN_STEPS = 10


class PicardError(RuntimeError):
    pass


class NonContractionError(PicardError):
    """Successive differences kept growing: the horizon is too long for the data."""


class TStarUnderflowError(PicardError):
    """No horizon above the minimum passed the contraction probe."""


@dataclass
class LinearProblem:
    """Coefficients of the linear system frozen at one state ``(rho^m, u^m)``."""

    frozen: np.ndarray
    grid: Grid2D
    params: ModelParams
    rho_floor: float = DEFAULT_RHO_FLOOR
    rho: np.ndarray = field(init=False, repr=False)
    u: np.ndarray = field(init=False, repr=False)
    b: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.frozen = np.asarray(self.frozen, dtype=float)
        check_vacuum(self.frozen[..., 0], self.rho_floor)
        self.rho = self.frozen[..., 0]
        self.u = self.frozen[..., 1:]
        self.b = b_coefficient(self.params.pressure, self.rho, self.rho_floor)


def linearized_terms(unknown: np.ndarray, lp: LinearProblem) -> np.ndarray:
    """Right sides of the frozen-coefficient system, linear in ``unknown``.

    With ``g`` the centered gradient of ``unknown``::

        -r (grad rho . u^m + rho^m div u)
        -r u^m . grad u1 + B^m rho_x / r
        -r u^m . grad u2 + B^m rho_y / r
    """
    if unknown.shape != lp.frozen.shape:
        raise ValueError(f"unknown shape {unknown.shape} != frozen shape {lp.frozen.shape}")
    r = lp.params.r
    g = state_gradient(unknown, lp.grid)
    um1, um2 = lp.u[..., 0], lp.u[..., 1]
    out = np.empty_like(unknown)
    out[..., 0] = -r * (g[..., 0, 0] * um1 + g[..., 0, 1] * um2 + lp.rho * (g[..., 1, 0] + g[..., 2, 1]))
    out[..., 1] = -r * (um1 * g[..., 1, 0] + um2 * g[..., 1, 1]) + lp.b / r * g[..., 0, 0]
    out[..., 2] = -r * (um1 * g[..., 2, 0] + um2 * g[..., 2, 1]) + lp.b / r * g[..., 0, 1]
    return out


def build_linearized_rhs(unknown: Field, lp: LinearProblem) -> np.ndarray:
    """Tendency of the linear problem: transport, damping and the frozen right sides."""
    return transport_tendency(unknown.data, unknown.grid, lp.params) + linearized_terms(unknown.data, lp)


def difference_terms(bar: np.ndarray, cur: LinearProblem, prev: LinearProblem,
                     unknown_prev: np.ndarray) -> np.ndarray:
    """Right sides of the difference of two successive linear systems.

    ``cur`` holds coefficients frozen at ``W^m``, ``prev`` at ``W^{m-1}``;
    ``unknown_prev`` is what iterate ``m`` was solving for at this stage and
    ``bar`` the current difference ``W^{m+1} - W^m``.  Written in the split
    form: each line is the frozen operator on ``bar`` plus the coefficient
    jump ``(.)^m - (.)^{m-1}`` acting on iterate ``m``.
    """
    r = cur.params.r
    g_bar = state_gradient(bar, cur.grid)
    g_m = state_gradient(unknown_prev, cur.grid)
    u = cur.u
    du = cur.u - prev.u
    drho = cur.rho - prev.rho
    db = cur.b - prev.b

    out = np.empty_like(bar)
    out[..., 0] = -r * (
        g_bar[..., 0, 0] * u[..., 0] + g_bar[..., 0, 1] * u[..., 1]
        + cur.rho * (g_bar[..., 1, 0] + g_bar[..., 2, 1])
        + g_m[..., 0, 0] * du[..., 0] + g_m[..., 0, 1] * du[..., 1]
        + drho * (g_m[..., 1, 0] + g_m[..., 2, 1])
    )
    for c, axis in ((1, 0), (2, 1)):
        out[..., c] = (
            -r * (u[..., 0] * g_bar[..., c, 0] + u[..., 1] * g_bar[..., c, 1]
                  + du[..., 0] * g_m[..., c, 0] + du[..., 1] * g_m[..., c, 1])
            + cur.b / r * g_bar[..., 0, axis]
            + db / r * g_m[..., 0, axis]
        )
    return out


@dataclass
class Trajectory:
    """States at ``times`` plus the Heun predictor used inside each step."""

    grid: Grid2D
    times: np.ndarray
    states: np.ndarray
    predictors: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def field(self, n: int) -> Field:
        return Field(self.grid, self.states[n].copy(), float(self.times[n]))

    @classmethod
    def constant(cls, f: Field, times: np.ndarray) -> "Trajectory":
        n = len(times)
        states = np.broadcast_to(f.data, (n,) + f.data.shape)
        return cls(f.grid, np.asarray(times), states, states[:-1])


def time_grid(grid: Grid2D, params: ModelParams, config: RunConfig, t_star: float) -> np.ndarray:
    n, _ = step_schedule(0.0, t_star, cfl_dt(grid, params, config.cfl))
    return np.linspace(0.0, t_star, n + 1)


def _frozen(traj: Trajectory, n: int, params, rho_floor) -> LinearProblem:
    return LinearProblem(traj.states[n], traj.grid, params, rho_floor)


def _integrate(initial: np.ndarray, times: np.ndarray, grid: Grid2D, tendency_at) -> Trajectory:
    """Heun over ``times``; ``tendency_at(n, stage, data)`` gives the stage tendency of step ``n``."""
    n_steps = len(times) - 1
    states = np.empty((n_steps + 1,) + initial.shape)
    preds = np.empty((n_steps,) + initial.shape)
    states[0] = initial
    for n in range(n_steps):
        dt = times[n + 1] - times[n]
        # same arithmetic as solver.heun_step, with the stage index exposed
        pred = impose_boundary(states[n] + dt * tendency_at(n, 0, states[n]))
        preds[n] = pred
        states[n + 1] = impose_boundary(0.5 * (states[n] + pred + dt * tendency_at(n, 1, pred)))
        _guard(states[n + 1], n + 1, times[n + 1])
    return Trajectory(grid, times, states, preds)


def advance_linear(initial: Field, frozen: Trajectory, params: ModelParams, config: RunConfig,
                   t_star: Optional[float] = None) -> Trajectory:
    """Solve the linear system with coefficients taken from ``frozen`` along its time grid."""
    times = frozen.times
    if t_star is not None and not math.isclose(times[-1], t_star, rel_tol=1e-12):
        raise ValueError(f"frozen trajectory ends at {times[-1]}, not t_star={t_star}")
    cache = {}

    def lp_at(n):
        if n not in cache:
            cache.clear()
            cache[n] = _frozen(frozen, n, params, config.rho_floor)
        return cache[n]

    def tendency_at(n, stage, data):
        lp = lp_at(n + stage)
        return transport_tendency(data, initial.grid, params) + linearized_terms(data, lp)

    return _integrate(initial.data.copy(), times, initial.grid, tendency_at)


def advance_difference(bar0: np.ndarray, cur: Trajectory, prev: Trajectory,
                       params: ModelParams, config: RunConfig) -> Trajectory:
    """Evolve ``W^{m+1} - W^m`` directly from the difference system.

    ``cur`` is iterate ``m`` (whose states freeze the coefficients of iterate
    ``m + 1`` and whose states/predictors were its own unknowns), ``prev`` is
    iterate ``m - 1``.
    """
    grid = cur.grid

    def tendency_at(n, stage, data):
        lp_cur = _frozen(cur, n + stage, params, config.rho_floor)
        lp_prev = _frozen(prev, n + stage, params, config.rho_floor)
        unknown_prev = cur.states[n] if stage == 0 else cur.predictors[n]
        return transport_tendency(data, grid, params) + difference_terms(data, lp_cur, lp_prev, unknown_prev)

    return _integrate(np.asarray(bar0, dtype=float).copy(), cur.times, grid, tendency_at)


@dataclass
class PicardRecord:
    m: int
    y: float
    ratio: float
    beta_proxy: float


@dataclass
class PicardTrace:
    t_star: float
    iterations: list = field(default_factory=list)
    converged: bool = False

    @property
    def ratios(self) -> list[float]:
        return [rec.ratio for rec in self.iterations if rec.m >= 1]

    def contracted(self, bound: float = CONTRACTION) -> bool:
        return all(q <= bound for q in self.ratios)


def sup_difference(a: Trajectory, b: Trajectory, cadence: int = 1) -> float:
    """``max_t ||a - b||^2`` over sampled times (every ``cadence`` steps and the last)."""
    idx = sorted(set(range(0, len(a.times), cadence)) | {len(a.times) - 1})
    return max(l2_norm_sq(a.states[n] - b.states[n], a.grid) for n in idx)


def _ratio(y: float, y_prev: float) -> float:
    if y_prev == 0.0:
        return 0.0 if y == 0.0 else math.inf
    return y / y_prev


def picard_iterate(initial: Field, params: ModelParams, config: RunConfig, t_star: float,
                   max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL,
                   keep_history: bool = False):
    """Iterate the frozen-coefficient scheme on ``[0, t_star]``.

    The seed ``W^0`` is the initial data held constant in time.  Record ``m``
    stores ``y_m = sup_t ||W^{m+1} - W^m||^2``; iteration stops once
    ``y_m < tol`` with ``m >= 1``.  Returns ``(trajectory, trace)`` and, with
    ``keep_history``, the list of all iterates as a third item.
    """
    params.require_solver_regime()
    check_compatibility(initial)
    initial.validate(config.rho_floor)
    times = time_grid(initial.grid, params, config, t_star)
    current = Trajectory.constant(initial, times)
    history = [current]
    trace = PicardTrace(t_star)
    growth = 0
    for m in range(max_iter):
        try:
            nxt = advance_linear(initial, current, params, config)
        except SolverError as exc:
            raise PicardError(f"iterate {m + 1} failed: {exc}") from exc
        y = sup_difference(nxt, current, config.cadence)
        # every iterate starts from the same discrete data
        beta = 0.0
        ratio = _ratio(y, trace.iterations[-1].y) if m >= 1 else math.nan
        trace.iterations.append(PicardRecord(m, y, ratio, beta))
        if keep_history:
            history.append(nxt)
        else:
            history = [current, nxt]
        current = nxt
        if m >= 1:
            growth = growth + 1 if ratio > 1.0 else 0
            if growth >= 3:
                raise NonContractionError(
                    f"y_m grew for 3 consecutive iterations (m={m}, y={y:.3g}); t_star={t_star:.4g} too large"
                )
            if y < tol:
                trace.converged = True
                break
    if keep_history:
        return current, trace, history
    return current, trace


def macro_interval(grid: Grid2D, params: ModelParams, config: RunConfig) -> float:
    """Crossing time of the fastest x-characteristic, rounded to whole CFL steps."""
    dt = cfl_dt(grid, params, config.cfl)
    t = min(config.t_final, grid.lx / (params.s + params.r))
    return max(1, math.floor(t / dt)) * dt


def choose_t_star(initial: Field, params: ModelParams, config: RunConfig,
                  tol: float = DEFAULT_TOL) -> float:
    """Halve the horizon until a short probe of the iteration contracts by 1/2 per step."""
    dt = cfl_dt(initial.grid, params, config.cfl)
    t_star = macro_interval(initial.grid, params, config)
    while t_star >= MIN_STEPS * dt:
        try:
            _, trace = picard_iterate(initial, params, config, t_star, max_iter=PROBE_ITER, tol=tol)
        except PicardError:
            pass
        else:
            if trace.contracted(CONTRACTION):
                return t_star
        t_star *= 0.5
    raise TStarUnderflowError(
        f"no horizon >= {MIN_STEPS} steps ({MIN_STEPS * dt:.3g}) contracts; initial data too large"
    )


def write_trace_csv(trace: PicardTrace, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["m", "y_m", "ratio", "beta_proxy"])
        for rec in trace.iterations:
            writer.writerow([rec.m, f"{rec.y:.17g}", f"{rec.ratio:.17g}", f"{rec.beta_proxy:.17g}"])
