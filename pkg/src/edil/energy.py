"""Energy monitors: Sobolev norms, wall traces and dissipation integrals over a run.

Nothing here claims the analytic constants of the energy method.  The
monitors record the functionals, and the ratios are reported as measured.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .grid import (
    DEFAULT_K_CAP,
    Accumulator,
    Field,
    accumulate,
    boundary_trace_norm_sq,
    check_order,
    derivative,
    hk_norm_sq,
    l2_norm_sq,
    mixed_derivatives,
)
from .model import DEFAULT_RHO_FLOOR, S0, SQRT_HALF, ModelParams, nonlinear_terms
from .solver import compute_rhs, impose_boundary, state_gradient

DIV_EPS = 1e-30

# integrand name -> accumulator name
ACCUMULATED = {
    "u1": "acc_u1",
    "gradrho": "acc_gradrho",
    "trace1": "acc_trace",
    "trace0": "acc_trace0",
    "u0": "acc_u0",
    "rhot": "acc_rhot",
    "wt0": "acc_wt",
    "flux": "acc_flux",
}


def order_norms(data: np.ndarray, cap: int, grid) -> list[float]:
    """``sum ||d^k W||^2`` for each exact order ``k = 0..cap``."""
    return [
        sum(l2_norm_sq(d, grid) for d in mixed_derivatives(data, kk, grid))
        for kk in range(cap + 1)
    ]


def boundary_lemma_ratio(f: Field, params: ModelParams, rho_floor: float = DEFAULT_RHO_FLOOR,
                         nonlinear: bool = True) -> float:
    """Wall trace of ``d v1/dx`` against ``(||W||^2 + ||d u2/dy||^2)`` on the wall.

    ``d v1/dx`` at ``x = 0`` is recovered from the ``v1`` equation itself:
    there ``v1`` and ``d v1/dt`` vanish, leaving

        (r - s) v1_x = (h1 + h2)/sqrt(2) - r v3_y/sqrt(2) + k v2 / 2.
    """
    g = f.grid
    data = f.data
    s, r, k = params.s, params.r, params.k
    wall = data[0]
    v2 = SQRT_HALF * (wall[:, 0] - wall[:, 1])
    u2y = derivative(data[..., 2], "y", "centered", g)[0]
    rhs = -SQRT_HALF * r * u2y + 0.5 * k * v2
    if nonlinear:
        h = nonlinear_terms(wall, state_gradient(data, g)[0], params.pressure, rho_floor)
        rhs = rhs + SQRT_HALF * (h[:, 0] + h[:, 1])
    v1x = rhs / (r - s)
    lhs = float(np.sum(v1x * v1x) * g.dy)
    denom = boundary_trace_norm_sq(data, g) + float(np.sum(u2y * u2y) * g.dy)
    return lhs / (denom + DIV_EPS)


@dataclass
class EnergyReport:
    """Time series collected by :class:`EnergyMonitor`.

    ``series`` maps a column name to its per-sample values.  Integrands are
    stored under their own names (``u0``, ``u1``, ``gradrho``, ...) and their
    running time integrals under ``acc_*``.
    """

    cap: int
    k: float = 1.0
    series: dict = field(default_factory=dict)

    def __getitem__(self, name) -> np.ndarray:
        return np.asarray(self.series[name], dtype=float)

    def __len__(self):
        return len(self.series.get("t", ()))

    @property
    def initial_norm(self) -> float:
        return float(self.series["h0"][0])

    def append(self, row: dict):
        for key, value in row.items():
            self.series.setdefault(key, []).append(value)

    def csv_columns(self) -> list[str]:
        return (
            ["t"]
            + [f"h{kk}" for kk in range(self.cap + 1)]
            + ["wt", "trace0", "trace1", "acc_u1", "acc_gradrho", "acc_trace",
               "ratio_A", "lemma22_ratio"]
        )

    def table(self) -> np.ndarray:
        """Samples by CSV column; ``ratio_A`` is 0 when the data are zero."""
        h0 = self.initial_norm if len(self) else 0.0
        cols = []
        for name in self.csv_columns():
            if name == "ratio_A":
                cols.append(estimate_a_ratio(self, h0) if h0 > 0.0 else np.zeros(len(self)))
            elif name == "lemma22_ratio":
                cols.append(self["lemma22"])
            else:
                cols.append(self[name])
        return np.column_stack(cols) if cols and len(self) else np.zeros((0, len(cols)))


class EnergyMonitor:
    """Callable ``(field, step)`` collecting an :class:`EnergyReport`.

    ``tendency`` defaults to the nonlinear (or linear, per ``nonlinear``)
    right-hand side; it supplies ``W_t`` so no time differencing is needed.
    """

    def __init__(self, params: ModelParams, *, cap: int = DEFAULT_K_CAP,
                 rho_floor: float = DEFAULT_RHO_FLOOR, nonlinear: bool = True,
                 tendency: Optional[Callable] = None, keep_fields: bool = False):
        check_order(cap, max(cap, DEFAULT_K_CAP))
        self.params = params
        self.cap = cap
        self.rho_floor = rho_floor
        self.nonlinear = nonlinear
        self.tendency = tendency
        self.report = EnergyReport(cap, params.k)
        self.fields: list[Field] = []
        self.keep_fields = keep_fields
        self._acc = {name: Accumulator() for name in ACCUMULATED.values()}

    def _wt(self, f: Field) -> np.ndarray:
        if self.tendency is not None:
            wt = self.tendency(f.data, f.time)
        else:
            wt = compute_rhs(f, self.params, nonlinear=self.nonlinear, rho_floor=self.rho_floor)
        # the constrained wall/far-field values are stationary
        return impose_boundary(np.array(wt, dtype=float))

    def sample(self, f: Field) -> dict:
        g = f.grid
        data = f.data
        p = self.params
        by_order = order_norms(data, self.cap, g)
        row = {"t": f.time}
        for kk in range(self.cap + 1):
            row[f"h{kk}"] = float(sum(by_order[: kk + 1]))

        dx = derivative(data, "x", "centered", g)
        dy = derivative(data, "y", "centered", g)
        u, ux, uy = data[..., 1:], dx[..., 1:], dy[..., 1:]
        row["u0"] = l2_norm_sq(u, g)
        row["u1"] = row["u0"] + l2_norm_sq(ux, g) + l2_norm_sq(uy, g)
        row["gradrho"] = l2_norm_sq(dx[..., 0], g) + l2_norm_sq(dy[..., 0], g)

        row["trace0"] = boundary_trace_norm_sq(data, g)
        row["trace1"] = row["trace0"] + boundary_trace_norm_sq(dx, g) + boundary_trace_norm_sq(dy, g)

        wt = self._wt(f)
        row["wt"] = hk_norm_sq(wt, max(self.cap - 1, 0), g, cap=max(self.cap, DEFAULT_K_CAP))
        row["wt0"] = l2_norm_sq(wt, g)
        row["rhot"] = l2_norm_sq(wt[..., 0], g)

        # outflow flux of the linear part: v2, v3 leave at x=0, v1 at x=lx
        v_wall = data[0] @ S0
        v_far = data[-1] @ S0
        row["flux"] = g.dy * float(
            (p.r + p.s) * np.sum(v_wall[:, 1] ** 2)
            + p.s * np.sum(v_wall[:, 2] ** 2)
            + (p.r - p.s) * np.sum(v_far[:, 0] ** 2)
        )
        row["lemma22"] = boundary_lemma_ratio(f, p, self.rho_floor, self.nonlinear)

        for src, name in ACCUMULATED.items():
            self._acc[name] = accumulate(self._acc[name], row[src], f.time)
            row[name] = self._acc[name].value
        return row

    def __call__(self, f: Field, step: int = 0):
        self.report.append(self.sample(f))
        if self.keep_fields:
            self.fields.append(f.copy())


def a_priori_functional(samples: Iterable[Field], order: int = DEFAULT_K_CAP,
                        cap: int = DEFAULT_K_CAP) -> float:
    """``N(T)``: the largest ``||W||_order^2`` over the sampled fields."""
    n_t = 0.0
    for f in samples:
        n_t = max(n_t, hk_norm_sq(f.data, order, f.grid, cap))
    return n_t


def estimate_a_ratio(report: EnergyReport, initial_norm: float) -> np.ndarray:
    """``(||W||^2 + int (wall trace + ||u||^2)) / ||W0||^2`` per sample."""
    if not initial_norm > 0.0:
        raise ValueError("estimate A ratio undefined for zero initial data")
    lhs = report["h0"] + report["acc_trace0"] + report["acc_u0"]
    return lhs / initial_norm


def linear_energy_budget(report: EnergyReport) -> np.ndarray:
    """``||V||^2 + 2k int ||u||^2 + int outflow flux``; constant for the exact linear flow."""
    return report["h0"] + 2.0 * report.k * report["acc_u0"] + report["acc_flux"]


def _value_at(t: np.ndarray, v: np.ndarray, when: float) -> float:
    return float(np.interp(when, t, v))


def dissipation_report(report: EnergyReport) -> dict:
    """Final dissipation integrals and the share each gained over the last quarter of the run."""
    out = {}
    if len(report) == 0:
        return out
    t = report["t"]
    t_tail = t[0] + 0.75 * (t[-1] - t[0])
    for name in ACCUMULATED.values():
        v = report[name]
        total = float(v[-1])
        tail = total - _value_at(t, v, t_tail)
        out[name] = total
        out[f"{name}_tail"] = tail / total if total > 0.0 else 0.0
    return out


def format_value(x: float) -> str:
    return f"{x:.17g}"


def write_energy_csv(report: EnergyReport, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(report.csv_columns())
        for row in report.table():
            writer.writerow([format_value(v) for v in row])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {i + 1} has {len(row)} fields, header has {len(header)}")
    return header, np.array([[float(v) for v in row] for row in body]).reshape(len(body), len(header))


def max_ratio(values: np.ndarray) -> float:
    return float(np.max(values)) if len(values) else math.nan
