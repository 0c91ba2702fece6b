"""Command line entry point: ``edil analyze|simulate|picard|mms-verify --config FILE``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import energy, picard
from .grid import DEFAULT_K_CAP, MAX_K_CAP, Field, Grid2D, write_dump
from .model import (
    DegenerateCharacteristicError,
    ModelParams,
    PressureLaw,
    assemble_matrices,
    characteristic_speeds,
    count_incoming_characteristics,
)
from .solver import (
    MmsDescriptor,
    PreconditionError,
    RunConfig,
    SolverError,
    bump_data,
    mms_error,
    mms_initial,
    random_bump_data,
    run,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_PICARD = 4
EXIT_MMS = 5

MMS_RESOLUTIONS = (64, 128, 256)
MMS_MIN_ORDER = 0.8
TRACE_TOL = 1e-12

MODES = ("analyze", "simulate", "picard", "mms-verify")


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    # model
    gamma: float = 3.0
    kappa: float = 1.0 / 3.0
    k: float = 1.0
    s: float = 0.4
    # grid
    lx: float = 8.0
    ly: float = 4.0
    nx: int = 128
    ny: int = 128
    # run
    cfl: float = 0.45
    t_final: float = 10.0
    cadence: int = 10
    k_cap: int = DEFAULT_K_CAP
    rho_floor: float = 0.1
    nonlinear: bool = True
    dump_times: tuple = ()
    c_acc: float = 2.0
    budget_factor: float = 2.0
    # data
    data: str = "bump"
    delta: float = 1e-3
    bump_xc: float = 3.0
    bump_yc: float = 0.0
    bump_wx: float = 1.5
    bump_wy: float = 1.5
    n_bumps: int = 3
    seed: int = 0
    # picard
    t_star: float = 0.0
    picard_tol: float = picard.DEFAULT_TOL
    max_iter: int = picard.DEFAULT_MAX_ITER
    # mms
    mms: bool = False
    mms_amplitude: float = 0.1
    # output
    out: str = "out"

    @property
    def r(self) -> float:
        return math.sqrt(self.kappa * self.gamma)

    def law(self) -> PressureLaw:
        return PressureLaw(self.gamma, self.kappa)

    def params(self) -> ModelParams:
        return ModelParams(self.k, self.s, self.law())

    def grid(self) -> Grid2D:
        return Grid2D(self.lx, self.ly, self.nx, self.ny)

    def run_config(self, **overrides) -> RunConfig:
        kw = dict(cfl=self.cfl, t_final=self.t_final, rho_floor=self.rho_floor,
                  cadence=self.cadence, nonlinear=self.nonlinear)
        kw.update(overrides)
        return RunConfig(**kw)

    def initial_field(self, grid: Grid2D | None = None) -> Field:
        grid = grid or self.grid()
        try:
            if self.data == "random":
                return random_bump_data(grid, self.delta, self.n_bumps, self.seed, order=self.k_cap)
            return bump_data(grid, self.delta, (self.bump_xc, self.bump_yc),
                             (self.bump_wx, self.bump_wy), order=self.k_cap)
        except ValueError as exc:
            raise ConfigError(f"data: {exc}") from exc

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["dump_times"] = list(self.dump_times)
        return d


_FIELDS = {f.name: f for f in dataclasses.fields(Config)}

# key -> (predicate, description of the constraint)
_CONSTRAINTS = {
    "gamma": (lambda v: v > 1.0, "gamma > 1"),
    "kappa": (lambda v: v > 0.0, "kappa > 0"),
    "k": (lambda v: v > 0.0, "k > 0"),
    "s": (math.isfinite, "s finite"),
    "lx": (lambda v: v > 0.0, "lx > 0"),
    "ly": (lambda v: v > 0.0, "ly > 0"),
    "nx": (lambda v: v >= 8, "nx >= 8"),
    "ny": (lambda v: v >= 8, "ny >= 8"),
    "cfl": (lambda v: 0.0 < v <= 1.0, "0 < cfl <= 1"),
    "t_final": (lambda v: v > 0.0, "t_final > 0"),
    "cadence": (lambda v: v >= 1, "cadence >= 1"),
    "k_cap": (lambda v: 0 <= v <= MAX_K_CAP, f"0 <= k_cap <= {MAX_K_CAP}"),
    "rho_floor": (lambda v: 0.0 < v < 1.0, "0 < rho_floor < 1"),
    "dump_times": (lambda v: all(t >= 0.0 for t in v), "dump times >= 0"),
    "c_acc": (lambda v: v > 0.0, "c_acc > 0"),
    "budget_factor": (lambda v: v >= 1.0, "budget_factor >= 1"),
    "data": (lambda v: v in ("bump", "random"), "data in {bump, random}"),
    "delta": (lambda v: v >= 0.0, "delta >= 0"),
    "bump_wx": (lambda v: v > 0.0, "bump_wx > 0"),
    "bump_wy": (lambda v: v > 0.0, "bump_wy > 0"),
    "n_bumps": (lambda v: v >= 1, "n_bumps >= 1"),
    "seed": (lambda v: v >= 0, "seed >= 0"),
    "t_star": (lambda v: v >= 0.0, "t_star >= 0 (0 selects automatically)"),
    "picard_tol": (lambda v: v > 0.0, "picard_tol > 0"),
    "max_iter": (lambda v: v >= 1, "max_iter >= 1"),
    "mms_amplitude": (lambda v: v >= 0.0, "mms_amplitude >= 0"),
}


def _convert(key: str, raw: str):
    default = getattr(Config, key)
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            value = float(raw)
            if math.isnan(value):
                raise ValueError(raw)
            return value
        if isinstance(default, tuple):
            return tuple(float(t) for t in raw.replace(",", " ").split())
    except ValueError:
        kind = type(default).__name__
        raise ConfigError(f"{key}: malformed value {raw!r} (expected {kind})") from None
    return raw


def parse_config(text: str, mode: str = "simulate") -> Config:
    """Parse ``key = value`` lines (``#`` starts a comment) into a validated :class:`Config`."""
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw)
    cfg = Config(**values)

    for key, (ok, desc) in _CONSTRAINTS.items():
        if not ok(getattr(cfg, key)):
            raise ConfigError(f"{key}: constraint violated, need {desc} (got {getattr(cfg, key)!r})")
    if mode != "analyze" and not 0.0 < cfg.s < cfg.r:
        raise ConfigError(f"s: constraint violated, need 0 < s < r with r = {cfg.r:.6g} (got {cfg.s!r})")
    if mode == "mms-verify" and not cfg.mms:
        raise ConfigError("mms: mms-verify needs mms = true")
    return cfg


def load_config(path, mode: str) -> Config:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, mode)


# --- output helpers -------------------------------------------------------------


def _fmt(x) -> str:
    return energy.format_value(float(x))


def _write_run_info(cfg: Config, out: Path, command: str):
    info = {"command": command, "seed": cfg.seed, "config": cfg.as_dict()}
    (out / "run_info.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")


class DumpMonitor:
    """Writes a grid dump at the first sample on or after each requested time."""

    def __init__(self, out: Path, times, t_final: float):
        self.out = out
        self.pending = sorted(set(times) | {0.0, t_final})
        self.t_final = t_final
        self.count = 0

    def __call__(self, f: Field, step: int):
        due = [t for t in self.pending if f.time >= t - 1e-12]
        if not due:
            return
        self.pending = [t for t in self.pending if t not in due]
        write_dump(self.out / f"dump_{self.count:04d}.bin", f)
        self.count += 1


class TraceMonitor:
    """Largest ``|rho + u1|`` on the wall across all samples."""

    def __init__(self):
        self.worst = 0.0

    def __call__(self, f: Field, step: int):
        self.worst = max(self.worst, float(np.max(np.abs(f.data[0, :, 0] + f.data[0, :, 1]))))


def _matrix_rows(name, m):
    return [[name, i, j, _fmt(m[i, j])] for i in range(m.shape[0]) for j in range(m.shape[1])]


# --- commands -------------------------------------------------------------------


def cmd_analyze(cfg: Config, out: Path) -> int:
    params = cfg.params()
    mats = assemble_matrices(params)
    speeds = characteristic_speeds(params)
    count, combos = count_incoming_characteristics(params)
    a1_eigs = np.sort(np.linalg.eigvalsh(mats.a1))

    np.set_printoptions(precision=6, suppress=True)
    print(f"s = {params.s:g}, r = {params.r:.6g}, k = {params.k:g}")
    for name in ("a1", "a2", "a3", "s0"):
        print(f"{name.upper()} =\n{getattr(mats, name)}")
    print(f"S1 diagonal (x-speeds of v1, v2, v3) = {speeds}")
    print(f"eigenvalues of A1 = {a1_eigs}")
    print(f"incoming characteristics at x = 0: {count}")
    labels = ("rho", "u1", "u2")
    for c in combos:
        terms = " ".join(f"{coef:+.6g}*{lab}" for coef, lab in zip(c, labels) if coef != 0.0)
        print(f"  prescribe {terms} = 0 on x = 0")

    rows = []
    for name in ("a1", "a2", "a3", "s0", "s1", "s2", "s3"):
        rows += _matrix_rows(name, getattr(mats, name))
    rows += [["speed", i, 0, _fmt(v)] for i, v in enumerate(speeds)]
    rows += [["a1_eig", i, 0, _fmt(v)] for i, v in enumerate(a1_eigs)]
    rows.append(["incoming_count", 0, 0, count])
    for n, c in enumerate(combos):
        rows += [["combination", n, j, _fmt(v)] for j, v in enumerate(c)]
    with open(out / "analyze.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "i", "j", "value"])
        writer.writerows(rows)
    return EXIT_OK


def cmd_simulate(cfg: Config, out: Path) -> int:
    params = cfg.params()
    grid = cfg.grid()
    rc = cfg.run_config()
    initial = cfg.initial_field(grid)
    mon = energy.EnergyMonitor(params, cap=cfg.k_cap, rho_floor=cfg.rho_floor, nonlinear=cfg.nonlinear)
    trace = TraceMonitor()
    dumps = DumpMonitor(out, cfg.dump_times, cfg.t_final)
    _write_run_info(cfg, out, "simulate")
    try:
        result = run(initial, params, rc, [mon, trace, dumps])
    except (SolverError, PreconditionError) as exc:
        energy.write_energy_csv(mon.report, out / "energy.csv")
        print(f"simulate: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    rep = mon.report
    energy.write_energy_csv(rep, out / "energy.csv")
    h_top = rep[f"h{cfg.k_cap}"]
    n0, n_t = float(h_top[0]), float(h_top.max())
    failures = []
    if trace.worst >= TRACE_TOL:
        failures.append(f"wall trace |rho + u1| = {trace.worst:.3g} >= {TRACE_TOL:g}")
    if n_t > cfg.budget_factor * n0:
        failures.append(f"N(T) = {n_t:.6g} exceeds {cfg.budget_factor:g} * N(0) = {cfg.budget_factor * n0:.6g}")
    ratio_max = 0.0
    if rep.initial_norm > 0.0:
        ratio_max = float(energy.estimate_a_ratio(rep, rep.initial_norm).max())
        if ratio_max > cfg.c_acc:
            failures.append(f"estimate A ratio {ratio_max:.6g} exceeds c_acc = {cfg.c_acc:g}")
    diss = energy.dissipation_report(rep)

    print(f"steps = {result.n_steps}, dt = {result.dt:.6g}, t = {result.field.time:g}")
    print(f"N(0) = {n0:.6g}, N(T) = {n_t:.6g}, max estimate-A ratio = {ratio_max:.6g}")
    print(f"max wall-derivative ratio = {float(rep['lemma22'].max()):.6g}")
    print(f"int ||u||_1^2 = {diss['acc_u1']:.6g} (last quarter share {diss['acc_u1_tail']:.3g})")
    print(f"max |rho + u1| on wall = {trace.worst:.3g}")
    for msg in failures:
        print(f"simulate: monitor failed: {msg}", file=sys.stderr)
    return EXIT_SOLVER if failures else EXIT_OK


def cmd_picard(cfg: Config, out: Path) -> int:
    params = cfg.params()
    grid = cfg.grid()
    rc = cfg.run_config()
    initial = cfg.initial_field(grid)
    _write_run_info(cfg, out, "picard")
    try:
        t_star = cfg.t_star or picard.choose_t_star(initial, params, rc, cfg.picard_tol)
        _, trace = picard.picard_iterate(initial, params, rc, t_star, cfg.max_iter, cfg.picard_tol)
    except (picard.PicardError, PreconditionError) as exc:
        print(f"picard: {exc}", file=sys.stderr)
        return EXIT_PICARD
    picard.write_trace_csv(trace, out / "picard.csv")

    print(f"T* = {t_star:.6g}")
    for rec in trace.iterations:
        print(f"  m = {rec.m:3d}  y_m = {rec.y:.6e}  ratio = {rec.ratio:.6g}")
    if not trace.converged:
        print(f"picard: not converged after {cfg.max_iter} iterations", file=sys.stderr)
        return EXIT_PICARD
    if not trace.contracted():
        print(f"picard: a ratio exceeded {picard.CONTRACTION}", file=sys.stderr)
        return EXIT_PICARD
    return EXIT_OK


def mms_study(cfg: Config, resolutions=MMS_RESOLUTIONS):
    """Errors against the manufactured target for each resolution; returns table rows."""
    params = cfg.params()
    rows = []
    for nx in resolutions:
        ny = max(8, round(nx * cfg.ny / cfg.nx))
        grid = Grid2D(cfg.lx, cfg.ly, nx, ny)
        desc = MmsDescriptor.for_grid(grid, cfg.mms_amplitude)
        res = run(mms_initial(desc, grid), params, cfg.run_config(mms=desc))
        rows.append({"nx": nx, "ny": ny, "dx": grid.dx, "error": mms_error(res.field, desc)})
    for prev, cur in zip(rows, rows[1:]):
        if prev["error"] == 0.0 and cur["error"] == 0.0:
            cur["order"] = math.inf
        else:
            cur["order"] = math.log(prev["error"] / cur["error"]) / math.log(prev["dx"] / cur["dx"])
    rows[0]["order"] = math.nan
    return rows


def cmd_mms_verify(cfg: Config, out: Path) -> int:
    _write_run_info(cfg, out, "mms-verify")
    try:
        rows = mms_study(cfg)
    except (SolverError, PreconditionError) as exc:
        print(f"mms-verify: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    with open(out / "mms.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["nx", "ny", "dx", "error", "order"])
        for row in rows:
            writer.writerow([row["nx"], row["ny"], _fmt(row["dx"]), _fmt(row["error"]), _fmt(row["order"])])

    print(f"{'nx':>5} {'ny':>5} {'dx':>12} {'L2 error':>14} {'order':>8}")
    for row in rows:
        order = "exact" if math.isinf(row["order"]) else f"{row['order']:.3f}"
        print(f"{row['nx']:5d} {row['ny']:5d} {row['dx']:12.5e} {row['error']:14.6e} {order:>8}")
    orders = [row["order"] for row in rows[1:]]
    if min(orders) < MMS_MIN_ORDER:
        print(f"mms-verify: observed order {min(orders):.3f} < {MMS_MIN_ORDER}", file=sys.stderr)
        return EXIT_MMS
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "picard": cmd_picard,
    "mms-verify": cmd_mms_verify,
}


def _thread_limit():
    raw = os.environ.get("EDIL_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"EDIL_THREADS: malformed value {raw!r}") from None
    if n < 0:
        raise ConfigError("EDIL_THREADS: must be >= 0 (0 = auto)")
    return n or None


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="edil", description=__doc__)
    parser.add_argument("command", choices=MODES)
    parser.add_argument("--config", required=True, help="key = value configuration file")
    parser.add_argument("--out", help="output directory (overrides the config's 'out')")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, args.command)
        threads = _thread_limit()
        if args.out:
            cfg.out = args.out
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    with threadpool_limits(limits=threads):
        try:
            return COMMANDS[args.command](cfg, out)
        except (ConfigError, DegenerateCharacteristicError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
