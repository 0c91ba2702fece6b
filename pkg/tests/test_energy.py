import math

import numpy as np
import pytest

from edil.energy import (
    EnergyMonitor,
    EnergyReport,
    a_priori_functional,
    boundary_lemma_ratio,
    dissipation_report,
    estimate_a_ratio,
    linear_energy_budget,
    read_csv,
    write_energy_csv,
)
from edil.grid import Field, Grid2D, hk_norm_sq, l2_norm_sq
from edil.model import ModelParams
from edil.solver import RunConfig, bump, random_bump_data, run

PARAMS = ModelParams(1.0, 0.4)


def monitored_run(f, params=PARAMS, t_final=1.0, nonlinear=True, cadence=1, keep=False):
    mon = EnergyMonitor(params, cap=2, nonlinear=nonlinear, keep_fields=keep)
    run(f, params, RunConfig(t_final=t_final, nonlinear=nonlinear, cadence=cadence), [mon])
    return mon


def u2_bump(g):
    x, _ = g.mesh()
    f = Field.zeros(g)
    f.data[..., 2] = bump((x - 4.0) / 2.0, 4)[0]
    return f


def test_zero_data_gives_zero_monitors():
    mon = monitored_run(Field.zeros(Grid2D(4.0, 2.0, 33, 32)), t_final=0.3)
    table = mon.report.table()
    assert table.shape[0] == len(mon.report) > 2
    assert np.all(table[:, 1:] == 0.0)
    with pytest.raises(ValueError):
        estimate_a_ratio(mon.report, 0.0)


def test_a_ratio_starts_at_one():
    f = random_bump_data(Grid2D(8.0, 4.0, 65, 64), 1e-3, seed=2)
    mon = monitored_run(f, t_final=0.5)
    ratio = estimate_a_ratio(mon.report, mon.report.initial_norm)
    assert ratio[0] == pytest.approx(1.0, abs=1e-15)


def test_a_priori_functional():
    g = Grid2D(8.0, 4.0, 65, 64)
    assert a_priori_functional([Field.zeros(g)] * 3) == 0.0
    f = random_bump_data(g, 1e-3, seed=1)
    assert a_priori_functional([f]) == pytest.approx(hk_norm_sq(f.data, 2, g))
    mon = monitored_run(f, t_final=0.5, nonlinear=False, keep=True)
    # damped linear flow: the sup is attained at t = 0
    assert a_priori_functional(mon.fields) == pytest.approx(1e-6, rel=1e-12)
    np.testing.assert_allclose(mon.report["h2"][0], 1e-6, rtol=1e-12)


def test_lemma_ratio_analytic_trace():
    # u2 = sin(m y) everywhere, rho = u1 = 0: v1 vanishes identically and H = 0
    p = ModelParams(1.0, 0.4)
    g = Grid2D(1.0, math.pi, 16, 512)
    _, y = g.mesh()
    m = 3.0
    f = Field.zeros(g)
    f.data[..., 2] = np.sin(m * y)
    r, s = p.r, p.s
    exact = 0.5 * r * r * m * m / ((r - s) ** 2 * (1 + m * m))
    assert boundary_lemma_ratio(f, p) == pytest.approx(exact, rel=1e-3)
    assert boundary_lemma_ratio(Field.zeros(g), p) == 0.0


def test_pure_damping_dissipation():
    g = Grid2D(8.0, 4.0, 129, 128)
    f = u2_bump(g)
    u0 = l2_norm_sq(f.data[..., 1:], g)
    t_final = 1.0
    mon = monitored_run(f, t_final=t_final, nonlinear=False)
    exact = u0 * (1 - math.exp(-2 * PARAMS.k * t_final)) / (2 * PARAMS.k)
    assert mon.report["acc_u0"][-1] == pytest.approx(exact, rel=0.02)


def test_linear_budget_non_increasing():
    f = random_bump_data(Grid2D(8.0, 4.0, 65, 64), 1e-2, seed=3)
    mon = monitored_run(f, t_final=3.0, nonlinear=False)
    budget = linear_energy_budget(mon.report)
    assert np.all(np.diff(budget) <= 1e-12 * budget[0])


def test_wall_condition_holds_at_every_sample():
    f = random_bump_data(Grid2D(8.0, 4.0, 65, 64), 1e-3, seed=5)
    mon = monitored_run(f, t_final=0.3, keep=True)
    for fld in mon.fields:
        assert np.max(np.abs(fld.data[0, :, 0] + fld.data[0, :, 1])) < 1e-12


def test_dissipation_report_tail():
    f = random_bump_data(Grid2D(8.0, 4.0, 65, 64), 1e-3, seed=6)
    mon = monitored_run(f, t_final=4.0, cadence=2)
    rep = dissipation_report(mon.report)
    assert rep["acc_u1"] > 0
    assert 0.0 <= rep["acc_u1_tail"] < 0.25
    assert dissipation_report(EnergyReport(2)) == {}


def test_csv_round_trip(tmp_path):
    f = random_bump_data(Grid2D(8.0, 4.0, 33, 32), 1e-3, seed=7)
    mon = monitored_run(f, t_final=0.5)
    path = tmp_path / "energy.csv"
    write_energy_csv(mon.report, path)
    header, body = read_csv(path)
    assert header == mon.report.csv_columns()
    assert header[:4] == ["t", "h0", "h1", "h2"]
    np.testing.assert_array_equal(body, mon.report.table())


def test_read_csv_rejects_ragged(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n3\n")
    with pytest.raises(ValueError, match="row 2"):
        read_csv(path)
