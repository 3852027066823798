import numpy as np
import pytest

from components import verify_runner
from components.verify_runner import (
    CONVERGENCE_LEVELS,
    VERIFY_COLUMNS,
    balance_checks,
    convergence_checks,
    energy_defect,
    energy_identity_check,
    estimate_checks,
    hard_failures,
    oracle_checks,
    rellich_checks,
    wood_orders,
)
from models.dtn import default_truncation
from models.fem_core import assemble, solve
from models.geometry import Impedance, IncidentWave
from models.verify import FAIL, INDETERMINATE, PASS, ConvergenceReport
from utils.config_loader import load_config
from utils.data_loader import build_report_frame

from conftest import make_mesh


@pytest.fixture
def coarse_config():
    return load_config(overrides={"mesh_h": "0.3", "refinements": "0"})


def by_check(rows):
    return {row["check"]: row for row in rows}


def test_wood_orders():
    assert wood_orders(1.0, 0.0) == [-1, 1]
    assert wood_orders(2.0, IncidentWave.from_degrees(2.0, 30.0).alpha) == [-3, 1]
    assert wood_orders(1.5, IncidentWave.from_degrees(1.5, 20.0).alpha) == []


def test_oracle_grid_reports_wood_points(monkeypatch, coarse_config):
    monkeypatch.setattr(verify_runner, "ORACLE_GRID", [(1.0, 0.0), (1.5, 20.0)])
    rows = by_check(oracle_checks(coarse_config, "dirichlet"))

    wood = rows["dirichlet_k1_theta0"]
    assert wood["status"] == INDETERMINATE
    assert not wood["hard"]
    assert "Wood" in wood["detail"]
    assert {"dirichlet_k1.5_theta20_l2_error", "dirichlet_k1.5_theta20_reflection_error",
            "dirichlet_k1.5_theta20_balance_defect"} <= set(rows)
    assert rows["dirichlet_k1.5_theta20_balance_defect"]["status"] == PASS


def test_oracle_grid_sweeps_model_parameters(monkeypatch, coarse_config):
    monkeypatch.setattr(verify_runner, "ORACLE_GRID", [(1.5, 20.0)])
    monkeypatch.setattr(verify_runner, "ORACLE_LAMBDAS", (1.0,))
    monkeypatch.setattr(verify_runner, "ORACLE_K_MINUS", (1.5, 2.0))
    rows = by_check(oracle_checks(coarse_config, "transmission"))

    assert rows["transmission_k1.5_theta20_lam1_kminus1.5"]["status"] == INDETERMINATE
    assert "no contrast" in rows["transmission_k1.5_theta20_lam1_kminus1.5"]["detail"]
    solved = [name for name in rows if name.startswith("transmission_k1.5_theta20_lam1_kminus2_")]
    assert len(solved) == 4


def test_impedance_grid_labels(monkeypatch, coarse_config):
    monkeypatch.setattr(verify_runner, "ORACLE_GRID", [(1.5, 20.0)])
    rows = by_check(oracle_checks(coarse_config, "impedance"))
    for lam in ("0.5", "1", "2"):
        assert f"impedance_k1.5_theta20_lam{lam}_l2_error" in rows


def test_convergence_rows_are_hard(monkeypatch, coarse_config):
    seen = []

    def stalled(domain, wave, bc, h0, levels=3, fe_order=2, **kwargs):
        seen.append(levels)
        return ConvergenceReport(
            h=[0.4, 0.2, 0.1, 0.05], l2_errors=[1e-2, 5e-3, 2.5e-3, 1.25e-3], energy_errors=[1.0] * 4,
            l2_slope=1.0, energy_slope=1.0, monotone=True, fe_order=fe_order,
        )

    monkeypatch.setattr(verify_runner, "convergence_study", stalled)
    rows = convergence_checks(coarse_config)
    assert seen == [CONVERGENCE_LEVELS] * 2
    assert CONVERGENCE_LEVELS >= 4
    assert all(row["hard"] and row["status"] == FAIL for row in rows)
    assert hard_failures(build_report_frame(rows, VERIFY_COLUMNS)) == 2


def test_transmission_rellich_row_is_hard(monkeypatch, coarse_config):
    monkeypatch.setattr(verify_runner, "transmission_rellich_residual", lambda *args, **kwargs: 1.0)
    row = by_check(rellich_checks(coarse_config))["rellich_transmission"]
    assert row["hard"]
    assert row["status"] == FAIL


def test_rellich_rows_pass(coarse_config):
    rows = rellich_checks(coarse_config)
    assert all(row["status"] == PASS and row["hard"] for row in rows)


def test_energy_identity_threshold_follows_solver_residual(coarse_config):
    row = energy_identity_check(coarse_config)[0]
    assert row["status"] == PASS
    assert row["value"] <= row["threshold"] < 1e-6
    assert "solver residual" in row["detail"]


def test_energy_defect_detects_foreign_field(wave):
    mesh = make_mesh("flat(0)", R=1.5, h=0.3)
    N = default_truncation(wave.k)
    system = assemble(Impedance(1.0), mesh, wave, N)
    field = solve(system)
    defect, threshold = energy_defect(system, field)
    assert defect <= threshold
    assert threshold >= 10.0 * field.metadata["residual"]

    # solution of another incident wave on the same space
    other = solve(assemble(Impedance(1.0), mesh, IncidentWave.from_degrees(wave.k, -40.0), N))
    defect, threshold = energy_defect(system, other)
    assert defect > threshold


def test_estimate_rows_on_solved_fields(coarse_config):
    rows = by_check(estimate_checks(coarse_config))
    assert set(rows) == {
        "rellich_vertical_derivative_flat",
        "rellich_top_line_flat",
        "rellich_vertical_derivative_sine",
        "rellich_top_line_sine",
    }
    assert all(row["status"] == PASS and row["hard"] for row in rows.values())


def test_sine_balance_rows(coarse_config):
    rows = by_check(balance_checks(coarse_config))
    assert set(rows) == {"sine_dirichlet_balance_defect", "sine_transmission_balance_defect"}
    for row in rows.values():
        assert row["hard"]
        assert row["status"] == PASS
        assert np.isfinite(row["value"])
