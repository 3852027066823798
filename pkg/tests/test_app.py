import pytest

from app import EXIT_CHECK_FAILED, EXIT_OK, EXIT_SOLVER_FAILED, EXIT_USAGE, main
from components.solve_runner import SOLVER_ERROR, run_solve
from components.verify_runner import hard_failures
from utils.config_loader import load_config
from utils.data_loader import REPORT_HEADER, load_report

FAST = ["--mesh-h", "0.3", "--refinements", "1"]


def parse_orders(text):
    pairs = (item.split(":") for item in str(text).split(";") if item)
    return {int(n): float(value) for n, value in pairs}


def test_solve_flat_dirichlet_reflects_everything(tmp_path):
    output = tmp_path / "solve.csv"
    code = main(["solve", "--profile", "flat(0)", "--bc", "dirichlet", "--k", "1.5", "--theta-deg", "20", *FAST, "--output", str(output)])
    assert code == EXIT_OK
    assert output.read_text().splitlines()[0] == REPORT_HEADER

    frame = load_report(str(output))
    assert len(frame) == 1
    row = frame.iloc[0]
    efficiencies = parse_orders(row["efficiencies"])
    assert efficiencies[0] == pytest.approx(1.0, abs=1e-3)
    assert efficiencies.get(-1, 0.0) == pytest.approx(0.0, abs=1e-3)
    assert row["balance_defect"] < 1e-3
    assert abs(complex(row["reflection_0_re"], row["reflection_0_im"])) == pytest.approx(1.0, abs=1e-3)
    assert bool(row["hypotheses_ok"])
    assert row["status"] in ("certified", "indeterminate")
    assert row["ratio"] < 1.0


def test_sweep_keeps_input_order(tmp_path):
    output = tmp_path / "sweep.csv"
    code = main(["sweep", "--bc", "impedance", "--k", "2.0,1.5", "--theta-deg", "10", "--lambda", "0.5", *FAST, "--output", str(output)])
    assert code == EXIT_OK
    frame = load_report(str(output))
    assert list(frame["k"]) == [2.0, 1.5]
    assert list(frame["lambda"]) == [0.5, 0.5]
    assert (frame["absorption"] > 0).all()


def test_single_mesh_level_is_indeterminate():
    config = load_config(overrides={"mesh_h": "0.4", "refinements": "0"})
    row = run_solve(config).iloc[0]
    assert row["status"] == "indeterminate"
    assert "single mesh level" in row["reason"]


def test_truncation_failure_is_reported_per_point(tmp_path):
    output = tmp_path / "fail.csv"
    code = main(["solve", "--k", "3.0", "--theta-deg", "0", "--dtn-N", "1", *FAST, "--output", str(output)])
    assert code == EXIT_SOLVER_FAILED
    frame = load_report(str(output))
    assert frame.loc[0, "status"] == SOLVER_ERROR
    assert "misses" in frame.loc[0, "error"]


def test_bounds_row(tmp_path):
    output = tmp_path / "bounds.csv"
    code = main(["bounds", "--k", "1", "--theta-deg", "0", "--R", "1", "--f-minus", "-1", "--output", str(output)])
    assert code == EXIT_OK
    row = load_report(str(output)).iloc[0]
    assert row["M"] == pytest.approx(73.0)
    assert row["C"] == pytest.approx(5361.0 ** 0.5)
    assert row["bound"] == pytest.approx(367.07, abs=0.01)
    assert not bool(row["hypotheses_ok"])


def test_transmission_bounds_case(tmp_path):
    output = tmp_path / "bounds.csv"
    code = main([
        "bounds", "--bc", "transmission", "--k", "2", "--k-minus", "1", "--lambda", "1",
        "--theta-deg", "0", "--R", "2.5", "--f-minus", "-1.5", "--output", str(output),
    ])
    assert code == EXIT_OK
    row = load_report(str(output)).iloc[0]
    assert row["case"] == "i"
    assert row["C_T"] == pytest.approx(0.125)
    assert row["C12"] == pytest.approx(545.0)


def test_verify_identities_suite(tmp_path):
    output = tmp_path / "verify.csv"
    code = main(["verify", "identities", "--mesh-h", "0.3", "--refinements", "0", "--output", str(output)])
    assert code == EXIT_OK
    frame = load_report(str(output))
    assert set(frame["suite"]) == {"identities"}
    assert "rellich_corollary" in set(frame["check"])
    assert hard_failures(frame) == 0


@pytest.mark.slow
def test_perturbed_oracles_fail(tmp_path):
    output = tmp_path / "verify.csv"
    code = main(["verify", "oracles", "--oracle-perturbation", "0.01", "--output", str(output)])
    assert code == EXIT_CHECK_FAILED
    frame = load_report(str(output))
    failed = set(frame.loc[frame["status"] == "fail", "check"])
    assert any(check.startswith("dirichlet_k") and check.endswith("_l2_error") for check in failed)
    indeterminate = frame[frame["status"] == "indeterminate"]
    assert "dirichlet_k1_theta0" in set(indeterminate["check"])


@pytest.mark.slow
def test_parallel_sweep_matches_serial():
    overrides = {"k": "1.5,2.0", "theta_deg": "20", "mesh_h": "0.4", "refinements": "0"}
    serial = run_solve(load_config(overrides=overrides))
    parallel = run_solve(load_config(overrides={**overrides, "workers": "2"}))
    assert list(parallel["k"]) == [1.5, 2.0]
    assert list(parallel["norm_fine"]) == pytest.approx(list(serial["norm_fine"]))


def test_mesh_dump(tmp_path):
    output = tmp_path / "cell.msh"
    code = main(["mesh-dump", "--profile", "sine(0.3)", "--mesh-h", "0.5", "--refinements", "0", "--output", str(output)])
    assert code == EXIT_OK
    assert output.read_text().startswith("$Vertices\n")


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--theta-deg", "90"],
        ["solve", "--bc", "rigid"],
        ["verify", "everything"],
        ["frobnicate"],
        [],
    ],
)
def test_usage_errors(argv):
    assert main(argv) == EXIT_USAGE
