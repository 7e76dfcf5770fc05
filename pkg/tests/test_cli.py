import json

import numpy as np
import pytest

from adaptive_penalty.cli import OUTPUT_ENV, main, read_config_file
from adaptive_penalty.diagnostics import error_norms
from adaptive_penalty.cases import get_case
from adaptive_penalty.output import read_summary
from adaptive_penalty.solvers import AdaptiveConfig, solve_ep_stokes


def read_rows(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


def test_solve_coupled_smoke(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["solve", "--case", "test1", "--method", "coupled", "--n", "10", "--out", str(out)]) == 0
    for name in ("fields.vtk", "elements.csv", "summary.csv", "manifest.json"):
        assert (out / name).is_file()
    manifest = json.loads((out / "manifest.json").read_text())
    assert sorted(manifest["files"]) == sorted(p.name for p in out.iterdir())
    assert manifest["status"] == "ok"
    assert manifest["config"]["case"] == "test1"
    summary = read_summary(out / "summary.csv")
    assert float(summary["div_l2_sq"]) == pytest.approx(0.135344, rel=1e-5)
    text = capsys.readouterr().out
    assert text.startswith("# adaptive-penalty")


def test_vtk_file_layout(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--case", "test3", "--method", "ep", "--n", "4", "--out", str(out)]) == 0
    lines = (out / "fields.vtk").read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert "DATASET UNSTRUCTURED_GRID" in lines
    assert "POINTS 25 double" in lines
    assert "CELLS 32 128" in lines
    assert "CELL_DATA 32" in lines and "POINT_DATA 25" in lines
    assert "SCALARS eps double 1" in lines and "VECTORS velocity double" in lines


def test_summary_matches_library_values_bit_exactly(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--case", "test1", "--method", "ep", "--n", "6", "--out", str(out)]) == 0
    summary = read_summary(out / "summary.csv")
    case = get_case("test1")
    mesh = case.make_mesh(n=6)
    u, state, report = solve_ep_stokes(mesh, case.nu, case.steady_force(), case.steady_boundary(), AdaptiveConfig(case.tol, case.lower_eps))
    assert float(summary["div_l2_sq"]) == report.div_l2_sq
    assert float(summary["l2_velocity"]) == error_norms(u, case.exact).l2_velocity
    assert int(summary["iterations"]) == report.iterations
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["summary"]["div_l2_sq"] == report.div_l2_sq


def test_elements_csv_reconciles_with_summary(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--case", "test3", "--method", "ep", "--n", "10", "--out", str(out)]) == 0
    header, rows = read_rows(out / "elements.csv")
    assert header == ["element", "area", "est", "est_density", "eps", "loc_tol", "satisfied"]
    data = np.array([[float(v) for v in r[1:6]] for r in rows])
    summary = read_summary(out / "summary.csv")
    assert data[:, 1].sum() == pytest.approx(float(summary["div_l2_sq"]), rel=1e-12)
    assert data[:, 3].mean() == pytest.approx(float(summary["eps_mean"]), rel=1e-12)
    assert 2 * data[:, 4].sum() == pytest.approx(float(summary["tol"]) ** 2, rel=1e-12)
    satisfied = np.array([r[6] == "true" for r in rows])
    assert satisfied.mean() == pytest.approx(float(summary["local_satisfaction"]), rel=1e-12)
    np.testing.assert_allclose(data[:, 2] * data[:, 0], data[:, 1], rtol=1e-14)


def test_reruns_are_bit_identical(tmp_path):
    args = ["solve", "--case", "test1", "--method", "ep", "--n", "6"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("elements.csv", "summary.csv", "fields.vtk"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_constant_vs_ep_on_test3(tmp_path):
    assert main(["solve", "--case", "test3", "--method", "constant", "--eps", "1e-8", "--n", "10", "--out", str(tmp_path / "c")]) == 0
    assert main(["solve", "--case", "test3", "--method", "ep", "--n", "10", "--out", str(tmp_path / "e")]) == 0
    c = read_summary(tmp_path / "c" / "summary.csv")
    e = read_summary(tmp_path / "e" / "summary.csv")
    assert float(e["div_l2_sq"]) < float(c["div_l2_sq"])
    assert float(e["eps_mean"]) > 1e-5
    assert float(c["eps_mean"]) == 1e-8
    assert float(c["pivot_ratio"]) > 1e8


def test_constant_without_eps_is_usage_error(tmp_path, capsys):
    code = main(["solve", "--case", "test1", "--method", "constant", "--out", str(tmp_path / "x")])
    assert code == 2
    captured = capsys.readouterr()
    assert "--eps" in captured.err
    assert captured.out == ""


@pytest.mark.parametrize(
    "argv",
    [
        ["nse", "--case", "test4", "--dt", "0"],
        ["nse", "--case", "test1"],
        ["solve", "--case", "test4", "--method", "ep"],
        ["solve", "--case", "test1"],
        ["solve", "--case", "nope", "--method", "ep"],
        ["solve", "--case", "test1", "--method", "ep", "--tol", "-1"],
        ["solve", "--case", "test1", "--method", "ep", "--degree", "5"],
        ["solve", "--case", "test1", "--method", "ep", "--mesh", "/nonexistent/file.mesh"],
        ["convergence", "--case", "test2", "--method", "ep"],
        ["convergence", "--case", "test1", "--method", "ep", "--levels", "10"],
        [],
    ],
)
def test_usage_errors_exit_2(argv, tmp_path):
    if argv:
        argv = argv + ["--out", str(tmp_path / "x")]
    assert main(argv) == 2


def test_convergence_without_exact_solution_names_the_problem(tmp_path, capsys):
    assert main(["convergence", "--case", "test3", "--method", "ep", "--out", str(tmp_path)]) == 2
    assert "exact solution" in capsys.readouterr().err


def test_convergence_table(tmp_path, capsys):
    out = tmp_path / "conv"
    assert main(["convergence", "--case", "test1", "--method", "ep", "--levels", "4,8", "--out", str(out)]) == 0
    header, rows = read_rows(out / "convergence.csv")
    assert header[:4] == ["n", "h", "l2_velocity", "l2_rate"]
    assert [r[0] for r in rows] == ["4", "8"]
    assert rows[0][3] == "" and float(rows[1][3]) > 0
    assert "rate" in capsys.readouterr().out


def test_config_file_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\ncase = test3\nmethod = ep\nn = 6\nlower-eps = 1e-9\n")
    out = tmp_path / "a"
    assert main(["solve", "--config", str(cfg), "--n", "4", "--out", str(out)]) == 0
    summary = read_summary(out / "summary.csv")
    assert int(summary["n_elements"]) == 32  # flag beats file
    assert float(summary["lower_eps"]) == 1e-9  # file beats case default
    assert float(summary["tol"]) == 1e-6  # case default


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("case = test1\nfrobnicate = 3\n")
    with pytest.raises(ValueError, match="bad.cfg:2"):
        read_config_file(str(bad))
    assert main(["solve", "--config", str(bad), "--method", "ep"]) == 2
    bad.write_text("n = ten\n")
    with pytest.raises(ValueError, match="n"):
        read_config_file(str(bad))


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    assert main(["solve", "--case", "test3", "--method", "ep", "--n", "4"]) == 0
    assert (tmp_path / "solve-test3" / "summary.csv").is_file()


def test_nse_manufactured_short_run(tmp_path):
    out = tmp_path / "nse"
    argv = ["nse", "--case", "manufactured", "--n", "4", "--degree", "2", "--dt", "0.05", "--t-final", "0.2", "--snapshots", "0.1", "--out", str(out)]
    assert main(argv) == 0
    header, rows = read_rows(out / "divu_history.csv")
    assert header == ["t", "div_l2_sq", "eps_min", "eps_max", "inner_iterations", "local_satisfaction"]
    assert [float(r[0]) for r in rows] == pytest.approx([0.05, 0.1, 0.15, 0.2])
    assert (out / "snapshot_t0.1.vtk").is_file()
    summary = read_summary(out / "summary.csv")
    assert int(summary["steps_completed"]) == 4
    assert float(summary["final_div_l2_sq"]) == float(rows[-1][1])
    assert float(summary["l2_velocity_final"]) < 0.1


def test_mesh_export_import_round_trip(tmp_path, capsys):
    path = tmp_path / "sq.mesh"
    assert main(["mesh", "export", "--case", "test1", "--n", "3", "--out", str(path)]) == 0
    capsys.readouterr()
    assert main(["mesh", "import", str(path)]) == 0
    text = capsys.readouterr().out
    assert "triangles     18" in text
    out = tmp_path / "run"
    assert main(["solve", "--case", "test1", "--method", "ep", "--mesh", str(path), "--out", str(out)]) == 0
    assert int(read_summary(out / "summary.csv")["n_elements"]) == 18


def test_mesh_import_reports_bad_file(tmp_path, capsys):
    path = tmp_path / "bad.mesh"
    path.write_text("mesh2d 3 1\n0 0 1\n1 0 1\n0 1 1\n0 2 1\n")
    assert main(["mesh", "import", str(path)]) == 2
    assert "triangle 0" in capsys.readouterr().err


def test_verbose_flag_in_either_position(tmp_path):
    base = ["--case", "test3", "--method", "ep", "--n", "3"]
    assert main(["-v", "solve"] + base + ["--out", str(tmp_path / "a")]) == 0
    assert main(["solve", "-v"] + base + ["--out", str(tmp_path / "b")]) == 0
