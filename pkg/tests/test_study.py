import re

import numpy as np
import pytest

from stokes_lps.assembly import assemble_blocks
from stokes_lps.cli import main
from stokes_lps.eigensolver import solve_smallest
from stokes_lps.errors import InvalidArgumentError, StudyAbortedError
from stokes_lps.mesh import unit_square_mesh
from stokes_lps.study import (ConvergenceTable, StudyConfig, StudyRow, export_outputs, load_config,
                              observed_orders, parse_config_text, read_csv, richardson_reference, run_study,
                              table_to_csv)


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        StudyConfig(levels=())
    with pytest.raises(InvalidArgumentError):
        StudyConfig(levels=(8, 8))
    with pytest.raises(InvalidArgumentError):
        StudyConfig(alpha0=-1.0)
    with pytest.raises(InvalidArgumentError):
        StudyConfig(count=0)
    with pytest.raises(InvalidArgumentError):
        StudyConfig(element="P1-P1")
    with pytest.raises(InvalidArgumentError):
        StudyConfig(element="P2Bubble-PDisc1", postprocess="two-space")
    with pytest.raises(InvalidArgumentError):
        StudyConfig(reference="guess")
    with pytest.raises(InvalidArgumentError):
        StudyConfig(levels=(8,), reference="richardson")


def _synthetic(errors, tilde=None):
    t = ConvergenceTable()
    for n, e in zip((4, 8, 16, 32), errors):
        t.rows.append(StudyRow(n=n, h=np.sqrt(2) / n, n_velocity_dofs=1, n_pressure_dofs=1, error_lambda_h=e,
                               error_lambda_tilde=np.nan if tilde is None else tilde))
    return t


@pytest.mark.parametrize("p", [2, 4])
def test_orders_synthetic(p):
    h = np.sqrt(2) / np.array([4, 8, 16, 32])
    orders = observed_orders(_synthetic(h**p))["lambda_h"]
    assert np.allclose(orders, p, atol=1e-12)


def test_orders_undefined_below_floor():
    h = np.sqrt(2) / np.array([4, 8, 16])
    orders = observed_orders({"h": h, "e": [1e-3, 1e-14, 1e-15]})["e"]
    assert orders == [None, None]
    assert observed_orders(_synthetic([1e-2, 1e-3]))["lambda_tilde"] == [None]
    with pytest.raises(InvalidArgumentError):
        observed_orders({"h": [0.1], "e": [1.0]})


def test_richardson():
    h = np.array([0.2, 0.1])
    lam = 5.0 + 3.0 * h**2
    assert richardson_reference(h, lam) == pytest.approx(5.0, rel=1e-14)


def test_config_parser(tmp_path):
    text = """# comment line
element = P1-Zero
levels = 4, 8   # trailing comment
alpha0 = 0.2
postprocess = two-grid
two_grid_levels = auto
reference = richardson
write_vtk = no
"""
    d = parse_config_text(text)
    assert d["levels"] == (4, 8) and d["alpha0"] == 0.2 and d["two_grid_levels"] is None
    assert d["write_vtk"] is False
    path = tmp_path / "c.cfg"
    path.write_text(text)
    cfg = load_config(path, alpha0=0.3)
    assert cfg.alpha0 == 0.3 and cfg.reference == "richardson"
    for bad in ("levels 4 8", "colour = red", "levels = 4\nlevels = 8", "count = many"):
        with pytest.raises(InvalidArgumentError):
            parse_config_text(bad)


@pytest.fixture(scope="module")
def small_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("study")
    cfg = StudyConfig(levels=(4, 8, 16), postprocess="two-space", output_dir=str(out))
    table = run_study(cfg)
    return cfg, table, export_outputs(table, cfg)


def test_study_rows(small_study):
    cfg, table, _ = small_study
    assert [r.n for r in table.rows] == [4, 8, 16]
    err = table.column("error_lambda_h")
    assert (np.diff(err) < 0).all()
    assert (table.column("error_lambda_tilde")[1:] < err[1:]).all()
    assert all(r.status == "ok" for r in table.rows)


def test_csv_round_trip(small_study):
    cfg, table, paths = small_study
    recs = read_csv(paths["csv"])
    header = paths["csv"].read_text().splitlines()[0].split(",")
    assert header[:4] == ["n", "h", "n_velocity_dofs", "n_pressure_dofs"]
    for rec, row in zip(recs, table.rows):
        for col in ("h", "lambda_h", "error_lambda_h", "lambda_tilde", "stabilization_pp", "eig_residual"):
            assert rec[col] == pytest.approx(getattr(row, col), rel=1e-12)
    assert recs[0]["order_lambda_h"] is None
    assert recs[2]["order_lambda_h"] == pytest.approx(observed_orders(table)["lambda_h"][1], rel=1e-12)
    assert re.search(r"\d\.\d{16}e[+-]\d\d", paths["csv"].read_text())


def test_csv_matches_direct_call(small_study):
    cfg, table, paths = small_study
    direct = solve_smallest(assemble_blocks(unit_square_mesh(16)))[0].lam
    assert read_csv(paths["csv"])[-1]["lambda_h"] == direct


def test_svg_and_vtk(small_study):
    cfg, table, paths = small_study
    svg = paths["svg"].read_text()
    assert svg.count("<polyline") == 2
    assert "slope 2" in svg
    vtk = paths["vtk"].read_text().splitlines()
    m = table.finest_system.mesh
    assert f"POINTS {m.n_vertices} double" in vtk and f"CELLS {m.n_cells} {4 * m.n_cells}" in vtk


def _strip_time(text):
    rows = [line.split(",") for line in text.splitlines()]
    k = rows[0].index("wall_time")
    return [r[:k] + r[k + 1:] for r in rows]


def test_deterministic_csv(tmp_path):
    texts = []
    for i in range(2):
        cfg = StudyConfig(levels=(4, 8), output_dir=str(tmp_path / str(i)), write_vtk=False)
        export_outputs(run_study(cfg), cfg)
        texts.append((tmp_path / str(i) / "study.csv").read_text())
    assert _strip_time(texts[0]) == _strip_time(texts[1])


def test_extra_eigenvalue_columns(tmp_path):
    cfg = StudyConfig(levels=(4, 8), count=3, output_dir=str(tmp_path), write_vtk=False)
    text = table_to_csv(run_study(cfg), cfg.count)
    assert "lambda_h_2" in text.splitlines()[0] and "lambda_h_3" in text.splitlines()[0]


def test_abort_flushes_partial_table(tmp_path):
    cfg = StudyConfig(levels=(4, 8), max_iterations=1, output_dir=str(tmp_path))
    with pytest.raises(StudyAbortedError) as info:
        run_study(cfg)
    assert info.value.category == "convergence-failure"
    assert info.value.table.rows[0].status == "error:convergence-failure"
    assert (tmp_path / "study.csv").exists()


def test_cli_study(tmp_path, capsys):
    rc = main(["study", "--levels", "4,8", "--postprocess", "two-space", "--output-dir", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "wrote" in out and (tmp_path / "errors.svg").exists()


def test_cli_flags_override_config(tmp_path, capsys):
    cfgfile = tmp_path / "s.cfg"
    cfgfile.write_text("levels = 4 8\nalpha0 = 0.5\n")
    rc = main(["study", "--config", str(cfgfile), "--levels", "4", "--output-dir", str(tmp_path), "--no-vtk"])
    assert rc == 0
    assert len(read_csv(tmp_path / "study.csv")) == 1


def test_cli_other_commands(capsys):
    assert main(["eig", "-n", "4", "--count", "2"]) == 0
    assert main(["postprocess", "-n", "4", "--mode", "two-grid", "--two-grid-levels", "1"]) == 0
    assert main(["infsup", "--levels", "2,4"]) == 0
    out = capsys.readouterr().out
    assert "lambda=" in out and "lambda_tilde=" in out and "beta_A=" in out


def test_cli_error_line(capsys):
    rc = main(["study", "--levels", "8,4"])
    assert rc != 0
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: invalid-argument: ")
