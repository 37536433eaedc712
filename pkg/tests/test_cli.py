import warnings

import numpy as np
import pytest

from porohomog import cli
from porohomog.cli import EXIT_CHECK, EXIT_FAILURE, EXIT_INADMISSIBLE, EXIT_OK, main
from porohomog.microcell import cube_inclusion, fluid_matrix, write_geometry
from porohomog.report import read_report


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        write_geometry(fluid_matrix(4, 2), tmp_path / "grain.geom")
    write_geometry(cube_inclusion(4, 2), tmp_path / "pore.geom")
    (tmp_path / "biot.cfg").write_text("geometry = grain.geom\n[scaling]\nalpha_mu.a = 2\n")
    monkeypatch.chdir(tmp_path)
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def test_classify_prints_and_writes(workdir, capsys):
    assert run("classify", "--config", "biot.cfg", "--report", "c.rpt") == EXIT_OK
    text = capsys.readouterr().out
    assert text == (workdir / "c.rpt").read_text()
    rep = read_report(workdir / "c.rpt")
    assert rep.entries["regime.tag"] == "biot"
    assert rep.entries["connectivity.pores_isolated"] is False


def test_isolated_geometry_changes_the_regime(workdir, capsys):
    assert run("classify", "--config", "biot.cfg", "--geometry", "pore.geom") == EXIT_OK
    assert "regime.tag = anisotropic_lame" in capsys.readouterr().out


@pytest.mark.parametrize("scaling", [
    "alpha_mu.a = -1\n",
    "alpha_lambda.a = -3/2\nalpha_p.a = -2\nalpha_eta.a = -2\nforcing_class = potential\n",
])
def test_unsupported_scalings_exit_two(workdir, capsys, scaling):
    (workdir / "x.cfg").write_text("geometry = grain.geom\n[scaling]\n" + scaling)
    assert run("classify", "--config", "x.cfg") == EXIT_INADMISSIBLE
    assert capsys.readouterr().err.startswith("error: ")


def test_cell_reports_are_byte_identical(workdir):
    for out in ("a", "b"):
        assert run("cell", "unsteady", "--config", "biot.cfg", "--out", out) == EXIT_OK
    names = sorted(p.name for p in (workdir / "a").iterdir())
    assert names == ["porohomog_unsteady.rpt", "porohomog_unsteady_B1.csv"]
    for name in names:
        assert (workdir / "a" / name).read_bytes() == (workdir / "b" / name).read_bytes()
    rep = read_report(workdir / "a" / "porohomog_unsteady.rpt")
    assert rep.entries["checks.failed"] == "none"
    assert rep.blocks["B1_integral"].shape == (3, 3)


def test_cell_problem_outside_the_regime_needs_bindings(workdir, capsys):
    assert run("cell", "stokes", "--config", "biot.cfg") == EXIT_FAILURE
    assert "bind.*" in capsys.readouterr().err
    (workdir / "s.cfg").write_text("geometry = grain.geom\n[scaling]\nbind.mu1 = 2\n")
    assert run("cell", "stokes", "--config", "s.cfg", "--out", "s") == EXIT_OK
    rep = read_report(workdir / "s" / "porohomog_stokes.rpt")
    assert rep.entries["binding.mu1"] == 2.0
    assert np.linalg.eigvalsh(rep.blocks["B2"]).min() > 0


def test_failed_check_exit_code(workdir, monkeypatch, capsys):
    monkeypatch.setattr(cli, "energy_identity", lambda sol: (np.ones(3), np.zeros(3)))
    assert run("cell", "elastic", "--config", "biot.cfg", "--out", "o") == EXIT_CHECK
    assert "energy_identity" in capsys.readouterr().err
    rep = read_report(workdir / "o" / "porohomog_elastic.rpt")
    assert rep.entries["check.energy_identity"] == "fail"
    assert rep.entries["checks.failed"] == "energy_identity"
    assert run("cell", "elastic", "--config", "biot.cfg", "--out", "o",
               "--skip-checks") == EXIT_OK


def test_report_merge(workdir, capsys):
    assert run("cell", "elastic", "--config", "biot.cfg", "--out", "o") == EXIT_OK
    assert run("cell", "unsteady", "--config", "biot.cfg", "--out", "o") == EXIT_OK
    assert run("report-merge", "-o", "m.rpt", "o/porohomog_elastic.rpt",
               "o/porohomog_unsteady.rpt") == EXIT_OK
    rep = read_report(workdir / "m.rpt")
    assert rep.entries["command"] == "cell elastic; cell unsteady"
    assert {"A0s", "B1_integral"} <= set(rep.blocks)
    (workdir / "other.rpt").write_text("#porohomog-report v1\ngeometry.porosity = 0.5\n")
    assert run("report-merge", "-o", "m2.rpt", "m.rpt", "other.rpt") == EXIT_FAILURE
    assert "conflicting" in capsys.readouterr().err
    assert run("report-merge", "--overwrite", "-o", "m2.rpt", "m.rpt", "other.rpt") == EXIT_OK


def test_macro_from_report(workdir):
    assert run("cell", "elastic", "--config", "biot.cfg", "--out", "o") == EXIT_OK
    assert run("macro", "lame", "--report", "o/porohomog_elastic.rpt", "--n", 4, "--dim", 2,
               "--q", 1, "--out", "m") == EXIT_OK
    rep = read_report(workdir / "m" / "porohomog_lame.rpt")
    assert rep.entries["coefficients"] == "porohomog_elastic.rpt"
    assert rep.entries["flag.pi_convention"].startswith("stress carries -(q + pi) I")
    assert (workdir / "m" / "porohomog_lame_u_x.csv").exists()


def test_macro_synthetic_is_deterministic(workdir):
    for out in ("a", "b"):
        assert run("macro", "darcy-transient", "--synthetic", "--n", 4, "--dim", 2,
                   "--initial", "cosine", "--steps", 3, "--out", out) == EXIT_OK
    for path in (workdir / "a").iterdir():
        assert path.read_bytes() == (workdir / "b" / path.name).read_bytes()


@pytest.mark.parametrize("argv", [
    ["cell", "elastic"],
    ["macro", "lame"],
    ["cell", "elastic", "--config", "missing.cfg"],
    ["cell", "elastic", "--geometry", "missing.geom", "--config", "biot.cfg"],
])
def test_input_failures_exit_one(workdir, argv):
    assert run(*argv) == EXIT_FAILURE


def test_usage_errors_exit_one(workdir):
    with pytest.raises(SystemExit) as err:
        run("bogus")
    assert err.value.code == EXIT_FAILURE
