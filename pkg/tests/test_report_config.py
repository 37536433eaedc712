import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from porohomog.config import ConfigError, load_config, parse_config
from porohomog.report import (Report, ReportError, fmt, parse_report, read_report,
                              write_kernel_csv)


def test_fmt():
    assert fmt(True) == "true" and fmt(np.bool_(False)) == "false"
    assert fmt(np.int64(3)) == "3"
    assert fmt(np.float64(0.1)) == "0.1"
    assert fmt(math.inf) == "inf" and fmt(-math.inf) == "-inf" and fmt(math.nan) == "nan"


@given(arrays(float, (3, 2), elements=st.floats(allow_nan=False)),
       st.floats(allow_nan=False), st.integers(-10**6, 10**6), st.booleans())
def test_round_trip(block, x, k, flag):
    rep = Report()
    rep.set("a.x", x)
    rep.set("a.k", k)
    rep.set("flag", flag)
    rep.set("tag", "biot")
    rep.block("M", block)
    back = parse_report(rep.to_text())
    assert back.entries == {"a.x": x, "a.k": k, "flag": flag, "tag": "biot"}
    assert np.array_equal(back.blocks["M"], block)
    assert back.to_text() == rep.to_text()


def test_file_round_trip(tmp_path):
    rep = Report()
    rep.block("B2", np.eye(3))
    rep.write(tmp_path / "r.rpt")
    assert read_report(tmp_path / "r.rpt").to_text() == rep.to_text()


@pytest.mark.parametrize("text, message", [
    ("x = 1\n", "header"),
    ("#porohomog-report v1\nbegin M 2x2\n1,2\n", "truncated"),
    ("#porohomog-report v1\nbegin M 1x2\n1,2,3\nend M\n", "expected 2"),
    ("#porohomog-report v1\nbegin M 1x2\n1,2\n", "not terminated"),
    ("#porohomog-report v1\nnonsense\n", "line 2"),
])
def test_parse_errors(text, message):
    with pytest.raises(ReportError, match=message):
        parse_report(text)


def test_invalid_entries():
    rep = Report()
    with pytest.raises(ReportError):
        rep.set("bad key", 1)
    with pytest.raises(ReportError, match="spans lines"):
        rep.set("k", "a\nb")


def test_merge_combines_run_descriptions():
    a, b = Report(), Report()
    a.set("command", "cell elastic")
    a.set("checks.failed", "none")
    a.set("m", 0.25)
    b.set("command", "cell stokes")
    b.set("checks.failed", "B2_symmetric")
    b.set("m", 0.25)
    b.block("B2", np.eye(3))
    merged = a.merge(b)
    assert merged.entries["command"] == "cell elastic; cell stokes"
    assert merged.entries["checks.failed"] == "B2_symmetric"
    assert "B2" in merged.blocks
    # merging the same report twice does not duplicate
    assert merged.merge(b).entries["command"] == "cell elastic; cell stokes"


def test_merge_conflicts():
    a, b = Report(), Report()
    a.set("m", 0.25)
    b.set("m", 0.5)
    with pytest.raises(ReportError, match="'m'"):
        a.merge(b)
    assert a.merge(b, strict=False).entries["m"] == 0.5
    a.block("B2", np.eye(3))
    c = Report()
    c.block("B2", 2 * np.eye(3))
    with pytest.raises(ReportError, match="block"):
        a.merge(c)


def test_kernel_csv(tmp_path):
    write_kernel_csv(tmp_path / "k.csv", "B1", [(0.0, np.eye(2)), (0.5, 2 * np.eye(2))])
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert lines == ["t,B111,B112,B121,B122", "0.0,1.0,0.0,0.0,1.0", "0.5,2.0,0.0,0.0,2.0"]
    write_kernel_csv(tmp_path / "a.csv", "a2", [(0.0, 1.5)])
    assert (tmp_path / "a.csv").read_text() == "t,a2\n0.0,1.5\n"
    with pytest.raises(ReportError):
        write_kernel_csv(tmp_path / "e.csv", "a2", [])


CONFIG = """\
geometry = cell.geom   # relative to the config file
seed = 3
[scaling]
alpha_mu.a = 2
alpha_lambda.a = -1/2
alpha_tau.c = 2.5
forcing_class = potential
bind.mu1 = 1.5
[schedule]
scheme = euler
"""


def test_config_parsing(tmp_path):
    (tmp_path / "run.cfg").write_text(CONFIG)
    cfg = load_config(tmp_path / "run.cfg")
    assert cfg.geometry == tmp_path / "cell.geom"
    assert cfg.seed == 3 and cfg.get("general", "threads") == 1
    assert cfg.scaling["alpha_lambda.a"] == Fraction(-1, 2)
    spec = cfg.scaling_spec()
    assert spec.mu.a == 2 and spec.tau.c == 2.5 and spec.nu.a == 0
    assert cfg.forcing_class == "potential" and cfg.bindings() == {"mu1": 1.5}
    assert cfg.get("schedule", "scheme") == "euler"
    assert cfg.get("solver", "tol") == 1e-10
    assert cfg.has_scaling


def test_explicit_limits():
    names = ("mu0", "lambda0", "tau0", "nu0", "p_star", "eta0", "mu1", "p1", "lambda1",
             "eta1", "eta2", "p2")
    text = "[scaling]\n" + "".join(f"limit.{n} = 1\n" for n in names).replace(
        "limit.eta2 = 1", "limit.eta2 = inf")
    limits = parse_config(text).limits()
    assert limits.eta2.is_infinite
    assert limits.mu0.is_finite and float(limits.mu0) == 1.0


@pytest.mark.parametrize("text, message", [
    ("colour = red\n", "unknown key 'colour'"),
    ("[extras]\nx = 1\n", "unknown section"),
    ("threads = 0\n", "threads"),
    ("[solver]\nmethod = gauss\n", "method"),
    ("[solver]\ntol = -1\n", "solver.tol"),
    ("[scaling]\nalpha_mu.a = 1/0\n", "alpha_mu.a"),
    ("[scaling]\nlimit.mu0 = 1\n", "incomplete"),
    ("[scaling]\nlimit.mu0 = 1\nalpha_mu.a = 1\n", "not both"),
    ("[scaling]\nlimit.mu0 = -1\n", "limit.mu0"),
    ("seed = 1\nseed = 2\n", "seed"),
])
def test_config_errors(text, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.cfg")
