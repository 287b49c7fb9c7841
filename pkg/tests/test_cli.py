import csv
import io
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from ptone.cli import main
from ptone.report import CertificationReport, fmt_float
from ptone.runner import run
from ptone.scenario import ScenarioError, parse_scenario, parse_scenario_text

HERE = os.path.dirname(__file__)
SCENARIOS = os.path.join(HERE, os.pardir, "scenarios")

MINIMAL = """\
[model]
dim = 2
curvature = -1
[domain]
ball = 3
"""


# -- parsing ----------------------------------------------------------------------------

def test_minimal_scenario_defaults():
    sc = parse_scenario_text(MINIMAL)
    assert (sc.p, sc.grid, sc.tol, sc.output_format) == (2.0, 2048, 1e-10, "json")
    assert sc.tasks == [] and sc.domain.kind == "ball" and sc.domain.radii == (3.0,)


def test_comments_and_inline_comments():
    sc = parse_scenario_text("# header\n[model]\ndim = 3   # three\ncurvature = 0\n[domain]\nball = 1\n")
    assert sc.model.dim == 3 and sc.model.curvature == 0.0


@pytest.mark.parametrize("p", ["1", "1.0", "0.5"])
def test_p_must_exceed_one(p):
    with pytest.raises(ScenarioError, match="p must exceed 1"):
        parse_scenario_text(MINIMAL + f"[params]\np = {p}\n")


def test_annulus_order_is_checked():
    with pytest.raises(ScenarioError, match=r"\[domain\] annulus"):
        parse_scenario_text(MINIMAL.replace("ball = 3", "annulus = 3, 1"))


def test_parse_error_carries_line_number():
    with pytest.raises(ScenarioError, match="line 3"):
        parse_scenario_text("[model]\ndim = 2\nthis line is broken\n")


def test_key_outside_section_carries_line_number():
    with pytest.raises(ScenarioError, match="line 1"):
        parse_scenario_text("dim = 2\n")


@pytest.mark.parametrize("text,key", [
    (MINIMAL + "[params]\nspeed = 3\n", "[params] speed"),
    (MINIMAL + "[extras]\nx = 1\n", "[extras]"),
    (MINIMAL + "[tasks]\nrun = tone, bound:magic\n", "[tasks] run"),
    (MINIMAL.replace("dim = 2", "dim = two"), "[model] dim"),
    (MINIMAL.replace("ball = 3", "ball = 3\nopen = 4"), "[domain]"),
    (MINIMAL.replace("curvature = -1", "curvature = -1\nr_max = 2"), "[domain] ball"),
    (MINIMAL.replace("curvature = -1", "warp_table = missing.csv\nr_max = 5"), "[model] warp_table"),
    (MINIMAL + "[output]\nformat = xml\n", "[output] format"),
])
def test_validation_names_the_key(text, key):
    with pytest.raises(ScenarioError) as exc:
        parse_scenario_text(text)
    assert key in str(exc.value)


def test_relative_paths_resolve_against_the_scenario(tmp_path):
    r = np.linspace(0, 4, 81)
    np.savetxt(tmp_path / "warp.csv", np.column_stack([r, np.sinh(r)]), delimiter=",", header="r,f",
               comments="")
    (tmp_path / "s.ini").write_text("[model]\ndim = 2\nwarp_table = warp.csv\nr_max = 4\n"
                                    "[domain]\nball = 2\n[output]\npath = out.json\n")
    sc = parse_scenario(str(tmp_path / "s.ini"))
    assert sc.model.warp_table == str(tmp_path / "warp.csv")
    assert sc.output_path == str(tmp_path / "out.json")
    assert sc.name == "s"


# -- running ----------------------------------------------------------------------------

def test_empty_task_list_passes():
    rep = run(parse_scenario_text(MINIMAL))
    assert rep.records == [] and rep.verdict == "pass" and rep.exit_code == 0


def test_invalid_quotient_field_does_not_fail_the_verdict():
    # an inward field has negative divergence, so the quotient bound's precondition fails
    sc = parse_scenario_text("[model]\ndim = 2\ncurvature = 0\n[params]\ngrid = 256\n[domain]\nball = 1\n"
                             "[field]\nkind = constant:-1\n[tasks]\nrun = tone, bound:c_constant\n")
    rep = run(sc)
    rec = [r for r in rep.records if r.name == "bound:c_constant"][0]
    assert rec.kind == "invalid-field" and rec.passed is None
    assert rep.verdict == "pass" and rep.exit_code == 0


def test_failed_inequality_exits_two():
    rep = CertificationReport({})
    rep.add("x", 1.0, "lower-bound", False)
    assert rep.verdict == "fail" and rep.exit_code == 2


def test_task_error_exits_one():
    sc = parse_scenario_text(MINIMAL + "[tasks]\nrun = ess_tone, tone\n")
    rep = run(sc)
    assert rep.records[0].kind == "error"
    assert rep.records[1].name == "tone" and rep.records[1].value > 0
    assert rep.exit_code == 1


def test_error_takes_precedence_over_failure():
    rep = CertificationReport({})
    rep.add("x", 1.0, "lower-bound", False)
    rep.add("y", None, "error")
    assert rep.exit_code == 1


def test_mckean_scenario_passes():
    rep = run(parse_scenario(os.path.join(SCENARIOS, "h2_mckean.ini")))
    vals = {r.name: r for r in rep.records}
    assert vals["bound:mckean"].value == pytest.approx(0.25, rel=1e-12)
    assert vals["bound:mckean"].passed
    assert vals["ess_tone"].value == pytest.approx(0.25, rel=2e-2)
    assert vals["ordering_pass"].passed
    assert rep.verdict == "pass"


# -- serialisation ------------------------------------------------------------------------

def _small_report():
    sc = parse_scenario_text(MINIMAL.replace("ball = 3", "ball = 3\n[params]\ngrid = 128\n") +
                             "[tasks]\nrun = tone, bound:mckean, bound:thm2, growth, cheeger\n"
                             "[growth]\nr_hi = 20\n")
    return run(sc)


def test_json_schema():
    doc = json.loads(_small_report().to_json())
    assert list(doc) == ["scenario", "results", "verdict"]
    assert [r["name"] for r in doc["results"]] == ["tone", "bound:mckean", "bound:thm2", "theta",
                                                     "brooks_bound", "cheeger_h"]
    assert set(doc["results"][0]) == {"name", "value", "kind", "passed", "tolerance", "citation", "note"}


def test_json_and_csv_carry_identical_values():
    rep = _small_report()
    doc = json.loads(rep.to_json())
    rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
    assert rows[-1]["name"] == "verdict" and rows[-1]["kind"] == doc["verdict"]
    for rec, row in zip(doc["results"], rows[:-1]):
        assert rec["name"] == row["name"]
        if rec["value"] is None:
            assert row["value"] == ""
        else:
            assert float(row["value"]) == rec["value"]


def test_float_format_round_trips():
    for x in (0.1, 1 / 3, 2.0 ** -1074, 1e308, math.pi):
        assert float(fmt_float(x)) == x
    assert fmt_float(math.inf) == "inf" and fmt_float(-math.inf) == "-inf" and fmt_float(math.nan) == "nan"


def test_non_finite_values_stay_standard_json():
    rep = CertificationReport({"r_max": math.inf})
    rep.add("x", -math.inf, "vacuous")
    doc = json.loads(rep.to_json())
    assert doc["scenario"]["r_max"] == "inf" and doc["results"][0]["value"] == "-inf"


# -- command line -------------------------------------------------------------------------

def test_cli_tone_json(capsys):
    code = main(["tone", "--dim", "3", "--curvature", "0", "--ball", "1", "--grid", "1024"])
    doc = json.loads(capsys.readouterr().out)
    assert code == 0
    assert doc["results"][0]["value"] == pytest.approx(math.pi ** 2, rel=2e-3)


def test_cli_bound_csv(capsys):
    code = main(["bound", "--dim", "3", "--curvature", "0", "--ball", "1", "--grid", "512",
                 "--method", "ball_comparison", "--format", "csv"])
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert code == 0
    assert rows[0]["name"] == "bound:ball_comparison" and float(rows[0]["value"]) == pytest.approx(2.25)
    assert rows[0]["passed"] == "true"


def test_cli_growth_and_cheeger(capsys):
    assert main(["growth", "--dim", "3", "--curvature", "-1", "--r-lo", "20", "--r-hi", "40"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["results"][0]["value"] == pytest.approx(2.0, rel=1e-2)
    assert main(["cheeger", "--dim", "2", "--curvature", "-1", "--r-hi", "40"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["results"][0]["value"] == pytest.approx(1.0, rel=1e-2)


def test_cli_growth_needs_a_window(capsys):
    assert main(["growth", "--dim", "2", "--curvature", "-1"]) == 1
    assert "--r-hi" in capsys.readouterr().err


def test_cli_rejects_bad_p(capsys):
    assert main(["tone", "--dim", "2", "--curvature", "-1", "--ball", "2", "--p", "1"]) == 1
    assert "p must exceed 1" in capsys.readouterr().err


def test_cli_dump_eigenfunction(tmp_path, capsys):
    path = tmp_path / "u.csv"
    assert main(["tone", "--dim", "2", "--curvature", "-1", "--ball", "2", "--grid", "64",
                 "--dump-eigenfunction", str(path)]) == 0
    lines = path.read_text().splitlines()
    assert lines[0] == "r,u" and len(lines) == 65
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.all(data[:, 1] > 0) and np.all(np.diff(data[:, 0]) > 0)


def test_cli_output_file(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["tone", "--dim", "2", "--curvature", "-1", "--ball", "2", "--grid", "64",
                 "--output", str(out)]) == 0
    assert capsys.readouterr().out == ""
    assert json.loads(out.read_text())["verdict"] == "pass"


def test_certify_prints_lines_and_is_deterministic(tmp_path, capsys):
    scen = tmp_path / "s.ini"
    scen.write_text(MINIMAL + "[params]\ngrid = 256\n[tasks]\nrun = tone, bound:mckean, growth, cheeger\n"
                    "[growth]\nr_hi = 30\n")
    outs = []
    for i in range(2):
        target = tmp_path / f"r{i}.json"
        assert main(["certify", str(scen), "--output", str(target)]) == 0
        assert "verdict: pass" in capsys.readouterr().out
        outs.append(target.read_bytes())
    assert outs[0] == outs[1]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ptone", "tone", "--dim", "2", "--curvature", "-1",
                           "--ball", "2", "--grid", "32"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["verdict"] == "pass"
