import csv
import io
import json
import subprocess
import sys

import pytest

from tachyon_gr import cli
from tachyon_gr import defaults


def run(argv, capsys):
    code = cli.run(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_deflect_example(capsys):
    code, out, _ = run(["deflect", "--rs", "1", "--b", "1000", "--v", "2", "--Q", "-1"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1
    assert float(rows[0]["chi_analytic"]) == 1.25


def test_causality_example(capsys):
    code, out, _ = run(["causality", "--x0", "1", "--v", "0.6", "--V", "2"], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["dt_earth"] == pytest.approx(0.71429, abs=5e-6)
    assert data["dt_ship"] == pytest.approx(-0.17857, abs=5e-6)
    assert data["reversed"] is True


def test_numbers_use_17_digits(capsys):
    _, out, _ = run(["causality", "--x0", "1", "--v", "0.6", "--V", "2"], capsys)
    assert '"dt_ship": -0.17857142857142855' in out
    _, out, _ = run(["spectrum", "--E0", "3", "--m", "0.7", "--points", "4"], capsys)
    for row in list(csv.reader(io.StringIO(out)))[1:]:
        for cell in row:
            assert cell == format(float(cell), ".17g")


def test_sweep_output_is_reproducible_and_ordered(capsys, monkeypatch):
    argv = ["deflect", "--b", "10", "100", "1000", "5", "--v", "1.5", "3"]
    monkeypatch.setenv("TACHYON_GR_THREADS", "1")
    _, serial, _ = run(argv, capsys)
    monkeypatch.setenv("TACHYON_GR_THREADS", "6")
    _, parallel, _ = run(argv, capsys)
    assert serial == parallel
    bs = [float(r["b"]) for r in csv.DictReader(io.StringIO(serial))]
    assert bs == [10, 100, 1000, 5] * 2


def test_bad_thread_count(capsys, monkeypatch):
    monkeypatch.setenv("TACHYON_GR_THREADS", "0")
    code, _, err = run(["deflect"], capsys)
    assert code == 2 and "TACHYON_GR_THREADS" in err


def test_validation_errors_exit_2(capsys):
    assert run(["deflect", "--rs", "-1"], capsys)[0] == 2
    assert run(["causality", "--v", "1.5"], capsys)[0] == 2
    assert run(["deflect", "--Q", "-1", "--v", "0.5"], capsys)[0] == 2
    assert run(["nonsense"], capsys)[0] == 2
    assert run([], capsys)[0] == 2


def test_numerical_failure_exit_3(capsys):
    code, out, _ = run(["orbit", "--b0", "0"], capsys)
    assert code == 3
    assert json.loads(out)["found"] is False


def test_print_defaults(capsys):
    code, out, _ = run(["--print-defaults"], capsys)
    assert code == 0
    keys = [line.split()[0] for line in out.splitlines()]
    assert keys == list(defaults.DEFAULTS)


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[deflect]\nb = 100 200\nv = 3\nQ = 0\n")
    code, out, _ = run(["--config", str(cfg), "deflect", "--Q", "-1"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["b"] for r in rows] == ["100", "200"]
    assert {r["Q"] for r in rows} == {"-1"}


@pytest.mark.parametrize("body,needle", [
    ("[deflect]\nbogus = 3\n", "bogus"),
    ("[deflect]\nv = fast\n", "'v'"),
    ("[warp]\nx = 1\n", "[warp]"),
    ("no section\n", "malformed"),
])
def test_config_errors_name_the_key(tmp_path, capsys, body, needle):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(body)
    code, _, err = run(["--config", str(cfg), "deflect"], capsys)
    assert code == 2
    assert needle in err


def test_output_file(tmp_path, capsys):
    path = tmp_path / "spec.csv"
    assert run(["spectrum", "--points", "5", "--output", str(path)], capsys)[0] == 0
    assert path.read_text().splitlines()[0] == "Ee,massless,bradyonic,tachyonic"


def test_field_writes_sidecar(tmp_path, capsys):
    path = tmp_path / "field.csv"
    assert run(["field", "--shape", "gaussian", "--points", "64", "-o", str(path)], capsys)[0] == 0
    side = json.loads((tmp_path / "field.csv.json").read_text())
    assert side["n"] == 2


def test_cosmo_and_geodesic(capsys):
    code, out, _ = run(["cosmo", "--points", "4"], capsys)
    assert code == 0 and out.splitlines()[0] == "a,T_full,T_closed_form,rho,P"
    code, out, _ = run(["geodesic", "--metric", "schwarzschild", "--tau-end", "2", "--format", "json"], capsys)
    assert code == 0 and json.loads(out)["status"] == "completed"


def test_verify_group_filter(tmp_path, capsys):
    report = tmp_path / "report.json"
    code, out, _ = run(["verify", "--only", "deflection", "--json-report", str(report)], capsys)
    assert code == 0
    assert out.count("PASS") == 2
    data = json.loads(report.read_text())
    assert [c["number"] for c in data["criteria"]] == [1, 2]
    assert all(c["anchor"] for c in data["criteria"])


def test_mutation_flag_hidden_without_debug(capsys, monkeypatch):
    monkeypatch.delenv("TACHYON_GR_DEBUG", raising=False)
    assert run(["verify", "--only", "f0", "--mutate-g-prefactor", "1.01"], capsys)[0] == 2


def test_mutation_flag_fails_f0_identity(capsys, monkeypatch):
    monkeypatch.setenv("TACHYON_GR_DEBUG", "1")
    code, out, _ = run(["verify", "--only", "f0", "--mutate-g-prefactor", "1.01"], capsys)
    assert code == 1
    assert out.startswith("FAIL")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "tachyon_gr", "causality"], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["reversed"] is True
