"""CLI contract: exit codes, config parsing, report files."""

import json
import os

import numpy as np
import pytest

from helmbem import cli, studies


def run(argv):
    return cli.parse_and_dispatch(argv)


def test_unknown_flag_is_usage_error(capsys):
    code = run(["study", "--does-not-exist", "1"])
    assert code == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_missing_subcommand_is_usage_error():
    assert run([]) == 2


def test_unknown_config_key_names_it(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("study = dtn\nwavelenght = 3\n")
    code = run(["study", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "wavelenght" in capsys.readouterr().err


def test_malformed_config_line(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("study dtn\n")
    code = run(["study", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 2
    err = capsys.readouterr().err
    assert "key=value" in err


def test_bad_eta_value_names_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("study = qo\neta = banana\n")
    assert run(["study", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "eta" in capsys.readouterr().err


def test_eta_zero_rejected_for_solver_study(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("study = qo\neta = 0\n")
    assert run(["study", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_parse_eta_forms():
    assert cli.parse_eta("k") == 1.0
    assert cli.parse_eta("+k") == 1.0
    assert cli.parse_eta("-k") == -1.0
    assert cli.parse_eta("2k") == 2.0
    assert cli.parse_eta("0.5*k") == 0.5
    assert cli.parse_eta("0") == 0.0
    with pytest.raises(cli.ConfigError):
        cli.parse_eta("two k")


def test_study_writes_report_files(tmp_path, capsys):
    out = tmp_path / "results"
    cfg = tmp_path / "dtn.cfg"
    cfg.write_text("# dtn sweep\nstudy = dtn\nk_list = 50, 100, 200\n")
    code = run(["study", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    assert (out / "report.json").exists()
    assert (out / "table.csv").exists()
    lines = (out / "table.csv").read_text().splitlines()
    assert len(lines) == 4  # header + one row per k
    report = json.loads((out / "report.json").read_text())
    assert report["schema_version"] == studies.SCHEMA_VERSION
    text = capsys.readouterr().out
    assert "[pass]" in text


def test_single_k_table_has_two_lines(tmp_path):
    out = tmp_path / "r"
    assert run(["study", "--study", "dtn", "--k", "50", "--out", str(out)]) == 0
    assert len((out / "table.csv").read_text().splitlines()) == 2


def test_report_json_roundtrips_bit_exact(tmp_path):
    out = tmp_path / "r"
    assert run(["study", "--study", "dtn", "--k-list", "50,100", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    cfg = studies.StudyConfig(study="dtn", k_list=(50.0, 100.0))
    rep = studies.run_dtn_study(cfg)
    for row_file, row_mem in zip(report["rows"], rep.rows):
        for key, val in row_mem.items():
            if isinstance(val, float):
                assert row_file[key] == val  # bit-exact float round trip
            else:
                assert row_file[key] == val


def test_csv_floats_have_17_significant_digits(tmp_path):
    out = tmp_path / "r"
    assert run(["study", "--study", "dtn", "--k", "50", "--out", str(out)]) == 0
    header, row = (out / "table.csv").read_text().splitlines()
    cols = dict(zip(header.split(","), row.split(",")))
    val = cols["relerr_n1"]
    assert float(val) != 0
    # %.17g representation: parsing back reproduces the double exactly
    cfg = studies.StudyConfig(study="dtn", k_list=(50.0,))
    rep = studies.run_dtn_study(cfg)
    assert float(val) == rep.rows[0]["relerr_n1"]
    assert len(val.replace("-", "").replace(".", "").replace("e", "").lstrip("0")) >= 16


def test_no_files_outside_out(tmp_path, monkeypatch):
    workdir = tmp_path / "cwd"
    workdir.mkdir()
    monkeypatch.chdir(workdir)
    out = tmp_path / "only_here"
    assert run(["study", "--study", "dtn", "--k", "50", "--out", str(out)]) == 0
    assert list(workdir.iterdir()) == []


def test_solve_prints_summary(tmp_path, capsys):
    code = run(["solve", "--geometry", "circle", "--k", "8", "--eta", "k",
                "--ppw", "10", "--tol", "1e-5", "--out", str(tmp_path / "s")])
    assert code == 0
    text = capsys.readouterr().out
    assert "dof=80" in text
    assert "iterations=" in text
    assert "rel_mie_error=" in text
    assert (tmp_path / "s" / "residuals.csv").exists()


def test_assemble_dumps_matrix(tmp_path, capsys):
    out = tmp_path / "a"
    code = run(["assemble", "--kind", "SLP", "--geometry", "circle", "--k", "5",
                "--ppw", "10", "--out", str(out)])
    assert code == 0
    files = sorted(os.listdir(out))
    assert any(f.endswith(".bin") for f in files)
    side = json.loads((out / [f for f in files if f.endswith(".json")][0]).read_text())
    assert side["kind"] == "SLP"
    raw = np.fromfile(out / [f for f in files if f.endswith(".bin")][0],
                      dtype=np.complex128)
    assert raw.size == side["dof"] ** 2


def test_modes_subcommand(tmp_path):
    out = tmp_path / "m"
    assert run(["modes", "--k", "5", "--out", str(out)]) == 0
    assert (out / "modes_k5.csv").exists()


def test_probe_subcommand(tmp_path, capsys):
    out = tmp_path / "p"
    code = run(["probe", "--probe-geometry", "segment", "--k-list", "32,64,128,256",
                "--out", str(out)])
    assert code == 0
    assert "slope=" in capsys.readouterr().out
    assert (out / "probe.csv").exists()


def test_selftest_exit_zero(capsys):
    assert run(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "selftest:" in out
    assert "FAIL" not in out


def test_hbl_threads_env(monkeypatch, capsys):
    monkeypatch.setenv("HBL_THREADS", "2")
    assert run(["solve", "--k", "8"]) == 0
    monkeypatch.setenv("HBL_THREADS", "lots")
    assert run(["solve", "--k", "8"]) == 2


def test_verdict_failure_exit_code(tmp_path):
    # the qo study at ppw=10 includes the k=8 Mie check, which is red
    # (best-approximation floor above the stated bound; see ledger)
    out = tmp_path / "v"
    code = run(["study", "--study", "qo", "--k-list", "8", "--mesh-rule", "hk",
                "--out", str(out)])
    assert code == 1
    report = json.loads((out / "report.json").read_text())
    failed = [v for v in report["verdicts"] if not v["passed"]]
    assert any(v["criterion"].startswith("A1") for v in failed)
