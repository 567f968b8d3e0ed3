import csv
import io
import json

import pytest

from unidm.cli import POINT_COLUMNS, main, parse_config
from unidm.errors import ConfigError


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def rows_of(text):
    return list(csv.DictReader(io.StringIO("\n".join(l for l in text.splitlines() if not l.startswith("#")))))


def test_missing_config_file(capsys, tmp_path):
    code, _, err = run(["skr", "--config", str(tmp_path / "nope.ini")], capsys)
    assert code == 1 and "config file not found" in err


def test_beta_out_of_range_file_and_flag(capsys, tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[protocol]\nbeta=1.2\n")
    code, _, err = run(["skr", "--config", str(cfg)], capsys)
    assert code == 1 and "beta" in err and "[0, 1]" in err and "run.ini:2" in err
    code, _, err = run(["skr", "--beta", "1.2"], capsys)
    assert code == 1 and "--beta" in err


def test_unknown_key_and_section(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("# comment\ndistance = 5\ncolour = red\n")
    with pytest.raises(ConfigError, match=r"run.ini:3: unknown key 'colour'"):
        parse_config(str(cfg))
    cfg.write_text("[extras]\ndistance = 5\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(str(cfg))
    cfg.write_text("[solver]\ndistance = 5\n")
    with pytest.raises(ConfigError, match="belongs in"):
        parse_config(str(cfg))
    cfg.write_text("distance = far\n")
    with pytest.raises(ConfigError, match="bad value"):
        parse_config(str(cfg))


def test_flags_override_file_and_json_config(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"channel": {"distance": 5.0}, "beta": 0.95}))
    rc = parse_config(str(cfg), {"distance": "7"})
    assert rc["distance"] == 7.0 and rc["beta"] == 0.95
    assert rc.sources["distance"] == "--distance"
    cfg.write_text(json.dumps({"nonsense": 1}))
    with pytest.raises(ConfigError):
        parse_config(str(cfg))


def test_skr_file_echo_and_mirror(capsys, tmp_path):
    cfg = tmp_path / "run.ini"
    text = "[constellation]\nstates = 2\nalpha0 = 0.1\n\n[channel]\ndistance = 10   # km\n"
    cfg.write_text(text)
    out = tmp_path / "skr.csv"
    code, _, _ = run(["skr", "--config", str(cfg), "--output", str(out), "--no-p-variant", "false"], capsys)
    assert code == 0
    body = out.read_text()
    header = [l[2:] for l in body.splitlines() if l.startswith("# ")]
    echoed = [l[2:] for l in header if l.startswith("| ")]
    assert echoed == text.splitlines()
    rows = rows_of(body)
    assert list(rows[0]) == list(POINT_COLUMNS)
    assert float(rows[0]["key_rate"]) > 0
    assert rows[0]["cq_star"] == "0.160456925"
    mirror = json.loads((tmp_path / "skr.csv.json").read_text())
    assert mirror["rows"][0]["status"] == "optimal"
    assert mirror["details"][0]["diagnostics"]["convergence"]["delta"] < 1e-6


def test_rerun_identical_without_meta(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["sweep", "distance", "--values", "5,15", "--no-meta", "--no-p-variant", "false"]
    assert main(argv + ["--output", str(a)]) == 0
    assert main(argv + ["--output", str(b)]) == 0
    assert a.read_text() == b.read_text()
    assert not a.read_text().startswith("#")


def test_distance_sweep_51_rows(capsys):
    code, out, _ = run(["sweep", "distance", "--from", "0", "--to", "50", "--step", "1",
                        "--states", "2", "--no-p-variant", "false"], capsys)
    assert code == 0
    rows = rows_of(out)
    assert len(rows) == 51
    at10 = next(r for r in rows if float(r["value"]) == 10.0)
    assert float(at10["key_rate"]) > 0


def test_partial_failure_exit_code(capsys, tmp_path):
    out = tmp_path / "s.csv"
    code, _, err = run(["sweep", "alpha", "--values", "0.01,-1", "--output", str(out),
                        "--no-p-variant", "false"], capsys)
    assert code == 2 and "failed" in err
    rows = rows_of(out.read_text())
    assert rows[0]["status"] == "optimal" and rows[1]["status"] == "failed"


def test_region_symmetric_about_center(capsys):
    code, out, _ = run(["region", "--alpha0", "0.1", "--distance", "10", "--xi", "0", "--states", "2",
                        "--points", "41", "--no-meta"], capsys)
    assert code == 0
    rows = rows_of(out)
    assert rows
    for r in rows:
        mid = 0.5 * (float(r["cp_minus"]) + float(r["cp_plus"]))
        assert mid == pytest.approx(float(r["center"]), abs=1e-8)


def test_holevo_curve_ordering(capsys):
    code, out, _ = run(["holevo-curve", "--states", "2,4,6", "--points", "11", "--cq-max", "0.15",
                        "--no-meta"], capsys)
    assert code == 0
    rows = rows_of(out)
    by_cq = {}
    for r in rows:
        by_cq.setdefault(round(float(r["cq"]), 6), {})[int(r["states"])] = float(r["chi_max"])
    assert by_cq
    for chis in by_cq.values():
        assert chis[2] < chis[4] < chis[6]


def test_baselines_and_convergence(capsys):
    code, out, _ = run(["baseline", "pure-loss", "--values", "0,10", "--no-meta"], capsys)
    assert code == 0 and float(rows_of(out)[0]["chi"]) == 0.0
    code, out, _ = run(["baseline", "gaussian", "--values", "10", "--no-meta"], capsys)
    assert code == 0 and float(rows_of(out)[0]["key_rate"]) > 0
    code, out, _ = run(["convergence", "--cutoffs", "15,20", "--no-meta"], capsys)
    assert code == 0 and float(rows_of(out)[1]["delta"]) < 1e-6


def test_json_format_and_slack_warning(capsys):
    code, out, _ = run(["skr", "--format", "json", "--no-p-variant", "false", "--slack", "1e-4"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["rows"][0]["var"] == "distance"
    assert doc["details"][0]["diagnostics"]["solver"]["certifying"] is False
    code, out, _ = run(["skr", "--no-p-variant", "false", "--slack", "1e-4"], capsys)
    assert "NOT certified" in out


def test_shaping_and_optimize_commands(capsys):
    code, out, _ = run(["shaping", "--states", "4", "--values", "0,5", "--no-p-variant", "false"], capsys)
    assert code == 0 and "argmax_nu=0" in out
    code, out, _ = run(["optimize-variance", "--alpha-min", "0.05", "--alpha-max", "0.3", "--grid", "5",
                        "--no-meta"], capsys)
    assert code == 0
    row = rows_of(out)[0]
    assert 0.05 <= float(row["alpha0_opt"]) <= 0.3 and row["all_negative"] == "false"


def test_grid_errors(capsys):
    code, _, err = run(["sweep", "distance", "--from", "0", "--to", "5"], capsys)
    assert code == 1 and "--step" in err
    code, _, err = run(["skr", "--states", "2,4"], capsys)
    assert code == 1 and "single value" in err
