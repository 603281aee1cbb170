import csv

import pytest
import yaml

from dmwsim import cli
from dmwsim import config as cfgmod


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_run_preset_mw_stable(tmp_path, capsys):
    out = tmp_path / "m.csv"
    code = cli.main(["run", "--preset", "paper-sec5", "--policy", "mw", "--arrival-total", "4.0", "--slots", "20000", "--out", str(out)])
    assert code == 0
    line = capsys.readouterr().out.strip()
    assert "verdict=stable" in line and "policy=mw" in line
    (row,) = _rows(out)
    assert row["schema"] == cli.RUN_SCHEMA and row["verdict"] == "stable"
    assert list(row) == cli.RUN_COLUMNS


def test_run_zero_slots_is_schema_error(capsys):
    assert cli.main(["run", "--slots", "0"]) != 0
    assert "slots" in capsys.readouterr().err


def test_run_same_seed_identical_bytes(tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert cli.main(["run", "--preset", "paper-sec5", "--policy", "rs", "--slots", "3000", "--seed", "7", "--series", "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    s0 = paths[0].with_name("a_series.csv").read_bytes()
    assert s0 == paths[1].with_name("b_series.csv").read_bytes()
    assert s0.count(b"\n") == 3001


def test_unknown_key_rejected(tmp_path, capsys):
    f = tmp_path / "bad.yaml"
    f.write_text(yaml.safe_dump({"preset": "paper-sec5", "rs": {"delta": 2, "deltaa": 3}}))
    assert cli.main(["run", "--config", str(f)]) == 2
    assert "rs.deltaa" in capsys.readouterr().err


def test_unknown_preset_rejected(capsys):
    assert cli.main(["run", "--preset", "nope"]) == 2
    assert "preset" in capsys.readouterr().err


def test_bad_buffer_flag(capsys):
    assert cli.main(["run", "--buffer", "lots"]) == 2
    assert "buffer" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path):
    f = tmp_path / "exp.yaml"
    f.write_text(yaml.safe_dump({"preset": "paper-sec5", "slots": 1234, "users": 6, "rs": {"delta": 4}}))
    exp = cfgmod.load(f, {"slots": 999})
    assert exp.slots == 999 and exp.users == 6 and exp.rs.delta == 4
    assert exp.rs.b_ladder == [1.1, 1.2, 2.0] and exp.rs.collthr == 7
    sc = exp.sim_config()
    assert sc.n_users == 6 and sc.channel.pmf[0] == tuple(cfgmod.GROUP1_PMF)
    assert sc.arrivals.total == pytest.approx(4.0)


def test_paper_preset_contents():
    exp = cfgmod.resolve({"preset": "paper-sec5"})
    sc = exp.sim_config()
    assert sc.n_users == 20 and sc.buffer == 200 and sc.slots == 200_000
    assert sc.channel.rates == (1, 2, 3, 4, 5)
    assert sc.channel.pmf[9] == (0.15, 0.2, 0.2, 0.15, 0.3)
    assert sc.channel.pmf[10] == (0.25, 0.25, 0.15, 0.1, 0.25)
    assert sc.rs.b_ladder == (1.1, 1.2, 2.0) and sc.rs.delta == 2.0
    assert sc.rs.collthr == sc.rs.idlethr == 7 and sc.ab.b == 2.0


def test_sweep_writes_three_tables(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path))
    code = cli.main([
        "sweep", "--preset", "paper-sec5", "--slots", "800",
        "--arrival-grid", "1", "3", "--policies", "mw", "rs",
        "--delta-grid", "1", "4", "--users-grid", "6", "8",
    ])
    assert code == 0
    a = _rows(tmp_path / "fig1a.csv")
    assert [(r["arrival_total"], r["policy"]) for r in a] == [("1", "mw"), ("1", "rs"), ("3", "mw"), ("3", "rs")]
    b = _rows(tmp_path / "fig1b.csv")
    assert [r["delta"] for r in b] == ["1", "1", "4", "4"]
    c = _rows(tmp_path / "fig1c.csv")
    assert [r["n_users"] for r in c] == ["6", "6", "8", "8"]
    assert all(r["schema"] == cli.SWEEP_SCHEMA for r in a + b + c)


def test_sweep_needs_grid(tmp_path, capsys):
    assert cli.main(["sweep", "--slots", "100", "--output-dir", str(tmp_path)]) == 2
    assert "arrival_grid" in capsys.readouterr().err


def test_float_format_twelve_digits():
    assert cli.fmt(1 / 3) == "0.333333333333"
    assert cli.fmt(True) == "1"


@pytest.mark.slow
def test_verify_default_passes(tmp_path):
    out = tmp_path / "v.csv"
    assert cli.main(["verify", "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows and all(r["passed"] == "1" for r in rows)


def test_verify_fault_fails(tmp_path):
    assert cli.main(["verify", "--trials", "10000", "--inject-fault", "--out", str(tmp_path / "f.csv")]) == 1


def test_verify_trials_scaling(tmp_path):
    res = {}
    for n in (10_000, 1_000_000):
        out = tmp_path / f"v{n}.csv"
        assert cli.main(["verify", "--trials", str(n), "--out", str(out)]) == 0
        res[n] = {r["quantity"]: r for r in _rows(out)}
    assert res[10_000].keys() == res[1_000_000].keys()
    q = "win_probability[2, 1][0]"
    assert float(res[1_000_000][q]["tolerance"]) < float(res[10_000][q]["tolerance"])
