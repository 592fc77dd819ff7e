import pytest

import dris_sim
from app.errors import ConfigValidationError
from utils.plot_sweep import plot_sweep, read_sweep


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv("DRIS_SEED", raising=False)
    monkeypatch.delenv("DRIS_WORKERS", raising=False)


def test_parse_values():
    assert dris_sim.parse_values("1, 2.5,,3") == [1.0, 2.5, 3.0]
    assert dris_sim.parse_values("") == []
    with pytest.raises(ConfigValidationError, match="--values"):
        dris_sim.parse_values("1,x")


def test_seed_override(monkeypatch):
    monkeypatch.setenv("DRIS_SEED", "99")
    assert dris_sim.load_config("reference").seed == 99
    monkeypatch.setenv("DRIS_SEED", "abc")
    with pytest.raises(ConfigValidationError, match="DRIS_SEED"):
        dris_sim.load_config("reference")


def test_workers_override(monkeypatch, tmp_path):
    monkeypatch.setenv("DRIS_WORKERS", "3")
    assert dris_sim.load_config("reference").workers == 3
    monkeypatch.setenv("DRIS_WORKERS", "four")
    with pytest.raises(ConfigValidationError, match="DRIS_WORKERS"):
        dris_sim.load_config("reference")
    assert dris_sim.main(["analyze", "--sweep", "m_a", "--values", "1000",
                          "--out", str(tmp_path / "w.csv")]) == 2


def test_analyze_writes_csv_and_plot(tmp_path):
    out = tmp_path / "asr.csv"
    dat = tmp_path / "asr.dat"
    code = dris_sim.main(["analyze", "--config", "reference", "--sweep", "eta_s", "--values", "0.1,0.3,0.5",
                          "--out", str(out), "--plot-data", str(dat)])
    assert code == 0
    meta, rows = read_sweep(str(out))
    assert meta["axis"] == "eta_s" and meta["kind"] == "closed_form"
    assert [float(r["value"]) for r in rows] == [0.1, 0.3, 0.5]
    assert dat.read_text().startswith("# value e_ar e_an p2 p_r\n")
    png = tmp_path / "asr.png"
    plot_sweep(str(out), str(png), ["e_ar", "e_an"])
    assert png.stat().st_size > 0


def test_plot_rejects_missing_series(tmp_path):
    out = tmp_path / "rates.csv"
    dris_sim.main(["analyze", "--sweep", "m_a", "--values", "1000", "--out", str(out)])
    with pytest.raises(ValueError, match="no columns"):
        plot_sweep(str(out), str(tmp_path / "x.png"), ["nope"])


def test_cep_demo_command(tmp_path, capsys):
    out = tmp_path / "cep.csv"
    code = dris_sim.main(["cep-demo", "--config", "cep_demo", "--scenario", "polluted", "--noiseless",
                          "--out", str(out)])
    assert code == 0
    assert "UE tag polluted (trusted=False)" in capsys.readouterr().out
    _, rows = read_sweep(str(out))
    assert {r["kind"] for r in rows} == {"pilot", "recovered"}


def test_invalid_input_exits_with_2(tmp_path):
    assert dris_sim.main(["analyze", "--config", "missing_scenario", "--sweep", "m_a",
                          "--values", "1", "--out", str(tmp_path / "a.csv")]) == 2
    assert dris_sim.main(["analyze", "--sweep", "m_a", "--values", "1.5",
                          "--out", str(tmp_path / "b.csv")]) == 2
    assert dris_sim.main(["validate", "--only", "nope"]) == 2


def test_validate_subset_passes():
    assert dris_sim.main(["validate", "--only", "efficiency,asr_ordering"]) == 0
