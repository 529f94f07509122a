import json
import math
import subprocess
import sys

import numpy as np
import pytest

from pairsource.cli import main
from pairsource.streams import TimestampStream, write_ttag


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def load(path):
    return json.loads(path.read_text())


def without_generated(path):
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("# generated")]


@pytest.mark.parametrize("name, lo, hi", [("ppktp_bandwidth", 480, 600), ("ppln_bandwidth", 85, 110)])
def test_bandwidth(tmp_path, capsys, name, lo, hi):
    code, out, _ = run(capsys, "bandwidth", "--config", f"@{name}", "--out", str(tmp_path), "--json")
    assert code == 0
    doc = load(tmp_path / "bandwidth.json")
    assert lo < doc["fwhm_bandwidth_GHz"] < hi
    assert json.loads(out)["fwhm_bandwidth_GHz"] == doc["fwhm_bandwidth_GHz"]
    assert (tmp_path / "spectrum.csv").exists()


def test_analytic(tmp_path, capsys):
    code, _, _ = run(capsys, "analytic", "--config", "@ppktp_analytic", "--out", str(tmp_path))
    assert code == 0
    doc = load(tmp_path / "analytic.json")
    assert doc["g2si0"] == pytest.approx(2494.825010115267, rel=1e-9)
    rows = [ln for ln in (tmp_path / "g2_tau.csv").read_text().splitlines() if not ln.startswith("#")]
    assert rows[0].startswith("tau")
    assert (tmp_path / "rates_vs_power.csv").exists()


def test_outputs_reproducible(tmp_path, capsys):
    for d in ("a", "b"):
        assert run(capsys, "analytic", "--config", "@ppktp_analytic", "--out", str(tmp_path / d))[0] == 0
        assert run(capsys, "fit", "--config", "@ppktp_fit", "--out", str(tmp_path / d))[0] == 0
    for name in ("g2_tau.csv", "rates_vs_power.csv", "sweep.csv"):
        assert without_generated(tmp_path / "a" / name) == without_generated(tmp_path / "b" / name)
    for name in ("analytic.json", "fit.json"):
        assert (tmp_path / "a" / name).read_text() == (tmp_path / "b" / name).read_text()


def test_simulate_is_seeded(tmp_path, capsys):
    for d, seed in (("a", "5"), ("b", "5"), ("c", "6")):
        assert run(capsys, "simulate", "--config", "@thermal_simulate", "--seed", seed,
                   "--out", str(tmp_path / d))[0] == 0
    a, b, c = ((tmp_path / d / "thermal.ttag").read_bytes() for d in "abc")
    assert a == b and a != c
    assert load(tmp_path / "a" / "simulate.json")["seed"] == 5


def test_simulate_correlate_fit_pipeline(tmp_path, capsys):
    out = str(tmp_path)
    assert run(capsys, "simulate", "--config", "@pair_simulate", "--out", out)[0] == 0
    code, text, _ = run(capsys, "correlate", "--config", "@correlate", "--out", out, "--json")
    assert code == 0
    report = json.loads(text)
    sim = load(tmp_path / "simulate.json")
    assert report["pair_rate_subtracted"] == pytest.approx(sim["expected_W_2"],
                                                           abs=4 * report["pair_rate_err"] + 0.01 * sim["expected_W_2"])
    (tmp_path / "fit.yaml").write_text(
        "kind: cross\ndata: histogram.csv\nconstants:\n  signal_linewidth: 600 MHz\n"
        "  idler_linewidth: 240 MHz\n  jitter: 141.4213562 ps\n")
    assert run(capsys, "fit", "--config", str(tmp_path / "fit.yaml"), "--out", out)[0] == 0
    p = load(tmp_path / "fit.json")["parameters"]["r_over_b"]
    assert abs(p["value"] - 0.01) < 3 * p["error"]


def test_fit_characterization(tmp_path, capsys):
    code, _, _ = run(capsys, "fit", "--config", "@ppktp_fit", "--out", str(tmp_path))
    assert code == 0
    p = load(tmp_path / "fit.json")["parameters"]
    truth = {"brightness_per_s_MHz": 2450, "eta_s": 0.031, "eta_i": 0.074}
    for k, v in truth.items():
        assert abs(p[k]["value"] - v) < 3 * p[k]["error"]


def test_entangle(tmp_path, capsys):
    code, _, _ = run(capsys, "entangle", "--config", "@entangle", "--out", str(tmp_path))
    assert code == 0
    doc = load(tmp_path / "entangle.json")
    assert doc["S"] == pytest.approx(2.709, abs=1e-12)
    assert doc["S_err"] == pytest.approx(0.010)
    assert doc["predicted_fringe_visibility"] == pytest.approx(0.961, abs=1e-12)
    assert doc["predicted_S"] == pytest.approx(2 * math.sqrt(2) * 0.961, abs=1e-9)
    assert (tmp_path / "state.json").exists() and (tmp_path / "fringe_curve.csv").exists()


def test_entangle_from_counts(tmp_path, capsys):
    (tmp_path / "counts.csv").write_text(
        "setting,N11,N12,N21,N22\n11,400,100,100,400\n12,400,100,100,400\n"
        "21,400,100,100,400\n22,100,400,400,100\n")
    (tmp_path / "e.yaml").write_text("counts: counts.csv\n")
    assert run(capsys, "entangle", "--config", str(tmp_path / "e.yaml"), "--out", str(tmp_path))[0] == 0
    assert load(tmp_path / "entangle.json")["S_from_counts"] == pytest.approx(2.4)


def test_malformed_config_reports_line(tmp_path, capsys):
    (tmp_path / "bad.yaml").write_text("kind: characterization\nconstants:\n  p0: 0.7\n  colour: red\n")
    code, _, err = run(capsys, "fit", "--config", str(tmp_path / "bad.yaml"), "--out", str(tmp_path))
    assert code == 2
    assert "line 4" in err and "colour" in err


def test_bad_unit_is_config_error(tmp_path, capsys):
    (tmp_path / "bad.yaml").write_text("mode: thermal\nduration: 1 kg\nthermal:\n  linewidth: 1 GHz\n"
                                       "  flux: 1e6 /s\n")
    code, _, err = run(capsys, "simulate", "--config", str(tmp_path / "bad.yaml"), "--out", str(tmp_path))
    assert code == 2 and "line 2" in err


def test_unknown_bundled_config(tmp_path, capsys):
    assert run(capsys, "fit", "--config", "@nope", "--out", str(tmp_path))[0] == 2


def test_missing_file_is_io_error(tmp_path, capsys):
    code, _, err = run(capsys, "fit", "--config", str(tmp_path / "absent.yaml"), "--out", str(tmp_path))
    assert code == 4
    (tmp_path / "c.yaml").write_text("inputs:\n  a: missing.ttag\nbin_width: 1 ns\nrange: 10 ns\n")
    assert run(capsys, "correlate", "--config", str(tmp_path / "c.yaml"), "--out", str(tmp_path))[0] == 4


def test_degenerate_fit_is_numerical_failure(tmp_path, capsys):
    header = "pump_power_mW,W_s,W_s_err,W_i,W_i_err,W_2,W_2_err,g2si0,g2si0_err\n"
    (tmp_path / "one.csv").write_text(header + "1,1e4,100,1e4,100,200,10,,\n" * 3)
    (tmp_path / "f.yaml").write_text("kind: characterization\ndata: one.csv\nconstants:\n"
                                     "  signal_linewidth: 600 MHz\n  idler_linewidth: 240 MHz\n")
    assert run(capsys, "fit", "--config", str(tmp_path / "f.yaml"), "--out", str(tmp_path))[0] == 3


def test_empty_streams_correlate(tmp_path, capsys):
    for name in ("a.ttag", "b.ttag"):
        write_ttag(TimestampStream(np.empty(0, dtype=np.int64), 10**9), tmp_path / name)
    (tmp_path / "c.yaml").write_text("inputs:\n  a: a.ttag\n  b: b.ttag\nbin_width: 1 ns\nrange: 10 ns\n"
                                     "window: 2 ns\n")
    code, _, _ = run(capsys, "correlate", "--config", str(tmp_path / "c.yaml"), "--out", str(tmp_path))
    assert code == 0
    assert load(tmp_path / "histogram.json")["total_counts"] == 0


def test_auto_correlate_and_fit(tmp_path, capsys):
    out = str(tmp_path)
    assert run(capsys, "simulate", "--config", "@thermal_simulate", "--out", out)[0] == 0
    (tmp_path / "c.yaml").write_text("inputs:\n  a: thermal.ttag\nbin_width: 21 ps\nrange: 6300 ps\n")
    assert run(capsys, "correlate", "--config", str(tmp_path / "c.yaml"), "--out", out)[0] == 0
    assert load(tmp_path / "histogram.json")["auto"] is True
    (tmp_path / "f.yaml").write_text("kind: auto\ndata: histogram.csv\nconstants:\n  linewidth: 240 MHz\n")
    assert run(capsys, "fit", "--config", str(tmp_path / "f.yaml"), "--out", out)[0] == 0
    K = load(tmp_path / "fit.json")["parameters"]["K"]
    assert abs(K["value"] - 1.0) < 3 * K["error"] + 0.02


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "pairsource.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "pairsource" in proc.stdout
