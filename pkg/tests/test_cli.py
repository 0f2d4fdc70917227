import json

import pytest

from cli import main
from manifest import manifest_path, read_manifest

IDEAL_RUN = {
    "source": {"kind": "ideal", "eta": 0.8},
    "detectors": {
        "trigger": {"jitter_sigma_s": 0.0},
        "a": {"jitter_sigma_s": 0.0, "dark_rate_hz": 1000.0},
        "b": {"jitter_sigma_s": 0.0, "dark_rate_hz": 1000.0},
    },
    "pulse_count": 20000,
    "segment_pulses": 5000,
    "seed": 12345,
}


def _write(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def _error(capsys):
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


def test_closed_form_depth_from_click_probabilities(capsys):
    assert main(["depth", "--p1", "0.1", "--p2plus", "1e-5"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["depth_db"] == pytest.approx(18.24, abs=0.01)
    assert out["method"] == "closed_form"


def test_infinite_depth_of_the_ideal_state(tmp_path, capsys):
    config = _write(tmp_path / "ideal.json", {"kind": "ideal", "eta": 0.6})
    assert main(["depth", config]) == 0
    text = capsys.readouterr().out
    assert "Infinity" not in text
    out = json.loads(text)
    assert out["summary"] == "infinite (verified to 60 dB)"
    assert out["infinite"] is True
    assert out["depth_db"] is None


def test_fiber_range(capsys):
    assert main(["depth", "--p1", "0.1", "--p2plus", "1e-5", "--fiber-loss-db-per-km", "0.2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["fiber_km"] == pytest.approx(out["depth_db"] / 0.2)


def test_model_report(tmp_path, capsys):
    config = _write(tmp_path / "source.json", {"source": {"kind": "ideal", "eta": 0.9}, "attenuator_db": 0.0})
    assert main(["model", config]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["p1"] == pytest.approx(0.9)
    assert out["verdict"]["label"] == "wigner_negative"


def test_schema_error_exits_with_two(tmp_path, capsys):
    config = _write(tmp_path / "bad.json", {"kind": "ideal", "eta": 2.0})
    assert main(["model", config]) == 2
    error = _error(capsys)
    assert error["error"] == "ValidationError"
    assert error["module"] == "sources"


def test_domain_error_exits_with_one(capsys):
    assert main(["depth", "--p1", "0.1", "--p2plus", "1e-5", "--fiber-loss-db-per-km", "0"]) == 1
    error = _error(capsys)
    assert error["error"] == "DomainError"
    assert error["module"] == "witnesses"


def test_missing_depth_input_is_a_usage_error(capsys):
    assert main(["depth", "--p1", "0.1"]) == 2
    assert _error(capsys)["error"] == "UsageError"


def test_trajectory_csv(tmp_path, capsys):
    config = _write(tmp_path / "source.json", {"kind": "ideal", "eta": 0.5})
    out = tmp_path / "traj.csv"
    assert main(["trajectory", config, "--atten-db", "0", "10", "--out", str(out)]) == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "attenuation_db,transmittance,p1,p2plus,qng_border"
    assert lines[2].startswith("10.0,")
    assert manifest_path(out).exists()


def test_vacuum_source_reports_zero_depth(tmp_path, capsys):
    config = _write(tmp_path / "qd.json", {"kind": "quantum_dot", "eta_col": 0.0, "lambda_bg": 0.0})
    assert main(["depth", config]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["witnessed"] is False
    assert out["depth_db"] == 0.0
    assert out["summary"] == "not QNG (depth 0 dB)"
    assert main(["trajectory", config, "--atten-db", "0", "3"]) == 0
    assert capsys.readouterr().out.splitlines()[1].endswith(",0.0,0.0,0.0")


def test_simulate_then_estimate(tmp_path, capsys):
    config = _write(tmp_path / "run.json", IDEAL_RUN)
    tags = tmp_path / "tags.bin"
    assert main(["simulate", config, "--out", str(tags)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["counts"]["0"] == 20000

    manifest = read_manifest(manifest_path(tags))
    assert manifest.command == "simulate"
    assert manifest.seed == 12345
    assert manifest.digest_matches()

    assert main(["estimate", str(tags), "--tau", "2e-9", "--offset", "20e-9"]) == 0
    est = json.loads(capsys.readouterr().out)
    assert est["n_trigger"] == 20000
    assert est["p1"] == pytest.approx(0.8, abs=0.02)
    assert est["p0"] + est["p1"] + est["p2plus"] == pytest.approx(1.0)

    assert main(["estimate", str(tags), "--tau", "2e-9", "--workers", "3"]) == 0
    calibrated = json.loads(capsys.readouterr().out)
    assert calibrated["p1"] == est["p1"]


def test_reruns_are_byte_identical(tmp_path, capsys):
    config = _write(tmp_path / "run.json", IDEAL_RUN)
    first, second = tmp_path / "first.bin", tmp_path / "second.bin"
    assert main(["simulate", config, "--out", str(first), "--workers", "1"]) == 0
    assert main(["simulate", config, "--out", str(second), "--workers", "4"]) == 0
    assert first.read_bytes() == second.read_bytes()

    spec = _write(tmp_path / "spec.json", {
        "parameter": "gain",
        "grid": [1e-3, 1e-2],
        "fixed": {"kind": "spdc_pulsed", "g": 1e-3, "tau_s": 2e-9, "repetition_rate_hz": 1e7, "eta_signal": 0.5},
    })
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["sweep", spec, "--out", str(a), "--workers", "1"]) == 0
    assert main(["sweep", spec, "--out", str(b), "--workers", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_csv_time_tags(tmp_path, capsys):
    config = _write(tmp_path / "run.json", IDEAL_RUN)
    tags = tmp_path / "tags.csv"
    assert main(["simulate", config, "--out", str(tags)]) == 0
    capsys.readouterr()
    assert tags.read_text(encoding="utf-8").startswith("channel,timestamp_ps\n")
    assert main(["estimate", str(tags), "--tau", "2e-9", "--offset", "20e-9"]) == 0
    assert json.loads(capsys.readouterr().out)["n_trigger"] == 20000


def test_bad_magic_is_a_format_error(tmp_path, capsys):
    tags = tmp_path / "tags.bin"
    tags.write_bytes(b"NOPE" + bytes(12))
    assert main(["estimate", str(tags), "--tau", "2e-9"]) == 2
    error = _error(capsys)
    assert error["error"] == "TimeTagFormatError"
    assert error["module"] == "timetag_io"


def test_compare(tmp_path, capsys):
    pulsed = {"kind": "spdc_pulsed", "g": 1e-3, "tau_s": 1e-9, "repetition_rate_hz": 1e7,
              "eta_trigger": 0.05, "eta_signal": 0.5, "mode_statistics": "poissonian"}
    cw = {"kind": "spdc_cw", "tau_s": 1e-9, "background_rate_hz": 5e3 / 0.999,
          "eta_trigger": 0.05, "eta_signal": 0.5}
    assert main(["compare", _write(tmp_path / "cw.json", cw), _write(tmp_path / "pulsed.json", pulsed)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["ratio"] == pytest.approx(0.01, rel=0.1)
    assert report["comparable"] is True


def test_optimize_reports_the_refined_optimum(tmp_path, capsys):
    spec = _write(tmp_path / "spec.json", {
        "parameter": "tau",
        "grid": [0.2e-9, 0.5e-9, 1e-9, 2e-9, 5e-9, 10e-9],
        "fixed": {"kind": "spdc_cw", "tau_s": 1e-9, "background_rate_hz": 1e5,
                  "eta_signal": 0.5, "jitter_sigma_s": 0.5e-9},
    })
    out = tmp_path / "profile.csv"
    assert main(["optimize", spec, "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["refined"] is True
    assert not summary["boundary_flag"]
    assert len(out.read_text(encoding="utf-8").splitlines()) == 8


def test_runs_lists_recorded_runs(capsys):
    assert main(["depth", "--p1", "0.2", "--p2plus", "1e-4"]) == 0
    capsys.readouterr()
    assert main(["runs", "--limit", "5"]) == 0
    assert isinstance(json.loads(capsys.readouterr().out), list)
