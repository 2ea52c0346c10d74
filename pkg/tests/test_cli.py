"""Command-line interface: outputs, provenance, overrides, exit codes."""

import json

import numpy as np
import pytest

from eisopt import (
    ErrorStructure,
    STATE_A,
    fisher,
    fit_wcnls,
    initialize,
    load_spectrum,
    log_spaced_inclusive,
    model_polar,
    reduce_ppd,
    synthesize,
    crlb,
    ellipsoid_log_volume,
)
from eisopt.cli import ENV_OUTPUT_DIR, main


def _data_lines(path):
    return [
        line
        for line in path.read_text().splitlines()
        if line and not line.startswith("#")
    ]


def test_synth_writes_sixty_one_rows(tmp_path):
    assert main(["synth", "--output-dir", str(tmp_path)]) == 0
    csv_path = tmp_path / "spectrum.csv"
    assert csv_path.exists()
    assert len(_data_lines(csv_path)) == 1 + 61  # header + data
    spectrum = load_spectrum(csv_path)
    assert spectrum.n == 61
    prov = json.loads((tmp_path / "spectrum.csv.provenance.json").read_text())
    assert prov["provenance"]["seed"] == 0
    assert len(prov["provenance"]["config_hash"]) == 12


def test_synth_reruns_byte_identically(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["synth", "--output-dir", str(d), "--seed", "3"]) == 0
    assert (a / "spectrum.csv").read_bytes() == (b / "spectrum.csv").read_bytes()


def test_synth_noiseless_matches_model(tmp_path):
    assert main(["synth", "--output-dir", str(tmp_path), "--noiseless"]) == 0
    spectrum = load_spectrum(tmp_path / "spectrum.csv")
    mag, phase = model_polar(STATE_A, spectrum.frequencies)
    assert np.array_equal(spectrum.mag_ohm, mag)
    # phase survives the on-disk degree representation only to the last ulp
    assert np.allclose(spectrum.phase_rad, phase, rtol=5e-16, atol=5e-16)


def test_fit_recovers_parameters(tmp_path):
    assert main(["synth", "--output-dir", str(tmp_path), "--seed", "11"]) == 0
    rc = main(
        ["fit", str(tmp_path / "spectrum.csv"), "--output-dir", str(tmp_path)]
    )
    assert rc == 0
    data = json.loads((tmp_path / "fit.json").read_text())
    assert data["converged"] is True
    truth = STATE_A.to_dict()
    for name, value in data["parameters"].items():
        assert abs(value - truth[name]) / abs(truth[name]) < 0.5


def test_sweep_self_normalization_is_exactly_one(tmp_path):
    rc = main(
        [
            "crlb-sweep",
            "--output-dir",
            str(tmp_path),
            "--thresholds",
            "0.1",
            "--ppd-list",
            "10",
        ]
    )
    assert rc == 0
    rows = _data_lines(tmp_path / "crlb_sweep.csv")[1:]
    assert len(rows) == 11
    for row in rows:
        name, value, ppd, threshold = row.split(",")
        assert float(value) == 1.0
        assert ppd == "10"


def test_sweep_reduced_density_inflates_low_frequency_bounds(tmp_path):
    rc = main(
        [
            "crlb-sweep",
            "--output-dir",
            str(tmp_path),
            "--thresholds",
            "0.1",
            "--ppd-list",
            "5",
        ]
    )
    assert rc == 0
    values = {}
    for row in _data_lines(tmp_path / "crlb_sweep.csv")[1:]:
        name, value, _, _ = row.split(",")
        values[name] = float(value)
    assert all(v >= 1.0 - 1e-12 for v in values.values())
    assert values["Q_LF"] > 1.3
    assert values["phi_LF"] > 1.3
    assert values["R_s"] < 1.05  # high-frequency parameters barely affected


def test_design_zero_iterations_matches_library_delta(tmp_path):
    rc = main(
        [
            "design",
            "--output-dir",
            str(tmp_path),
            "--threshold",
            "0.1",
            "--ppd-list",
            "7",
            "--max-iterations",
            "0",
        ]
    )
    assert rc == 0
    summary = _data_lines(tmp_path / "design_summary.csv")
    assert summary[0] == (
        "ppd,threshold_hz,delta_volume_pct,delta_time_pct,iterations,terminated"
    )
    ppd, threshold, delta_v, delta_t, iterations, terminated = summary[1].split(",")
    assert ppd == "7" and iterations == "0" and terminated == "max_iterations"

    err = ErrorStructure()
    baseline = log_spaced_inclusive(1e4, 0.01, 10)
    reduced = reduce_ppd(baseline, 0.1, 7)
    spectrum = synthesize(STATE_A, reduced, err, seed=0)
    theta_hat = fit_wcnls(spectrum, initialize(spectrum)).theta
    nv = np.exp(
        ellipsoid_log_volume(fisher(theta_hat, reduced, err))
        - ellipsoid_log_volume(fisher(theta_hat, baseline, err))
    )
    assert float(delta_v) == pytest.approx((nv - 1.0) * 100.0, rel=1e-9)
    assert (tmp_path / "design_trace_ppd7.jsonl").exists()
    assert (tmp_path / "design_trace_ppd7.csv").exists()


def test_report_default_grid_normalizes_to_one(tmp_path):
    assert main(["report", "--output-dir", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "report.json").read_text())
    for value in data["normalized_crlb"].values():
        assert value == pytest.approx(1.0, abs=1e-12)
    assert len(data["eigenvalues"]) == 11
    csv_rows = _data_lines(tmp_path / "report.csv")
    assert csv_rows[0] == "parameter,normalized_crlb,ppd,threshold_hz"
    assert len(csv_rows) == 12


def test_report_reduced_grid_pins_low_frequency_cost(tmp_path):
    rc = main(
        [
            "report",
            "--output-dir",
            str(tmp_path),
            "--reduce-ppd",
            "5",
            "--threshold",
            "0.1",
        ]
    )
    assert rc == 0
    data = json.loads((tmp_path / "report.json").read_text())
    assert 1.3 < data["normalized_crlb"]["Q_LF"] < 1.7
    library = crlb(
        fisher(STATE_A, reduce_ppd(log_spaced_inclusive(1e4, 0.01, 10), 0.1, 5),
               ErrorStructure())
    ) / crlb(fisher(STATE_A, log_spaced_inclusive(1e4, 0.01, 10), ErrorStructure()))
    assert data["normalized_crlb"]["Q_LF"] == pytest.approx(library[9], rel=1e-12)


def test_report_reduce_without_threshold_is_usage_error(tmp_path):
    rc = main(["report", "--output-dir", str(tmp_path), "--reduce-ppd", "5"])
    assert rc == 2


def test_missing_spectrum_file_is_usage_error(tmp_path):
    assert main(["fit", str(tmp_path / "nope.csv")]) == 2


def test_malformed_spectrum_file_is_usage_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("f_hz,mag_ohm\n1.0,2.0\n")
    assert main(["fit", str(bad)]) == 2


def test_unknown_fixture_is_usage_error(tmp_path):
    rc = main(["synth", "--output-dir", str(tmp_path), "--fixture", "state_z"])
    assert rc == 2


def test_unknown_config_field_is_usage_error(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sead": 5}))
    rc = main(["synth", "--output-dir", str(tmp_path), "--config", str(cfg)])
    assert rc == 2


def test_singular_information_is_numerical_error(tmp_path):
    # two-point band: eleven parameters cannot be bounded by four data rows
    rc = main(
        [
            "report",
            "--output-dir",
            str(tmp_path),
            "--f-start",
            "10000",
            "--f-end",
            "8000",
        ]
    )
    assert rc == 1


def test_environment_variable_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(ENV_OUTPUT_DIR, str(tmp_path / "from_env"))
    assert main(["synth"]) == 0
    assert (tmp_path / "from_env" / "spectrum.csv").exists()


def test_flag_overrides_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 5}))

    rc = main(["synth", "--output-dir", str(tmp_path / "c"), "--config", str(cfg)])
    assert rc == 0
    prov = json.loads(
        (tmp_path / "c" / "spectrum.csv.provenance.json").read_text()
    )
    assert prov["provenance"]["seed"] == 5

    rc = main(
        [
            "synth",
            "--output-dir",
            str(tmp_path / "f"),
            "--config",
            str(cfg),
            "--seed",
            "7",
        ]
    )
    assert rc == 0
    prov = json.loads(
        (tmp_path / "f" / "spectrum.csv.provenance.json").read_text()
    )
    assert prov["provenance"]["seed"] == 7


def test_version_flag_exits_cleanly(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["--version"])
    assert excinfo.value.code == 0
    assert "eisopt" in capsys.readouterr().out
