import json
import time

import numpy as np
import pytest

from legcontact.cli import EXIT_BAD_INPUT, EXIT_OK, main
from legcontact.records import read_trace_csv

# leg starts at rest in its contact pose so a short run still sees a detection
SHORT_SIM = """\
scenario:
  name: short
  contact_link: 1
  alpha: 0.5
  contact_start_s: 0.02
  contact_duration_s: 0.03
  sim_duration_s: 0.05
  seed: 3
controller:
  waypoints:
    - {t_s: 0.0, q_rad: [1.5, 0.8]}
"""

SMOKE_SWEEP = """\
scenario:
  name: smoke
  force_magnitude_N: 7.0
  contact_start_s: 0.02
  contact_duration_s: 0.08
  sim_duration_s: 0.1
  step_s: 5.0e-5
ft_sensor: {sigma_x_N: 0.0, sigma_z_N: 0.0, sigma_rot_Nm: 0.0}
sweep:
  q1_range_rad: [0.5, 2.0]
  q2_range_rad: [0.5, 2.0]
  n_q1: 2
  n_q2: 2
  alphas: [0.25, 0.5, 0.75, 1.0]
  links: [1, 2]
"""


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def _single_run_dir(out):
    dirs = [d for d in out.iterdir() if d.is_dir()]
    assert len(dirs) == 1
    return dirs[0]


def test_simulate_writes_outputs(tmp_path, capsys):
    cfg = _write(tmp_path, "short.yaml", SHORT_SIM)
    out = tmp_path / "runs"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    run = _single_run_dir(out)
    for name in ("trace.csv", "report.txt", "config.yaml", "manifest.json"):
        assert (run / name).is_file()
    assert "modal_link: 1" in capsys.readouterr().out
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["seeds"] == {"scenario": 3}
    assert set(manifest["outputs"]) == {"trace.csv", "report.txt"}
    data = read_trace_csv(run / "trace.csv")
    assert len(data["t_s"]) == 51


def test_simulate_twice_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, "short.yaml", SHORT_SIM)
    out = tmp_path / "runs"
    for _ in range(2):
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    runs = sorted(d for d in out.iterdir() if d.is_dir())
    assert len(runs) == 2
    assert (runs[0] / "trace.csv").read_bytes() == (runs[1] / "trace.csv").read_bytes()


def test_seed_override(tmp_path):
    cfg = _write(tmp_path, "short.yaml", SHORT_SIM)
    out = tmp_path / "runs"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "99"]) == EXIT_OK
    run = _single_run_dir(out)
    assert "seed: 99" in (run / "config.yaml").read_text()
    assert json.loads((run / "manifest.json").read_text())["seeds"] == {"scenario": 99}


def test_bad_alpha_is_reported(tmp_path, caplog):
    cfg = _write(tmp_path, "bad.yaml", "scenario:\n  alpha: 1.5\n")
    out = tmp_path / "runs"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_BAD_INPUT
    assert "scenario.alpha" in caplog.text and ":2:" in caplog.text
    assert not out.exists() or not any(out.iterdir())


def test_missing_config(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "none.yaml"), "--out", str(tmp_path)]) == EXIT_BAD_INPUT


def test_sweep_smoke_under_ten_seconds(tmp_path, capsys):
    cfg = _write(tmp_path, "smoke.yaml", SMOKE_SWEEP)
    out = tmp_path / "runs"
    t0 = time.perf_counter()
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    run = _single_run_dir(out)
    lines = (run / "sweep.csv").read_text().splitlines()
    assert lines[0] == "q1,q2,link,alpha,loc_err_mm,force_err_N,degenerate_flag"
    assert len(lines) == 1 + 2 * 2 * 4 * 2
    text = capsys.readouterr().out
    assert "max_location_error_mm" in text and "max_force_error_N" in text


def test_sweep_empty_range(tmp_path):
    cfg = _write(tmp_path, "empty.yaml", SMOKE_SWEEP.replace("q1_range_rad: [0.5, 2.0]", "q1_range_rad: [1.0, 1.0]"))
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "runs")]) == EXIT_BAD_INPUT


def test_sweep_needs_sweep_section(tmp_path):
    cfg = _write(tmp_path, "short.yaml", SHORT_SIM)
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "runs")]) == EXIT_BAD_INPUT


def _calibrate(tmp_path, capsys, rows):
    data = _write(tmp_path, "data.csv", "x,y\n" + "".join(f"{x!r},{y!r}\n" for x, y in rows))
    out = tmp_path / "runs"
    code = main(["calibrate", str(data), "--out", str(out)])
    printed = dict(line.split(": ", 1) for line in capsys.readouterr().out.splitlines())
    return code, printed, out


def test_calibrate_exact_line(tmp_path, capsys):
    code, printed, out = _calibrate(tmp_path, capsys, [(x, 3.0 * x - 1.0) for x in range(10)])
    assert code == EXIT_OK
    assert float(printed["r_squared"]) == 1.0
    fit = json.loads((_single_run_dir(out) / "fit.json").read_text())
    assert fit["slope"] == pytest.approx(3.0)


def test_calibrate_reference_line(tmp_path, capsys):
    rng = np.random.default_rng(8)
    x = np.linspace(0, 2000, 300)
    y = 0.0115 * x + 5.0069 + rng.normal(0, 0.2, x.size)
    code, printed, _ = _calibrate(tmp_path, capsys, zip(x.tolist(), y.tolist()))
    assert code == EXIT_OK
    assert float(printed["slope"]) == pytest.approx(0.0115, rel=0.01)


def test_calibrate_single_point(tmp_path, capsys):
    code, _, _ = _calibrate(tmp_path, capsys, [(1.0, 2.0)])
    assert code == EXIT_BAD_INPUT
