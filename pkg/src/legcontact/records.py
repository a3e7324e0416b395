"""On-disk artifacts: trace CSV, text reports, sweep tables, run manifests.

Floats are written with ``repr`` (shortest round-trip form) so a file read
back reproduces the in-memory values exactly, and identical runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import platform
import sys
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from .sensors import CalibrationFit, DegenerateData
from .simulator import ErrorReport, ScenarioConfig, SimulationTrace, SweepResult

SWEEP_COLUMNS = ("q1", "q2", "link", "alpha", "loc_err_mm", "force_err_N", "degenerate_flag")


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


# --- trace -------------------------------------------------------------------------


def trace_columns(trace: SimulationTrace) -> list[tuple[str, np.ndarray]]:
    """Ordered ``(name, column)`` pairs of the trace table."""
    n, nb = trace.n_links, trace.n_base
    floating = trace.scenario.base_mode == "floating"
    cols = [("t_s", trace.t)]
    cols += [(f"q{i + 1}_rad", trace.q[:, nb + i]) for i in range(n)]
    if floating:
        cols += [("x_m", trace.q[:, 0]), ("z_m", trace.q[:, 1])]
    cols += [(f"tau{i + 1}_Nm", trace.tau_cmd[:, i]) for i in range(n)]
    cols += [("Fb_x_N", trace.ft[:, 0]), ("Fb_z_N", trace.ft[:, 1]), ("Mb_y_Nm", trace.ft[:, 2])]
    cols += [(f"r{i + 1}", trace.residual[:, nb + i]) for i in range(n)]
    cols += [
        ("detected", trace.detected),
        ("link_c", trace.link),
        ("alpha_est", trace.alpha),
        ("pc_x_m", trace.point[:, 0]),
        ("pc_z_m", trace.point[:, 1]),
        ("Fc_x_N", trace.force[:, 0]),
        ("Fc_z_N", trace.force[:, 1]),
    ]
    active = trace.contact_active
    s = trace.scenario
    cols += [
        ("true_link_c", np.where(active, s.contact_link, 0)),
        ("true_alpha", np.where(active, s.alpha, np.nan)),
        ("true_pc_x_m", trace.true_point[:, 0]),
        ("true_pc_z_m", trace.true_point[:, 1]),
        ("true_Fc_x_N", trace.true_force[:, 0]),
        ("true_Fc_z_N", trace.true_force[:, 1]),
    ]
    # extras after the fixed schema
    cols += [(f"qd{i + 1}_radps", trace.qdot[:, nb + i]) for i in range(n)]
    cols += [(f"tau_sen{i + 1}_Nm", trace.tau_sen[:, i]) for i in range(n)]
    if floating:
        cols += [("Gx_N", trace.ground_force[:, 0]), ("Gz_N", trace.ground_force[:, 1])]
    else:
        cols += [("vx_m", trace.q[:, 0]), ("vrot_rad", trace.q[:, 1]), ("vz_m", trace.q[:, 2])]
    cols += [("valid", trace.valid), ("clamped", trace.clamped), ("degenerate", trace.degenerate)]
    return cols


def write_trace_csv(trace: SimulationTrace, path) -> None:
    cols = trace_columns(trace)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name for name, _ in cols])
        for k in range(len(trace.t)):
            w.writerow([fmt(col[k]) for _, col in cols])


def read_trace_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in row] for row in body]).reshape(len(body), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


# --- reports -----------------------------------------------------------------------


def format_report(report: ErrorReport, scen: ScenarioConfig) -> str:
    lines = [
        f"scenario: {scen.name}",
        f"base_mode: {scen.base_mode}",
        f"contact: link {scen.contact_link}, alpha {scen.alpha}, "
        f"{scen.force_magnitude_N} N at {scen.force_angle_rad} rad",
        f"seed: {scen.seed}",
        f"samples_evaluated: {report.n_samples}",
        f"detection_latency_s: {fmt(report.detection_latency_s)}",
        f"modal_link: {report.modal_link}",
        f"link_accuracy: {fmt(report.link_accuracy)}",
        f"invalid_estimates: {report.n_invalid}",
        f"degenerate_estimates: {report.n_degenerate}",
        "",
        f"{'quantity':<12} {'mean':>12} {'std':>12}",
    ]
    for label, name in (
        ("Fx [N]", "force_x"),
        ("Fz [N]", "force_z"),
        ("|F| [N]", "force_norm"),
        ("px [mm]", "pos_x_mm"),
        ("pz [mm]", "pos_z_mm"),
        ("|p| [mm]", "pos_norm_mm"),
    ):
        mean, std = getattr(report, name)
        lines.append(f"{label:<12} {mean:>12.4f} {std:>12.4f}")
    return "\n".join(lines) + "\n"


def write_sweep_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in result.rows:
            w.writerow(
                [fmt(r["q1"]), fmt(r["q2"]), fmt(int(r["link"])), fmt(r["alpha"]),
                 fmt(r["loc_err_mm"]), fmt(r["force_err_N"]), fmt(bool(r["degenerate"]))]
            )


def format_sweep_summary(result: SweepResult) -> str:
    loc, force = result.max_errors()
    lines = [
        f"probes: {len(result.rows)}",
        f"cells: {len(result.cells)}",
        f"max_location_error_mm: {loc:.4f}",
        f"max_force_error_N: {force:.4f}",
        f"degenerate_cells: {len(result.degenerate_cells)}",
    ]
    lines += [f"  q1={q1:.4f} q2={q2:.4f}" for q1, q2 in result.degenerate_cells]
    bad_links = [c for c in result.cells if not c["degenerate"] and not c["link_ok"]]
    lines.append(f"cells_with_wrong_link: {len(bad_links)}")
    return "\n".join(lines) + "\n"


# --- calibration data --------------------------------------------------------------


def read_two_column(path) -> tuple[np.ndarray, np.ndarray]:
    """Numeric ``x, y`` pairs from a comma or whitespace separated file.

    ``#`` starts a comment; one non-numeric header line is allowed.
    """
    xs, ys = [], []
    header_seen = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p for p in line.replace(",", " ").replace(";", " ").split() if p]
            try:
                values = [float(p) for p in parts]
            except ValueError:
                if header_seen or xs:
                    raise ValueError(f"{path}:{lineno}: non-numeric row {raw.strip()!r}") from None
                header_seen = True
                continue
            if len(values) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns, got {len(values)}")
            xs.append(values[0])
            ys.append(values[1])
    if not xs:
        raise DegenerateData(f"{path}: no data rows")
    return np.array(xs), np.array(ys)


def fit_to_dict(fit: CalibrationFit) -> dict:
    return asdict(fit)


# --- run directories and manifests -------------------------------------------------


def make_run_dir(base, command: str, now=None) -> Path:
    """Fresh ``<base>/<command>_<timestamp>`` directory; never reuses one."""
    now = now or _dt.datetime.now()
    base = Path(base)
    base.mkdir(parents=True, exist_ok=True)
    stem = f"{command}_{now.strftime('%Y%m%d-%H%M%S')}"
    for k in range(1000):
        path = base / (stem if k == 0 else f"{stem}_{k}")
        try:
            path.mkdir()
            return path
        except FileExistsError:
            continue
    raise FileExistsError(f"could not create a fresh run directory under {base}")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config_path: str | None
    output_dir: str
    seeds: dict = field(default_factory=dict)
    tool_version: str = field(default_factory=tool_version)
    python: str = field(default_factory=lambda: sys.version.split()[0])
    numpy: str = field(default_factory=lambda: np.__version__)
    platform: str = field(default_factory=platform.platform)
    argv: list = field(default_factory=list)
    timing_s: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    started: str = field(default_factory=lambda: _dt.datetime.now().isoformat(timespec="seconds"))

    def record_output(self, path) -> None:
        self.outputs[Path(path).name] = sha256_file(path)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
