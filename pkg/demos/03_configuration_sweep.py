"""Localization accuracy over a coarse grid of leg poses.

Each pose is held and probed with noiseless pushes at four points on each
link. A 3x3 grid keeps this quick; the bundled ``sweep`` config runs the
full 10x10 grid with the same 1 s contacts.

Run with ``python3 demos/03_configuration_sweep.py``.
"""

from dataclasses import replace

from legcontact.config import load_config
from legcontact.records import format_sweep_summary
from legcontact.simulator import parametric_sweep

cfg = load_config("sweep")
sweep = replace(cfg.sweep, n_q1=3, n_q2=3)
result = parametric_sweep(cfg.model, sweep)
print(format_sweep_summary(result), end="")
for cell in result.cells:
    flag = "degenerate" if cell["degenerate"] else f"{cell['loc_err_mm']:6.2f} mm  {cell['force_err_N']:.4f} N"
    print(f"q1 {cell['q1']:.2f}  q2 {cell['q2']:.2f}  {flag}")
