"""Same estimation on a leg standing on compliant ground.

The base translates freely in x and z; the foot rests on a spring-damper
ground with friction. The estimator removes the stance foot's wrench before
balancing moments at the hip.

Run with ``python3 demos/02_floating_base_contact.py``.
"""

from dataclasses import replace

from legcontact.config import load_config
from legcontact.simulator import evaluate_trace, run_scenario

cfg = load_config("scenario2_floating")
scen = replace(cfg.scenario, contact_duration_s=0.2, sim_duration_s=cfg.scenario.contact_start_s + 0.2)
trace = run_scenario(cfg.model, scen)

G = trace.ground_force[-1]
print(f"ground reaction at the end: Gx {G[0]:.2f} N, Gz {G[1]:.2f} N")
report = evaluate_trace(trace)
print(f"link {report.modal_link} (true {scen.contact_link}), latency {report.detection_latency_s * 1e3:.0f} ms")
print(f"mean |F| error {report.force_norm[0]:.3f} N, mean |p| error {report.pos_norm_mm[0]:.2f} mm")
