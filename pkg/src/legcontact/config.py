"""YAML run configuration: model, scenario, and optional sweep grid.

Every physical quantity carries its unit in the key name. Missing keys take
the reference defaults; unknown keys are rejected. Errors name the offending
field and, when the value came from a file, its line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import yaml

from .dynamics import BaseMode, ChainModel, LinkParams, table1_model
from .sensors import VirtualFTConfig
from .simulator import ControllerConfig, GroundModel, ScenarioConfig, SweepConfig


class ConfigError(ValueError):
    """Invalid configuration value; ``field`` is a dotted key path."""

    def __init__(self, field_path: str, message: str, line: int | None = None, source=None):
        self.field = field_path
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if source and line else (f"line {line}: " if line else "")
        super().__init__(f"{where}{field_path}: {message}")


@dataclass(frozen=True)
class RunConfig:
    model: ChainModel = field(default_factory=table1_model)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    sweep: SweepConfig | None = None


BUNDLED = ("scenario1_fixed", "scenario2_fixed", "scenario1_floating", "scenario2_floating", "sweep")


# --- dict <-> objects ------------------------------------------------------------


def _model_to_dict(model: ChainModel) -> dict:
    return {
        "links": [
            {"length_m": lk.length, "com_m": lk.com, "mass_kg": lk.mass, "inertia_kgm2": lk.inertia}
            for lk in model.links
        ],
        "base_mass_kg": model.base_mass,
        "base_inertia_kgm2": model.base_inertia,
        "gravity_mps2": model.gravity,
    }


def _scenario_to_dict(s: ScenarioConfig) -> dict:
    return {
        "name": s.name,
        "base_mode": s.base_mode,
        "contact_link": s.contact_link,
        "alpha": s.alpha,
        "force_magnitude_N": s.force_magnitude_N,
        "force_angle_rad": s.force_angle_rad,
        "contact_start_s": s.contact_start_s,
        "contact_duration_s": s.contact_duration_s,
        "contact_ramp_s": s.contact_ramp_s,
        "sim_duration_s": s.sim_duration_s,
        "step_s": s.step_s,
        "sample_rate_hz": s.sample_rate_hz,
        "seed": s.seed,
        "torque_noise_Nm": s.torque_noise_Nm,
        "hip_sensor_inertia": s.hip_sensor_inertia,
        "start_at_equilibrium": s.start_at_equilibrium,
    }


def _controller_to_dict(c: ControllerConfig) -> dict:
    return {
        "kp_Nm_per_rad": c.kp,
        "kd_Nms_per_rad": c.kd,
        "waypoints": [{"t_s": t, "q_rad": list(q)} for t, q in c.waypoints],
    }


def _ground_to_dict(g: GroundModel) -> dict:
    return {
        "stiffness_N_per_m": g.stiffness,
        "damping_Ns_per_m": g.damping,
        "friction_mu": g.friction_mu,
        "tangential_damping_Ns_per_m": g.tangential_damping,
        "height_m": g.height,
    }


def _ft_to_dict(f: VirtualFTConfig) -> dict:
    return {
        "stiffness_x_N_per_m": f.stiffness[0],
        "stiffness_z_N_per_m": f.stiffness[1],
        "stiffness_rot_Nm_per_rad": f.stiffness[2],
        "damping_x_Ns_per_m": f.damping[0],
        "damping_z_Ns_per_m": f.damping[1],
        "damping_rot_Nms_per_rad": f.damping[2],
        "sigma_x_N": f.sigma[0],
        "sigma_z_N": f.sigma[1],
        "sigma_rot_Nm": f.sigma[2],
    }


def _sweep_to_dict(w: SweepConfig) -> dict:
    return {
        "q1_range_rad": list(w.q1_range),
        "q2_range_rad": list(w.q2_range),
        "n_q1": w.n_q1,
        "n_q2": w.n_q2,
        "alphas": list(w.alphas),
        "links": list(w.links),
        "chunk_size": w.chunk_size,
        "workers": w.workers,
    }


def config_to_dict(cfg: RunConfig) -> dict:
    """Fully resolved plain-data form; every field is present."""
    s = cfg.scenario
    out = {
        "model": _model_to_dict(cfg.model),
        "scenario": _scenario_to_dict(s),
        "controller": _controller_to_dict(s.controller),
        "ground": _ground_to_dict(s.ground),
        "ft_sensor": _ft_to_dict(s.ft),
        "observer": {"gain_per_s": s.observer_gain_per_s, "epsilon_res": s.epsilon_res},
        "estimator": {"collinear_tol": s.collinear_tol, "clamp_margin": s.clamp_margin},
    }
    if cfg.sweep is not None:
        out["sweep"] = _sweep_to_dict(cfg.sweep)
    return out


class _Reader:
    """Pulls typed values out of a nested mapping, tracking the key path."""

    def __init__(self, data, path, lines, source):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(path or "<root>", "expected a mapping", lines.get(path), source)
        self.data = dict(data)
        self.path = path
        self.lines = lines
        self.source = source

    def _key(self, key):
        return f"{self.path}.{key}" if self.path else key

    def error(self, key, message):
        full = self._key(key)
        return ConfigError(full, message, self.lines.get(full, self.lines.get(self.path)), self.source)

    def number(self, key, default, kind=float):
        if key not in self.data:
            return default
        value = self.data.pop(key)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(key, f"expected a number, got {value!r}")
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise self.error(key, f"expected an integer, got {value!r}")
            return int(value)
        if not math.isfinite(value):
            raise self.error(key, f"must be finite, got {value!r}")
        return float(value)

    def flag(self, key, default):
        if key not in self.data:
            return default
        value = self.data.pop(key)
        if not isinstance(value, bool):
            raise self.error(key, f"expected true or false, got {value!r}")
        return value

    def text(self, key, default):
        if key not in self.data:
            return default
        value = self.data.pop(key)
        if not isinstance(value, str):
            raise self.error(key, f"expected a string, got {value!r}")
        return value

    def numbers(self, key, default, length=None, kind=float):
        if key not in self.data:
            return default
        value = self.data.pop(key)
        if not isinstance(value, list) or (length is not None and len(value) != length):
            size = f" of {length}" if length is not None else ""
            raise self.error(key, f"expected a list{size} numbers, got {value!r}")
        sub = _Reader({str(i): v for i, v in enumerate(value)}, self._key(key), self.lines, self.source)
        return tuple(sub.number(str(i), None, kind) for i in range(len(value)))

    def child(self, key):
        value = self.data.pop(key, None)
        return _Reader(value, self._key(key), self.lines, self.source)

    def items(self, key):
        value = self.data.pop(key, None)
        if value is None:
            return None
        if not isinstance(value, list):
            raise self.error(key, "expected a list")
        return [_Reader(v, f"{self._key(key)}[{i}]", self.lines, self.source) for i, v in enumerate(value)]

    def finish(self):
        for key in self.data:
            raise self.error(key, "unknown field")


def _build(what, reader, factory, **kwargs):
    """Run a constructor and re-raise its validation error against the key path."""
    try:
        return factory(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        name, _, rest = msg.partition(": ")
        mapping = what or {}
        if rest and name in mapping:
            raise reader.error(mapping[name], rest) from exc
        raise ConfigError(reader.path or "<root>", msg, reader.lines.get(reader.path), reader.source) from exc


_SCENARIO_KEYS = {
    "base_mode": "base_mode",
    "alpha": "alpha",
    "contact_link": "contact_link",
    "force_magnitude_N": "force_magnitude_N",
    "sim_duration_s": "sim_duration_s",
    "step_s": "step_s",
    "sample_rate_hz": "sample_rate_hz",
    "contact_duration_s": "contact_duration_s",
    "contact_ramp_s": "contact_ramp_s",
}


def config_from_dict(data, lines=None, source=None) -> RunConfig:
    """Build and validate a :class:`RunConfig` from plain data."""
    lines = lines or {}
    root = _Reader(data, "", lines, source)

    base = table1_model()
    m = root.child("model")
    link_readers = m.items("links")
    if link_readers is None:
        links = base.links
    else:
        if not link_readers:
            raise m.error("links", "at least one link is required")
        links = []
        for lr, default in zip(link_readers, base.links + (base.links[-1],) * len(link_readers)):
            kwargs = dict(
                length=lr.number("length_m", default.length),
                com=lr.number("com_m", default.com),
                mass=lr.number("mass_kg", default.mass),
                inertia=lr.number("inertia_kgm2", default.inertia),
            )
            lr.finish()
            links.append(_build(None, lr, LinkParams, **kwargs))
    model = _build(
        None,
        m,
        ChainModel,
        links=tuple(links),
        base_mass=m.number("base_mass_kg", base.base_mass),
        base_inertia=m.number("base_inertia_kgm2", base.base_inertia),
        gravity=m.number("gravity_mps2", base.gravity),
        base_mode=BaseMode.FIXED,
    )
    m.finish()

    d = ScenarioConfig()
    c = root.child("controller")
    wp_readers = c.items("waypoints")
    if wp_readers is None:
        waypoints = d.controller.waypoints
    else:
        waypoints = []
        for wr in wp_readers:
            t = wr.number("t_s", 0.0)
            q = wr.numbers("q_rad", None, length=model.n_links)
            if q is None:
                raise wr.error("q_rad", "required")
            wr.finish()
            waypoints.append((t, q))
    controller = _build(
        {}, c, ControllerConfig,
        kp=c.number("kp_Nm_per_rad", d.controller.kp),
        kd=c.number("kd_Nms_per_rad", d.controller.kd),
        waypoints=tuple(waypoints),
    )
    c.finish()

    g = root.child("ground")
    ground = _build(
        None, g, GroundModel,
        stiffness=g.number("stiffness_N_per_m", d.ground.stiffness),
        damping=g.number("damping_Ns_per_m", d.ground.damping),
        friction_mu=g.number("friction_mu", d.ground.friction_mu),
        tangential_damping=g.number("tangential_damping_Ns_per_m", d.ground.tangential_damping),
        height=g.number("height_m", d.ground.height),
    )
    g.finish()

    f = root.child("ft_sensor")
    ft = _build(
        None, f, VirtualFTConfig,
        stiffness=(
            f.number("stiffness_x_N_per_m", d.ft.stiffness[0]),
            f.number("stiffness_z_N_per_m", d.ft.stiffness[1]),
            f.number("stiffness_rot_Nm_per_rad", d.ft.stiffness[2]),
        ),
        damping=(
            f.number("damping_x_Ns_per_m", d.ft.damping[0]),
            f.number("damping_z_Ns_per_m", d.ft.damping[1]),
            f.number("damping_rot_Nms_per_rad", d.ft.damping[2]),
        ),
        sigma=(
            f.number("sigma_x_N", d.ft.sigma[0]),
            f.number("sigma_z_N", d.ft.sigma[1]),
            f.number("sigma_rot_Nm", d.ft.sigma[2]),
        ),
    )
    f.finish()

    o = root.child("observer")
    gain = o.number("gain_per_s", d.observer_gain_per_s)
    eps = o.number("epsilon_res", d.epsilon_res)
    o.finish()
    e = root.child("estimator")
    tol = e.number("collinear_tol", d.collinear_tol)
    margin = e.number("clamp_margin", d.clamp_margin)
    e.finish()

    s = root.child("scenario")
    mapping = dict(_SCENARIO_KEYS)
    mapping.update(observer_gain_per_s="observer_gain_per_s", epsilon_res="epsilon_res")
    scen_kwargs = dict(
        name=s.text("name", d.name),
        base_mode=s.text("base_mode", d.base_mode),
        contact_link=s.number("contact_link", d.contact_link, int),
        alpha=s.number("alpha", d.alpha),
        force_magnitude_N=s.number("force_magnitude_N", d.force_magnitude_N),
        force_angle_rad=s.number("force_angle_rad", d.force_angle_rad),
        contact_start_s=s.number("contact_start_s", d.contact_start_s),
        contact_duration_s=s.number("contact_duration_s", d.contact_duration_s),
        contact_ramp_s=s.number("contact_ramp_s", d.contact_ramp_s),
        sim_duration_s=s.number("sim_duration_s", d.sim_duration_s),
        step_s=s.number("step_s", d.step_s),
        sample_rate_hz=s.number("sample_rate_hz", d.sample_rate_hz),
        seed=s.number("seed", d.seed, int),
        torque_noise_Nm=s.number("torque_noise_Nm", d.torque_noise_Nm),
        hip_sensor_inertia=s.flag("hip_sensor_inertia", d.hip_sensor_inertia),
        start_at_equilibrium=s.flag("start_at_equilibrium", d.start_at_equilibrium),
    )
    s.finish()
    if scen_kwargs["contact_link"] > model.n_links:
        raise s.error("contact_link", f"must be <= {model.n_links}, got {scen_kwargs['contact_link']}")
    scenario = _build(
        mapping, s, ScenarioConfig,
        controller=controller, ground=ground, ft=ft,
        observer_gain_per_s=gain, epsilon_res=eps, collinear_tol=tol, clamp_margin=margin,
        **scen_kwargs,
    )

    sweep = None
    if "sweep" in root.data:
        w = root.child("sweep")
        dw = SweepConfig()
        q1r = w.numbers("q1_range_rad", dw.q1_range, length=2)
        q2r = w.numbers("q2_range_rad", dw.q2_range, length=2)
        for key, rng in (("q1_range_rad", q1r), ("q2_range_rad", q2r)):
            if not rng[1] > rng[0]:
                raise w.error(key, f"empty range {list(rng)}")
        alphas = w.numbers("alphas", dw.alphas)
        if any(not 0.0 <= a <= 1.0 for a in alphas):
            raise w.error("alphas", f"values must lie in [0, 1], got {list(alphas)}")
        sweep_links = w.numbers("links", dw.links, kind=int)
        if any(not 1 <= k <= model.n_links for k in sweep_links):
            raise w.error("links", f"values must lie in 1..{model.n_links}, got {list(sweep_links)}")
        n_q1 = w.number("n_q1", dw.n_q1, int)
        n_q2 = w.number("n_q2", dw.n_q2, int)
        for key, n in (("n_q1", n_q1), ("n_q2", n_q2)):
            if n < 1:
                raise w.error(key, f"must be >= 1, got {n}")
        sweep = _build(
            None, w, SweepConfig,
            q1_range=q1r, q2_range=q2r, n_q1=n_q1, n_q2=n_q2,
            alphas=alphas, links=sweep_links,
            chunk_size=w.number("chunk_size", dw.chunk_size, int),
            workers=w.number("workers", dw.workers, int),
            template=scenario,
        )
        w.finish()
    root.finish()
    return RunConfig(model=model, scenario=scenario, sweep=sweep)


# --- files -------------------------------------------------------------------------


def _line_map(text: str) -> dict:
    """Dotted key path -> 1-based line number, from the YAML node tree."""
    lines = {}
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return lines

    def walk(n, path):
        if isinstance(n, yaml.MappingNode):
            for k, v in n.value:
                sub = f"{path}.{k.value}" if path else str(k.value)
                lines[sub] = k.start_mark.line + 1
                walk(v, sub)
        elif isinstance(n, yaml.SequenceNode):
            for i, v in enumerate(n.value):
                sub = f"{path}[{i}]"
                lines[sub] = v.start_mark.line + 1
                if isinstance(v, yaml.MappingNode):
                    walk(v, sub)
                else:
                    lines[f"{path}.{i}"] = v.start_mark.line + 1

    if node is not None:
        walk(node, "")
    return lines


def parse_config(text: str, source=None) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else None
        raise ConfigError("<yaml>", f"malformed YAML: {getattr(exc, 'problem', exc)}", line, source) from exc
    return config_from_dict(data, _line_map(text), source)


def resolve_config_path(name_or_path) -> Path:
    """A file path, or the name of a bundled configuration."""
    path = Path(name_or_path)
    if path.exists():
        return path
    stem = path.name[:-5] if path.name.endswith(".yaml") else path.name
    if stem in BUNDLED and path.parent == Path("."):
        return Path(str(resources.files("legcontact") / "configs" / f"{stem}.yaml"))
    raise FileNotFoundError(f"no such config file or bundled config: {name_or_path}")


def load_config(name_or_path) -> RunConfig:
    path = resolve_config_path(name_or_path)
    return parse_config(path.read_text(), source=str(path))


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    scenario = replace(cfg.scenario, seed=int(seed))
    sweep = replace(cfg.sweep, template=scenario) if cfg.sweep is not None else None
    return replace(cfg, scenario=scenario, sweep=sweep)
