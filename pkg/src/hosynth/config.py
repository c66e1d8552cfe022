"""Run configuration: one flat table of named knobs.

Config files hold ``key = value`` lines ('#' starts a comment). Every key
also exists as a command-line flag (``n_sites`` <-> ``--n-sites``); flags win
over file values, file values win over defaults. Unknown keys are errors.
"""
import math
from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class Knob:
    name: str
    type: type
    default: object
    doc: str


def _bool(s):
    if isinstance(s, bool):
        return s
    t = str(s).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_list(s):
    if isinstance(s, (list, tuple)):
        return [int(x) for x in s]
    return [int(x) for x in str(s).split(",") if x.strip()]


_KNOBS = [
    # global
    Knob("seed", int, 0, "master seed; every component derives its stream from it"),
    Knob("threads", int, 1, "worker cap for parallel sections"),
    # grasp synthesis
    Knob("target_count", int, 100, "accepted grasps wanted per object"),
    Knob("offset", float, 0.08, "wrist-site distance from the surface (m)"),
    Knob("n_sites", int, 64, "wrist sites per object"),
    Knob("w_rep", float, 10.0, "repulsion weight of the contact cost"),
    Knob("eps_contact", float, 0.002, "contact distance threshold (m)"),
    Knob("tau_pen", float, 0.002, "penetration threshold (m)"),
    Knob("max_iters", int, 200, "fit iteration cap"),
    Knob("gtol", float, 1e-6, "fit projected-gradient tolerance"),
    Knob("ftol", float, 2e-2, "fit stall tolerance (relative cost drop per window)"),
    Knob("stall_window", int, 10, "fit stall window (accepted steps)"),
    Knob("budget_factor", int, 3, "attempt budget as a multiple of target_count"),
    Knob("residual_cap", float, 2.5e-3, "largest accepted fit cost (m^2)"),
    # space
    Knob("grid_u", int, 12, "viewpoint grid: elevation cells"),
    Knob("grid_phi", int, 24, "viewpoint grid: azimuth cells"),
    Knob("count", int, 64, "triplets drawn by the sample command"),
    # loop experiment
    Knob("n_objects", int, 4, "experiment space: objects"),
    Knob("n_poses", int, 8, "experiment space: poses per object"),
    Knob("loop_grid_u", int, 4, "experiment space: elevation cells"),
    Knob("loop_grid_phi", int, 8, "experiment space: azimuth cells"),
    Knob("epochs", int, 50, "epochs per run"),
    Knob("samples", int, 256, "synthetic triplets per epoch"),
    Knob("batch_size", int, 64, "mixed batch size"),
    Knob("ratio", float, 1.0, "synthetic : real mixing ratio"),
    Knob("online", _bool, True, "write the online scheme's final map (uniform is always run)"),
    Knob("learn_rate", float, 0.05, "learner decay per exposure"),
    Knob("noise_sigma", float, -1.0, "learner noise sd; < 0 means 10% of median difficulty"),
    Knob("difficulty", str, "lognormal", "base difficulty model: lognormal or uniform"),
    Knob("difficulty_mu", float, math.log(0.02), "log-normal mu of base difficulty"),
    Knob("difficulty_sigma", float, 0.75, "log-normal sigma of base difficulty"),
    Knob("target_error", float, -1.0, "curve target; < 0 means half the initial error"),
    Knob("n_seeds", int, 20, "paired seeds when 'seeds' is empty"),
    Knob("seeds", _int_list, [], "explicit experiment seeds, comma separated"),
    # symmetry
    Knob("revolution_steps", int, 36, "steps used for a revolution axis"),
    Knob("icp_iters", int, 50, "ICP iteration cap"),
    Knob("sym_tol", float, 1e-3, "self-map tolerance as a fraction of the diameter"),
    # scene synthesis
    Knob("sigma_bend_deg", float, 3.0, "bend disturbance sd (deg)"),
    Knob("sigma_splay_deg", float, 1.5, "splay disturbance sd (deg)"),
    Knob("shape_sigma", float, 0.5, "shape coefficient sd"),
    Knob("delta_u", float, 0.05, "viewpoint elevation disturbance half-width"),
    Knob("delta_phi_deg", float, 7.5, "viewpoint azimuth disturbance half-width (deg)"),
    Knob("camera_radius", float, 0.6, "camera distance from the object (m)"),
    Knob("width", int, 224, "image width (px)"),
    Knob("height", int, 224, "image height (px)"),
    Knob("fx", float, 245.0, "focal length x (px)"),
    Knob("fy", float, 245.0, "focal length y (px)"),
    Knob("cx", float, -1.0, "principal point x; < 0 means width / 2"),
    Knob("cy", float, -1.0, "principal point y; < 0 means height / 2"),
    Knob("background_pool", int, 1000, "number of background ids"),
    Knob("texture_pool", int, 100, "number of texture ids"),
    Knob("mitigation_step_deg", float, 0.5, "uncurl step (deg)"),
    Knob("max_mitigation_steps", int, 200, "uncurl step cap"),
    # evaluation
    Knob("mode", str, "mpcpe", "loss weighting: mpcpe (1, 1, 0) or sym (0, 0, 1)"),
]

KNOBS = {k.name: k for k in _KNOBS}


class RunConfig(dict):
    """Knob values with attribute access."""

    def __getattr__(self, name):
        try:
            return self[name]
        except KeyError:
            raise AttributeError(name) from None


def defaults():
    return RunConfig({k.name: (list(k.default) if isinstance(k.default, list) else k.default)
                      for k in _KNOBS})


def coerce(name, value):
    if name not in KNOBS:
        raise ConfigError(f"unknown config key {name!r}")
    try:
        return KNOBS[name].type(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def parse_config_text(text, source="<config>"):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = coerce(key, value)
    return out


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, path)


def resolve(file_values=None, flag_values=None):
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    cfg = defaults()
    for src in (file_values or {}, flag_values or {}):
        for k, v in src.items():
            cfg[k] = coerce(k, v)
    return cfg


def format_config(cfg):
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, list):
            return ",".join(str(x) for x in v)
        return repr(v) if isinstance(v, float) else str(v)
    return "".join(f"{k} = {fmt(cfg[k])}\n" for k in KNOBS)
