"""Run configuration: flat ``key = value`` files with preset inheritance.

Schema (one key per line, ``#`` starts a comment, unknown keys are errors):

    preset               name of a preset to start from (applied first)
    scheme               cn | bdf2
    dt, t_max            time step and final time
    solver_tol           BiCGSTAB relative residual tolerance
    solver_maxit         BiCGSTAB iteration cap
    rotational_pressure  true | false
    dealias              true | false (3/2-rule in x)
    nx, ny               physical node counts (nx odd; m = (nx-1)/2, n = ny-1)
    lam, epsilon, mobility, nu, gamma, ell, eta, L_x
    theta_s              static contact angle in radians
    theta_s_deg          same, in degrees (mutually exclusive with theta_s)
    u_w_top, u_w_bottom  wall speeds in x
    init                 stripe | drop
    drop_radius          drop radius (init = drop)
    snapshot_every       steps between snapshots (0 = first and last only)
    checkpoint_every     steps between checkpoints (0 = none)
    seed                 RNG seed for randomized checks
    out                  output directory
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields

from ..model import ModelParams
from ..stepper import SchemeConfig

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


# default physics plus the shear-flow domain
_PHYSICS = dict(lam=20.0, epsilon=0.05, mobility=0.0125, nu=1 / 0.6, gamma=100.0,
                ell=1 / 0.19, L_x=10.0)

PRESETS: dict[str, dict] = {
    "case1": dict(_PHYSICS, theta_s_deg=64.0, u_w_top=0.7, u_w_bottom=-0.7,
                  init="stripe", nx=257, ny=32, dt=0.01, t_max=5.0),
    "case2": dict(_PHYSICS, theta_s_deg=77.6, u_w_top=0.2, u_w_bottom=-0.2,
                  init="stripe", nx=257, ny=32, dt=0.01, t_max=10.0),
    "relaxation": dict(_PHYSICS, theta_s_deg=77.6, u_w_top=0.0, u_w_bottom=0.0,
                       init="stripe", nx=129, ny=32, dt=0.01, t_max=2.5),
    # solver-efficiency tables use their own defaults, kept separate on purpose
    "iterations": dict(_PHYSICS, theta_s_deg=64.0, u_w_top=0.7, u_w_bottom=-0.7,
                       gamma=500.0, lam=12.0, init="stripe", nx=257, ny=32,
                       dt=0.01, t_max=0.2, solver_tol=1e-8),
    "drop": dict(_PHYSICS, theta_s=math.pi / 6, u_w_top=2.0, u_w_bottom=-2.0,
                 init="drop", drop_radius=0.5, nx=257, ny=32, dt=0.01, t_max=5.0,
                 scheme="bdf2", snapshot_every=100),
    "drop-obtuse": dict(_PHYSICS, theta_s=2 * math.pi / 3, u_w_top=2.0, u_w_bottom=-2.0,
                        init="drop", drop_radius=0.5, nx=257, ny=32, dt=0.01, t_max=5.0,
                        scheme="bdf2", snapshot_every=100),
}

_MODEL_KEYS = {f.name for f in fields(ModelParams)}
_SCHEME_KEYS = {f.name for f in fields(SchemeConfig)}
_RUN_KEYS = {"nx", "ny", "init", "drop_radius", "snapshot_every", "checkpoint_every",
             "seed", "out", "preset", "theta_s_deg"}
KNOWN_KEYS = _MODEL_KEYS | _SCHEME_KEYS | _RUN_KEYS

_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


@dataclass
class RunConfig:
    params: ModelParams = field(default_factory=ModelParams)
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    nx: int = 129
    ny: int = 32
    preset: str | None = None
    init: str = "stripe"
    drop_radius: float = 0.5
    out: str = "out"
    snapshot_every: int = 0
    checkpoint_every: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.nx % 2 == 0:
            raise ConfigError(f"nx must be odd, got {self.nx}")
        if (self.nx - 1) // 2 < 4 or self.ny - 1 < 4:
            raise ConfigError(f"grid {self.nx}x{self.ny} too coarse (need m >= 4, n >= 4)")
        if self.init not in ("stripe", "drop"):
            raise ConfigError(f"unknown init {self.init!r}")
        if self.snapshot_every < 0 or self.checkpoint_every < 0:
            raise ConfigError("cadences must be nonnegative")

    @property
    def m(self) -> int:
        return (self.nx - 1) // 2

    @property
    def n(self) -> int:
        return self.ny - 1

    def resolved(self) -> dict:
        """Every parameter that influences the run, flat."""
        d = {"preset": self.preset or "", "init": self.init, "nx": self.nx, "ny": self.ny,
             "drop_radius": self.drop_radius, "snapshot_every": self.snapshot_every,
             "checkpoint_every": self.checkpoint_every, "seed": self.seed, "out": self.out}
        d.update(self.params.as_dict())
        d.update({f.name: getattr(self.scheme, f.name) for f in fields(SchemeConfig)})
        return d

    def dump(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in sorted(self.resolved().items()))

    def with_updates(self, **kw) -> "RunConfig":
        """Copy with flat key overrides (same keys as the file format)."""
        base = self.resolved()
        if "theta_s_deg" in kw:
            base.pop("theta_s")
        return build_config(dict(base, **kw))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(key: str, raw):
    if not isinstance(raw, str):
        return raw
    s = raw.strip()
    if key in ("rotational_pressure", "dealias"):
        try:
            return _BOOL[s.lower()]
        except KeyError:
            raise ConfigError(f"{key}: expected a boolean, got {s!r}") from None
    if key in ("scheme", "init", "out", "preset"):
        return s
    try:
        if key in ("nx", "ny", "solver_maxit", "snapshot_every", "checkpoint_every", "seed"):
            return int(s)
        return float(s)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {s!r}") from None


def parse_text(text: str) -> dict:
    """Parse the flat format into a dict of raw strings."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {k!r}")
        if k in out:
            raise ConfigError(f"line {lineno}: duplicate key {k!r}")
        out[k] = v
    return out


def resolve(raw: dict) -> dict:
    """Apply preset inheritance: preset values first, explicit keys override."""
    raw = dict(raw)
    name = raw.get("preset")
    merged = {}
    if name:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        merged.update(PRESETS[name])
    # theta_s given explicitly in either unit beats the preset's
    if "theta_s" in raw or "theta_s_deg" in raw:
        merged.pop("theta_s", None)
        merged.pop("theta_s_deg", None)
    merged.update(raw)
    return {k: _coerce(k, v) for k, v in merged.items() if v is not None}


def build_config(raw: dict) -> RunConfig:
    for k in raw:
        if k not in KNOWN_KEYS:
            raise ConfigError(f"unknown key {k!r}")
    d = resolve(raw)
    if "theta_s_deg" in d:
        if "theta_s" in d:
            raise ConfigError("give theta_s or theta_s_deg, not both")
        d["theta_s"] = math.radians(d.pop("theta_s_deg"))
    try:
        params = ModelParams(**{k: d[k] for k in _MODEL_KEYS if k in d})
        scheme = SchemeConfig(**{k: d[k] for k in _SCHEME_KEYS if k in d})
        run = {k: d[k] for k in _RUN_KEYS - {"theta_s_deg"} if k in d}
        cfg = RunConfig(params=params, scheme=scheme, **run)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    log.info("resolved config (preset %s):\n%s", cfg.preset, cfg.dump())
    return cfg


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a config file (optional) and apply overrides (None values ignored)."""
    raw = {}
    if path is not None:
        with open(path) as fh:
            raw = parse_text(fh.read())
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    return build_config(raw)


def preset_config(name: str, **overrides) -> RunConfig:
    return load_config(None, dict(overrides, preset=name))


__all__ = ["ConfigError", "PRESETS", "RunConfig", "build_config", "load_config",
           "parse_text", "preset_config"]
