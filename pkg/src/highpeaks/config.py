"""
Experiment configuration.

A config is a YAML mapping with the keys below (``?`` marks optional keys).

    schema_version?  int, currently 1
    name?            str, used in reports
    seed             int >= 0, required; every random number flows from it
    kernel           {id: str, <params>}; e.g. {id: bargmann-fock, dimension: 2}
    levels           list of u > 0            } exactly one of the two
    level_rule       {type: sqrt_log, c: c}   } u(R) = c sqrt(log R)
    windows          list of R > 0 (physical window [-R/2, R/2]^2)  } exactly
    window_rule      {type: target_count, count: m}                 } one of
                     {type: rescaled_side, side: s}                 } the two
    replicates       int >= 1
    grid_factor?     b > 0, lattice spacing b/u (default 0.25)
    sampler?         series | grid (default series)
    tau_policy?      verbatim | normalized (default verbatim)
    avoidance_boxes? list of [[lo...], [hi...]] in rescaled coordinates
                     (default: the centred unit box when it fits)
    bootstrap?       bootstrap resamples for TV intervals (default 1000)
    output_dir?      default "highpeaks-out"
    parallelism?     worker processes (default: available cores);
                     the GP_THREADS environment variable overrides it

With ``levels`` and ``windows`` both given, every (u, R) pair is a cell.
"""

from dataclasses import dataclass, field
import math
import os

import yaml

from .kacrice import expected_maxima_density, mu_scaling
from .kernels import KernelError, kernel_from_id

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ValidationResult",
    "load_config",
    "config_from_dict",
    "validate_config",
    "theorem_window_ok",
    "resolve_parallelism",
]

SCHEMA_VERSION = 1
SAMPLERS = ("series", "grid")
TAU_POLICIES = ("verbatim", "normalized")
_KNOWN = {
    "schema_version", "name", "seed", "kernel", "levels", "level_rule", "windows",
    "window_rule", "replicates", "grid_factor", "sampler", "tau_policy",
    "avoidance_boxes", "bootstrap", "output_dir", "parallelism",
}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists (field, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{k}: {m}" for k, m in self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    kernel: dict
    replicates: int
    levels: tuple = None
    level_rule: dict = None
    windows: tuple = None
    window_rule: dict = None
    grid_factor: float = 0.25
    sampler: str = "series"
    tau_policy: str = "verbatim"
    avoidance_boxes: tuple = None
    bootstrap: int = 1000
    output_dir: str = "highpeaks-out"
    parallelism: int = None
    name: str = "experiment"
    schema_version: int = SCHEMA_VERSION
    warnings: tuple = field(default=(), compare=False)

    def kernel_model(self):
        params = {k: v for k, v in self.kernel.items() if k != "id"}
        return kernel_from_id(self.kernel["id"], **params)

    def cells(self):
        """List of (u, R) pairs in a fixed order."""
        kern = self.kernel_model()
        d = kern.dimension
        out = []
        if self.levels is not None and self.windows is not None:
            out = [(float(u), float(R)) for u in self.levels for R in self.windows]
        elif self.levels is not None:
            for u in self.levels:
                rule = self.window_rule
                if rule["type"] == "target_count":
                    dens = expected_maxima_density(kern, u).density
                    R = (rule["count"] / dens) ** (1.0 / d)
                else:
                    R = rule["side"] * mu_scaling(u, d)
                out.append((float(u), float(R)))
        else:
            for R in self.windows:
                out.append((float(self.level_rule["c"] * math.sqrt(math.log(R))), float(R)))
        return out

    def to_dict(self):
        out = {
            "schema_version": self.schema_version,
            "name": self.name,
            "seed": self.seed,
            "kernel": dict(self.kernel),
            "replicates": self.replicates,
            "grid_factor": self.grid_factor,
            "sampler": self.sampler,
            "tau_policy": self.tau_policy,
            "bootstrap": self.bootstrap,
            "output_dir": self.output_dir,
            "parallelism": self.parallelism,
        }
        for key in ("levels", "level_rule", "windows", "window_rule", "avoidance_boxes"):
            val = getattr(self, key)
            if val is not None:
                out[key] = _plain(val)
        return out


def _plain(v):
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


@dataclass
class ValidationResult:
    ok: bool
    errors: list
    warnings: list
    config: ExperimentConfig = None


def theorem_window_ok(u, R):
    """True when u <= 2 sqrt(log R)."""
    return R > 1 and u <= 2.0 * math.sqrt(math.log(R))


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _positive_list(raw, key, errors):
    if not isinstance(raw, (list, tuple)) or not raw:
        errors.append((key, "must be a non-empty list"))
        return None
    vals = []
    for v in raw:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0 or not math.isfinite(v):
            errors.append((key, f"entries must be positive numbers, got {v!r}"))
            return None
        vals.append(float(v))
    return tuple(vals)


def _parse(raw):
    """Schema and cross-field checks; returns (config or None, errors, warnings)."""
    errors, warns = [], []
    if not isinstance(raw, dict):
        return None, [("<root>", "config must be a mapping")], []
    for k in sorted(set(raw) - _KNOWN):
        errors.append((k, "unknown key"))

    sv = raw.get("schema_version", SCHEMA_VERSION)
    if sv != SCHEMA_VERSION:
        errors.append(("schema_version", f"unsupported version {sv!r}"))

    seed = raw.get("seed")
    if seed is None:
        errors.append(("seed", "missing; a master seed is required"))
    elif not _is_int(seed) or seed < 0:
        errors.append(("seed", "must be a non-negative integer"))

    reps = raw.get("replicates")
    if reps is None:
        errors.append(("replicates", "missing"))
    elif not _is_int(reps) or reps < 1:
        errors.append(("replicates", "must be an integer >= 1"))

    kern = raw.get("kernel")
    kernel_model = None
    if not isinstance(kern, dict) or "id" not in kern:
        errors.append(("kernel", "must be a mapping with an 'id'"))
    else:
        try:
            kernel_model = kernel_from_id(kern["id"], **{k: v for k, v in kern.items() if k != "id"})
        except (KernelError, TypeError, ValueError) as exc:
            errors.append(("kernel", str(exc)))

    levels = level_rule = windows = window_rule = None
    if ("levels" in raw) == ("level_rule" in raw):
        errors.append(("levels", "give exactly one of 'levels' and 'level_rule'"))
    elif "levels" in raw:
        levels = _positive_list(raw["levels"], "levels", errors)
    else:
        level_rule = raw["level_rule"]
        if not (isinstance(level_rule, dict) and level_rule.get("type") == "sqrt_log"
                and isinstance(level_rule.get("c"), (int, float)) and level_rule["c"] > 0):
            errors.append(("level_rule", "expected {type: sqrt_log, c: <positive>}"))
            level_rule = None

    if ("windows" in raw) == ("window_rule" in raw):
        errors.append(("windows", "give exactly one of 'windows' and 'window_rule'"))
    elif "windows" in raw:
        windows = _positive_list(raw["windows"], "windows", errors)
    else:
        window_rule = raw["window_rule"]
        ok = isinstance(window_rule, dict) and (
            (window_rule.get("type") == "target_count"
             and isinstance(window_rule.get("count"), (int, float)) and window_rule["count"] > 0)
            or (window_rule.get("type") == "rescaled_side"
                and isinstance(window_rule.get("side"), (int, float)) and window_rule["side"] > 0)
        )
        if not ok:
            errors.append(("window_rule",
                           "expected {type: target_count, count: m} or {type: rescaled_side, side: s}"))
            window_rule = None
    if level_rule is not None and windows is None and "windows" not in raw:
        errors.append(("level_rule", "a level rule needs explicit 'windows'"))
    if level_rule is not None and windows is not None and any(R <= 1 for R in windows):
        errors.append(("windows", "a sqrt-log level rule needs R > 1"))

    gf = raw.get("grid_factor", 0.25)
    if isinstance(gf, bool) or not isinstance(gf, (int, float)) or not gf > 0:
        errors.append(("grid_factor", "must be positive"))
    sampler = raw.get("sampler", "series")
    if sampler not in SAMPLERS:
        errors.append(("sampler", f"must be one of {SAMPLERS}"))
    tau = raw.get("tau_policy", "verbatim")
    if tau not in TAU_POLICIES:
        errors.append(("tau_policy", f"must be one of {TAU_POLICIES}"))
    boot = raw.get("bootstrap", 1000)
    if not _is_int(boot) or boot < 1:
        errors.append(("bootstrap", "must be a positive integer"))
    par = raw.get("parallelism")
    if par is not None and (not _is_int(par) or par < 1):
        errors.append(("parallelism", "must be a positive integer"))
    out_dir = raw.get("output_dir", "highpeaks-out")
    if not isinstance(out_dir, str) or not out_dir:
        errors.append(("output_dir", "must be a non-empty string"))

    boxes = raw.get("avoidance_boxes")
    if boxes is not None:
        try:
            boxes = tuple((tuple(map(float, b[0])), tuple(map(float, b[1]))) for b in boxes)
            if any(len(lo) != len(hi) or any(a > c for a, c in zip(lo, hi)) for lo, hi in boxes):
                raise ValueError
        except (TypeError, ValueError, IndexError):
            errors.append(("avoidance_boxes", "expected a list of [[lo...], [hi...]] with lo <= hi"))
            boxes = None

    if kernel_model is not None and sampler == "series" and not kernel_model.id.startswith(
        ("bargmann-fock", "random-plane-wave")
    ):
        errors.append(("sampler", f"no series sampler for kernel '{kern['id']}'; use 'grid'"))
    if kernel_model is not None and kernel_model.dimension != 2:
        errors.append(("kernel", "experiments run in the plane (dimension 2)"))

    if errors:
        return None, errors, warns
    cfg = ExperimentConfig(
        seed=int(seed), kernel=dict(kern), replicates=int(reps), levels=levels,
        level_rule=level_rule, windows=windows, window_rule=window_rule,
        grid_factor=float(gf), sampler=sampler, tau_policy=tau, avoidance_boxes=boxes,
        bootstrap=int(boot), output_dir=out_dir, parallelism=par,
        name=str(raw.get("name", "experiment")),
    )
    try:
        cells = cfg.cells()
    except ValueError as exc:
        return None, [("levels", str(exc))], warns
    for u, R in cells:
        if not theorem_window_ok(u, R):
            warns.append(f"cell u={u:g}, R={R:g} is outside theorem window u <= 2 sqrt(log R)")
    object.__setattr__(cfg, "warnings", tuple(warns))
    return cfg, [], warns


def load_config(path):
    """Read and validate a YAML config; raises :class:`ConfigError`."""
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    cfg, errors, _ = _parse(raw)
    if errors:
        raise ConfigError(errors)
    return cfg


def config_from_dict(raw):
    cfg, errors, _ = _parse(raw)
    if errors:
        raise ConfigError(errors)
    return cfg


def validate_config(path):
    """Schema and cross-field validation of a config file.

    Returns a :class:`ValidationResult`; cells outside the theorem window
    u <= 2 sqrt(log R) produce warnings, not errors.  Raises ``OSError``
    when the file cannot be read.
    """
    with open(path) as fh:
        text = fh.read()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        return ValidationResult(False, [("<yaml>", str(exc))], [])
    cfg, errors, warns = _parse(raw)
    return ValidationResult(not errors, errors, warns, cfg)


def resolve_parallelism(configured=None):
    """GP_THREADS, else the configured degree, else the available cores."""
    env = os.environ.get("GP_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError([("GP_THREADS", f"not an integer: {env!r}")]) from None
        if n < 1:
            raise ConfigError([("GP_THREADS", "must be >= 1")])
        return n
    if configured:
        return int(configured)
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)
