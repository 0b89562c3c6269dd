"""
Config-file loading for slipflow runs.

Config files are TOML with the sections [geometry], [bc], [solver] and
[run]. Parsing is strict: unknown sections or keys are errors, and
`geometry.kind` and `bc.mode` are required. Environment variables of the
form SLIPFLOW_<SECTION>__<KEY> override file values.

Only the standard library is imported at module level so thread settings can
be exported before the numerical modules load.
"""
import datetime
import hashlib
import json
import os
import platform
import re
import shutil
import tempfile
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field
from typing import Optional

from __version__ import __title__, __version__
from config import config as defaults
from config.presets import preset_text
from utils.error_utils import ConfigError, OutputExistsError

TASKS = ("simulate", "eigens", "korn", "identities", "project")
REQUIRED = (("geometry", "kind"), ("bc", "mode"))

# section -> key -> (accepted types, default)
SCHEMA = {
    "geometry": {
        "kind": ((str,), None),
        "radius": ((float,), defaults.DEFAULT_RADIUS),
        "theta_max": ((float,), defaults.DEFAULT_THETA_MAX),
        "height": ((float,), defaults.DEFAULT_HEIGHT),
        "n1": ((int,), defaults.DEFAULT_RESOLUTION),
        "n2": ((int,), None),
    },
    "bc": {
        "mode": ((str,), None),
        "alpha": ((float,), defaults.DEFAULT_ALPHA),
    },
    "solver": {
        "mu": ((float,), defaults.DEFAULT_MU),
        "projection_tol": ((float,), defaults.PROJECTION_TOL),
        "poisson_tol": ((float,), defaults.POISSON_TOL),
        "poisson_method": ((str,), defaults.POISSON_METHOD),
        "resolvent_tol": ((float,), defaults.RESOLVENT_TOL),
        "resolvent_method": ((str,), defaults.RESOLVENT_METHOD),
        "eigen_tol": ((float,), defaults.EIGEN_TOL),
        "cfl": ((float,), defaults.CFL),
        "compat_tol": ((float,), defaults.COMPAT_TOL),
        "kernel_tol": ((float,), defaults.KERNEL_TOL),
        "energy_identity_tol": ((float,), defaults.ENERGY_IDENTITY_TOL),
    },
    "run": {
        "task": ((str,), "simulate"),
        "dt": ((float,), defaults.DEFAULT_DT),
        "t_end": ((float,), defaults.DEFAULT_T_END),
        "initial": ((str,), "random"),
        "seed": ((int,), defaults.DEFAULT_SEED),
        "amplitude": ((float,), defaults.DEFAULT_AMPLITUDE),
        "killing_weight": ((float,), 0.0),
        "remove_killing": ((bool,), False),
        "eigen_indices": ((list,), [1]),
        "field_path": ((str,), ""),
        "advection": ((bool,), True),
        "output_every": ((int,), defaults.OUTPUT_EVERY),
        "snapshot_every": ((int,), defaults.SNAPSHOT_EVERY),
        "stop_threshold": ((float,), defaults.STOP_THRESHOLD),
        "eigen_count": ((int,), defaults.EIGEN_COUNT),
        "samples": ((int,), defaults.IDENTITY_SAMPLES),
        "geometries": ((list,), ["disk", "cap", "cylinder"]),
        "threads": ((int,), 0),
        "fit_window": ((float,), defaults.FIT_WINDOW),
    },
}

_POSITION = re.compile(r"at line (\d+), column (\d+)")


@dataclass(frozen=True, eq=False)
class AnalysisTask:
    """A non-simulation command with its resolved settings."""
    task: str
    geometry: object
    bc: object
    mu: float
    solver: dict
    run: dict


@dataclass(eq=False)
class LoadedConfig:
    source: str
    text: str
    settings: dict
    config: object

    @property
    def task(self):
        return self.settings["run"]["task"]

    @property
    def threads(self):
        return self.settings["run"]["threads"]


@dataclass
class RunManifest:
    config_source: str
    task: str
    output_dir: str
    config_hash: str
    seed: int
    versions: dict = field(default_factory=dict)
    created: str = ""

    def write(self, directory):
        path = os.path.join(directory, "manifest.json")
        with open(path, "w") as handle:
            json.dump(asdict(self), handle, indent=2, sort_keys=True)
        return path


def read_toml(text):
    """
    Parse config text.

    Raises:
        ConfigError: With line and column of a syntax error
    """
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = _POSITION.search(str(e))
        line, column = (int(match.group(1)), int(match.group(2))) if match else (None, None)
        raise ConfigError(f"Config syntax error: {e}", line=line, column=column) from e


def _toml_value(raw):
    try:
        return tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        return raw


def apply_env_overrides(table, environ=None):
    """
    Merge SLIPFLOW_<SECTION>__<KEY> variables into a parsed table.

    Values are read as TOML values and fall back to plain strings.

    Returns:
        dict: New table with the overrides applied
    """
    environ = os.environ if environ is None else environ
    merged = {section: dict(values) for section, values in table.items() if isinstance(values, dict)}
    merged.update({section: values for section, values in table.items() if not isinstance(values, dict)})
    for name, raw in sorted(environ.items()):
        if not name.startswith(defaults.ENV_PREFIX) or "__" not in name:
            continue
        section, key = name[len(defaults.ENV_PREFIX) :].lower().split("__", 1)
        merged.setdefault(section, {})
        if not isinstance(merged[section], dict):
            raise ConfigError(f"Environment override {name} targets '{section}', which is not a section", key=section)
        merged[section][key] = _toml_value(raw)
    return merged


def merge_overrides(table, overrides):
    """Apply {section: {key: value}} overrides on top of a table."""
    merged = {section: dict(values) if isinstance(values, dict) else values for section, values in table.items()}
    for section, values in (overrides or {}).items():
        merged.setdefault(section, {}).update(values)
    return merged


def _check_type(section, key, value, accepted):
    name = f"{section}.{key}"
    if isinstance(value, bool) and bool not in accepted:
        raise ConfigError(f"{name} must be {accepted[0].__name__}, got a boolean", key=name)
    if float in accepted and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, accepted):
        raise ConfigError(f"{name} must be {accepted[0].__name__}, got {type(value).__name__}", key=name)
    return value


def resolve_settings(table):
    """
    Validate a table against the schema and fill in defaults.

    Raises:
        ConfigError: Naming the missing, unknown or mistyped key
    """
    if not table:
        required = ", ".join(f"{section}.{key}" for section, key in REQUIRED)
        raise ConfigError(f"Config is empty; required keys: {required}")
    for section, values in table.items():
        if section not in SCHEMA:
            raise ConfigError(f"Unknown config section [{section}]", key=section)
        if not isinstance(values, dict):
            raise ConfigError(f"'{section}' must be a section, not a value", key=section)
        for key in values:
            if key not in SCHEMA[section]:
                raise ConfigError(f"Unknown config key {section}.{key}", key=f"{section}.{key}")
    missing = [f"{section}.{key}" for section, key in REQUIRED if key not in table.get(section, {})]
    if missing:
        raise ConfigError(f"Missing required config keys: {', '.join(missing)}", key=missing[0])

    settings = {}
    for section, keys in SCHEMA.items():
        provided = table.get(section, {})
        settings[section] = {}
        for key, (accepted, default) in keys.items():
            if key in provided:
                settings[section][key] = _check_type(section, key, provided[key], accepted)
            else:
                settings[section][key] = list(default) if isinstance(default, list) else default
    if settings["geometry"]["n2"] is None:
        settings["geometry"]["n2"] = settings["geometry"]["n1"]
    if settings["run"]["task"] not in TASKS:
        raise ConfigError(f"run.task must be one of {', '.join(TASKS)}, got '{settings['run']['task']}'", key="run.task")
    return settings


def _build(settings):
    # numerical modules load here, after thread settings are exported
    from utils.dynamics_utils import InitialCondition, SimulationConfig
    from utils.geometry_utils import GeometrySpec
    from utils.stokes_utils import BoundaryCondition

    geometry, bc, solver, run = (settings[name] for name in ("geometry", "bc", "solver", "run"))
    try:
        spec = GeometrySpec(**geometry)
    except ValueError as e:
        raise ConfigError(f"Invalid [geometry]: {e}", key="geometry") from e
    try:
        condition = BoundaryCondition(mode=bc["mode"], alpha=bc["alpha"])
    except ValueError as e:
        raise ConfigError(f"Invalid [bc]: {e}", key="bc") from e
    for key in ("poisson_method", "resolvent_method"):
        allowed = ("cg", "direct")
        if solver[key] not in allowed:
            raise ConfigError(f"solver.{key} must be one of {', '.join(allowed)}, got '{solver[key]}'", key=f"solver.{key}")

    if run["task"] != "simulate":
        if not solver["mu"] > 0.0:
            raise ConfigError(f"solver.mu must be positive, got {solver['mu']}", key="solver.mu")
        return AnalysisTask(task=run["task"], geometry=spec, bc=condition, mu=solver["mu"], solver=dict(solver), run=dict(run))

    try:
        initial = InitialCondition(
            kind=run["initial"],
            seed=run["seed"],
            amplitude=run["amplitude"],
            killing_weight=run["killing_weight"],
            remove_killing=run["remove_killing"],
            eigen_indices=tuple(run["eigen_indices"]),
            path=run["field_path"] or None,
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid initial condition: {e}", key="run.initial") from e
    try:
        return SimulationConfig(
            geometry=spec,
            bc=condition,
            mu=solver["mu"],
            dt=run["dt"],
            t_end=run["t_end"],
            initial=initial,
            advection=run["advection"],
            cfl=solver["cfl"],
            output_every=run["output_every"],
            snapshot_every=run["snapshot_every"],
            stop_threshold=run["stop_threshold"],
            poisson_tol=solver["poisson_tol"],
            poisson_method=solver["poisson_method"],
            resolvent_tol=solver["resolvent_tol"],
            resolvent_method=solver["resolvent_method"],
            projection_tol=solver["projection_tol"],
            compat_tol=solver["compat_tol"],
            eigen_tol=solver["eigen_tol"],
            kernel_tol=solver["kernel_tol"],
            energy_identity_tol=solver["energy_identity_tol"],
            fit_window=run["fit_window"],
        )
    except ValueError as e:
        raise ConfigError(f"Invalid [run]: {e}", key="run") from e


def parse_config(text, task=None, environ=None, overrides=None):
    """
    Parse config text into a simulation config or an analysis task.

    Args:
        text (str): TOML config text
        task (str, optional): Overrides run.task (the CLI subcommand)
        environ (dict, optional): Environment used for overrides
        overrides (dict, optional): {section: {key: value}} applied last

    Returns:
        SimulationConfig or AnalysisTask: Fully resolved configuration

    Raises:
        ConfigError: On syntax errors, unknown or missing keys and invalid values
    """
    return _load(text, "<text>", task, environ, overrides).config


def _load(text, source, task, environ, overrides):
    table = apply_env_overrides(read_toml(text), environ)
    if task:
        overrides = merge_overrides({"run": {"task": task}}, overrides)
    settings = resolve_settings(merge_overrides(table, overrides))
    return LoadedConfig(source=source, text=text, settings=settings, config=_build(settings))


def read_config_text(path=None, preset=None):
    """
    Config text and a source label from a file path or a preset name.

    Raises:
        ConfigError: If neither or both are given, or the file is missing
    """
    if bool(path) == bool(preset):
        raise ConfigError("Provide exactly one of --config or --preset", key="config")
    if preset:
        return preset_text(preset), f"preset:{preset}"
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}", key="config")
    with open(path) as handle:
        return handle.read(), os.path.abspath(path)


def load_config(path=None, preset=None, task=None, environ=None, overrides=None):
    """
    Load and resolve a config file or preset.

    Returns:
        LoadedConfig: Source, text, resolved settings and the built config
    """
    text, source = read_config_text(path, preset)
    return _load(text, source, task, environ, overrides)


def peek_threads(path=None, preset=None):
    """run.threads of a config without building it (0 when unset or unreadable)."""
    try:
        text, _ = read_config_text(path, preset)
        value = read_toml(text).get("run", {}).get("threads", 0)
    except ConfigError:
        return 0
    return value if isinstance(value, int) and not isinstance(value, bool) else 0


def render_settings(settings):
    """Resolved settings as TOML text."""
    lines = []
    for section, values in settings.items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            lines.append(f"{key} = {_render_value(value)}")
        lines.append("")
    return "\n".join(lines)


def _render_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return "[" + ", ".join(_render_value(item) for item in value) + "]"
    return str(value)


def config_hash(settings):
    """sha256 of the canonical resolved settings."""
    return hashlib.sha256(render_settings(settings).encode()).hexdigest()


def default_run_directory(loaded, root=None):
    root = root or os.environ.get("SLIPFLOW_OUT") or defaults.RUNS_DIR
    return os.path.join(root, f"{loaded.task}-{config_hash(loaded.settings)[:12]}")


def _versions():
    import numpy
    import scipy
    from importlib import metadata

    try:
        rich_version = metadata.version("rich")
    except metadata.PackageNotFoundError:
        rich_version = "unknown"
    return {
        __title__: __version__,
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "rich": rich_version,
    }


def create_run_directory(loaded, out_dir, force=False):
    """
    Create a run directory holding manifest.json and config.toml.

    The directory is assembled under a temporary name next to its target and
    renamed into place, so a run directory never exists without its manifest.

    Returns:
        tuple: (directory path, RunManifest)

    Raises:
        OutputExistsError: If the directory exists and force is False
    """
    out_dir = os.path.abspath(out_dir)
    if os.path.exists(out_dir) and not force:
        raise OutputExistsError(f"Output directory already exists: {out_dir} (use --force to overwrite)")
    parent = os.path.dirname(out_dir)
    os.makedirs(parent, exist_ok=True)
    staging = tempfile.mkdtemp(prefix=f".{os.path.basename(out_dir)}-", dir=parent)
    manifest = RunManifest(
        config_source=loaded.source,
        task=loaded.task,
        output_dir=out_dir,
        config_hash=config_hash(loaded.settings),
        seed=loaded.settings["run"]["seed"],
        versions=_versions(),
        created=datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    )
    try:
        manifest.write(staging)
        with open(os.path.join(staging, "config.toml"), "w") as handle:
            handle.write(render_settings(loaded.settings))
        if os.path.exists(out_dir):
            shutil.rmtree(out_dir)
        os.rename(staging, out_dir)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    return out_dir, manifest
