"""
Run configuration: flat ``key = value`` files with dotted namespaces.

    # scenario
    n = 1024
    gamma = 0
    kernel.kappa = constant
    integrator.dt = 1e-3

Files are read with python-dotenv without touching the process environment.
Keys under ``meta.`` are written by runs and ignored on load, so a
``run.meta`` file can be replayed as a config.
"""
import logging
import math
from pathlib import Path

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ValidationError

from .errors import ConfigError
from .schemas import RunConfig

logger = logging.getLogger(__name__)

VERSION = "0.1.0"
GENERATOR = "numpy.random.Philox"
META_PREFIX = "meta."


def read_flat(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = dotenv_values(path, interpolate=False)
    missing = [key for key, value in values.items() if value is None]
    if missing:
        raise ConfigError("line without '= value'", missing[0])
    return {key: value for key, value in values.items() if not key.startswith(META_PREFIX)}


def nest(flat: dict[str, object]) -> dict:
    """{'kernel.k2': '1'} -> {'kernel': {'k2': '1'}}."""
    tree: dict = {}
    for key, value in flat.items():
        parts = key.split(".")
        node = tree
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError("key is both a value and a section", key)
            node = child
        if isinstance(node.get(parts[-1]), dict):
            raise ConfigError("key is both a value and a section", key)
        node[parts[-1]] = value
    return tree


def _resolve(loc: tuple) -> tuple[type[BaseModel], list[str]]:
    """Deepest section along loc and the config key it names; union member tags are dropped."""
    model: type[BaseModel] | None = RunConfig
    section: type[BaseModel] = RunConfig
    parts: list[str] = []
    for part in loc:
        if model is None or part not in model.model_fields:
            break
        parts.append(part)
        annotation = model.model_fields[part].annotation
        if isinstance(annotation, type) and issubclass(annotation, BaseModel):
            model = section = annotation
        else:
            model = None
    return section, parts


def _config_error(exc: ValidationError) -> ConfigError:
    err = exc.errors()[0]
    loc = tuple(str(part) for part in err["loc"] if not isinstance(part, int))
    if err["type"] == "extra_forbidden":
        section, _ = _resolve(loc[:-1])
        return ConfigError("unknown key", ".".join(loc), sorted(section.model_fields))
    _, parts = _resolve(loc)
    key = ".".join(parts) or "gamma"
    accepted = None
    if err["type"] == "literal_error":
        expected = err.get("ctx", {}).get("expected", "")
        accepted = [s.strip().strip("'") for s in expected.replace(" or ", ",").split(",") if s.strip()]
    return ConfigError(err["msg"], key, accepted)


def load_config(path: str | Path | None = None, overrides: dict[str, object] | None = None) -> RunConfig:
    flat = read_flat(path) if path is not None else {}
    flat.update({key: value for key, value in (overrides or {}).items() if value is not None})
    try:
        cfg = RunConfig.model_validate(nest(flat))
    except ValidationError as exc:
        raise _config_error(exc) from None
    logger.info("config loaded: %s (%d keys)", path or "<defaults>", len(flat))
    return cfg


def flatten(cfg: RunConfig) -> dict[str, object]:
    flat: dict[str, object] = {}

    def walk(prefix: str, data: dict):
        for key, value in data.items():
            name = f"{prefix}{key}"
            if isinstance(value, dict):
                walk(f"{name}.", value)
            else:
                flat[name] = value

    walk("", cfg.model_dump())
    return flat


def _format(value) -> str | None:
    if value is None:
        return None
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format(v) for v in value)
    text = str(value)
    if any(c in text for c in " #;|'\""):
        return "'" + text.replace("'", "") + "'"
    return text


def write_key_values(path: str | Path, values: dict[str, object], title: str | None = None):
    """Write ``key = value`` lines in the config grammar."""
    lines = [f"# {title}"] if title else []
    for key in sorted(values):
        text = _format(values[key])
        if text is not None:
            lines.append(f"{key} = {text}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_meta(path: str | Path, cfg: RunConfig, resolved: dict[str, object] | None = None,
               extra: dict[str, object] | None = None):
    """
    Write the resolved config plus ``meta.*`` facts (generator, versions,
    tolerance budgets). The file loads back as an equivalent config.
    """
    values = flatten(cfg)
    values.update(resolved or {})
    meta = {"generator": GENERATOR, "version": VERSION, "numpy": np.__version__}
    meta.update(extra or {})
    values.update({f"{META_PREFIX}{key}": value for key, value in meta.items()})
    write_key_values(path, values, "resolved run configuration")
    logger.debug("meta written: %s", path)


def read_meta(path: str | Path) -> dict[str, str]:
    """The ``meta.*`` entries of a run.meta file, prefix stripped."""
    values = dotenv_values(path, interpolate=False)
    return {key[len(META_PREFIX):]: value for key, value in values.items()
            if key.startswith(META_PREFIX) and value is not None}
