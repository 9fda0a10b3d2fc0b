"""Configuration files.

Intrinsics are flat ``key = value`` lines; pipeline settings are an INI file
with a ``[pipeline]`` section (and optionally ``[noise]``) whose keys are the
dataclass field names.
"""

import configparser
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any, Mapping, Type, TypeVar

from multipose.core.exceptions import ConfigError
from multipose.core.models import CameraIntrinsics, NoiseModel, PipelineConfig

T = TypeVar("T")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def coerce_value(name: str, raw: str, kind: Any) -> Any:
    text = raw.strip()
    try:
        if kind is bool or kind == "bool":
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(text)
        if kind is int or kind == "int":
            return int(text)
        if kind is float or kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"Invalid value for {name}: {raw!r}") from None
    return text


def dataclass_from_mapping(cls: Type[T], values: Mapping[str, str], where: str = "") -> T:
    """Build ``cls`` from string values keyed by field name.

    Raises:
        ConfigError: On unknown keys, missing required keys or bad values.
    """
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"Unknown key(s) {', '.join(unknown)}{' in ' + where if where else ''}")
    kwargs = {name: coerce_value(name, raw, known[name].type) for name, raw in values.items()}
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"Incomplete {cls.__name__}{' in ' + where if where else ''}: {e}") from None


def parse_key_values(text: str, where: str = "") -> dict[str, str]:
    """Parse ``key = value`` lines, ignoring blanks and ``#`` comments."""
    values: dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{where}:{number}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(f"{where}:{number}: duplicate key {key!r}")
        values[key] = value
    return values


def read_intrinsics(path: str | Path) -> CameraIntrinsics:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Intrinsics file not found: {path}")
    values = parse_key_values(path.read_text(encoding="utf-8"), str(path))
    return dataclass_from_mapping(CameraIntrinsics, values, str(path)).validate()


def write_intrinsics(path: str | Path, k: CameraIntrinsics) -> None:
    lines = [f"{name} = {value!r}" for name, value in asdict(k).items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_ini(path: Path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path, "r", encoding="utf-8") as f:
            parser.read_file(f)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    return parser


def read_ini(path: str | Path) -> configparser.ConfigParser:
    """Parse an INI file with case-sensitive keys.

    Raises:
        FileNotFoundError: If the file is absent.
        ConfigError: If it is not valid INI.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    return _read_ini(path)


def load_pipeline_config(path: str | Path) -> PipelineConfig:
    """Read ``[pipeline]`` from an INI file; missing keys keep their defaults."""
    parser = read_ini(path)
    unknown = sorted(set(parser.sections()) - {"pipeline", "noise"})
    if unknown:
        raise ConfigError(f"{path}: unknown section(s) {', '.join(unknown)}")
    values = dict(parser["pipeline"]) if parser.has_section("pipeline") else {}
    return dataclass_from_mapping(PipelineConfig, values, f"{path} [pipeline]").validate()


def load_noise_model(path: str | Path) -> NoiseModel:
    parser = read_ini(path)
    values = dict(parser["noise"]) if parser.has_section("noise") else {}
    return dataclass_from_mapping(NoiseModel, values, f"{path} [noise]").validate()


def write_pipeline_config(path: str | Path, cfg: PipelineConfig) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["pipeline"] = {name: repr(value) if isinstance(value, float) else str(value)
                          for name, value in asdict(cfg).items()}
    with open(path, "w", encoding="utf-8") as f:
        parser.write(f)
