from __future__ import annotations

from collections.abc import Mapping
from pathlib import Path
from typing import Any, TypeVar

from pydantic import BaseModel, ConfigDict, ValidationError

from man_rec.errors import ConfigError

M = TypeVar("M", bound=BaseModel)


class ConfigBaseModel(BaseModel):
    model_config = ConfigDict(
        extra="forbid",
        frozen=True,
    )


def split_csv(value: Any) -> Any:
    """Let list fields be written as ``20,10`` in config files."""
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    if isinstance(value, (int, float)):
        return [value]
    return value


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    """Parse flat ``key = value`` lines into a nested dict.

    ``#`` starts a comment, dotted keys nest (``model.encoder.layers = 2``) and values
    stay strings; the pydantic models do the type conversion.
    """
    tree: dict[str, Any] = {}
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", maxsplit=1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(
                f"{source}:{number}: expected `key = value`, got {raw_line!r}"
            )

        *parents, leaf = key.split(".")
        node = tree
        for part in parents:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"{source}:{number}: `{part}` is not a section")
            node = child
        if leaf in node:
            raise ConfigError(f"{source}:{number}: duplicate key `{key}`")
        node[leaf] = value
    return tree


def read_config_file(path: Path | str) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e.strerror}") from e
    return parse_config_text(text, source=str(path))


def validate_config(model: type[M], values: Mapping[str, Any], source: str) -> M:
    try:
        return model.model_validate(values)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration in {source}:\n{e}") from e


def load_config(model: type[M], path: Path | str | None) -> M:
    if path is None:
        return model()
    return validate_config(model, read_config_file(path), str(path))


def _flatten(prefix: str, value: Any, lines: list[str]) -> None:
    if isinstance(value, Mapping):
        for key, child in value.items():
            _flatten(f"{prefix}.{key}" if prefix else str(key), child, lines)
    elif value is None:
        return
    elif isinstance(value, (list, tuple)):
        lines.append(f"{prefix} = {','.join(str(v) for v in value)}")
    elif isinstance(value, bool):
        lines.append(f"{prefix} = {str(value).lower()}")
    else:
        lines.append(f"{prefix} = {value}")


def dump_config(model: BaseModel) -> str:
    """Render a model back into the ``key = value`` format."""
    lines: list[str] = []
    _flatten("", model.model_dump(mode="json"), lines)
    return "\n".join(lines) + "\n"
