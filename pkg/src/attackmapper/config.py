"""Key = value configuration files and flag/file/default precedence.

A config file holds one "key = value" assignment per line; blank lines
and lines starting with # are ignored. The file named by --config (or
the ATTACKMAPPER_CONFIG environment variable when the flag is absent)
supplies defaults that explicit command-line flags override.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Mapping

from .errors import ParseError, ValidationError

ENV_VAR = "ATTACKMAPPER_CONFIG"


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep or not key.strip():
            raise ParseError(f"config line {lineno}: expected 'key = value'")
        values[key.strip()] = value.strip()
    return values


def load_settings(config_path: str | None, env: Mapping[str, str] | None = None) -> dict[str, str]:
    """Read the config file named by flag or environment; {} when neither."""
    env = os.environ if env is None else env
    path = config_path or env.get(ENV_VAR)
    if not path:
        return {}
    file = Path(path)
    if not file.is_file():
        raise ValidationError(f"config file {path!r} does not exist")
    return parse_config_text(file.read_text(encoding="utf-8"))


class Settings:
    """Typed accessors with flag > file > default precedence."""

    def __init__(self, values: Mapping[str, str]):
        self._values = dict(values)

    def text(self, key: str, flag: str | None, default: str | None) -> str | None:
        if flag is not None:
            return flag
        return self._values.get(key, default)

    def integer(self, key: str, flag: int | None, default: int) -> int:
        if flag is not None:
            return flag
        if key in self._values:
            try:
                return int(self._values[key])
            except ValueError:
                raise ParseError(f"config key {key!r} is not an integer") from None
        return default

    def real(self, key: str, flag: float | None, default: float) -> float:
        if flag is not None:
            return flag
        if key in self._values:
            try:
                return float(self._values[key])
            except ValueError:
                raise ParseError(f"config key {key!r} is not a number") from None
        return default
