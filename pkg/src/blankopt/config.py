"""Shared ``key = value`` configuration format with ``[section]`` headers.

All pipeline stages, the reference geometry and the forming oracle read the
same format.  Parsing is delegated to :mod:`configparser`; this module adds
typed accessors and a stable content hash that is stamped into artifacts.
"""
from __future__ import annotations

import configparser
import hashlib
from importlib import resources
from pathlib import Path
from typing import Iterable


class ConfigError(ValueError):
    """Raised for malformed or missing configuration entries."""


class Config:
    """Thin typed view over a :class:`configparser.ConfigParser`."""

    def __init__(self, parser: configparser.ConfigParser, text: str = ""):
        self._parser = parser
        self.text = text

    @classmethod
    def from_text(cls, text: str) -> "Config":
        parser = configparser.ConfigParser(
            inline_comment_prefixes=("#", ";"), interpolation=None
        )
        parser.optionxform = str  # keep key case
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        return cls(parser, text)

    @classmethod
    def from_path(cls, path: str | Path) -> "Config":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text)

    @classmethod
    def default(cls) -> "Config":
        """The shipped desk-scale configuration."""
        text = resources.files("blankopt.data").joinpath("default.cfg").read_text()
        return cls.from_text(text)

    # -- access -------------------------------------------------------------
    def sections(self) -> list[str]:
        return self._parser.sections()

    def has_section(self, section: str) -> bool:
        return self._parser.has_section(section)

    def has(self, section: str, key: str) -> bool:
        return self._parser.has_option(section, key)

    def keys(self, section: str) -> list[str]:
        self._require_section(section)
        return list(self._parser[section].keys())

    def raw(self, section: str, key: str, default: str | None = None) -> str:
        if not self._parser.has_option(section, key):
            if default is not None:
                return default
            raise ConfigError(f"missing key [{section}] {key}")
        return self._parser.get(section, key).strip()

    def get_float(self, section: str, key: str, default: float | None = None) -> float:
        value = self.raw(section, key, None if default is None else repr(default))
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"[{section}] {key}: expected a number, got {value!r}") from None

    def get_int(self, section: str, key: str, default: int | None = None) -> int:
        value = self.raw(section, key, None if default is None else str(default))
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"[{section}] {key}: expected an integer, got {value!r}") from None

    def get_bool(self, section: str, key: str, default: bool | None = None) -> bool:
        value = self.raw(section, key, None if default is None else str(default)).lower()
        if value in ("1", "true", "yes", "on"):
            return True
        if value in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{section}] {key}: expected a boolean, got {value!r}")

    def get_str(self, section: str, key: str, default: str | None = None) -> str:
        return self.raw(section, key, default)

    def get_floats(self, section: str, key: str) -> list[float]:
        return parse_floats(self.raw(section, key), f"[{section}] {key}")

    def get_ints(self, section: str, key: str) -> list[int]:
        return [int(v) for v in self.get_floats(section, key)]

    def set(self, section: str, key: str, value) -> None:
        if not self._parser.has_section(section):
            self._parser.add_section(section)
        self._parser.set(section, key, str(value))
        self.text = self.dumps()

    def dumps(self) -> str:
        lines = []
        for section in self._parser.sections():
            lines.append(f"[{section}]")
            for key, value in self._parser[section].items():
                # continuation lines must stay indented to re-parse
                lines.append(f"{key} = " + value.replace("\n", "\n    "))
            lines.append("")
        return "\n".join(lines)

    def hash(self) -> str:
        """Order-insensitive content hash (first 16 hex digits of sha256)."""
        items = []
        for section in sorted(self._parser.sections()):
            for key in sorted(self._parser[section].keys()):
                items.append(f"{section}.{key}={self._parser.get(section, key).strip()}")
        return hashlib.sha256("\n".join(items).encode()).hexdigest()[:16]

    def _require_section(self, section: str) -> None:
        if not self._parser.has_section(section):
            raise ConfigError(f"missing section [{section}]")


def parse_floats(text: str, where: str = "value") -> list[float]:
    parts = [p for p in text.replace(",", " ").split() if p]
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"{where}: expected numbers, got {text!r}") from None


def format_floats(values: Iterable[float]) -> str:
    return ", ".join(repr(float(v)) for v in values)
