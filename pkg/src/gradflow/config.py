"""Flat ``key = value`` configuration files.

The grammar is deliberately tiny so that manifests stay diff-friendly
and any language can parse them:

* one ``key = value`` pair per line;
* ``#`` starts a comment anywhere on a line;
* blank lines are ignored;
* keys match ``[A-Za-z_][A-Za-z0-9_.-]*`` and may not repeat;
* list values separate items with commas (``a,b,c``);
* no quoting, no escapes, no nesting.

:class:`Config` records which keys were read so callers can reject
misspelled or unsupported keys with :meth:`Config.ensure_all_used`.
"""

from __future__ import annotations

import re
from pathlib import Path

from .errors import ConfigError

__all__ = ["Config", "parse_config_text"]

_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.-]*$")

_BOOL_WORDS = {
    "true": True, "yes": True, "on": True, "1": True,
    "false": False, "no": False, "off": False, "0": False,
}

_MISSING = object()


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse config text into an ordered ``{key: value}`` dict.

    Raises ConfigError (tagged with ``source`` and a line number) on
    malformed lines or duplicate keys.
    """
    values: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(
                f"{source}:{line_no}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"{source}:{line_no}: invalid key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{line_no}: duplicate key {key!r}")
        values[key] = value
    return values


class Config:
    """Typed read access over a flat key/value mapping.

    Every getter marks its key as used; :meth:`ensure_all_used` then
    rejects configs that carry keys nothing consumed, which catches
    typos like ``depth = 4`` where ``depths`` was meant.
    """

    def __init__(self, values: dict[str, str], source: str = "<config>"):
        self._values = dict(values)
        self._source = source
        self._used: set[str] = set()

    @classmethod
    def from_file(cls, path) -> "Config":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls(parse_config_text(text, str(path)), str(path))

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "Config":
        return cls(parse_config_text(text, source), source)

    @property
    def source(self) -> str:
        return self._source

    def __contains__(self, key: str) -> bool:
        return key in self._values

    def keys(self):
        return self._values.keys()

    def _raw(self, key: str, default):
        self._used.add(key)
        if key in self._values:
            return self._values[key]
        if default is _MISSING:
            raise ConfigError(f"{self._source}: missing required key {key!r}")
        return default

    def _fail(self, key: str, value: str, wanted: str):
        raise ConfigError(
            f"{self._source}: key {key!r} expects {wanted}, got {value!r}")

    def get_str(self, key: str, default=_MISSING, choices=None) -> str:
        value = self._raw(key, default)
        if value is default and key not in self._values:
            return value
        if choices is not None and value not in choices:
            self._fail(key, value, "one of " + ", ".join(sorted(choices)))
        return value

    def get_int(self, key: str, default=_MISSING) -> int:
        value = self._raw(key, default)
        if not isinstance(value, str):
            return value
        try:
            return int(value)
        except ValueError:
            self._fail(key, value, "an integer")

    def get_float(self, key: str, default=_MISSING) -> float:
        value = self._raw(key, default)
        if not isinstance(value, str):
            return value
        try:
            return float(value)
        except ValueError:
            self._fail(key, value, "a number")

    def get_bool(self, key: str, default=_MISSING) -> bool:
        value = self._raw(key, default)
        if not isinstance(value, str):
            return value
        flag = _BOOL_WORDS.get(value.lower())
        if flag is None:
            self._fail(key, value, "a boolean (true/false)")
        return flag

    def _split(self, key: str, value: str) -> list[str]:
        items = [item.strip() for item in value.split(",")]
        if any(not item for item in items):
            self._fail(key, value, "a comma-separated list with no empty items")
        return items

    def get_str_list(self, key: str, default=_MISSING, choices=None) -> list[str]:
        value = self._raw(key, default)
        if not isinstance(value, str):
            return value
        items = self._split(key, value)
        if choices is not None:
            for item in items:
                if item not in choices:
                    self._fail(key, item, "one of " + ", ".join(sorted(choices)))
        return items

    def get_int_list(self, key: str, default=_MISSING) -> list[int]:
        value = self._raw(key, default)
        if not isinstance(value, str):
            return value
        items = self._split(key, value)
        try:
            return [int(item) for item in items]
        except ValueError:
            self._fail(key, value, "a comma-separated list of integers")

    def get_float_list(self, key: str, default=_MISSING) -> list[float]:
        value = self._raw(key, default)
        if not isinstance(value, str):
            return value
        items = self._split(key, value)
        try:
            return [float(item) for item in items]
        except ValueError:
            self._fail(key, value, "a comma-separated list of numbers")

    def get_optional_float_list(self, key: str, default=_MISSING,
                                none_word: str = "none") -> list[float | None]:
        """Float list where items equal to ``none_word`` map to None."""
        value = self._raw(key, default)
        if not isinstance(value, str):
            return value
        out: list[float | None] = []
        for item in self._split(key, value):
            if item.lower() == none_word:
                out.append(None)
                continue
            try:
                out.append(float(item))
            except ValueError:
                self._fail(key, value,
                           f"a comma-separated list of numbers or {none_word!r}")
        return out

    def unused_keys(self) -> list[str]:
        return sorted(set(self._values) - self._used)

    def ensure_all_used(self) -> None:
        extra = self.unused_keys()
        if extra:
            raise ConfigError(
                f"{self._source}: unsupported key(s): " + ", ".join(extra))

    def echo(self) -> list[str]:
        """Sorted ``key = value`` lines reproducing this config."""
        return [f"{key} = {self._values[key]}" for key in sorted(self._values)]
