"""Experiment config files: plain ``key = value`` text, one pair per line.

``#`` starts a comment.  Values are auto-typed: booleans, integers,
floats, AxBxC dimension triples, comma lists; anything else stays a
string.  CLI flags override file values.
"""

from __future__ import annotations

from pathlib import Path

__all__ = ["ConfigError", "parse_value", "load_config"]


class ConfigError(ValueError):
    pass


def parse_value(text: str):
    s = text.strip()
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    if "x" in s:
        parts = s.split("x")
        try:
            return tuple(int(p) for p in parts)
        except ValueError:
            pass
    if "," in s:
        return [parse_value(p) for p in s.split(",")]
    return s


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = body.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out[key] = parse_value(value)
    return out
