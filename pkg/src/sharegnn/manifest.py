"""Flat `key = value` text files used for manifests and run configs.

One pair per line, '#' starts a comment, blank lines ignored.  Values are
kept as strings; callers convert.  Floats are written with 17 significant
digits so a round trip reproduces the exact float64.
"""

from __future__ import annotations

from pathlib import Path


def format_value(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def format_kv(pairs) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in pairs.items())


def parse_kv(text) -> dict:
    out = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"line {ln}: empty key")
        out[key] = value.strip()
    return out


def parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def write_kv(path, pairs) -> None:
    Path(path).write_text(format_kv(pairs))


def read_kv(path) -> dict:
    return parse_kv(Path(path).read_text())
