"""Flat key=value text records.

One `key=value` pair per line, UTF-8, insertion-ordered; blank lines and
`#` comments are skipped on read. This single format serves training
configs, checkpoint manifests, metric reports, and HTTP request/response
bodies, keeping every artifact diffable and greppable.
"""
from __future__ import annotations

from pathlib import Path


def dump_record(fields: dict) -> str:
    lines = []
    for key, value in fields.items():
        key = str(key)
        if "=" in key or "\n" in key:
            raise ValueError(f"invalid record key {key!r}")
        value = repr(value) if isinstance(value, float) else str(value)
        if "\n" in value:
            raise ValueError(f"record value for {key!r} contains a newline")
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def write_record(path: str | Path, fields: dict) -> None:
    Path(path).write_text(dump_record(fields), encoding="utf-8")


def parse_record(text: str) -> dict[str, str]:
    fields: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()
    return fields


def read_record(path: str | Path) -> dict[str, str]:
    return parse_record(Path(path).read_text(encoding="utf-8"))


def logfmt(fields: dict) -> str:
    """Single-line rendering for log streams."""
    parts = []
    for key, value in fields.items():
        value = repr(value) if isinstance(value, float) else str(value)
        parts.append(f"{key}={value}")
    return " ".join(parts)
