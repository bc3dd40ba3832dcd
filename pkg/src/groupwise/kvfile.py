"""Flat key-value config files: `key = value` lines, `#` comments.

Used for road-geometry configs, synthetic-scenario specs, and run configs.
Keys may repeat dots (``platoon.p1.lane``); values are kept as raw strings
and converted by the consumer.
"""

from __future__ import annotations

from pathlib import Path

from .errors import UsageError


def read_kv(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"malformed config line {lineno}: {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise UsageError(f"empty key on config line {lineno}")
        out[key] = value.strip()
    return out


def write_kv(path: str | Path, items: dict[str, str]) -> None:
    lines = [f"{k} = {v}" for k, v in items.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_float_list(value: str) -> tuple[float, ...]:
    value = value.strip()
    if not value:
        return ()
    return tuple(float(tok) for tok in value.split(";") if tok.strip())


def parse_zone_list(value: str) -> tuple[tuple[float, float], ...]:
    zones = []
    for tok in value.split(";"):
        tok = tok.strip()
        if not tok:
            continue
        try:
            start, end = tok.split(":")
        except ValueError as exc:
            raise UsageError(f"malformed zone {tok!r} (expected start:end)") from exc
        zones.append((float(start), float(end)))
    return tuple(zones)
