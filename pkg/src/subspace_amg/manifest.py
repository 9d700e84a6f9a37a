"""Plain ``key = value`` manifest files."""
from __future__ import annotations


def write_manifest(path, items: dict) -> None:
    with open(path, "w") as fh:
        for key, value in items.items():
            if isinstance(value, (list, tuple)):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            fh.write(f"{key} = {value}\n")


def read_manifest(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out
