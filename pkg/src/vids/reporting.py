"""Report writers: every report is dual-emitted as key=value text and CSV."""

from __future__ import annotations

from pathlib import Path


def format_kv(mapping: dict) -> str:
    return "".join(f"{key}={mapping[key]}\n" for key in mapping)


def write_kv(path, mapping: dict) -> None:
    Path(path).write_text(format_kv(mapping), encoding="utf-8")


def write_kv_csv(path, mapping: dict) -> None:
    lines = ["key,value"]
    for key in mapping:
        value = str(mapping[key]).replace('"', '""')
        if "," in value:
            value = f'"{value}"'
        lines.append(f"{key},{value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_report(base_path, mapping: dict) -> None:
    """Emit <base>.txt (key=value) and <base>.csv side by side."""
    base = Path(base_path)
    write_kv(base.with_suffix(".txt"), mapping)
    write_kv_csv(base.with_suffix(".csv"), mapping)
