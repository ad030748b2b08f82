import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from capbound.version import VERSION

logger = logging.getLogger(__name__)

FORMATS = ("json", "markdown", "csv")


def envelope(command: str, spec_hash: Optional[str], seed: Optional[int], **payload: Any) -> dict:
    """Report header shared by every command: tool, version, spec hash and seed."""
    return {
        "tool": "capbound",
        "tool_version": VERSION,
        "command": command,
        "spec_hash": spec_hash,
        "seed": seed,
        **payload,
    }


def render(report: dict, rows: Sequence[dict], fmt: str, title: str) -> str:
    """Renders a report as JSON (the whole document), markdown or CSV (header plus rows)."""
    if fmt == "json":
        return json.dumps(report, ensure_ascii=False, indent=2) + "\n"
    if fmt == "markdown":
        return _markdown(report, rows, title)
    if fmt == "csv":
        return _csv(report, rows)
    raise ValueError(f"unknown report format '{fmt}', expected one of {', '.join(FORMATS)}")


def write_report(path: Optional[str], report: dict, rows: Sequence[dict], fmt: str, title: str) -> None:
    text = render(report, rows, fmt, title)
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    logger.info(f"Wrote {fmt} report to {Path(path)}")


def write_history(path: str | Path, rows: Sequence[dict]) -> None:
    """Training history as plain CSV with a header row."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(_table_csv(rows))
    logger.info(f"Wrote training history to {path}")


def _header_fields(report: dict) -> list[tuple[str, Any]]:
    return [(key, report[key]) for key in ("tool", "tool_version", "command", "spec_hash", "seed")]


def _markdown(report: dict, rows: Sequence[dict], title: str) -> str:
    lines = [f"# {title}", ""]
    for key, value in _header_fields(report):
        lines.append(f"- **{key}**: {value}")
    lines.append("")
    if rows:
        columns = _columns(rows)
        lines.append("| " + " | ".join(columns) + " |")
        lines.append("|" + "---|" * len(columns))
        for row in rows:
            lines.append("| " + " | ".join(_cell(row.get(column)) for column in columns) + " |")
        lines.append("")
    return "\n".join(lines)


def _csv(report: dict, rows: Sequence[dict]) -> str:
    header = "".join(f"# {key}: {value}\n" for key, value in _header_fields(report))
    return header + _table_csv(rows)


def _table_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=_columns(rows), lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({key: _cell(value) for key, value in row.items()})
    return buffer.getvalue()


def _columns(rows: Sequence[dict]) -> list[str]:
    columns: list[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    return columns


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, dict)):
        return json.dumps(value, ensure_ascii=False)
    return str(value)
