"""Run report: wall time, token usage and dollar cost per section.

``report.json`` schema (money as decimal strings, 4 fraction digits)::

    {
      "started_at": "2026-01-01T00:00:00+00:00",
      "finished_at": "...",
      "wall_time_ms": 181000,
      "model_id": "gpt-5",
      "per_section": [
        {"section_id": "containers", "duration_ms": 0, "input_tokens": 0,
         "output_tokens": 0, "usd": "0.0000", "warnings": []}
      ],
      "totals": {"input_tokens": 0, "output_tokens": 0, "usd": "0.0000"},
      "repository": {"file_count": 0, "included_count": 0, "char_count": 0}
    }
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .errors import ReportWriteFailed

_CENTS4 = Decimal("0.0001")


@dataclass(frozen=True)
class SectionStats:
    section_id: str
    duration_ms: int
    input_tokens: int
    output_tokens: int
    usd: Decimal
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class RunReport:
    started_at: str
    finished_at: str
    wall_time_ms: int
    model_id: str
    per_section: tuple[SectionStats, ...] = ()
    total_input_tokens: int = 0
    total_output_tokens: int = 0
    total_usd: Decimal = Decimal(0)
    file_count: int = 0
    included_count: int = 0
    char_count: int = 0

    @classmethod
    def from_sections(cls, per_section, **kwargs) -> "RunReport":
        per_section = tuple(per_section)
        return cls(
            per_section=per_section,
            total_input_tokens=sum(s.input_tokens for s in per_section),
            total_output_tokens=sum(s.output_tokens for s in per_section),
            total_usd=sum((s.usd for s in per_section), Decimal(0)),
            **kwargs,
        )

    def inconsistencies(self) -> list[str]:
        problems = []
        if self.total_input_tokens != sum(s.input_tokens for s in self.per_section):
            problems.append("total_input_tokens")
        if self.total_output_tokens != sum(s.output_tokens for s in self.per_section):
            problems.append("total_output_tokens")
        if self.total_usd != sum((s.usd for s in self.per_section), Decimal(0)):
            problems.append("total_usd")
        if self.per_section and self.wall_time_ms < max(s.duration_ms for s in self.per_section):
            problems.append("wall_time_ms")
        return problems


def format_usd(amount: Decimal) -> str:
    return str(Decimal(amount).quantize(_CENTS4, rounding=ROUND_HALF_UP))


def format_duration(ms: int) -> str:
    """``181900`` -> ``"3m 1.90s"``; under a minute only seconds are shown."""
    minutes, rest = divmod(ms, 60_000)
    seconds = f"{rest / 1000:.2f}s"
    return f"{minutes}m {seconds}" if minutes else seconds


def summary_line(report: RunReport) -> str:
    return f"total: {format_duration(report.wall_time_ms)} | {format_usd(report.total_usd)} USD"


def report_to_dict(report: RunReport) -> dict:
    return {
        "started_at": report.started_at,
        "finished_at": report.finished_at,
        "wall_time_ms": report.wall_time_ms,
        "model_id": report.model_id,
        "per_section": [
            {
                "section_id": s.section_id,
                "duration_ms": s.duration_ms,
                "input_tokens": s.input_tokens,
                "output_tokens": s.output_tokens,
                "usd": format_usd(s.usd),
                "warnings": list(s.warnings),
            }
            for s in report.per_section
        ],
        "totals": {
            "input_tokens": report.total_input_tokens,
            "output_tokens": report.total_output_tokens,
            "usd": format_usd(report.total_usd),
        },
        "repository": {
            "file_count": report.file_count,
            "included_count": report.included_count,
            "char_count": report.char_count,
        },
    }


def write_report(report: RunReport, path: str | os.PathLike, echo: bool = True) -> str:
    """Write ``report`` as JSON and return (and print) the summary line."""
    problems = report.inconsistencies()
    if problems:
        raise ReportWriteFailed(f"inconsistent report: {', '.join(problems)}")
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(report_to_dict(report), indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ReportWriteFailed(str(exc)) from exc
    line = summary_line(report)
    if echo:
        print(line)
    return line
