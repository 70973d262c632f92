"""Canonical JSON and markdown rendering of scenario reports."""
from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any, Iterable, TextIO

from .mechanisms import PROPERTY_ORDER, TABLE_ORDER, Mechanism, PropertyMatrix
from .scenarios import ScenarioReport

SDK_LABELS = {
    "table3_vulnerable": "VulnerableSDK (PI-based)",
    "table3_secure": "SecureSDK (Binder-based)",
}
MECHANISM_LABELS = {
    Mechanism.START_ACTIVITY_FOR_RESULT: "startActivityForResult",
    Mechanism.GET_REFERRER: "getReferrer()",
    Mechanism.PI_CREATOR: "PI.getCreatorPackage()",
    Mechanism.BROADCAST_PERMISSION: "BroadcastReceiver (perm.)",
    Mechanism.PROVIDER_PERMISSION: "ContentProvider (perm.)",
    Mechanism.KNOWN_SIGNERS: "Signature/knownSigners",
    Mechanism.PKCE: "PKCE",
    Mechanism.BOUND_SERVICE: "Bound Service + Binder UID",
}
PROPERTY_LABELS = [
    "Kernel-backed identity",
    "Unforgeable from app context",
    "Replay-resistant",
    "Scalable (no manifest edit)",
    "Bidirectional",
]
MARK_GLYPHS = {"YES": "✓", "NO": "✗", "PARTIAL": "~"}


def to_json(report: ScenarioReport, include_timing: bool = True) -> str:
    return dumps_canonical(report.to_dict(include_timing))


def dumps_canonical(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _rate(successes: int, trials: int) -> str:
    pct = round(100 * successes / trials) if trials else 0
    return f"{successes}/{trials} ({pct}%)"


def render_table3(reports: Iterable[ScenarioReport]) -> str:
    lines = ["| SDK Implementation | Attack Success | Defense Effective |", "|---|---|---|"]
    for r in reports:
        label = SDK_LABELS.get(r.name, r.name)
        # effective means no attack trial got through
        effective = "✓" if r.successes == 0 and r.trials > 0 else "✗"
        lines.append(f"| {label} | {_rate(r.successes, r.trials)} | {effective} |")
    return "\n".join(lines) + "\n"


def render_table1(matrix: PropertyMatrix | dict[str, Any]) -> str:
    if isinstance(matrix, dict):
        matrix = PropertyMatrix.from_dict(matrix)
    lines = ["| Mechanism | " + " | ".join(PROPERTY_LABELS) + " |", "|---" * (len(PROPERTY_LABELS) + 1) + "|"]
    for m in TABLE_ORDER:
        cells = [MARK_GLYPHS[matrix.mark(m, p).value] for p in PROPERTY_ORDER]
        lines.append(f"| {MECHANISM_LABELS[m]} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _trial_table(report: ScenarioReport) -> list[str]:
    rows = report.per_trial
    keys = sorted({k for row in rows for k in row if not isinstance(row[k], dict)})
    if not keys:
        keys = ["trial"]
    out = ["| " + " | ".join(keys) + " |", "|---" * len(keys) + "|"]
    for row in rows:
        out.append("| " + " | ".join(_cell(row.get(k)) for k in keys) + " |")
    if not rows:
        out.append("| " + " | ".join("" for _ in keys) + " |")
    return out


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, list):
        v = "/".join(map(str, v))
    return str(v).replace("|", "\\|").replace("\n", " ")


def to_markdown(report: ScenarioReport) -> str:
    lines = [
        f"# {report.name}",
        "",
        f"- platform: {report.platform}",
        f"- trials: {report.trials}",
        f"- seed: {report.seed}",
        f"- successes: {report.successes} ({report.success_definition})",
        f"- passed: {'yes' if report.passed else 'no'}",
        "",
    ]
    if report.name in SDK_LABELS:
        lines += [render_table3([report]).rstrip("\n"), ""]
    if report.matrix is not None:
        lines += [render_table1(report.matrix).rstrip("\n"), ""]
    lines += ["## Checks", "", "| check | result |", "|---|---|"]
    for name in sorted(report.checks):
        lines.append(f"| {name} | {'PASS' if report.checks[name] else 'FAIL'} |")
    lines += ["", "## Trials", ""] + _trial_table(report)
    return "\n".join(lines) + "\n"


def emit_report(report: ScenarioReport, fmt: str = "json", out: str | Path | TextIO | None = None) -> str:
    """Render ``report`` and write it to ``out`` (path, stream, or stdout)."""
    if fmt == "json":
        text = to_json(report)
    elif fmt in ("md", "markdown"):
        text = to_markdown(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if out is None:
        sys.stdout.write(text)
    elif isinstance(out, (str, Path)):
        Path(out).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    return text
