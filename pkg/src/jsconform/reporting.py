"""Campaign reporting: per-bug markdown, delimited summaries, and figures.

One markdown report is rendered per novel deviating verdict (engine,
outcome, expected vs observed output, minimized source when available, and
the spec section behind the mutated API). Aggregates land in ``summary.csv``
and ``signatures.csv`` next to PNG figures rendered with matplotlib's Agg
backend, so the report path works headless.
"""

from __future__ import annotations

import csv
import os
from collections import Counter
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .dedup import BugSignature, KnowledgeBase  # noqa: E402
from .harness import OUTCOMES, Verdict  # noqa: E402


def render_case_report(verdict: Verdict, meta: dict, source: Optional[str],
                       minimized: Optional[str] = None,
                       spec_section: Optional[str] = None,
                       signatures: Sequence[BugSignature] = ()) -> str:
    """Markdown body for one novel deviating verdict."""
    lines = [f"# Divergence report: case `{verdict.case_id[:16]}`", ""]
    lines.append(f"- outcome: **{verdict.outcome}**")
    lines.append(f"- deviating testbeds: {', '.join(sorted(verdict.deviants)) or 'none'}")
    api = meta.get("api")
    lines.append(f"- API under test: `{api}`" if api else "- API under test: none")
    if spec_section:
        lines.append(f"- spec section: `{spec_section}`")
    origin = meta.get("mutation_origin")
    if origin:
        lines.append(f"- mutation: `{origin}`")
    if signatures:
        rendered = ", ".join(f"({s.engine_id}, {s.api or 'none'}, {s.behavior})"
                             for s in signatures)
        lines.append(f"- signatures: {rendered}")
    lines.append("")
    lines.append("## Expected (majority) output")
    lines.append("")
    lines.append("```")
    lines.append(verdict.majority_output if verdict.majority_output is not None else "<none>")
    lines.append("```")
    lines.append("")
    lines.append("## Observed deviant output")
    lines.append("")
    for ref in sorted(verdict.deviant_outputs):
        lines.append(f"### {ref}")
        lines.append("")
        lines.append("```")
        lines.append(verdict.deviant_outputs[ref])
        lines.append("```")
        lines.append("")
    if minimized is not None:
        lines.append("## Minimized test case")
        lines.append("")
        lines.append("```js")
        lines.append(minimized.rstrip("\n"))
        lines.append("```")
        lines.append("")
    if source is not None:
        lines.append("## Original test case")
        lines.append("")
        lines.append("```js")
        lines.append(source.rstrip("\n"))
        lines.append("```")
        lines.append("")
    return "\n".join(lines)


def write_case_reports(outdir: str, novel: Sequence[tuple], case_sources: dict,
                       minimized_sources: dict, spec_sections: dict) -> list[str]:
    """Write one markdown file per (verdict, signatures) pair; returns paths."""
    os.makedirs(outdir, exist_ok=True)
    written = []
    for verdict, sigs in novel:
        meta = case_sources.get(verdict.case_id, (None, {}))[1]
        source = case_sources.get(verdict.case_id, (None, {}))[0]
        api = (meta or {}).get("api")
        body = render_case_report(
            verdict, meta or {}, source,
            minimized=minimized_sources.get(verdict.case_id),
            spec_section=spec_sections.get(api) if api else None,
            signatures=sigs,
        )
        path = os.path.join(outdir, f"{verdict.case_id}.md")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(body)
        written.append(path)
    return written


def write_summary_csv(path: str, verdicts: Sequence[Verdict]) -> None:
    """outcome,count rows covering all seven outcomes (zeroes included)."""
    counts = Counter(v.outcome for v in verdicts)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["outcome", "count"])
        for outcome in OUTCOMES:
            writer.writerow([outcome, counts.get(outcome, 0)])


def write_signature_csv(path: str, kb: KnowledgeBase) -> None:
    """engine,api,behavior,count rows in stable order."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["engine", "api", "behavior", "count"])
        for engine in sorted(kb.tree):
            for api in sorted(kb.tree[engine]):
                for behavior in sorted(kb.tree[engine][api]):
                    leaf = kb.tree[engine][api][behavior]
                    writer.writerow([engine, api, behavior, leaf["count"]])


def render_figures(outdir: str, verdicts: Sequence[Verdict],
                   kb: Optional[KnowledgeBase] = None) -> list[str]:
    """Render the outcome distribution and per-engine signature counts as PNGs."""
    os.makedirs(outdir, exist_ok=True)
    written = []

    counts = Counter(v.outcome for v in verdicts)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    values = [counts.get(o, 0) for o in OUTCOMES]
    ax.bar(range(len(OUTCOMES)), values, color="#4878a8")
    ax.set_xticks(range(len(OUTCOMES)))
    ax.set_xticklabels(OUTCOMES, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("test cases")
    ax.set_title("Differential outcomes")
    fig.tight_layout()
    path = os.path.join(outdir, "outcomes.png")
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    written.append(path)

    if kb is not None and kb.tree:
        per_engine = {engine: sum(len(b) for b in apis.values())
                      for engine, apis in sorted(kb.tree.items())}
        fig, ax = plt.subplots(figsize=(6, 3.5))
        engines = list(per_engine)
        ax.bar(range(len(engines)), [per_engine[e] for e in engines], color="#a85448")
        ax.set_xticks(range(len(engines)))
        ax.set_xticklabels(engines, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel("distinct signatures")
        ax.set_title("Signature leaves per engine")
        fig.tight_layout()
        path = os.path.join(outdir, "signatures.png")
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
        written.append(path)
    return written
