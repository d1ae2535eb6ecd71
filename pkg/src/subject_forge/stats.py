"""Dataset statistics over a manifest. Every facet partitions the records, so each sums to the total."""
from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

from .records import ClipRecord

NONE = "none"


@dataclass
class StatsSummary:
    total: int = 0
    resolution: dict[str, int] = field(default_factory=dict)
    references: dict[str, int] = field(default_factory=dict)
    tasks: dict[str, int] = field(default_factory=dict)
    categories: dict[str, int] = field(default_factory=dict)
    discard_reasons: dict[str, int] = field(default_factory=dict)

    FACETS = ("resolution", "references", "tasks", "categories", "discard_reasons")

    def to_dict(self) -> dict:
        return asdict(self)

    def is_conserved(self) -> bool:
        return all(sum(getattr(self, f).values()) == self.total for f in self.FACETS)


def resolution_bucket(rec: ClipRecord) -> str:
    if not rec.frame_sizes:
        return "unknown"
    return f"{min(int(h) for _, h in rec.frame_sizes)}p"


def reference_count(rec: ClipRecord) -> int:
    return int(rec.sample.get("n_subjects", 0)) if rec.sample else 0


def task_bucket(rec: ClipRecord) -> str:
    if not rec.sample:
        return NONE
    arity = "multi" if reference_count(rec) >= 2 else "single"
    return f"{arity}_{'gen' if rec.sample['task'] == 'generation' else 'manip'}"


def category_bucket(rec: ClipRecord) -> str:
    """Most frequent subject label of the sample (ties alphabetical), else the first consensus label."""
    labels = (rec.sample or {}).get("labels") or []
    if labels:
        counts = Counter(labels)
        return min(counts, key=lambda k: (-counts[k], k))
    return rec.consensus[0] if rec.consensus else NONE


def reason_bucket(rec: ClipRecord) -> str:
    if not rec.is_discarded:
        return NONE
    reason = rec.discard_reason or "unknown"
    return "parse_error" if reason.startswith("parse_error") else reason


def emit_stats(records: Iterable[ClipRecord]) -> StatsSummary:
    facets = {"resolution": Counter(), "references": Counter(), "tasks": Counter(), "categories": Counter(),
              "discard_reasons": Counter()}
    total = 0
    for rec in records:
        total += 1
        facets["resolution"][resolution_bucket(rec)] += 1
        facets["references"][str(reference_count(rec))] += 1
        facets["tasks"][task_bucket(rec)] += 1
        facets["categories"][category_bucket(rec)] += 1
        facets["discard_reasons"][reason_bucket(rec)] += 1
    return StatsSummary(total, **{k: dict(sorted(v.items())) for k, v in facets.items()})


def render_plots(summary: StatsSummary, out_dir: str | Path) -> list[Path]:
    """One bar chart per facet. Needs matplotlib (the ``plots`` extra)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for facet in StatsSummary.FACETS:
        data = getattr(summary, facet)
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.bar(list(data), list(data.values()), color="#4c72b0")
        ax.set_title(facet.replace("_", " "))
        ax.set_ylabel("records")
        ax.tick_params(axis="x", labelrotation=30)
        fig.tight_layout()
        path = out_dir / f"{facet}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)
    return written
