"""Benchmark harness: judge each item on two rubric dimensions, combine them, aggregate per sub-task."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .errors import EmptySubTask
from .gateway import ModelGateway
from .imaging import save_png
from .prompts import render
from .utils.parallel import ordered_map

SUB_TASKS = ("single_gen", "multi_gen", "single_manip", "multi_manip")
DIMENSIONS = {"generation": ("PA", "IF"), "manipulation": ("MF", "BC")}
ITEMS_PER_SUB_TASK = 60


def task_of(sub_task: str) -> str:
    if sub_task not in SUB_TASKS:
        raise ValueError(f"unknown sub-task {sub_task!r}")
    return "generation" if sub_task.endswith("_gen") else "manipulation"


@dataclass(frozen=True)
class BenchItem:
    item_id: str
    sub_task: str
    references: tuple[str, ...]
    prompt: str
    output: str
    ground_truth: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "references", tuple(str(r) for r in self.references))
        n = len(self.references)
        task = task_of(self.sub_task)
        if not 1 <= n <= 4:
            raise ValueError(f"{self.item_id}: {n} references, expected 1-4")
        if self.sub_task == "multi_gen" and n < 2:
            raise ValueError(f"{self.item_id}: multi-subject generation needs 2-4 references")
        if self.sub_task == "single_gen" and n != 1:
            raise ValueError(f"{self.item_id}: single-subject generation takes exactly one reference")
        if task == "manipulation" and not self.ground_truth:
            raise ValueError(f"{self.item_id}: manipulation items need a ground-truth image")
        if not self.prompt:
            raise ValueError(f"{self.item_id}: empty prompt")

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "BenchItem":
        def res(p):
            if p is None:
                return None
            p = Path(p)
            return str(base_dir / p) if base_dir is not None and not p.is_absolute() else str(p)

        return cls(str(d["item_id"]), d["sub_task"], tuple(res(r) for r in d["references"]), d["prompt"],
                   res(d["output"]), res(d.get("ground_truth")))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["references"] = list(self.references)
        return d


def check_benchmark(items: Sequence[BenchItem], per_sub_task: int | None = ITEMS_PER_SUB_TASK) -> None:
    """Unique ids and, when ``per_sub_task`` is set, that many items in every sub-task."""
    ids = [it.item_id for it in items]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate item ids")
    if per_sub_task is not None:
        counts = {t: 0 for t in SUB_TASKS}
        for it in items:
            counts[it.sub_task] += 1
        wrong = {t: c for t, c in counts.items() if c != per_sub_task}
        if wrong:
            raise ValueError(f"expected {per_sub_task} items per sub-task, got {wrong}")


@dataclass(frozen=True)
class ScoreCard:
    item_id: str
    sub_task: str
    dim1: str
    value1: float
    dim2: str
    value2: float
    overall: float = field(init=False)

    def __post_init__(self):
        if (self.dim1, self.dim2) != DIMENSIONS[task_of(self.sub_task)]:
            raise ValueError(f"{self.sub_task} cards use {DIMENSIONS[task_of(self.sub_task)]}, got {(self.dim1, self.dim2)}")
        for v in (self.value1, self.value2):
            if not 0.0 <= v <= 10.0:
                raise ValueError(f"score {v} outside [0, 10]")
        object.__setattr__(self, "overall", math.sqrt(self.value1 * self.value2))

    def as_dict(self) -> dict:
        return {"item_id": self.item_id, "sub_task": self.sub_task, self.dim1: self.value1,
                self.dim2: self.value2, "overall": self.overall}


def judge_images(item: BenchItem) -> list[str]:
    """Generation: references then output. Manipulation: ground truth, output, then references."""
    if task_of(item.sub_task) == "generation":
        return [*item.references, item.output]
    return [item.ground_truth, item.output, *item.references]


def score_item(item: BenchItem, judge: ModelGateway) -> ScoreCard:
    d1, d2 = DIMENSIONS[task_of(item.sub_task)]
    images = judge_images(item)
    values = []
    for dim in (d1, d2):
        tid = f"score_{dim.lower()}"
        prompt = render(tid) if dim == "BC" else render(tid, instruction=item.prompt)
        values.append(judge.judge(prompt, images, tid).parsed[dim])
    return ScoreCard(item.item_id, item.sub_task, d1, values[0], d2, values[1])


@dataclass(frozen=True)
class SubTaskSummary:
    dim1: str
    mean1: float
    dim2: str
    mean2: float
    overall: float
    n: int


@dataclass(frozen=True)
class BenchReport:
    rows: dict[str, SubTaskSummary]
    average: float

    def to_json(self) -> dict:
        out = {t: {s.dim1: s.mean1, s.dim2: s.mean2, "Overall": s.overall, "n": s.n} for t, s in self.rows.items()}
        return {"sub_tasks": out, "Average": self.average}

    def to_table(self, label: str = "model", digits: int = 2) -> str:
        head = ["Method"]
        vals = [label]
        for t in SUB_TASKS:
            s = self.rows[t]
            head += [f"{t}:{s.dim1}", f"{t}:{s.dim2}", f"{t}:Overall"]
            vals += [f"{s.mean1:.{digits}f}", f"{s.mean2:.{digits}f}", f"{s.overall:.{digits}f}"]
        head.append("Average")
        vals.append(f"{self.average:.{digits}f}")
        widths = [max(len(h), len(v)) for h, v in zip(head, vals)]
        fmt = lambda cells: "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(cells, widths)))
        return "\n".join([fmt(head), fmt(vals)])


def row_average(overalls: Iterable[float]) -> float:
    vals = list(overalls)
    if len(vals) != len(SUB_TASKS):
        raise EmptySubTask(f"need one Overall per sub-task, got {len(vals)}")
    return float(np.mean(vals))


def aggregate(cards: Iterable[ScoreCard]) -> BenchReport:
    """Per sub-task dimension means and mean of per-sample overalls; Average over the four sub-tasks."""
    by_task: dict[str, list[ScoreCard]] = {t: [] for t in SUB_TASKS}
    for c in cards:
        by_task[c.sub_task].append(c)
    empty = [t for t, cs in by_task.items() if not cs]
    if empty:
        raise EmptySubTask(f"no scores for {empty}")
    rows = {}
    for t, cs in by_task.items():
        cs = sorted(cs, key=lambda c: c.item_id)  # fixes summation order regardless of arrival order
        rows[t] = SubTaskSummary(cs[0].dim1, float(np.mean([c.value1 for c in cs])), cs[0].dim2,
                                 float(np.mean([c.value2 for c in cs])), float(np.mean([c.overall for c in cs])), len(cs))
    return BenchReport(rows, row_average(r.overall for r in rows.values()))


class OSBenchScorer(BaseEstimator):
    """Estimator wrapper: ``predict`` returns one card per item, ``score`` the row Average."""

    def __init__(self, gateway: ModelGateway | None = None, n_jobs=1):
        self.gateway = gateway
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        items = self._check(X)
        check_benchmark(items, per_sub_task=None)
        return self

    def predict(self, X) -> list[ScoreCard]:
        return ordered_map(lambda it: score_item(it, self.gateway), self._check(X), self.n_jobs)

    def report(self, X) -> BenchReport:
        return aggregate(self.predict(X))

    def score(self, X, y=None) -> float:
        return self.report(X).average

    @staticmethod
    def _check(X) -> list[BenchItem]:
        if isinstance(X, (BenchItem, dict)):
            raise TypeError("expected a sequence of bench items")
        return [x if isinstance(x, BenchItem) else BenchItem.from_dict(x) for x in X]


def read_bench_manifest(path: str | Path) -> list[BenchItem]:
    path = Path(path)
    base = path.parent.resolve()
    with open(path, encoding="utf-8") as fh:
        return [BenchItem.from_dict(json.loads(line), base) for line in fh if line.strip()]


def write_bench_manifest(path: str | Path, items: Iterable[BenchItem]) -> None:
    path = Path(path)
    base = path.parent.resolve()

    def rel(p):
        if p is None:
            return None
        full = Path(p).resolve()
        return str(full.relative_to(base)) if full.is_relative_to(base) else p

    rows = []
    for it in items:
        d = it.to_dict()
        d["references"] = [rel(r) for r in d["references"]]
        d["output"] = rel(d["output"])
        d["ground_truth"] = rel(d["ground_truth"])
        rows.append(json.dumps(d, sort_keys=True))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def make_toy_bench(out_dir: str | Path, seed: int = 0, per_sub_task: int = 2, size=(256, 192)) -> Path:
    """Write a small synthetic benchmark (blob images plus a JSONL manifest); returns the manifest path."""
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    W, H = size

    def blob(name: str) -> str:
        img = np.full((H, W, 3), rng.integers(40, 200, size=3), dtype=np.uint8)
        x, y = int(rng.integers(0, W // 2)), int(rng.integers(0, H // 2))
        img[y:y + H // 3, x:x + W // 3] = rng.integers(0, 256, size=3)
        p = img_dir / f"{name}.png"
        save_png(p, img)
        return str(p)

    items = []
    for t in SUB_TASKS:
        for k in range(per_sub_task):
            iid = f"{t}_{k:02d}"
            n_ref = 1 if t != "multi_gen" else int(rng.integers(2, 5))
            refs = tuple(blob(f"{iid}_ref{r}") for r in range(n_ref))
            gt = blob(f"{iid}_gt") if task_of(t) == "manipulation" else None
            items.append(BenchItem(iid, t, refs, f"toy prompt {iid}", blob(f"{iid}_out"), gt))
    manifest = out_dir / "bench.jsonl"
    write_bench_manifest(manifest, items)
    return manifest
