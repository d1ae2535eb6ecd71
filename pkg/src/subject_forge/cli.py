"""Command-line runner: ``subject-forge <stage> --in F --out F``.

Exit codes: 0 ok, 1 the discard fraction exceeded ``discard_threshold``,
2 fatal (bad config, unreadable manifest, I/O failure).
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .config import PipelineConfig
from .curation import Curator
from .errors import ConfigError
from .gateway import ModelGateway, make_gateway
from .mining import SubjectMiner
from .osbench import OSBenchScorer, aggregate, read_bench_manifest
from .pairing import PairSelector
from .records import dumps_record, iter_manifest, read_manifest
from .stats import emit_stats, render_plots
from .synthesis import OutpaintParams, ReferenceSynthesizer
from .verify_caption import Captioner, SampleVerifier

PIPELINE = ("curate", "mine", "pair", "synth", "verify", "caption")
COMMANDS = (*PIPELINE, "all", "bench", "stats")

EXIT_OK, EXIT_DISCARDS, EXIT_FATAL = 0, 1, 2

log = logging.getLogger("subject_forge.cli")


@dataclass
class Counters:
    processed: int = 0
    advanced: int = 0
    passed_through: int = 0
    discarded: int = 0
    discard_reasons: Counter = field(default_factory=Counter)

    def to_dict(self) -> dict:
        return {"processed": self.processed, "advanced": self.advanced, "passed_through": self.passed_through,
                "discarded": self.discarded, "discard_reasons": dict(sorted(self.discard_reasons.items()))}


def build_stages(names, cfg: PipelineConfig, gateway: ModelGateway, artifacts_dir: Path) -> list:
    strict = cfg.strict_sentences if cfg.strict_sentences is not None else cfg.backend.mode == "mock"
    params = OutpaintParams(cfg.output_canvas, cfg.small_fraction, cfg.scale_band, cfg.downscale_band,
                            cfg.placement_sigma, cfg.placement_tries, True, cfg.erosion_depth, cfg.erosion_freq)
    synth = ReferenceSynthesizer(gateway, str(artifacts_dir), params, cfg.generation_fraction,
                                 cfg.inpaint_overlap_max, cfg.inpaint_single_target_p, cfg.seed, cfg.workers)
    make = {
        "curate": lambda: Curator(gateway, cfg.min_height, cfg.aesthetic_min, cfg.frames_per_clip, cfg.workers),
        "mine": lambda: SubjectMiner(gateway, cfg.consensus_mode, cfg.area_floor, cfg.det_floor_object,
                                     cfg.det_floor_person, cfg.single_rules(), cfg.three_rules(), cfg.mixed_rules(),
                                     cfg.human_canvas_policy, cfg.vlm_gate, cfg.workers),
        "pair": lambda: PairSelector(gateway, cfg.workers),
        "synth": lambda: synth,
        "verify": lambda: SampleVerifier(gateway, synth, cfg.max_attempts, cfg.workers),
        "caption": lambda: Captioner(gateway, strict, cfg.seed, cfg.workers),
    }
    return [make[n]() for n in names]


def _chunks(it, size):
    it = iter(it)
    while chunk := list(itertools.islice(it, size)):
        yield chunk


def run_pipeline(stage: str, in_path, out_path, cfg: PipelineConfig, gateway: ModelGateway | None = None) -> tuple[int, Counters]:
    in_path, out_path = Path(in_path), Path(out_path)
    names = PIPELINE if stage == "all" else (stage,)
    gateway = gateway if gateway is not None else make_gateway(cfg.backend)
    out_dir = out_path.parent.resolve()
    art = Path(cfg.artifacts_dir)
    art = art if art.is_absolute() else out_dir / art
    stages = build_stages(names, cfg, gateway, art)
    counters = Counters()
    acted_on = 0
    out_dir.mkdir(parents=True, exist_ok=True)
    tmp = out_path.with_name(out_path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:  # sole writer; records arrive in input order
        for chunk in _chunks(iter_manifest(in_path), cfg.chunk_size):
            before = [r.status for r in chunk]
            for st in stages:
                chunk = st.transform(chunk)
            for status0, rec in zip(before, chunk):
                counters.processed += 1
                if rec.status == status0:
                    counters.passed_through += 1
                    continue
                acted_on += 1
                if rec.is_discarded:
                    counters.discarded += 1
                    counters.discard_reasons[rec.discard_reason] += 1
                else:
                    counters.advanced += 1
            for rec in chunk:
                fh.write(dumps_record(rec, out_dir) + "\n")
    os.replace(tmp, out_path)
    if acted_on and counters.discarded / acted_on > cfg.discard_threshold:
        return EXIT_DISCARDS, counters
    return EXIT_OK, counters


def run_stats(in_path, plots_dir=None) -> dict:
    summary = emit_stats(read_manifest(in_path))
    out = summary.to_dict()
    if plots_dir:
        out["plots"] = [str(p) for p in render_plots(summary, plots_dir)]
    return out


def run_bench(in_path, out_path, cfg: PipelineConfig, gateway: ModelGateway | None = None) -> dict:
    gateway = gateway if gateway is not None else make_gateway(cfg.backend)
    items = read_bench_manifest(in_path)
    scorer = OSBenchScorer(gateway, cfg.workers).fit(items)
    cards = scorer.predict(items)
    report = aggregate(cards)
    payload = {**report.to_json(), "cards": [c.as_dict() for c in sorted(cards, key=lambda c: c.item_id)]}
    if out_path:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
        out_path.with_suffix(".txt").write_text(report.to_table() + "\n", encoding="utf-8")
    return {**payload, "table": report.to_table()}


# logging -------------------------------------------------------------------


class JsonLogFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        msg = record.getMessage()
        try:
            body = json.loads(msg)
            if not isinstance(body, dict):
                raise ValueError
        except ValueError:
            body = {"msg": msg}
        return json.dumps({"level": record.levelname, "logger": record.name, **body}, sort_keys=True, default=str)


def setup_logging(level: str = "WARNING") -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLogFormatter())
    root = logging.getLogger("subject_forge")
    root.handlers[:] = [handler]
    root.setLevel(level.upper())
    root.propagate = False


# entry point ---------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="subject-forge", description="Subject-driven training data pipeline.")
    p.add_argument("command", choices=(*COMMANDS, "demo", "config"))
    p.add_argument("--in", dest="in_path", help="input manifest (JSONL)")
    p.add_argument("--out", dest="out_path", help="output manifest, report, or directory")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=("mock", "live"))
    p.add_argument("--in-place", action="store_true", help="overwrite the input manifest")
    p.add_argument("--plots", metavar="DIR", help="write facet charts (stats only)")
    p.add_argument("--clips", type=int, default=20, help="number of clips (demo only)")
    p.add_argument("--log-level", default="WARNING")
    return p


def load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    changes = {}
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.mode is not None:
        changes["backend"] = {**cfg.to_dict()["backend"], "mode": args.mode}
    return cfg.replace(**changes) if changes else cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        cfg = load_config(args)
        if args.command == "config":
            print(cfg.to_json())
            return EXIT_OK
        if args.command == "demo":
            from .demo import make_demo_corpus

            if not args.out_path:
                raise ConfigError("demo needs --out DIR")
            print(json.dumps({"manifest": str(make_demo_corpus(args.out_path, args.clips, cfg.seed))}))
            return EXIT_OK
        if not args.in_path:
            raise ConfigError("--in is required")
        if args.command == "stats":
            print(json.dumps(run_stats(args.in_path, args.plots), indent=2, sort_keys=True))
            return EXIT_OK
        if args.command == "bench":
            payload = run_bench(args.in_path, args.out_path, cfg)
            print(payload.pop("table"))
            return EXIT_OK
        out = args.in_path if args.in_place else args.out_path
        if not out:
            raise ConfigError("--out is required unless --in-place is given")
        code, counters = run_pipeline(args.command, args.in_path, out, cfg)
        print(json.dumps(counters.to_dict(), sort_keys=True))
        return code
    except (ConfigError, OSError, ValueError) as err:
        log.error(json.dumps({"fatal": type(err).__name__, "detail": str(err)}))
        print(f"subject-forge: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
