"""Pipeline configuration: every threshold in one place, JSON round-trippable."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .gateway import BackendConfig
from .geometry import Canvas
from .mining import BORDER_CONF_ROWS, MixedRules, SingleRules, ThreeRules

_PAIRS = ("single_area", "mixed_area", "mixed_singleton_area", "mixed_person_count", "mixed_total_count",
          "scale_band", "downscale_band", "erosion_depth")
_FRACTIONS = ("area_floor", "det_floor_object", "det_floor_person", "single_conf", "single_through_area",
              "three_iou", "three_sum_area", "three_conf", "border_conf_bottom_side", "border_conf_top_bottom_side",
              "border_conf_top_bottom", "mixed_conf", "mixed_person_conf", "small_fraction", "placement_sigma",
              "generation_fraction", "inpaint_overlap_max", "inpaint_single_target_p", "discard_threshold")


@dataclass
class PipelineConfig:
    # curation
    min_height: int = 720
    aesthetic_min: float = 5.8
    frames_per_clip: int = 4
    # mining
    consensus_mode: str = "majority"
    area_floor: float = 0.05
    det_floor_object: float = 0.5
    det_floor_person: float = 0.8
    single_area: tuple[float, float] = (0.2, 0.8)
    single_conf: float = 0.85
    single_through_area: float = 0.7
    three_iou: float = 0.2
    three_sum_area: float = 0.2
    three_conf: float = 0.8
    border_conf_bottom_side: float = 0.87
    border_conf_top_bottom_side: float = 0.88
    border_conf_top_bottom: float = 0.87
    border_precedence: str = "all"
    border_tol: float = 15
    mixed_area: tuple[float, float] = (0.01, 0.60)
    mixed_conf: float = 0.5
    mixed_person_conf: float = 0.8
    mixed_person_count: tuple[int, int] = (1, 3)
    mixed_total_count: tuple[int, int] = (1, 5)
    mixed_singleton_area: tuple[float, float] = (0.20, 0.60)
    human_canvas_policy: str = "resize"
    vlm_gate: bool = True
    # synthesis
    canvas: tuple[int, int] = (1280, 720)
    small_fraction: float = 0.30
    scale_band: tuple[float, float] = (0.30, 0.40)
    downscale_band: tuple[float, float] = (0.6, 0.8)
    placement_sigma: float = 0.1
    placement_tries: int = 16
    erosion_depth: tuple[float, float] = (5, 25)
    erosion_freq: float = 15
    generation_fraction: float = 2 / 3
    inpaint_overlap_max: float = 0.2
    inpaint_single_target_p: float = 0.7
    # verification and captions
    max_attempts: int = 3
    strict_sentences: bool | None = None  # None: strict in mock mode, log-only live
    # run control
    workers: int = 1
    seed: int = 0
    artifacts_dir: str = "artifacts"
    chunk_size: int = 256
    discard_threshold: float = 1.0
    backend: BackendConfig = field(default_factory=BackendConfig)

    def __post_init__(self):
        if isinstance(self.backend, dict):
            self.backend = BackendConfig(**self.backend)
        for name in (*_PAIRS, "canvas"):
            setattr(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        for name in _PAIRS:
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
        for name in _FRACTIONS:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        for name in ("single_area", "mixed_area", "mixed_singleton_area", "scale_band"):
            if not all(0.0 <= v <= 1.0 for v in getattr(self, name)):
                raise ConfigError(f"{name} bounds must lie in [0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.max_attempts < 1 or self.frames_per_clip < 1 or self.placement_tries < 1 or self.chunk_size < 1:
            raise ConfigError("counts must be >= 1")
        if self.consensus_mode not in ("majority", "intersection"):
            raise ConfigError(f"unknown consensus mode {self.consensus_mode!r}")
        if self.border_precedence not in ("all", "first_match"):
            raise ConfigError(f"unknown border precedence {self.border_precedence!r}")
        if self.human_canvas_policy not in ("resize", "skip"):
            raise ConfigError(f"unknown human canvas policy {self.human_canvas_policy!r}")
        if min(self.canvas) < 1 or self.erosion_freq <= 0 or self.border_tol < 0:
            raise ConfigError("canvas, erosion frequency and border tolerance must be positive")
        self.backend.validate()

    # serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["backend"] = asdict(self.backend)
        return json.loads(json.dumps(d))  # tuples -> lists

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as err:
            raise ConfigError(str(err)) from None

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as err:
            raise ConfigError(f"config is not valid JSON: {err}") from None

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def replace(self, **changes) -> "PipelineConfig":
        return self.from_dict({**self.to_dict(), **changes})

    # rule sets ------------------------------------------------------------

    def single_rules(self) -> SingleRules:
        return SingleRules(self.single_area[0], self.single_area[1], self.single_conf, self.single_through_area,
                           self.border_tol)

    def three_rules(self) -> ThreeRules:
        confs = {"bottom_and_side": self.border_conf_bottom_side, "top_bottom_side": self.border_conf_top_bottom_side,
                 "top_bottom": self.border_conf_top_bottom}
        rows = tuple((row, confs[row]) for row, _ in BORDER_CONF_ROWS)
        return ThreeRules(self.three_iou, self.three_sum_area, self.three_conf, rows, self.border_precedence,
                          self.border_tol)

    def mixed_rules(self) -> MixedRules:
        return MixedRules(self.mixed_area[0], self.mixed_area[1], self.mixed_conf, self.mixed_person_conf,
                          self.mixed_person_count[0], self.mixed_person_count[1], self.mixed_total_count[0],
                          self.mixed_total_count[1], self.mixed_singleton_area[0], self.mixed_singleton_area[1])

    @property
    def output_canvas(self) -> Canvas:
        return Canvas(*self.canvas)
