"""Subject-driven training data from video clips: curation, mining, pairing, synthesis, verification, captions."""
from .config import PipelineConfig
from .curation import Curator, quality_gate, sample_frames
from .gateway import BackendConfig, HttpGateway, MockGateway, ModelGateway, make_gateway
from .mining import SubjectMiner, filter_mixed, filter_single_person, filter_three_person
from .osbench import BenchItem, OSBenchScorer, ScoreCard, aggregate, score_item
from .pairing import PairSelector, select_pair
from .records import ClipRecord, Detection, read_manifest, write_manifest
from .stats import emit_stats
from .synthesis import ReferenceSynthesizer, SynthesisJob
from .verify_caption import Captioner, SampleVerifier

__version__ = "0.1.0"

__all__ = [
    "BackendConfig",
    "BenchItem",
    "Captioner",
    "ClipRecord",
    "Curator",
    "Detection",
    "HttpGateway",
    "MockGateway",
    "ModelGateway",
    "OSBenchScorer",
    "PairSelector",
    "PipelineConfig",
    "ReferenceSynthesizer",
    "SampleVerifier",
    "ScoreCard",
    "SubjectMiner",
    "SynthesisJob",
    "aggregate",
    "emit_stats",
    "filter_mixed",
    "filter_single_person",
    "filter_three_person",
    "make_gateway",
    "quality_gate",
    "read_manifest",
    "sample_frames",
    "score_item",
    "select_pair",
    "write_manifest",
]
