"""Pluggable model services: detector, segmenter, embedder, judge, painter, aesthetic scorer."""
from .base import EMBED_DIM, SERVICES, BackendConfig, JudgeVerdict, ModelGateway, extract_score, parse_verdict
from .http import HttpGateway
from .mock import MockGateway, load_sidecar


def make_gateway(config: BackendConfig) -> ModelGateway:
    if config.mode == "mock":
        return MockGateway(config)
    return HttpGateway(config.with_env())


__all__ = [
    "EMBED_DIM",
    "SERVICES",
    "BackendConfig",
    "HttpGateway",
    "JudgeVerdict",
    "MockGateway",
    "ModelGateway",
    "extract_score",
    "load_sidecar",
    "make_gateway",
    "parse_verdict",
]
