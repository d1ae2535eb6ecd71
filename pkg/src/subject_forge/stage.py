"""Common estimator scaffolding for pipeline stages.

Each stage is a stateless scikit-learn transformer over a list of
:class:`~subject_forge.records.ClipRecord`. ``fit`` only validates input;
``transform`` advances records sitting at the stage's input status and
passes every other record through untouched, which makes re-runs no-ops.
"""
from __future__ import annotations

import json
import logging

from sklearn.base import BaseEstimator, TransformerMixin

from .records import ClipRecord
from .utils.parallel import ordered_map
from .utils.validation import check_records

log = logging.getLogger("subject_forge.events")


def log_event(rec: ClipRecord, stage: str, decision: str, rule: str | None = None, **extra) -> None:
    if log.isEnabledFor(logging.INFO):
        log.info(json.dumps({"record": rec.clip_id, "stage": stage, "decision": decision, "rule": rule, **extra},
                            sort_keys=True, default=str))


class RecordStage(TransformerMixin, BaseEstimator):
    stage_name = "stage"
    consumes = "raw"
    produces = "curated"

    def fit(self, X, y=None):
        check_records(X)
        return self

    def transform(self, X):
        records = check_records(X)
        return ordered_map(self._apply, records, getattr(self, "n_jobs", 1) or 1)

    def _apply(self, rec: ClipRecord) -> ClipRecord:
        if rec.status != self.consumes:
            return rec
        out = rec.copy()
        try:
            self.process(out)
        except Exception as err:  # any per-record failure becomes a discard, never a crash
            out = rec.copy()
            out.discard(f"error:{type(err).__name__}")
            out.extra = {**out.extra, "error_detail": str(err)[:300]}
            log_event(out, self.stage_name, "discard", type(err).__name__, detail=str(err)[:300])
            return out
        if out.is_discarded:
            log_event(out, self.stage_name, "discard", out.discard_reason)
        else:
            out.advance(self.produces)
            log_event(out, self.stage_name, "advance")
        return out

    def process(self, rec: ClipRecord) -> None:
        """Mutate ``rec`` in place; call ``rec.discard`` to drop it."""
        raise NotImplementedError

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags
