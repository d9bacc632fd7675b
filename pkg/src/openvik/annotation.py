"""Annotation backend: task queue, rating persistence, live agreement.

Raters work through images one at a time, judging every knowledge phrase of
an image for validity (binary) and conformity (0-3). Ratings are persisted
append-only with an audit trail; agreement is computed on demand from the
latest rating per (rater, phrase).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .corpus import KnowledgePhrase
from .metrics import CONFORMITY_SCALE, VALIDITY_SCALE, RatingRecord, cohens_kappa


class UnknownRater(KeyError):
    pass


@dataclass(frozen=True, slots=True)
class AnnotationTask:
    task_id: str
    image_id: str
    image_uri: str
    rater_id: str
    phrases: tuple[tuple[str, str], ...]  # (phrase_id, text)
    status: str = "pending"

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "image_id": self.image_id,
            "image_uri": self.image_uri,
            "rater_id": self.rater_id,
            "phrases": [{"phrase_id": pid, "text": text} for pid, text in self.phrases],
            "status": self.status,
        }


@dataclass(frozen=True, slots=True)
class AgreementView:
    raters: tuple[str, ...]
    validity_matrix: tuple[tuple[float, ...], ...]
    conformity_matrix: tuple[tuple[float, ...], ...]
    average_validity: float
    average_conformity: float
    average: float

    def to_json(self) -> dict:
        return {
            "raters": list(self.raters),
            "validity_matrix": [list(row) for row in self.validity_matrix],
            "conformity_matrix": [list(row) for row in self.conformity_matrix],
            "average_validity": self.average_validity,
            "average_conformity": self.average_conformity,
            "average": self.average,
        }


class InsufficientOverlap(ValueError):
    pass


class AnnotationStore:
    """In-memory store with an append-only JSONL audit log.

    The log records every submission; the latest entry per (rater, phrase)
    wins. Reloading the log reconstructs identical state.
    """

    def __init__(
        self,
        images: Iterable[tuple[str, str]],  # (image_id, uri), task order
        phrases_by_image: dict[str, list[tuple[str, str]]],
        log_path: str | Path | None = None,
    ):
        self._images = [
            (image_id, uri)
            for image_id, uri in images
            if phrases_by_image.get(image_id)
        ]
        self._phrases_by_image = {
            image_id: list(phrases)
            for image_id, phrases in phrases_by_image.items()
            if phrases
        }
        self._image_of_phrase = {
            pid: image_id
            for image_id, phrases in self._phrases_by_image.items()
            for pid, _ in phrases
        }
        self._raters: list[str] = []
        self._latest: dict[tuple[str, str], RatingRecord] = {}
        self._audit: list[dict] = []
        self._log_path = Path(log_path) if log_path else None
        if self._log_path and self._log_path.exists():
            with self._log_path.open() as handle:
                for line in handle:
                    if line.strip():
                        entry = json.loads(line)
                        record = RatingRecord.from_json(entry["rating"])
                        self._register(record.rater_id)
                        self._latest[(record.rater_id, record.phrase_id)] = record
                        self._audit.append(entry)

    @classmethod
    def from_phrases(
        cls,
        phrases: Iterable[KnowledgePhrase],
        uris_by_image: dict[str, str] | None = None,
        log_path: str | Path | None = None,
    ) -> "AnnotationStore":
        by_image: dict[str, list[tuple[str, str]]] = {}
        order: list[str] = []
        for phrase in phrases:
            if phrase.image_id not in by_image:
                order.append(phrase.image_id)
            by_image.setdefault(phrase.image_id, []).append((phrase.phrase_id, phrase.text))
        uris_by_image = uris_by_image or {}
        images = [(image_id, uris_by_image.get(image_id, "")) for image_id in sorted(order)]
        return cls(images, by_image, log_path=log_path)

    # --- raters and tasks -------------------------------------------------

    def register_rater(self, rater_id: str) -> None:
        self._register(rater_id)

    def _register(self, rater_id: str) -> None:
        if rater_id not in self._raters:
            self._raters.append(rater_id)

    def raters(self) -> list[str]:
        return list(self._raters)

    def _task_complete(self, rater_id: str, image_id: str) -> bool:
        return all(
            (rater_id, pid) in self._latest
            for pid, _ in self._phrases_by_image[image_id]
        )

    def next_task(self, rater_id: str) -> AnnotationTask | None:
        """Lowest-id image with unrated phrases for this rater; None when done."""
        if rater_id not in self._raters:
            raise UnknownRater(rater_id)
        for image_id, uri in self._images:
            if not self._task_complete(rater_id, image_id):
                return AnnotationTask(
                    task_id=f"{image_id}::{rater_id}",
                    image_id=image_id,
                    image_uri=uri,
                    rater_id=rater_id,
                    phrases=tuple(self._phrases_by_image[image_id]),
                )
        return None

    # --- ratings ----------------------------------------------------------

    def submit_rating(self, record: RatingRecord) -> dict:
        """Persist a rating; resubmission overwrites with an audit entry."""
        self._register(record.rater_id)
        key = (record.rater_id, record.phrase_id)
        overwrites = key in self._latest
        entry = {"rating": record.to_json(), "overwrites": overwrites}
        self._latest[key] = record
        self._audit.append(entry)
        if self._log_path:
            with self._log_path.open("a") as handle:
                handle.write(json.dumps(entry, sort_keys=True) + "\n")
        return {"accepted": True, "overwrote": overwrites}

    def audit_log(self) -> list[dict]:
        return list(self._audit)

    def export_ratings(self) -> list[RatingRecord]:
        """Latest rating per (rater, phrase), in stable order."""
        return [self._latest[key] for key in sorted(self._latest)]

    def export_jsonl(self) -> str:
        return "".join(
            json.dumps(record.to_json(), sort_keys=True) + "\n"
            for record in self.export_ratings()
        )

    # --- agreement --------------------------------------------------------

    def agreement_view(self) -> AgreementView:
        """Pairwise kappa matrices over raters sharing rated phrases."""
        raters = [
            r for r in self._raters if any(key[0] == r for key in self._latest)
        ]
        if len(raters) < 2:
            raise InsufficientOverlap("need >= 2 raters with ratings")
        n = len(raters)
        validity = [[1.0] * n for _ in range(n)]
        conformity = [[1.0] * n for _ in range(n)]
        pair_kappas = []
        any_overlap = False
        for i in range(n):
            for j in range(i + 1, n):
                shared = sorted(
                    pid
                    for pid in self._image_of_phrase
                    if (raters[i], pid) in self._latest and (raters[j], pid) in self._latest
                )
                if not shared:
                    # no shared phrases: no kappa for this pair
                    validity[i][j] = validity[j][i] = None
                    conformity[i][j] = conformity[j][i] = None
                    continue
                any_overlap = True
                a = [self._latest[(raters[i], pid)] for pid in shared]
                b = [self._latest[(raters[j], pid)] for pid in shared]
                kv = cohens_kappa([r.validity for r in a], [r.validity for r in b])
                kc = cohens_kappa([r.conformity for r in a], [r.conformity for r in b])
                validity[i][j] = validity[j][i] = kv
                conformity[i][j] = conformity[j][i] = kc
                pair_kappas.append((kv, kc))
        if not any_overlap:
            raise InsufficientOverlap("no pair of raters shares rated phrases")
        avg_v = sum(kv for kv, _ in pair_kappas) / len(pair_kappas)
        avg_c = sum(kc for _, kc in pair_kappas) / len(pair_kappas)
        return AgreementView(
            raters=tuple(raters),
            validity_matrix=tuple(tuple(row) for row in validity),
            conformity_matrix=tuple(tuple(row) for row in conformity),
            average_validity=avg_v,
            average_conformity=avg_c,
            average=(avg_v + avg_c) / 2,
        )


def create_app(store: AnnotationStore):
    """FastAPI application exposing the annotation HTTP API."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import JSONResponse, PlainTextResponse

    app = FastAPI(title="openvik annotation backend")

    @app.get("/api/tasks/next")
    def tasks_next(rater: str):
        try:
            task = store.next_task(rater)
        except UnknownRater:
            raise HTTPException(status_code=404, detail=f"unknown rater {rater!r}")
        if task is None:
            return JSONResponse({"task": None})
        return JSONResponse({"task": task.to_json()})

    @app.post("/api/raters/{rater_id}")
    def register(rater_id: str):
        store.register_rater(rater_id)
        return {"registered": rater_id}

    @app.post("/api/ratings")
    def submit(payload: dict):
        try:
            record = RatingRecord.from_json(payload)
        except (KeyError, TypeError) as exc:
            raise HTTPException(status_code=400, detail=f"malformed rating: {exc}")
        except ValueError as exc:
            raise HTTPException(
                status_code=400,
                detail=(
                    f"{exc}; legal scales: validity {list(VALIDITY_SCALE)}, "
                    f"conformity {list(CONFORMITY_SCALE)}"
                ),
            )
        return store.submit_rating(record)

    @app.get("/api/agreement")
    def agreement():
        try:
            view = store.agreement_view()
        except InsufficientOverlap as exc:
            return JSONResponse({"status": "insufficient data", "detail": str(exc)})
        out = view.to_json()
        out["status"] = "ok"
        return JSONResponse(out)

    @app.get("/api/export")
    def export():
        return PlainTextResponse(store.export_jsonl(), media_type="application/jsonl")

    return app
