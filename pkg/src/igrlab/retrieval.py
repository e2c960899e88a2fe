"""Gallery indexing, composed-query retrieval, and the evaluation protocol.

One gallery per split holds every garment regardless of category; a query is
a reference garment plus one feedback sentence, routed to a branch by the
classifier unless overridden. Metrics: Recall@10/50 and top-50 mAP per task,
with cross-task means.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .corpus import Corpus
from .errors import NotFoundError, UsageError
from .model import MultiTaskModel
from .triplets import TripletDataset

_EPS = 1e-12


def _normalize_rows(m: np.ndarray) -> np.ndarray:
    return m / np.sqrt((m * m).sum(axis=-1, keepdims=True) + _EPS)


@dataclass
class GalleryIndex:
    split: str
    ids: list[str]
    features: np.ndarray  # (n, d_model), rows unit-norm

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class RankedResult:
    reference_id: str
    feedback: str
    branch: str
    branch_logits: tuple[float, float]
    ranked_ids: list[str]
    scores: np.ndarray

    def validate(self) -> None:
        if len(set(self.ranked_ids)) != len(self.ranked_ids):
            raise UsageError("ranked ids must be distinct")
        if np.any(np.diff(self.scores) > 1e-12):
            raise UsageError("scores must be non-increasing")


def build_gallery(model: MultiTaskModel, corpus: Corpus, split: str) -> GalleryIndex:
    ids = corpus.ids_in_split(split)
    if not ids:
        raise UsageError(f"split {split!r} has no garments")
    emb = model.encode_image(corpus.feature_matrix(ids)).data
    return GalleryIndex(split, ids, _normalize_rows(emb))


def retrieve(
    model: MultiTaskModel,
    gallery: GalleryIndex,
    corpus: Corpus,
    reference_id: str,
    feedback: str,
    k: int,
    branch_override: str | None = None,
    exclude_reference: bool = False,
) -> RankedResult:
    """Rank the whole gallery for one query, return the top k.

    The reference stays in the gallery by default; identity-like compositions
    therefore pay for retrieving the reference itself.
    """
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    garment = corpus.garments.get(reference_id)
    if garment is None:
        raise NotFoundError(f"unknown garment id {reference_id!r}")
    signal = model.encode_signal(feedback)
    logits, branch = model.classify_branch(signal)
    if branch_override is not None:
        if branch_override not in ("tgr", "vcr"):
            raise UsageError(f"unknown branch {branch_override!r}")
        branch = branch_override
    composed = model.compose(
        branch,
        model.encode_image(garment.feature[np.newaxis, :]),
        ad.stack_rows([signal]),
    )
    query = _normalize_rows(composed.data[0])
    scores = gallery.features @ query
    if exclude_reference and reference_id in gallery.ids:
        scores[gallery.ids.index(reference_id)] = -np.inf
    order = np.argsort(-scores, kind="stable")[: min(k, len(gallery))]
    result = RankedResult(
        reference_id=reference_id,
        feedback=feedback,
        branch=branch,
        branch_logits=(float(logits[0]), float(logits[1])),
        ranked_ids=[gallery.ids[int(i)] for i in order],
        scores=scores[order],
    )
    return result


def recall_at_k(ranked_ids: list[str], target_id: str, k: int) -> int:
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    return 1 if target_id in ranked_ids[:k] else 0


def average_precision(ranked_ids: list[str], relevant: set[str], cutoff: int = 50) -> float | None:
    """AP over the top-cutoff ranks; None when there is nothing relevant."""
    if cutoff < 1:
        raise UsageError(f"cutoff must be >= 1, got {cutoff}")
    if not relevant:
        return None
    hits = 0
    total = 0.0
    for rank, gid in enumerate(ranked_ids[:cutoff], start=1):
        if gid in relevant:
            hits += 1
            total += hits / rank
    return total / min(len(relevant), cutoff)


def mean_average_precision(
    ranked_lists: list[list[str]], relevant_sets: list[set[str]], cutoff: int = 50
) -> tuple[float, int]:
    """Mean AP over queries; empty-relevant queries are skipped and tallied."""
    values = []
    skipped = 0
    for ranked, relevant in zip(ranked_lists, relevant_sets):
        ap = average_precision(ranked, relevant, cutoff)
        if ap is None:
            skipped += 1
        else:
            values.append(ap)
    return (float(np.mean(values)) if values else 0.0), skipped


@dataclass
class TaskMetrics:
    r_at_10: float = 0.0
    r_at_50: float = 0.0
    map: float = 0.0
    queries: int = 0
    skipped: int = 0


@dataclass
class MetricsReport:
    """Fractions in [0, 1] internally; `to_dict` reports percentages."""

    tgr: TaskMetrics = field(default_factory=TaskMetrics)
    vcr: TaskMetrics = field(default_factory=TaskMetrics)

    @property
    def mean_r_at_k(self) -> float:
        return (self.tgr.r_at_10 + self.tgr.r_at_50 + self.vcr.r_at_10 + self.vcr.r_at_50) / 4.0

    @property
    def mean_map(self) -> float:
        return (self.tgr.map + self.vcr.map) / 2.0

    def to_dict(self) -> dict:
        def task(m: TaskMetrics) -> dict:
            return {
                "r_at_10": 100.0 * m.r_at_10,
                "r_at_50": 100.0 * m.r_at_50,
                "map": 100.0 * m.map,
                "queries": m.queries,
                "skipped": m.skipped,
            }

        return {
            "tgr": task(self.tgr),
            "vcr": task(self.vcr),
            "mean": {"r_at_k": 100.0 * self.mean_r_at_k, "map": 100.0 * self.mean_map},
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def evaluate(
    model: MultiTaskModel,
    dataset: TripletDataset,
    corpus: Corpus,
    split: str,
    use_true_branch: bool = False,
    exclude_reference: bool = False,
    concat_captions: bool = False,
    map_cutoff: int = 50,
) -> MetricsReport:
    """One query per triplet, using its first feedback sentence. Branch comes
    from the classifier unless `use_true_branch` forces the triplet's task.
    Relevant set for mAP: all targets sharing the query's (reference, sentence)."""
    gallery = build_gallery(model, corpus, split)
    report = MetricsReport()
    depth = max(50, map_cutoff)

    def sentence_of(t) -> str:
        return f"{t.feedback[0]} and {t.feedback[1]}" if concat_captions else t.feedback[0]

    for task in ("tgr", "vcr"):
        triplets = dataset.triplets(split, task)
        if not triplets:
            raise UsageError(f"split {split!r} has no {task} triplets")
        relevant_of: dict[tuple[str, str], set[str]] = {}
        for t in triplets:
            relevant_of.setdefault((t.reference_id, sentence_of(t)), set()).add(t.target_id)
        r10 = r50 = 0
        aps: list[float] = []
        skipped = 0
        for t in triplets:
            sentence = sentence_of(t)
            result = retrieve(
                model, gallery, corpus, t.reference_id, sentence,
                k=depth,
                branch_override=task if use_true_branch else None,
                exclude_reference=exclude_reference,
            )
            r10 += recall_at_k(result.ranked_ids, t.target_id, 10)
            r50 += recall_at_k(result.ranked_ids, t.target_id, 50)
            ap = average_precision(
                result.ranked_ids, relevant_of[(t.reference_id, sentence)], map_cutoff
            )
            if ap is None:
                skipped += 1
            else:
                aps.append(ap)
        metrics = TaskMetrics(
            r_at_10=r10 / len(triplets),
            r_at_50=r50 / len(triplets),
            map=float(np.mean(aps)) if aps else 0.0,
            queries=len(triplets),
            skipped=skipped,
        )
        setattr(report, task, metrics)
    return report


def export_embeddings(model: MultiTaskModel, corpus: Corpus, split: str, path) -> None:
    """One row per garment: id, category, then the two branch projections of
    its encoded image (edit branch first, compatibility branch second)."""
    ids = corpus.ids_in_split(split)
    if not ids:
        raise UsageError(f"split {split!r} has no garments")
    emb = model.encode_image(corpus.feature_matrix(ids))
    proj_t = model.project("tgr", emb).data
    proj_v = model.project("vcr", emb).data
    d = proj_t.shape[1]
    header = ["id", "category"]
    header += [f"tgr_{i}" for i in range(d)]
    header += [f"vcr_{i}" for i in range(d)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row, gid in enumerate(ids):
            cells = [gid, corpus.garments[gid].category]
            cells += [repr(float(x)) for x in proj_t[row]]
            cells += [repr(float(x)) for x in proj_v[row]]
            fh.write("\t".join(cells) + "\n")
