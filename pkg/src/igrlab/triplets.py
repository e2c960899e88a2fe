"""Benchmark construction: pair selection, attribute statistics, feedback text.

Two retrieval tasks share one corpus. Attribute-change pairs link a garment to
its most visually similar peers of the same category; compatibility pairs link
co-members of an outfit across categories. Each pair gets two template-based
feedback sentences.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .corpus import SPLITS, Corpus, Garment
from .errors import ConfigurationError, CorpusFormatError, UsageError

TASKS = ("tgr", "vcr")

_SLOT_RE = re.compile(r"\{([A-Z0-9]+)\}")
_TGR_SLOTS = {"A", "V", "A1", "V1", "A2", "V2"}
_VCR_SLOTS = {"TC", "RC", "TV", "TA"}


@dataclass(frozen=True)
class PromptTemplate:
    text: str
    slots: tuple[str, ...]
    arity: int
    task: str

    @property
    def same_type(self) -> bool:
        """Arity-2 slots around a single bare {A}: needs two values of one type."""
        return self.arity == 2 and "A" in self.slots

    def validate(self) -> None:
        found = tuple(_SLOT_RE.findall(self.text))
        if found != self.slots:
            raise ConfigurationError(
                f"template {self.text!r}: declared slots {list(self.slots)} "
                f"do not match text slots {list(found)}"
            )
        allowed = _TGR_SLOTS if self.task == "tgr" else _VCR_SLOTS
        if self.task not in TASKS:
            raise ConfigurationError(f"template {self.text!r}: unknown task {self.task!r}")
        bad = set(self.slots) - allowed
        if bad:
            raise ConfigurationError(f"template {self.text!r}: slot {sorted(bad)[0]!r} not allowed")
        max_arity = 2 if self.task == "tgr" else 1
        if not 0 <= self.arity <= max_arity:
            raise ConfigurationError(f"template {self.text!r}: arity {self.arity} out of range")

    def render(self, values: dict[str, str]) -> str:
        def sub(match: re.Match) -> str:
            slot = match.group(1)
            if slot not in values:
                raise UsageError(f"template {self.text!r}: no value for slot {slot!r}")
            return values[slot]

        return _SLOT_RE.sub(sub, self.text)


def load_templates(path=None) -> list[PromptTemplate]:
    if path is None:
        raw = resources.files("igrlab").joinpath("data/templates.json").read_text("utf-8")
    else:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    templates = []
    for rec in json.loads(raw):
        t = PromptTemplate(rec["text"], tuple(rec["slots"]), int(rec["arity"]), rec["task"])
        t.validate()
        templates.append(t)
    return templates


@dataclass(frozen=True)
class RelativeDiff:
    """What the target has that the reference lacks; reference-only types are dropped."""

    changed: tuple[tuple[str, str, str], ...]  # (type, reference value, target value)
    added: tuple[tuple[str, str], ...]         # (type, target value)

    def mentions(self) -> list[tuple[str, str]]:
        return [(t, tv) for t, _, tv in self.changed] + list(self.added)

    def is_empty(self) -> bool:
        return not self.changed and not self.added


def relative_diff(reference: Garment, target: Garment) -> RelativeDiff:
    if reference.category != target.category:
        raise UsageError(
            f"relative diff needs one category, got {reference.category!r} and {target.category!r}"
        )
    changed = []
    added = []
    for t, tv in target.attributes.items():
        rv = reference.attributes.get(t)
        if rv is None:
            added.append((t, tv))
        elif rv != tv:
            changed.append((t, rv, tv))
    return RelativeDiff(tuple(changed), tuple(added))


@dataclass(frozen=True)
class Triplet:
    reference_id: str
    target_id: str
    feedback: tuple[str, str]
    task: str
    split: str

    def validate(self, corpus: Corpus) -> None:
        for gid in (self.reference_id, self.target_id):
            if gid not in corpus.garments:
                raise CorpusFormatError(f"triplet names unknown garment {gid!r}")
        ref = corpus.garments[self.reference_id]
        tgt = corpus.garments[self.target_id]
        if self.task == "tgr":
            if ref.category != tgt.category or self.reference_id == self.target_id:
                raise CorpusFormatError(f"tgr triplet {self.reference_id}->{self.target_id} invalid")
        elif self.task == "vcr":
            if ref.category == tgt.category:
                raise CorpusFormatError(f"vcr triplet {self.reference_id}->{self.target_id} invalid")
            shared = any(
                self.reference_id in o.members and self.target_id in o.members
                for o in corpus.outfits.values()
            )
            if not shared:
                raise CorpusFormatError(
                    f"vcr triplet {self.reference_id}->{self.target_id} spans no outfit"
                )
        else:
            raise CorpusFormatError(f"unknown task {self.task!r}")
        for gid in (self.reference_id, self.target_id):
            if corpus.split_of[gid] != self.split:
                raise CorpusFormatError(f"triplet garment {gid} outside split {self.split}")
        if len(self.feedback) != 2:
            raise CorpusFormatError("triplet must carry exactly two sentences")


def select_tgr_pairs(corpus: Corpus, split: str, k: int = 3) -> list[tuple[str, str]]:
    """Top-k most feature-similar same-category garments per reference.

    Ties break by ascending id; categories with one garment yield nothing.
    """
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    pairs: list[tuple[str, str]] = []
    for category in corpus.categories:
        ids = corpus.same_category_ids(category, split)
        if len(ids) < 2:
            continue
        feats = corpus.feature_matrix(ids)
        sims = feats @ feats.T
        for i, rid in enumerate(ids):
            order = sorted(
                (j for j in range(len(ids)) if j != i),
                key=lambda j: (-sims[i, j], ids[j]),
            )
            pairs.extend((rid, ids[j]) for j in order[:k])
    pairs.sort()
    return pairs


def select_vcr_pairs(corpus: Corpus, split: str) -> list[tuple[str, str]]:
    """Every ordered pair of distinct members, per outfit in the split."""
    pairs: list[tuple[str, str]] = []
    for outfit in corpus.outfits_in_split(split):
        for rid in outfit.members:
            for tid in outfit.members:
                if rid != tid:
                    pairs.append((rid, tid))
    return pairs


@dataclass
class CorrelationMatrix:
    """P(target value | source category+value, target category) from train outfits."""

    entries: dict[tuple[str, str], dict[tuple[str, str], float]]
    value_type_of: dict[str, str]

    def conditional(self, source_category: str, source_value: str, target_category: str) -> dict[str, float]:
        dist = self.entries.get((source_category, source_value), {})
        return {tv: p for (tc, tv), p in dist.items() if tc == target_category}

    def predict(self, reference: Garment, target_category: str) -> tuple[str, str] | None:
        """Most likely (type, value) on the target, summed over the reference's values."""
        scores: dict[str, float] = {}
        for sv in reference.attributes.values():
            for tv, p in self.conditional(reference.category, sv, target_category).items():
                scores[tv] = scores.get(tv, 0.0) + p
        if not scores:
            return None
        value = min(scores, key=lambda v: (-scores[v], v))
        return self.value_type_of[value], value


def attribute_correlation(corpus: Corpus) -> CorrelationMatrix:
    if not corpus.ids_in_split("train"):
        raise UsageError("attribute correlation needs a non-empty train split")
    counts: dict[tuple[str, str], dict[tuple[str, str], float]] = {}
    for outfit in corpus.outfits_in_split("train"):
        for rid in outfit.members:
            for tid in outfit.members:
                if rid == tid:
                    continue
                a = corpus.garments[rid]
                b = corpus.garments[tid]
                for sv in a.attributes.values():
                    row = counts.setdefault((a.category, sv), {})
                    for tv in b.attributes.values():
                        key = (b.category, tv)
                        row[key] = row.get(key, 0.0) + 1.0
    # normalize within each (source, target-category) group
    for row in counts.values():
        totals: dict[str, float] = {}
        for (tc, _), c in row.items():
            totals[tc] = totals.get(tc, 0.0) + c
        for key in row:
            row[key] /= totals[key[0]]
    value_type_of = {}
    for t in corpus.schema.attribute_types:
        for v in corpus.schema.values_per_type[t]:
            value_type_of.setdefault(v, t)
    return CorrelationMatrix(counts, value_type_of)


def _tgr_pool(templates: list[PromptTemplate], arity: int) -> list[PromptTemplate]:
    # same-type templates want two values of one attribute; diffs never carry that
    return [t for t in templates if t.task == "tgr" and t.arity == arity and not t.same_type]


def generate_tgr_feedback(
    diff: RelativeDiff, templates: list[PromptTemplate], rng: np.random.Generator
) -> tuple[str, str]:
    mentions = diff.mentions()
    sentences = []
    for _ in range(2):
        n = min(2, len(mentions))
        pool = _tgr_pool(templates, n)
        if not pool:
            raise ConfigurationError(f"no feedback template with arity {n}")
        template = pool[int(rng.integers(len(pool)))]
        if n == 0:
            chosen: list[tuple[str, str]] = []
        else:
            picked = rng.choice(len(mentions), size=n, replace=False)
            chosen = [mentions[int(i)] for i in picked]
        values: dict[str, str] = {}
        if n == 1:
            values = {"A": chosen[0][0], "V": chosen[0][1]}
        elif n == 2:
            values = {
                "A1": chosen[0][0], "V1": chosen[0][1],
                "A2": chosen[1][0], "V2": chosen[1][1],
            }
        sentences.append(template.render(values))
    return sentences[0], sentences[1]


def generate_vcr_feedback(
    reference: Garment,
    target_category: str,
    corr: CorrelationMatrix,
    templates: list[PromptTemplate],
    rng: np.random.Generator,
    p_mention: float = 0.5,
) -> tuple[tuple[str, str], tuple[str, str] | None]:
    if target_category == reference.category:
        raise UsageError("compatibility feedback needs a different target category")
    mention: tuple[str, str] | None = None
    if rng.random() < p_mention:
        mention = corr.predict(reference, target_category)
    arity = 1 if mention is not None else 0
    pool = [t for t in templates if t.task == "vcr" and t.arity == arity]
    if not pool:
        raise ConfigurationError(f"no compatibility template with arity {arity}")
    values = {"RC": reference.category, "TC": target_category}
    if mention is not None:
        values["TA"] = mention[0]
        values["TV"] = mention[1]
    sentences = tuple(
        pool[int(rng.integers(len(pool)))].render(values) for _ in range(2)
    )
    return (sentences[0], sentences[1]), mention


@dataclass(frozen=True)
class PipelineConfig:
    k: int = 3
    p_mention: float = 0.5
    seed: int = 13

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigurationError("k must be >= 1")
        if not 0.0 <= self.p_mention <= 1.0:
            raise ConfigurationError("p_mention must lie in [0, 1]")


def pair_rng(seed: int, split: str, task: str, reference_id: str, target_id: str) -> np.random.Generator:
    """Independent stream per pair, so construction order never matters."""
    digest = hashlib.sha256(f"{seed}:{split}:{task}:{reference_id}:{target_id}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


@dataclass
class TripletDataset:
    by_split_task: dict[tuple[str, str], list[Triplet]]

    def triplets(self, split: str, task: str | None = None) -> list[Triplet]:
        if task is not None:
            return list(self.by_split_task.get((split, task), []))
        out = []
        for t in TASKS:
            out.extend(self.by_split_task.get((split, t), []))
        return out

    def counts(self) -> dict[str, int]:
        return {f"{s}/{t}": len(v) for (s, t), v in sorted(self.by_split_task.items())}


def build_dataset(corpus: Corpus, config: PipelineConfig | None = None) -> TripletDataset:
    config = config or PipelineConfig()
    config.validate()
    templates = load_templates()
    corr = attribute_correlation(corpus)
    by_split_task: dict[tuple[str, str], list[Triplet]] = {}
    for split in SPLITS:
        tgr = []
        for rid, tid in select_tgr_pairs(corpus, split, config.k):
            rng = pair_rng(config.seed, split, "tgr", rid, tid)
            diff = relative_diff(corpus.garments[rid], corpus.garments[tid])
            feedback = generate_tgr_feedback(diff, templates, rng)
            tgr.append(Triplet(rid, tid, feedback, "tgr", split))
        by_split_task[(split, "tgr")] = tgr
        vcr = []
        for rid, tid in select_vcr_pairs(corpus, split):
            rng = pair_rng(config.seed, split, "vcr", rid, tid)
            feedback, _ = generate_vcr_feedback(
                corpus.garments[rid],
                corpus.garments[tid].category,
                corr,
                templates,
                rng,
                config.p_mention,
            )
            vcr.append(Triplet(rid, tid, feedback, "vcr", split))
        by_split_task[(split, "vcr")] = vcr
    return TripletDataset(by_split_task)


def save_dataset(dataset: TripletDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for split in SPLITS:
            for task in TASKS:
                for t in dataset.by_split_task.get((split, task), []):
                    rec = {
                        "reference_id": t.reference_id,
                        "target_id": t.target_id,
                        "task": t.task,
                        "split": t.split,
                        "feedback": list(t.feedback),
                    }
                    fh.write(json.dumps(rec, ensure_ascii=False, separators=(", ", ": ")) + "\n")


def load_dataset(path) -> TripletDataset:
    by_split_task: dict[tuple[str, str], list[Triplet]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            try:
                feedback = rec["feedback"]
                triplet = Triplet(
                    rec["reference_id"], rec["target_id"],
                    (feedback[0], feedback[1]), rec["task"], rec["split"],
                )
            except (KeyError, IndexError) as exc:
                raise CorpusFormatError(f"line {lineno}: incomplete triplet record") from exc
            if triplet.task not in TASKS or triplet.split not in SPLITS:
                raise CorpusFormatError(f"line {lineno}: bad task or split")
            by_split_task.setdefault((triplet.split, triplet.task), []).append(triplet)
    return TripletDataset(by_split_task)
