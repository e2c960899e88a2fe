"""Deterministic synthetic garment corpus: categories, attributes, outfits, features.

Stands in for a real catalog at desk scale. Garment "images" are unit-norm
feature vectors built from category + attribute-value embeddings plus noise,
so nearby features mean similar garments by construction.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, CorpusFormatError

SPLITS = ("train", "val", "test")

# Name banks; configs larger than a bank extend it with numbered names.
CATEGORY_BANK = [
    "top", "skirt", "jacket", "shoe", "hat", "bag", "dress", "pants",
    "coat", "belt", "scarf", "sweater", "shirt", "shorts", "boot",
    "glove", "sock", "vest", "cardigan", "jumpsuit", "tie", "watch",
    "cape", "glasses", "sandal", "legging", "blazer",
]

ATTRIBUTE_BANK = {
    "color": ["red", "blue", "black", "white", "mustard", "brown", "green",
              "navy", "maroon", "beige", "light blue", "dark gray"],
    "material": ["cotton", "denim", "leather", "silk", "wool", "linen",
                 "suede", "velvet", "plastic", "knit"],
    "pattern": ["plain", "striped", "floral", "plaid", "polka dot",
                "camouflage", "paisley", "geometric"],
    "neckline": ["round neck", "v neck", "scoop neck", "plunging",
                 "collared", "halter", "square neck", "boat neck"],
    "silhouette": ["loose fit", "slim fit", "a-line", "straight",
                   "peplum", "curved fit", "boxy", "flared"],
    "length": ["mini", "knee length", "midi", "maxi", "cropped",
               "above the hip", "ankle length", "regular length"],
    "opening type": ["zip up", "buttoned", "pullover", "wrap",
                     "lace up", "toggled", "snap front", "open front"],
    "sleeve length": ["sleeveless", "short sleeve", "long sleeve",
                      "three quarter", "cap sleeve", "extra long"],
    "decoration": ["ruffle", "fringe", "applique", "embroidered",
                   "sequined", "beaded", "studded", "bow"],
    "pocket type": ["flap type", "patch", "zippered", "welt",
                    "seam", "cargo", "kangaroo", "curved"],
    "fit": ["tight", "relaxed", "oversized", "tailored", "fitted",
            "semi fitted", "skinny", "baggy"],
    "texture": ["smooth", "ribbed", "quilted", "distressed", "brushed",
                "waffle", "crinkled", "glossy"],
}

# How strongly attribute values shape the feature relative to the category.
_VALUE_SCALE = 0.5


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered attribute types and the value inventory of each."""

    attribute_types: tuple[str, ...]
    values_per_type: dict[str, tuple[str, ...]]

    def validate(self) -> None:
        if len(set(self.attribute_types)) != len(self.attribute_types):
            raise ConfigurationError("attribute type names must be distinct")
        for t in self.attribute_types:
            values = self.values_per_type.get(t, ())
            if len(values) < 2:
                raise ConfigurationError(f"attribute type {t!r} needs at least 2 values")
            if len(set(values)) != len(values):
                raise ConfigurationError(f"attribute type {t!r} has duplicate values")
            if not t or any(not v for v in values):
                raise ConfigurationError("attribute names must be non-empty")


@dataclass
class Garment:
    id: str
    category: str
    attributes: dict[str, str]
    feature: np.ndarray


@dataclass
class Outfit:
    id: str
    members: tuple[str, ...]


@dataclass(frozen=True)
class CorpusConfig:
    n_categories: int = 8
    n_attribute_types: int = 6
    n_values_per_type: int = 5
    n_garments: int = 500
    n_outfits: int = 120
    d_feat: int = 32
    style_coherence: float = 0.9
    feature_noise_sigma: float = 0.25
    attr_presence: float = 0.7
    max_outfit_size: int = 4
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)
    seed: int = 7

    def validate(self) -> None:
        if self.n_garments <= 0:
            raise ConfigurationError("n_garments must be positive")
        if self.n_outfits <= 0:
            raise ConfigurationError("n_outfits must be positive")
        if self.n_categories < 2:
            raise ConfigurationError("n_categories must be at least 2 (outfits mix categories)")
        if self.n_attribute_types < 1:
            raise ConfigurationError("n_attribute_types must be positive")
        if self.n_values_per_type < 2:
            raise ConfigurationError("n_values_per_type must be at least 2")
        if self.d_feat < self.n_categories:
            raise ConfigurationError(
                f"d_feat ({self.d_feat}) must be >= n_categories ({self.n_categories})"
            )
        if self.n_garments < self.n_categories:
            raise ConfigurationError("n_garments must be >= n_categories")
        if not 0.0 <= self.style_coherence <= 1.0:
            raise ConfigurationError("style_coherence must lie in [0, 1]")
        if self.feature_noise_sigma < 0.0:
            raise ConfigurationError("feature_noise_sigma must be >= 0")
        if not 0.0 < self.attr_presence <= 1.0:
            raise ConfigurationError("attr_presence must lie in (0, 1]")
        if self.max_outfit_size < 2:
            raise ConfigurationError("max_outfit_size must be at least 2")
        fr = self.split_fractions
        if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigurationError("split_fractions must be three non-negative values summing to 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["split_fractions"] = list(self.split_fractions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown corpus config field: {sorted(unknown)[0]}")
        kwargs = dict(d)
        if "split_fractions" in kwargs:
            kwargs["split_fractions"] = tuple(kwargs["split_fractions"])
        return cls(**kwargs)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Corpus:
    schema: AttributeSchema
    categories: tuple[str, ...]
    garments: dict[str, Garment]
    outfits: dict[str, Outfit]
    split_of: dict[str, str]
    config: CorpusConfig | None = None
    _by_category_split: dict = field(default_factory=dict, repr=False, compare=False)

    def d_feat(self) -> int:
        first = next(iter(self.garments.values()))
        return int(first.feature.shape[0])

    def ids_in_split(self, split: str) -> list[str]:
        return sorted(g for g, s in self.split_of.items() if s == split)

    def outfits_in_split(self, split: str) -> list[Outfit]:
        return [
            o for _, o in sorted(self.outfits.items())
            if self.split_of[o.members[0]] == split
        ]

    def same_category_ids(self, category: str, split: str) -> list[str]:
        key = (category, split)
        if key not in self._by_category_split:
            self._by_category_split[key] = [
                gid for gid in self.ids_in_split(split)
                if self.garments[gid].category == category
            ]
        return self._by_category_split[key]

    def feature_matrix(self, ids: list[str]) -> np.ndarray:
        return np.stack([self.garments[g].feature for g in ids], axis=0)

    def validate(self) -> None:
        self.schema.validate()
        for gid, g in self.garments.items():
            if g.category not in self.categories:
                raise CorpusFormatError(f"garment {gid}: unknown category {g.category!r}")
            for t, v in g.attributes.items():
                if t not in self.schema.values_per_type or v not in self.schema.values_per_type[t]:
                    raise CorpusFormatError(f"garment {gid}: unknown attribute {t!r}={v!r}")
            norm = float(np.linalg.norm(g.feature))
            if abs(norm - 1.0) > 1e-6:
                raise CorpusFormatError(f"garment {gid}: feature norm {norm} is not 1")
        if set(self.split_of) != set(self.garments):
            raise CorpusFormatError("split assignment does not partition the garments")
        for s in self.split_of.values():
            if s not in SPLITS:
                raise CorpusFormatError(f"unknown split name {s!r}")
        for oid, o in self.outfits.items():
            if len(o.members) < 2:
                raise CorpusFormatError(f"outfit {oid}: needs at least 2 members")
            if len(set(o.members)) != len(o.members):
                raise CorpusFormatError(f"outfit {oid}: duplicate members")
            cats = []
            for gid in o.members:
                if gid not in self.garments:
                    raise CorpusFormatError(f"outfit {oid}: references missing garment {gid}")
                cats.append(self.garments[gid].category)
            if len(set(cats)) != len(cats):
                raise CorpusFormatError(f"outfit {oid}: member categories are not distinct")
            member_splits = {self.split_of[gid] for gid in o.members}
            if len(member_splits) != 1:
                raise CorpusFormatError(f"outfit {oid}: members span multiple splits")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        if (
            self.schema != other.schema
            or self.categories != other.categories
            or self.split_of != other.split_of
            or sorted(self.outfits) != sorted(other.outfits)
            or sorted(self.garments) != sorted(other.garments)
        ):
            return False
        if any(self.outfits[o].members != other.outfits[o].members for o in self.outfits):
            return False
        for gid, g in self.garments.items():
            h = other.garments[gid]
            if g.category != h.category or g.attributes != h.attributes:
                return False
            if not np.array_equal(g.feature, h.feature):
                return False
        return True


def _extend(bank: list[str], n: int, base: str) -> list[str]:
    names = list(bank[:n])
    while len(names) < n:
        names.append(f"{base} {len(names) + 1}")
    return names


def build_schema(config: CorpusConfig) -> tuple[AttributeSchema, tuple[str, ...]]:
    categories = tuple(_extend(CATEGORY_BANK, config.n_categories, "garment kind"))
    types = list(ATTRIBUTE_BANK)[: config.n_attribute_types]
    while len(types) < config.n_attribute_types:
        types.append(f"facet {len(types) + 1}")
    values_per_type = {}
    for t in types:
        bank = ATTRIBUTE_BANK.get(t, [])
        values_per_type[t] = tuple(_extend(list(bank), config.n_values_per_type, f"{t} variant"))
    schema = AttributeSchema(tuple(types), values_per_type)
    schema.validate()
    return schema, categories


def generate_corpus(config: CorpusConfig) -> Corpus:
    """Pure function of config: same config, same corpus, byte for byte."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    schema, categories = build_schema(config)
    n_cat = len(categories)
    n_types = len(schema.attribute_types)
    n_vals = config.n_values_per_type
    d = config.d_feat

    cat_emb = rng.normal(size=(n_cat, d))
    val_emb = rng.normal(size=(n_types, n_vals, d)) * _VALUE_SCALE

    # outfit plans: member categories plus a style (one value index per type)
    max_size = min(config.max_outfit_size, n_cat)
    plans = []
    total_members = 0
    for _ in range(config.n_outfits):
        m = int(rng.integers(2, max_size + 1))
        cats = sorted(int(c) for c in rng.choice(n_cat, size=m, replace=False))
        style = [int(v) for v in rng.integers(0, n_vals, size=n_types)]
        plans.append((cats, style))
        total_members += m
    if total_members > config.n_garments:
        raise ConfigurationError(
            f"n_garments ({config.n_garments}) too small for {config.n_outfits} outfits "
            f"needing {total_members} members"
        )

    id_width = max(3, len(str(config.n_garments)))
    garments: dict[str, Garment] = {}
    outfits: dict[str, Outfit] = {}

    def sample_attributes(style=None) -> dict[str, str]:
        attrs = {}
        for ti, t in enumerate(schema.attribute_types):
            if rng.random() >= config.attr_presence:
                continue
            if style is not None and rng.random() < config.style_coherence:
                vi = style[ti]
            else:
                vi = int(rng.integers(0, n_vals))
            attrs[t] = schema.values_per_type[t][vi]
        return attrs

    def make_garment(idx: int, cat_idx: int, attrs: dict[str, str]) -> Garment:
        gid = f"g{idx:0{id_width}d}"
        vec = cat_emb[cat_idx].copy()
        for t, v in attrs.items():
            ti = schema.attribute_types.index(t)
            vi = schema.values_per_type[t].index(v)
            vec = vec + val_emb[ti, vi]
        if config.feature_noise_sigma > 0:
            vec = vec + rng.normal(size=d) * config.feature_noise_sigma
        vec = vec / np.linalg.norm(vec)
        return Garment(gid, categories[cat_idx], attrs, vec)

    next_idx = 1
    for oi, (cats, style) in enumerate(plans, start=1):
        member_ids = []
        for ci in cats:
            g = make_garment(next_idx, ci, sample_attributes(style))
            garments[g.id] = g
            member_ids.append(g.id)
            next_idx += 1
        outfits[f"o{oi:0{id_width}d}"] = Outfit(f"o{oi:0{id_width}d}", tuple(member_ids))

    while next_idx <= config.n_garments:
        ci = int(rng.integers(0, n_cat))
        g = make_garment(next_idx, ci, sample_attributes())
        garments[g.id] = g
        next_idx += 1

    # outfit-wise split assignment: an outfit's members always land together
    units: list[list[str]] = [list(o.members) for o in outfits.values()]
    in_outfit = {m for u in units for m in u}
    units += [[gid] for gid in garments if gid not in in_outfit]
    order = rng.permutation(len(units))
    target_train = config.split_fractions[0] * config.n_garments
    target_val = (config.split_fractions[0] + config.split_fractions[1]) * config.n_garments
    split_of: dict[str, str] = {}
    assigned = 0
    for ui in order:
        unit = units[int(ui)]
        if assigned + len(unit) / 2 < target_train:
            split = "train"
        elif assigned + len(unit) / 2 < target_val:
            split = "val"
        else:
            split = "test"
        for gid in unit:
            split_of[gid] = split
        assigned += len(unit)

    corpus = Corpus(schema, categories, garments, outfits, split_of, config)
    corpus.validate()
    return corpus


# ---------------------------------------------------------------------------
# line-delimited JSON persistence


def _dumps(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(", ", ": "))


def corpus_to_lines(corpus: Corpus) -> list[str]:
    header = {
        "kind": "schema",
        "attribute_types": list(corpus.schema.attribute_types),
        "values_per_type": {t: list(v) for t, v in corpus.schema.values_per_type.items()},
        "categories": list(corpus.categories),
        "config_hash": corpus.config.hash() if corpus.config else None,
        "config": corpus.config.to_dict() if corpus.config else None,
    }
    lines = [_dumps(header)]
    for gid in sorted(corpus.garments):
        g = corpus.garments[gid]
        lines.append(_dumps({
            "kind": "garment",
            "id": g.id,
            "category": g.category,
            "attributes": g.attributes,
            "feature": [float(x) for x in g.feature],
        }))
    for oid in sorted(corpus.outfits):
        o = corpus.outfits[oid]
        lines.append(_dumps({"kind": "outfit", "id": o.id, "members": list(o.members)}))
    for gid in sorted(corpus.split_of):
        lines.append(_dumps({"kind": "split", "id": gid, "split": corpus.split_of[gid]}))
    return lines


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in corpus_to_lines(corpus):
            fh.write(line + "\n")


def load_corpus(path) -> Corpus:
    schema = None
    categories: tuple[str, ...] = ()
    config = None
    garments: dict[str, Garment] = {}
    outfits: dict[str, Outfit] = {}
    split_of: dict[str, str] = {}

    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise CorpusFormatError(f"cannot read corpus file {path}: {exc.strerror}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            kind = rec.get("kind")
            if kind == "schema":
                schema = AttributeSchema(
                    tuple(rec["attribute_types"]),
                    {t: tuple(v) for t, v in rec["values_per_type"].items()},
                )
                categories = tuple(rec["categories"])
                if rec.get("config"):
                    config = CorpusConfig.from_dict(rec["config"])
            elif kind == "garment":
                gid = rec.get("id")
                if not gid:
                    raise CorpusFormatError(f"line {lineno}: garment record without id")
                if gid in garments:
                    raise CorpusFormatError(f"line {lineno}: duplicate garment id {gid!r}")
                garments[gid] = Garment(
                    gid,
                    rec["category"],
                    dict(rec["attributes"]),
                    np.asarray(rec["feature"], dtype=np.float64),
                )
            elif kind == "outfit":
                oid = rec.get("id")
                if oid in outfits:
                    raise CorpusFormatError(f"line {lineno}: duplicate outfit id {oid!r}")
                outfits[oid] = Outfit(oid, tuple(rec["members"]))
            elif kind == "split":
                gid = rec.get("id")
                if gid in split_of:
                    raise CorpusFormatError(f"line {lineno}: duplicate split record for {gid!r}")
                split_of[gid] = rec["split"]
            else:
                raise CorpusFormatError(f"line {lineno}: unknown record kind {kind!r}")

    if schema is None:
        raise CorpusFormatError("missing schema header record")
    if not garments:
        raise CorpusFormatError("corpus file contains no garments")
    corpus = Corpus(schema, categories, garments, outfits, split_of, config)
    corpus.validate()
    return corpus
