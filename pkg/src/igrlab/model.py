"""Two-branch retrieval model over the autodiff engine.

Shared image and signal encoders feed per-branch projection + compositor
stacks ("vcr" for cross-category compatibility, "tgr" for same-category
attribute edits), plus a small MLP that routes free-text feedback to a branch.
Branch modules can be shared pairwise for ablation studies.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import Corpus
from .errors import ConfigurationError, UsageError
from .triplets import _SLOT_RE, PromptTemplate, load_templates

BRANCHES = ("vcr", "tgr")

_TOKEN_CLEANUP = re.compile(r"[^\w\s-]")


def tokenize(text: str) -> list[str]:
    return _TOKEN_CLEANUP.sub(" ", text.lower()).split()


class Vocabulary:
    """Token index with reserved padding (0) and unknown (1) entries."""

    PAD = 0
    UNK = 1

    def __init__(self, tokens: list[str]):
        self.tokens = ["<pad>", "<unk>"] + list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ConfigurationError("vocabulary tokens must be distinct")

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def build(cls, corpus: Corpus, templates: list[PromptTemplate] | None = None) -> "Vocabulary":
        templates = templates if templates is not None else load_templates()
        words: set[str] = set()
        for t in templates:
            words.update(tokenize(_SLOT_RE.sub(" ", t.text)))
        for c in corpus.categories:
            words.update(tokenize(c))
        for t in corpus.schema.attribute_types:
            words.update(tokenize(t))
            for v in corpus.schema.values_per_type[t]:
                words.update(tokenize(v))
        return cls(sorted(words))

    def encode(self, sentence: str) -> list[int]:
        ids = [self.index.get(tok, self.UNK) for tok in tokenize(sentence)]
        if not ids:
            raise UsageError(f"sentence {sentence!r} has no tokens")
        return ids


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    classifier_hidden: int = 64
    share_projection: bool = False
    share_compositor: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.d_model < 1 or self.classifier_hidden < 1:
            raise ConfigurationError("model dimensions must be positive")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown model config field: {sorted(unknown)[0]}")
        return cls(**d)


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear:
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int):
        self.weight = Tensor(_uniform(rng, d_in, (d_in, d_out)), requires_grad=True)
        self.bias = Tensor(_uniform(rng, d_in, (d_out,)), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.weight), self.bias)

    def params(self) -> list[tuple[str, Tensor]]:
        return [("weight", self.weight), ("bias", self.bias)]


class TirgCompositor:
    """Gated residual fusion: sigmoid gate scales the image path, a residual
    path adds the joint correction, with learned mixing scalars."""

    def __init__(self, rng: np.random.Generator, d_model: int):
        d2 = 2 * d_model
        self.w_gate1 = Tensor(_uniform(rng, d2, (d2, d2)), requires_grad=True)
        self.w_gate2 = Tensor(_uniform(rng, d2, (d2, d_model)), requires_grad=True)
        self.w_res1 = Tensor(_uniform(rng, d2, (d2, d2)), requires_grad=True)
        self.w_res2 = Tensor(_uniform(rng, d2, (d2, d_model)), requires_grad=True)
        self.gate_scale = Tensor(np.array(1.0), requires_grad=True)
        self.res_scale = Tensor(np.array(0.1), requires_grad=True)

    def compose(self, x: Tensor, s: Tensor) -> Tensor:
        joint = ad.concat([x, s])
        gate = ad.sigmoid(ad.matmul(ad.relu(ad.matmul(joint, self.w_gate1)), self.w_gate2))
        res = ad.matmul(ad.relu(ad.matmul(joint, self.w_res1)), self.w_res2)
        return ad.add(
            ad.scalar_mul(ad.mul(gate, x), self.gate_scale),
            ad.scalar_mul(res, self.res_scale),
        )

    def params(self) -> list[tuple[str, Tensor]]:
        return [
            ("w_gate1", self.w_gate1), ("w_gate2", self.w_gate2),
            ("w_res1", self.w_res1), ("w_res2", self.w_res2),
            ("gate_scale", self.gate_scale), ("res_scale", self.res_scale),
        ]


class MultiTaskModel:
    def __init__(self, vocab: Vocabulary, d_feat: int, config: ModelConfig):
        config.validate()
        self.vocab = vocab
        self.d_feat = d_feat
        self.config = config
        rng = np.random.default_rng(config.seed)
        d = config.d_model
        self.embeddings = Tensor(_uniform(rng, d, (len(vocab), d)), requires_grad=True)
        self.image_encoder = Linear(rng, d_feat, d)
        self.proj = {"vcr": Linear(rng, d, d)}
        self.proj["tgr"] = self.proj["vcr"] if config.share_projection else Linear(rng, d, d)
        self.comp = {"vcr": TirgCompositor(rng, d)}
        self.comp["tgr"] = self.comp["vcr"] if config.share_compositor else TirgCompositor(rng, d)
        self.cls_hidden = Linear(rng, d, config.classifier_hidden)
        self.cls_out = Linear(rng, config.classifier_hidden, 2)

    # ---- parameters ----------------------------------------------------

    def params(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = [("embeddings", self.embeddings)]
        out += [(f"image_encoder.{n}", t) for n, t in self.image_encoder.params()]
        out += [(f"proj_vcr.{n}", t) for n, t in self.proj["vcr"].params()]
        if not self.config.share_projection:
            out += [(f"proj_tgr.{n}", t) for n, t in self.proj["tgr"].params()]
        out += [(f"comp_vcr.{n}", t) for n, t in self.comp["vcr"].params()]
        if not self.config.share_compositor:
            out += [(f"comp_tgr.{n}", t) for n, t in self.comp["tgr"].params()]
        out += [(f"cls_hidden.{n}", t) for n, t in self.cls_hidden.params()]
        out += [(f"cls_out.{n}", t) for n, t in self.cls_out.params()]
        return out

    def zero_grad(self) -> None:
        for _, t in self.params():
            t.zero_grad()

    # ---- encoders ------------------------------------------------------

    def encode_image(self, features: np.ndarray) -> Tensor:
        x = features if isinstance(features, Tensor) else Tensor(np.asarray(features))
        return self.image_encoder(x)

    def encode_signal(self, sentence: str) -> Tensor:
        ids = self.vocab.encode(sentence)
        gathered = ad.embedding_gather(self.embeddings, ids)
        return ad.mean(gathered, axis=0)

    def encode_signal_batch(self, sentences: list[str]) -> Tensor:
        return ad.stack_rows([self.encode_signal(s) for s in sentences])

    # ---- branches ------------------------------------------------------

    def _branch(self, branch: str):
        if branch not in BRANCHES:
            raise UsageError(f"unknown branch {branch!r}")
        return self.proj[branch], self.comp[branch]

    def project(self, branch: str, image_emb: Tensor) -> Tensor:
        proj, _ = self._branch(branch)
        return proj(image_emb)

    def compose(self, branch: str, image_emb: Tensor, signal_emb: Tensor) -> Tensor:
        proj, comp = self._branch(branch)
        return comp.compose(proj(image_emb), signal_emb)

    def classify_logits(self, signal_emb: Tensor) -> Tensor:
        one = signal_emb.data.ndim == 1
        x = ad.stack_rows([signal_emb]) if one else signal_emb
        logits = self.cls_out(ad.relu(self.cls_hidden(x)))
        return logits

    def classify_branch(self, signal_emb: Tensor) -> tuple[np.ndarray, str]:
        """Hard selection over the two logits; exact tie goes to "vcr"."""
        logits = self.classify_logits(signal_emb).data
        row = logits[0]
        branch = "tgr" if row[1] > row[0] else "vcr"
        return row.copy(), branch

    # ---- persistence ---------------------------------------------------

    def save(self, path) -> None:
        meta = {
            "config": self.config.to_dict(),
            "d_feat": self.d_feat,
            "vocab": self.vocab.tokens[2:],
        }
        arrays = {f"param::{name}": t.data for name, t in self.params()}
        arrays["meta"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path) -> "MultiTaskModel":
        with np.load(path) as archive:
            try:
                meta = json.loads(bytes(archive["meta"]).decode("utf-8"))
            except KeyError as exc:
                raise ConfigurationError(f"checkpoint {path} has no metadata") from exc
            config = ModelConfig.from_dict(meta["config"])
            model = cls(Vocabulary(meta["vocab"]), int(meta["d_feat"]), config)
            for name, t in model.params():
                key = f"param::{name}"
                if key not in archive:
                    raise ConfigurationError(f"checkpoint missing parameter {name}")
                stored = archive[key]
                if tuple(stored.shape) != t.shape:
                    raise ConfigurationError(
                        f"checkpoint parameter {name} has shape {tuple(stored.shape)}, "
                        f"expected {t.shape}"
                    )
                t.data = stored.astype(np.float64)
        return model
