"""Losses and the optimization loop.

Each training step consumes a batch of quintuplets: one reference per branch,
one feedback sentence per branch, one target per branch. Both branches get a
batch-contrastive loss over cosine similarities; the branch classifier gets a
cross-entropy term; the three sum unweighted.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import Corpus
from .errors import ConfigurationError, NumericError, UsageError
from .model import ModelConfig, MultiTaskModel, Vocabulary
from .triplets import TripletDataset


@dataclass(frozen=True)
class Quintuplet:
    """Joint training example. The substitute reference fields matter only when
    a reference has triplets for one task and borrows a partner for the other;
    each branch still trains on a genuine (reference, signal, target) triple."""

    reference_id: str
    vcr_signal: str
    tgr_signal: str
    vcr_target_id: str
    tgr_target_id: str
    vcr_reference_id: str | None = None
    tgr_reference_id: str | None = None

    @property
    def vcr_ref(self) -> str:
        return self.vcr_reference_id or self.reference_id

    @property
    def tgr_ref(self) -> str:
        return self.tgr_reference_id or self.reference_id


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    temperature: float = 0.0625
    epochs: int = 30
    base_lr: float = 2e-4
    warmup_epochs: int = 5
    decay_epochs: tuple[int, ...] = (15, 25)
    decay_factor: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    checked: bool = True
    single_task: str | None = None
    checkpoint_every: int = 0

    def validate(self) -> None:
        if self.temperature <= 0:
            raise ConfigurationError("temperature must be positive")
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be >= 2 for a batch contrast")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.decay_epochs and self.warmup_epochs >= min(self.decay_epochs):
            raise ConfigurationError("warmup must finish before the first decay epoch")
        if self.single_task not in (None, "tgr", "vcr"):
            raise ConfigurationError("single_task must be tgr, vcr, or unset")
        if self.base_lr <= 0 or not 0 < self.decay_factor <= 1:
            raise ConfigurationError("base_lr must be positive and decay_factor in (0, 1]")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["decay_epochs"] = list(self.decay_epochs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown train config field: {sorted(unknown)[0]}")
        kwargs = dict(d)
        if "decay_epochs" in kwargs:
            kwargs["decay_epochs"] = tuple(kwargs["decay_epochs"])
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# losses


def bbc_loss(composed: Tensor, targets: Tensor, temperature: float) -> Tensor:
    """Batch contrast: each composed query must pick out its own target among
    the batch's targets under cosine similarity scaled by 1/temperature."""
    if composed.shape[0] == 0:
        raise UsageError("empty batch")
    if composed.shape[0] != targets.shape[0]:
        raise UsageError(
            f"batch sizes differ: {composed.shape[0]} composed vs {targets.shape[0]} targets"
        )
    if temperature <= 0:
        raise UsageError("temperature must be positive")
    b = composed.shape[0]
    sims = ad.cosine_similarity_matrix(composed, targets)
    logp = ad.log(ad.softmax(ad.scalar_mul(sims, 1.0 / temperature)))
    diag = Tensor(np.eye(b), requires_grad=False)
    return ad.scalar_mul(ad.mean(ad.mul(logp, diag)), -float(b))


def branch_ce_loss(vcr_signal_feats: Tensor, tgr_signal_feats: Tensor, model: MultiTaskModel) -> Tensor:
    """Classifier must emit index 0 for compatibility signals, 1 for edit signals."""
    if vcr_signal_feats.shape[0] == 0 or tgr_signal_feats.shape[0] == 0:
        raise UsageError("empty batch")
    if vcr_signal_feats.shape[0] != tgr_signal_feats.shape[0]:
        raise UsageError("branch batches must have equal size")
    b = vcr_signal_feats.shape[0]
    terms = []
    for feats, column in ((vcr_signal_feats, 0), (tgr_signal_feats, 1)):
        logp = ad.log(ad.softmax(model.classify_logits(feats)))
        sel = np.zeros((b, 2))
        sel[:, column] = 1.0
        picked = ad.mul(logp, Tensor(sel, requires_grad=False))
        terms.append(ad.scalar_mul(ad.mean(picked), -2.0))
    return ad.add(terms[0], terms[1])


def total_loss(bbc_v: Tensor, bbc_t: Tensor, ce: Tensor) -> Tensor:
    return ad.add(ad.add(bbc_v, bbc_t), ce)


def quintuplet_losses(
    model: MultiTaskModel, corpus: Corpus, batch: list[Quintuplet], temperature: float
) -> tuple[Tensor, dict[str, float]]:
    refs_v = np.stack([corpus.garments[q.vcr_ref].feature for q in batch])
    refs_t = np.stack([corpus.garments[q.tgr_ref].feature for q in batch])
    tgts_v = np.stack([corpus.garments[q.vcr_target_id].feature for q in batch])
    tgts_t = np.stack([corpus.garments[q.tgr_target_id].feature for q in batch])
    sig_v = model.encode_signal_batch([q.vcr_signal for q in batch])
    sig_t = model.encode_signal_batch([q.tgr_signal for q in batch])
    composed_v = model.compose("vcr", model.encode_image(refs_v), sig_v)
    composed_t = model.compose("tgr", model.encode_image(refs_t), sig_t)
    bbc_v = bbc_loss(composed_v, model.encode_image(tgts_v), temperature)
    bbc_t = bbc_loss(composed_t, model.encode_image(tgts_t), temperature)
    ce = branch_ce_loss(sig_v, sig_t, model)
    total = total_loss(bbc_v, bbc_t, ce)
    parts = {
        "loss_bbc_v": float(bbc_v.data),
        "loss_bbc_t": float(bbc_t.data),
        "loss_ce": float(ce.data),
    }
    return total, parts


# ---------------------------------------------------------------------------
# schedule and optimizer


def lr_at(config: TrainConfig, epoch: int) -> float:
    if not 0 <= epoch < config.epochs:
        raise UsageError(f"epoch {epoch} outside [0, {config.epochs})")
    if epoch < config.warmup_epochs:
        start = config.base_lr / 10.0
        return start + (config.base_lr - start) * epoch / config.warmup_epochs
    decays = sum(1 for d in config.decay_epochs if epoch >= d)
    return config.base_lr * config.decay_factor**decays


class Adam:
    def __init__(self, params: list[tuple[str, Tensor]], config: TrainConfig):
        self.params = params
        self.beta1 = config.adam_beta1
        self.beta2 = config.adam_beta2
        self.eps = config.adam_eps
        self.m = {name: np.zeros_like(t.data) for name, t in params}
        self.v = {name: np.zeros_like(t.data) for name, t in params}
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        for name, p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / (1 - self.beta1**self.t)
            v_hat = self.v[name] / (1 - self.beta2**self.t)
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# quintuplet assembly


def build_quintuplets(
    dataset: TripletDataset, rng: np.random.Generator, split: str = "train"
) -> list[Quintuplet]:
    """One epoch's examples: one pass over the larger task's triplets, each
    joined with a same-reference triplet of the other task when one exists,
    otherwise with a uniformly borrowed one."""
    tgr = dataset.triplets(split, "tgr")
    vcr = dataset.triplets(split, "vcr")
    if not tgr or not vcr:
        raise ConfigurationError(f"split {split!r} needs triplets for both tasks")
    major, minor = (tgr, vcr) if len(tgr) >= len(vcr) else (vcr, tgr)
    minor_by_ref: dict[str, list] = {}
    for t in minor:
        minor_by_ref.setdefault(t.reference_id, []).append(t)
    cycle: dict[str, int] = {}
    quints = []
    for i in rng.permutation(len(major)):
        a = major[int(i)]
        partners = minor_by_ref.get(a.reference_id)
        if partners:
            b = partners[cycle.get(a.reference_id, 0) % len(partners)]
            cycle[a.reference_id] = cycle.get(a.reference_id, 0) + 1
        else:
            b = minor[int(rng.integers(len(minor)))]
        sa = a.feedback[int(rng.integers(2))]
        sb = b.feedback[int(rng.integers(2))]
        t_trip, t_sig = (a, sa) if a.task == "tgr" else (b, sb)
        v_trip, v_sig = (a, sa) if a.task == "vcr" else (b, sb)
        quints.append(Quintuplet(
            reference_id=a.reference_id,
            vcr_signal=v_sig,
            tgr_signal=t_sig,
            vcr_target_id=v_trip.target_id,
            tgr_target_id=t_trip.target_id,
            vcr_reference_id=v_trip.reference_id,
            tgr_reference_id=t_trip.reference_id,
        ))
    return quints


# ---------------------------------------------------------------------------
# training loop


def train(
    dataset: TripletDataset,
    corpus: Corpus,
    model_config: ModelConfig,
    train_config: TrainConfig,
    log_path=None,
    checkpoint_path=None,
) -> tuple[MultiTaskModel, list[dict]]:
    model_config.validate()
    train_config.validate()
    ad.set_checked(train_config.checked)
    vocab = Vocabulary.build(corpus)
    model = MultiTaskModel(vocab, corpus.d_feat(), model_config)
    optimizer = Adam(model.params(), train_config)
    rng = np.random.default_rng(train_config.seed)
    history: list[dict] = []
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(train_config.epochs):
            lr = lr_at(train_config, epoch)
            started = time.perf_counter()
            if train_config.single_task is None:
                stream = build_quintuplets(dataset, rng)
            else:
                trips = dataset.triplets("train", train_config.single_task)
                if not trips:
                    raise ConfigurationError(f"no {train_config.single_task} triplets to train on")
                order = rng.permutation(len(trips))
                picks = rng.integers(2, size=len(trips))
                stream = [(trips[int(i)], trips[int(i)].feedback[int(picks[int(i)])]) for i in order]
            sums = {"loss_bbc_v": 0.0, "loss_bbc_t": 0.0, "loss_ce": 0.0}
            n_batches = 0
            for lo in range(0, len(stream), train_config.batch_size):
                batch = stream[lo : lo + train_config.batch_size]
                if len(batch) < 2:
                    continue
                model.zero_grad()
                try:
                    if train_config.single_task is None:
                        loss, parts = quintuplet_losses(model, corpus, batch, train_config.temperature)
                    else:
                        loss, parts = _pair_loss(model, corpus, batch, train_config)
                    if not np.isfinite(loss.data):
                        raise NumericError("loss is not finite")
                except NumericError as exc:
                    raise NumericError(
                        f"epoch {epoch} batch {n_batches}: {exc}"
                    ) from exc
                ad.backward(loss)
                optimizer.step(lr)
                for key in sums:
                    sums[key] += parts[key]
                n_batches += 1
            entry = {
                "epoch": epoch,
                "lr": lr,
                **{k: (sums[k] / n_batches if n_batches else 0.0) for k in sums},
                "wall_ms": (time.perf_counter() - started) * 1000.0,
            }
            history.append(entry)
            if log_fh:
                log_fh.write(json.dumps(entry) + "\n")
                log_fh.flush()
            if (
                checkpoint_path
                and train_config.checkpoint_every
                and (epoch + 1) % train_config.checkpoint_every == 0
            ):
                model.save(checkpoint_path)
    finally:
        if log_fh:
            log_fh.close()
    if checkpoint_path:
        model.save(checkpoint_path)
    return model, history


def _pair_loss(model, corpus, batch, train_config):
    task = train_config.single_task
    refs = np.stack([corpus.garments[t.reference_id].feature for t, _ in batch])
    tgts = np.stack([corpus.garments[t.target_id].feature for t, _ in batch])
    sig = model.encode_signal_batch([s for _, s in batch])
    composed = model.compose(task, model.encode_image(refs), sig)
    loss = bbc_loss(composed, model.encode_image(tgts), train_config.temperature)
    parts = {"loss_bbc_v": 0.0, "loss_bbc_t": 0.0, "loss_ce": 0.0}
    parts["loss_bbc_t" if task == "tgr" else "loss_bbc_v"] = float(loss.data)
    return loss, parts
