"""Module-sharing ablation: train and evaluate the four share-flag settings."""

from __future__ import annotations

import dataclasses

import numpy as np

from .corpus import Corpus
from .model import ModelConfig
from .retrieval import MetricsReport, TaskMetrics, evaluate
from .training import TrainConfig, train
from .triplets import TripletDataset

# (label, share_projection, share_compositor); "none" = fully separate branches
SHARING_VARIANTS = (
    ("none", False, False),
    ("compositor", False, True),
    ("projection", True, False),
    ("both", True, True),
)


def _mean_report(reports: list[MetricsReport]) -> MetricsReport:
    def avg(get) -> float:
        return float(np.mean([get(r) for r in reports]))

    out = MetricsReport()
    for task in ("tgr", "vcr"):
        setattr(out, task, TaskMetrics(
            r_at_10=avg(lambda r, t=task: getattr(r, t).r_at_10),
            r_at_50=avg(lambda r, t=task: getattr(r, t).r_at_50),
            map=avg(lambda r, t=task: getattr(r, t).map),
            queries=getattr(reports[0], task).queries,
            skipped=max(getattr(r, task).skipped for r in reports),
        ))
    return out


def run_ablation(
    dataset: TripletDataset,
    corpus: Corpus,
    model_config: ModelConfig,
    train_config: TrainConfig,
    split: str = "test",
    seeds: int = 1,
) -> list[tuple[str, MetricsReport]]:
    """Four configurations, each averaged over `seeds` seed offsets."""
    rows = []
    for label, share_proj, share_comp in SHARING_VARIANTS:
        reports = []
        for offset in range(seeds):
            mc = dataclasses.replace(
                model_config,
                share_projection=share_proj,
                share_compositor=share_comp,
                seed=model_config.seed + offset,
            )
            tc = dataclasses.replace(train_config, seed=train_config.seed + offset)
            model, _ = train(dataset, corpus, mc, tc)
            reports.append(evaluate(model, dataset, corpus, split))
        rows.append((label, _mean_report(reports)))
    return rows
