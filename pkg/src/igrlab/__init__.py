"""Desk-scale workbench for interactive garment retrieval.

Synthetic corpus generation, paired-task benchmark construction, a two-branch
retrieval model trained with batch-contrastive losses, evaluation, reporting,
and an HTTP service for interactive sessions.
"""

from .corpus import (
    AttributeSchema,
    Corpus,
    CorpusConfig,
    Garment,
    Outfit,
    generate_corpus,
    load_corpus,
    save_corpus,
)
from .errors import (
    ConfigurationError,
    CorpusFormatError,
    IgrlabError,
    NotFoundError,
    NumericError,
    ShapeError,
    UsageError,
)
from .model import ModelConfig, MultiTaskModel, Vocabulary
from .retrieval import (
    GalleryIndex,
    MetricsReport,
    RankedResult,
    build_gallery,
    evaluate,
    export_embeddings,
    mean_average_precision,
    recall_at_k,
    retrieve,
)
from .training import Quintuplet, TrainConfig, bbc_loss, branch_ce_loss, build_quintuplets, lr_at, total_loss, train
from .triplets import (
    CorrelationMatrix,
    PipelineConfig,
    PromptTemplate,
    RelativeDiff,
    Triplet,
    TripletDataset,
    attribute_correlation,
    build_dataset,
    generate_tgr_feedback,
    generate_vcr_feedback,
    load_dataset,
    load_templates,
    relative_diff,
    save_dataset,
    select_tgr_pairs,
    select_vcr_pairs,
)

__version__ = "0.1.0"
