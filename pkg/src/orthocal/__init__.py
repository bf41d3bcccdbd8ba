"""Closed-form debiasing of vision-language text embeddings.

Builds orthogonal projectors from spurious-prompt embeddings, calibrates them
with positive pairs (a ridge-style SPD solve with an SVD cross-check), and
evaluates the result with group-robustness, ranked-retrieval skew, and
attribute-balance metrics.  Everything operates on precomputed embeddings in
a small file interchange format; see the README for the CLI pipeline.
"""

from .interchange import (
    EmbeddingMatrix,
    GroupedEvalSet,
    InterchangeError,
    ManifestEntry,
    PromptManifest,
    extract_pairs,
    load_dataset,
    load_embeddings,
    load_grouped_eval_set,
    save_embeddings,
)
from .projection import (
    AppliedProjection,
    PositivePairSet,
    ProjectionResult,
    SpuriousBasis,
    apply_projection,
    calibrated_projection,
    calibration_loss,
    calibration_matrix,
    calibration_matrix_svd,
    equalization_loss,
    equalize_embedding,
    load_projection,
    orthogonal_projection,
    pair_difference_matrix,
    save_projection,
)
from .zeroshot import ClassifierWeights, GroupReport, bias_probe, build_classifier, group_report, predict
from .fairness import (
    AttributeDistribution,
    RankedList,
    classify_attributes,
    discrepancy,
    max_skew,
    pair_gap,
    rank_by_query,
)

__version__ = "0.1.0"

__all__ = [
    "AppliedProjection",
    "AttributeDistribution",
    "ClassifierWeights",
    "EmbeddingMatrix",
    "GroupReport",
    "GroupedEvalSet",
    "InterchangeError",
    "ManifestEntry",
    "PositivePairSet",
    "ProjectionResult",
    "PromptManifest",
    "RankedList",
    "SpuriousBasis",
    "apply_projection",
    "bias_probe",
    "build_classifier",
    "calibrated_projection",
    "calibration_loss",
    "calibration_matrix",
    "calibration_matrix_svd",
    "classify_attributes",
    "discrepancy",
    "equalization_loss",
    "equalize_embedding",
    "extract_pairs",
    "group_report",
    "load_dataset",
    "load_embeddings",
    "load_grouped_eval_set",
    "load_projection",
    "max_skew",
    "orthogonal_projection",
    "pair_difference_matrix",
    "pair_gap",
    "predict",
    "rank_by_query",
    "save_embeddings",
    "save_projection",
    "__version__",
]
