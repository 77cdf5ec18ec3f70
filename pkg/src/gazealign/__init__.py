"""Scanpath similarity from image-patch features and local alignment.

Fixations become feature vectors (a built-in descriptor or precomputed
deep features), scanpaths are compared with a feature-distance variant of
local sequence alignment, and viewer expertise is read out by Ward
clustering and nearest-neighbor voting over the similarity matrices.
"""

__version__ = "0.1.0"

from .align import (
    AlignmentResult,
    Metric,
    ScoringParams,
    calibrate_c,
    default_gap,
    feature_distance,
    local_align,
    symbolic_align,
)
from .analysis import (
    archetype_ranking,
    cluster_expertise_report,
    cohen_kappa,
    knn_loo_classify,
    similarity_to_distance,
    ward_cluster,
)
from .embed import (
    BuiltinDescriptorProvider,
    EmbeddedScanpath,
    PrecomputedProvider,
    builtin_embed,
    embed_dataset,
    load_embeddings,
    read_dsem,
    write_dsem,
)
from .model import (
    DatasetManifest,
    Fixation,
    Group,
    Scanpath,
    StimulusImage,
    load_manifest,
    load_scanpaths,
    truncate_to_window,
    write_scanpaths,
)
from .pairwise import (
    MatrixLevel,
    SimilarityMatrix,
    aggregate_by_subject,
    all_pairs,
    export_matrix,
    load_matrix_csv,
)
from .patch import Patch, PatchConfig, extract_patch, extract_scanpath_patches
from .synth import SynthConfig, generate
