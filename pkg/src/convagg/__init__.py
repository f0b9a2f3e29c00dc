"""Selective conv-feature aggregation into global image descriptors.

The pipeline turns a serialized activation tensor into one compact vector:
selection mask, PCA, per-descriptor embedding, democratic (or plain)
pooling, power-law and rotation normalization, and an optional binary
hashing stage. Retrieval over indexed corpora is evaluated with junk-aware
mean average precision.
"""

from .aggregation import (
    AggregationConfig,
    aggregate_democratic,
    aggregate_pool,
    democratic_weights,
)
from .codebooks import Codebook, DiagonalGmm, assign_nearest, fit_gmm, fit_kmeans, gmm_posteriors
from .config import PRESETS, PipelineConfig, apply_preset
from .embedding import (
    TembProjection,
    embed_fv,
    embed_temb,
    embed_temb_raw,
    embed_vlad,
    embedding_dim,
    fit_temb_projection,
)
from .errors import ConfigError, ConvaggError, DataError
from .hashing import ItqModel, encode_itq, fit_itq
from .masking import (
    SelectionMask,
    apply_mask,
    compute_mask,
    compute_max_mask,
    compute_sift_mask,
    compute_sum_mask,
    mask_stats,
    stack_hypercolumn,
)
from .model import PipelineModel, load_model, save_model
from .pipeline import encode_corpus, encode_image, fit_pipeline, run_eval
from .postprocessing import RnModel, apply_rn, fit_rn, power_normalize
from .preprocessing import PcaModel, apply_pca, fit_pca
from .retrieval import (
    GroundTruth,
    QueryGroundTruth,
    RankedList,
    average_precision,
    mean_ap,
    parse_oxford_gt,
    search_cosine,
    search_hamming,
)
from .storage import (
    BinaryCodeFile,
    FeatureTensor,
    GlobalDescriptorFile,
    KeypointList,
    load_codes,
    load_descriptors,
    load_keypoints,
    load_tensor,
    read_tensor,
    save_codes,
    save_descriptors,
    save_keypoints,
    save_tensor,
    write_tensor,
)

__version__ = "0.1.0"
