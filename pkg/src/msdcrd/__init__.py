"""Multi-scale decoupled contrastive distillation kernels.

Feature maps are pooled into multi-scale sample sets, filtered and weighted
by teacher confidence, and aligned with sample-wise and feature-wise
contrastive losses carrying exact analytic gradients. A linear-kernel CKA
toolkit and a file-based CLI round out the package.
"""

from .cka import ActivationSet, CKAHeatmap, cka, gram, heatmap, hsic, load_activation_set
from .errors import (DegenerateRepresentationError, EmptySelectionError,
                     HeaderError, ManifestError, TensorIOError,
                     TruncatedPayloadError, UnsupportedDTypeError)
from .losses import (LossConfig, LossResult, Projector, backward,
                     feature_wise_loss, project, sample_wise_loss, task_loss,
                     total_loss, total_loss_forward)
from .manifest import BatchManifest, build_scale_spec, load_batch_manifest
from .npyio import load_f64, read_tensor, write_tensor
from .numerics import cosine_matrix, cosine_similarity, l2_normalize, softmax
from .pooling import (PooledSet, ScaleSpec, Window, multi_scale_pool,
                      pool_backward, window_layout)
from .selection import (DEFAULT_ALPHA, DEFAULT_BETA, ClassifierHead,
                        ConfidenceTable, SelectionWeights, Thresholds,
                        confidence, confidence_histogram, feature_mask,
                        sample_weights)

__version__ = "0.1.0"

__all__ = [
    "ActivationSet", "BatchManifest", "CKAHeatmap", "ClassifierHead",
    "ConfidenceTable", "DegenerateRepresentationError", "EmptySelectionError",
    "HeaderError", "LossConfig", "LossResult", "ManifestError", "PooledSet",
    "Projector", "ScaleSpec", "SelectionWeights", "TensorIOError",
    "Thresholds", "TruncatedPayloadError", "UnsupportedDTypeError", "Window",
    "backward", "build_scale_spec", "cka", "confidence",
    "confidence_histogram", "cosine_matrix", "cosine_similarity",
    "feature_mask", "feature_wise_loss", "gram", "heatmap", "hsic",
    "l2_normalize", "load_activation_set", "load_batch_manifest", "load_f64",
    "multi_scale_pool", "pool_backward", "project", "read_tensor",
    "sample_weights", "sample_wise_loss", "softmax", "task_loss",
    "total_loss", "total_loss_forward", "window_layout", "write_tensor",
    "DEFAULT_ALPHA", "DEFAULT_BETA",
]
