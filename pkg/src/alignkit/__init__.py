"""alignkit: contrastive-representation and rigid-registration diagnostics.

Contrastive InfoNCE losses with pluggable critics and bottleneck
supervision schedules, a desk-scale twin-encoder trainer, image similarity
metrics, from-scratch SIFT+RANSAC rigid registration with a synthetic
benchmark protocol, and embedding-space collapse analysis.
"""

from .contrastive import (
    CRITICS,
    PAIRINGS,
    EmbeddingSet,
    LossConfig,
    Schedule,
    critic,
    info_nce_gradient,
    info_nce_loss,
    schedule_loss,
)
from .embedding import (
    MdsSolution,
    SvSpectrum,
    collapse_metrics,
    dissimilarity_matrix,
    mds_fit,
    sammon_gradient,
    sammon_stress,
    sv_spectrum,
)
from .errors import DataError, NumericalError
from .image import Image
from .metrics import (
    SsimConfig,
    alpha_amd,
    frechet_distance,
    image_correlation,
    image_mse,
    image_ssim,
    pcc,
    pixel_features,
)
from .registration import (
    RansacConfig,
    RegistrationDiagnostics,
    RigidTransform,
    ransac_rigid,
    register_pair,
    registration_error,
    registration_success_rate,
    synthesize_test_pair,
    warp_rigid,
)
from .sift import Keypoint, SiftConfig, compute_descriptors, detect_keypoints, match_descriptors
from .synthetic import gaussian_blob, textured_image
from .toytrain import (
    OptimizerConfig,
    SyntheticPairDataset,
    TrainingTrace,
    TwinEncoderParams,
    backward,
    forward,
    run_training,
    sgd_step,
)

__version__ = "0.1.0"
