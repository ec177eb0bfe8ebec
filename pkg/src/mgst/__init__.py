"""Mask-guided style transfer for purifying real images toward a synthetic style."""

from .attention import AttentionSubnet, StreamSet, build_streams, compute_attention
from .errors import (
    EmptyRegion,
    FormatError,
    IndivisibleDims,
    IoError,
    LineSearchFailed,
    MgstError,
    NonFiniteLoss,
    PairMismatch,
    ShapeMismatch,
    UnknownLabel,
)
from .image_io import (
    RgbMaskPair,
    init_white_noise,
    load_rgb_mask_pair,
    project_pixels,
    save_image,
)
from .loss import LossReport, LossWeights, Objective, masked_gram, total_objective, tv_loss
from .metrics import PupilCenterResult, preserve_check, pupil_center
from .network import (
    NetworkSpec,
    backward,
    default_network,
    downsample_mask,
    forward,
    load_weights,
    write_weights,
)
from .optimizer import OptimizerConfig, OptimizerTrace, minimize_box, purify

__version__ = "0.1.0"
