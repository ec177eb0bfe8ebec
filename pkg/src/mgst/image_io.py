"""Image and segmentation-mask I/O, white-noise initialisation, pixel box.

Images are float64 arrays of shape (H, W, 3) holding intensities on the
[0, 255] scale. Masks are float64 arrays of shape (H, W, C) with values in
[0, 1], one channel per semantic region.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import IoError, PairMismatch, UnknownLabel
from .rng import Lcg64

PIXEL_MIN = 0.0
PIXEL_MAX = 255.0
MIN_SIZE = 8

# Binary masks: 0 is background, 1 or 255 marks the attention region.
DEFAULT_CHANNEL_MAP = {0: None, 1: 0, 255: 0}


@dataclass(frozen=True)
class RgbMaskPair:
    image: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        check_image(self.image)
        check_mask(self.mask)
        if self.image.shape[:2] != self.mask.shape[:2]:
            raise PairMismatch(
                f"image is {self.image.shape[1]}x{self.image.shape[0]} but "
                f"mask is {self.mask.shape[1]}x{self.mask.shape[0]}"
            )

    @property
    def height(self):
        return self.image.shape[0]

    @property
    def width(self):
        return self.image.shape[1]

    @property
    def n_regions(self):
        return self.mask.shape[2]


def check_image(image):
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {image.shape}")
    if image.shape[0] < MIN_SIZE or image.shape[1] < MIN_SIZE:
        raise ValueError(f"image must be at least {MIN_SIZE}x{MIN_SIZE}, got {image.shape[:2]}")


def check_mask(mask):
    if mask.ndim != 3 or mask.shape[2] < 1:
        raise ValueError(f"expected an (H, W, C) mask, got shape {mask.shape}")
    if mask.min() < 0.0 or mask.max() > 1.0:
        raise ValueError("mask values must lie in [0, 1]")
    if mask.sum(axis=2).max() > 1.0 + 1e-6:
        raise ValueError("mask channels must sum to at most 1 at every pixel")


def parse_channel_map(text):
    """Parse ``"0=none,1=0,255=0"`` into ``{0: None, 1: 0, 255: 0}``.

    A channel of ``none`` (or ``-``, ``-1``) marks a label that belongs to no
    region.
    """
    mapping = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        label, sep, channel = item.partition("=")
        if not sep:
            raise ValueError(f"channel map entry {item!r} is not of the form label=channel")
        label = int(label)
        if not 0 <= label <= 255:
            raise ValueError(f"label {label} is outside the 8-bit range")
        channel = channel.strip().lower()
        if channel in ("none", "-", "-1", "bkgd", ""):
            mapping[label] = None
        else:
            idx = int(channel)
            if idx < 0:
                raise ValueError(f"negative channel index {idx}")
            mapping[label] = idx
    if not any(v is not None for v in mapping.values()):
        raise ValueError("channel map assigns no label to a channel")
    return mapping


def _open(path):
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError as exc:
        raise IoError(f"{path}: file not found") from exc
    except (UnidentifiedImageError, OSError) as exc:
        raise IoError(f"{path}: cannot read image ({exc})") from exc
    return img


def load_image(path):
    img = _open(path)
    if img.mode not in ("RGB", "RGBA", "L", "P"):
        raise IoError(f"{path}: unsupported PNG mode {img.mode}")
    data = np.asarray(img.convert("RGB"), dtype=np.float64)
    return np.ascontiguousarray(data)


def load_labels(path):
    """Return the mask file as an (H, W) uint8 label image.

    Greyscale and palette PNGs give their stored values directly (palette
    index for ``P``). An RGB file is accepted only when it is grey (R=G=B).
    """
    img = _open(path)
    if img.mode in ("L", "P"):
        return np.asarray(img, dtype=np.uint8)
    if img.mode == "LA":
        return np.asarray(img, dtype=np.uint8)[..., 0]
    if img.mode in ("RGB", "RGBA"):
        rgb = np.asarray(img, dtype=np.uint8)[..., :3]
        if not (np.array_equal(rgb[..., 0], rgb[..., 1]) and np.array_equal(rgb[..., 0], rgb[..., 2])):
            raise IoError(f"{path}: RGB label masks must be grey (R=G=B)")
        return rgb[..., 0].copy()
    raise IoError(f"{path}: unsupported mask mode {img.mode}")


def labels_to_mask(labels, channel_map):
    present = np.unique(labels)
    unknown = [int(v) for v in present if int(v) not in channel_map]
    if unknown:
        raise UnknownLabel(f"mask labels {unknown} are not in the channel map")
    n_channels = 1 + max(v for v in channel_map.values() if v is not None)
    mask = np.zeros(labels.shape + (n_channels,), dtype=np.float64)
    for label, channel in channel_map.items():
        if channel is not None:
            mask[labels == label, channel] = 1.0
    return mask


def load_rgb_mask_pair(image_path, mask_path, channel_map=None):
    if channel_map is None:
        channel_map = DEFAULT_CHANNEL_MAP
    image = load_image(image_path)
    labels = load_labels(mask_path)
    if labels.shape != image.shape[:2]:
        raise PairMismatch(
            f"{image_path} is {image.shape[1]}x{image.shape[0]} but "
            f"{mask_path} is {labels.shape[1]}x{labels.shape[0]}"
        )
    return RgbMaskPair(image, labels_to_mask(labels, channel_map))


def init_white_noise(height, width, seed):
    """I.i.d. uniform intensities on [0, 255), a pure function of its arguments."""
    if height < MIN_SIZE or width < MIN_SIZE:
        raise ValueError(f"noise image must be at least {MIN_SIZE}x{MIN_SIZE}")
    draws = Lcg64(seed).uniform(height * width * 3)
    return (draws * PIXEL_MAX).reshape(height, width, 3)


def project_pixels(image):
    return np.clip(image, PIXEL_MIN, PIXEL_MAX)


def to_bytes(image):
    return np.rint(project_pixels(image)).astype(np.uint8)


def save_image(image, path):
    path = Path(path)
    if image.min() < PIXEL_MIN or image.max() > PIXEL_MAX:
        raise ValueError("image values must lie in [0, 255]; project before saving")
    try:
        Image.fromarray(to_bytes(image)).save(path, format="PNG")
    except OSError as exc:
        raise IoError(f"{path}: cannot write image ({exc})") from exc


def save_labels(labels, path):
    path = Path(path)
    try:
        Image.fromarray(np.asarray(labels, dtype=np.uint8)).save(path, format="PNG")
    except OSError as exc:
        raise IoError(f"{path}: cannot write mask ({exc})") from exc
