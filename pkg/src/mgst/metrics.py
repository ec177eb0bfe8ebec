"""Pupil-centre preservation between a real image and its purified version."""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyRegion, ShapeMismatch

LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class PupilCenterResult:
    center_before: tuple
    center_after: tuple
    shift: float
    eye_width: float

    @property
    def normalized_shift(self):
        return self.shift / self.eye_width


def pupil_center(image, mask, channel=0):
    """Darkness-weighted centroid ``(x, y)`` inside one mask channel.

    Pixel (row r, column c) sits at coordinates (c, r). Weights are
    ``(255 - luminance) * mask``; if the region is pure white the plain mask
    centroid is returned.
    """
    if image.shape[:2] != mask.shape[:2]:
        raise ShapeMismatch(f"image {image.shape[:2]} vs mask {mask.shape[:2]}")
    region = mask[..., channel]
    if region.sum() <= 0:
        raise EmptyRegion(f"mask channel {channel} is empty")
    darkness = 255.0 - image @ LUMA
    weights = np.clip(darkness, 0.0, None) * region
    if weights.sum() <= 0:
        weights = region
    rows, cols = np.mgrid[0:image.shape[0], 0:image.shape[1]]
    total = weights.sum()
    return float((weights * cols).sum() / total), float((weights * rows).sum() / total)


def preserve_check(pair_before, image_after, channel=0, eye_width=None):
    if image_after.shape != pair_before.image.shape:
        raise ShapeMismatch(f"after image {image_after.shape} vs before {pair_before.image.shape}")
    before = pupil_center(pair_before.image, pair_before.mask, channel)
    after = pupil_center(image_after, pair_before.mask, channel)
    shift = float(np.hypot(after[0] - before[0], after[1] - before[1]))
    if eye_width is None:
        eye_width = pair_before.width
    return PupilCenterResult(before, after, shift, float(eye_width))
