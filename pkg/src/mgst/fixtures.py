"""Deterministic synthetic eye images for tests, benchmarks and gradient checks.

The content image imitates an outdoor photograph: uneven illumination,
sensor noise, a dark pupil disk. The style image imitates a rendered eye:
flat skin, crisp pupil in a different position. Both come with a one-channel
pupil mask.
"""

import numpy as np

from .image_io import RgbMaskPair, project_pixels
from .rng import Lcg64

TOY_SEED = 2019
TOY_SIZE = 32


def disk_mask(height, width, cx, cy, radius):
    yy, xx = np.mgrid[0:height, 0:width]
    return (((xx - cx) ** 2 + (yy - cy) ** 2) <= radius ** 2).astype(np.float64)


def content_pair(size=TOY_SIZE, seed=TOY_SEED):
    h = w = size
    noise = Lcg64(seed).centered(h * w * 3).reshape(h, w, 3)
    yy, xx = np.mgrid[0:h, 0:w] / max(size - 1, 1)
    shade = 0.55 + 0.45 * (0.6 * xx + 0.4 * yy)
    skin = np.array([205.0, 160.0, 130.0])
    image = shade[..., None] * skin[None, None, :] + 18.0 * noise
    c = (size - 1) / 2.0
    pupil = disk_mask(h, w, c, c, size * 0.22)
    image = image * (1 - pupil[..., None]) + pupil[..., None] * (np.array([45.0, 35.0, 30.0]) + 12.0 * noise)
    return RgbMaskPair(project_pixels(image), pupil[..., None])


def style_pair(size=TOY_SIZE, seed=TOY_SEED + 1):
    h = w = size
    noise = Lcg64(seed).centered(h * w * 3).reshape(h, w, 3)
    image = np.empty((h, w, 3))
    image[...] = np.array([225.0, 200.0, 185.0])
    image += 4.0 * noise
    pupil = disk_mask(h, w, size * 0.4, size * 0.55, size * 0.25)
    image[pupil > 0] = np.array([15.0, 20.0, 60.0]) + 4.0 * noise[pupil > 0]
    return RgbMaskPair(project_pixels(image), pupil[..., None])


def toy_pairs(size=TOY_SIZE, seed=TOY_SEED):
    """(content, style) pairs of side ``size``; ``size`` must be a multiple of 4."""
    return content_pair(size, seed), style_pair(size, seed + 1)


def random_instance(size, seed):
    """Random content, style and output images with blob masks, for gradient checks."""
    rng = np.random.default_rng(seed)

    def blob():
        cx, cy = rng.uniform(size * 0.3, size * 0.7, 2)
        return disk_mask(size, size, cx, cy, rng.uniform(size * 0.15, size * 0.35))[..., None]

    content = RgbMaskPair(rng.uniform(0, 255, (size, size, 3)), blob())
    style = RgbMaskPair(rng.uniform(0, 255, (size, size, 3)), blob())
    output = rng.uniform(0, 255, (size, size, 3))
    return content, style, output
