"""
Synthetic volumetric dataset and augmentations.
"""
from dataclasses import dataclass

import numpy as np

from .. import settings
from ..utils import ShapeError, triple


__all__ = ['VolumeSample', 'synth_dataset', 'flip_sample', 'crop_sample',
           'foreground_crop', 'scale_intensity_range', 'augment']


@dataclass
class VolumeSample:
    """
    Image `(C, D, H, W)` and label: `(D, H, W)` class ids, or `(K, D, H, W)`
    binary masks for multi-label data.
    """
    image: np.ndarray
    label: np.ndarray

    def __post_init__(self):
        if self.image.ndim != 4:
            raise ShapeError('image must be (C, D, H, W), got {}'.format(
                self.image.shape))
        if self.label.shape[-3:] != self.image.shape[1:]:
            raise ShapeError('label {} does not match image {}'.format(
                self.label.shape, self.image.shape))
        if not np.all(np.isfinite(self.image)):
            raise ValueError('image holds non-finite values')

    @property
    def multi_label(self):
        return self.label.ndim == 4

    @property
    def extents(self):
        return self.image.shape[1:]

    def validate(self, num_classes):
        if not self.multi_label and self.label.size and \
                (self.label.min() < 0 or self.label.max() >= num_classes):
            raise ValueError('label ids out of [0, {})'.format(num_classes))
        return self


########################################################################
# Synthetic data
########################################################################
def _ellipsoid(shape, rng):
    """ Boolean mask of a random ellipsoid inside a volume of `shape`. """
    radii = np.array([rng.uniform(max(e / 8, 1.0), max(e / 4, 1.0))
                      for e in shape])
    center = np.array([rng.uniform(r, e - r) if e > 2 * r else e / 2
                       for r, e in zip(radii, shape)])
    grid = np.indices(shape, dtype=float) + 0.5
    dist = sum(((g - c) / r) ** 2 for g, c, r in zip(grid, center, radii))
    mask = dist <= 1.0
    # the center voxel always belongs to the ellipsoid
    mask[tuple(np.minimum(center.astype(int), np.array(shape) - 1))] = True
    return mask


def synth_sample(index, extents, num_classes, seed=0, in_channels=1,
                 noise=0.1, max_ellipsoids=3, multi_label=False):
    """
    Sample `index` of a synthetic dataset. Its generator is seeded by
    `(seed, index)`, so samples do not depend on the others.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    extents = triple(extents)
    levels = num_classes + 1 if multi_label else num_classes
    label = np.zeros(extents, dtype=np.int32)
    # rotate the painting order so that every class is painted last in some
    # sample
    foreground = [(index + j) % (levels - 1) + 1 for j in range(levels - 1)]
    for cls in foreground:
        for _ in range(rng.integers(1, max_ellipsoids + 1)):
            label[_ellipsoid(extents, rng)] = cls

    intensity = np.linspace(0.0, 1.0, levels)
    image = np.empty((in_channels,) + extents)
    for c in range(in_channels):
        image[c] = intensity[label] * (1.0 + 0.5 * c) + \
            rng.normal(0.0, noise, extents)

    if multi_label:
        # nested regions: mask k holds the classes above k
        label = np.stack([label > k for k in range(num_classes)]) \
            .astype(np.int32)
    return VolumeSample(image, label)


def synth_dataset(n, extents, num_classes, seed=0, in_channels=1,
                  noise=None, max_ellipsoids=None, multi_label=False):
    """
    Return `n` synthetic samples: 1 to `max_ellipsoids` random ellipsoids
    per foreground class on a background, the image being a class-dependent
    intensity plus Gaussian noise. When `n >= num_classes` every foreground
    class is present in at least one sample.
    """
    defaults = settings.SRM_DATA_DEFAULTS
    extents = triple(extents)
    if any(e % settings.SRM_SPATIAL_DIVISOR for e in extents):
        raise ShapeError('extents {} must be multiples of {}'.format(
            extents, settings.SRM_SPATIAL_DIVISOR))
    if num_classes < 2 and not multi_label:
        raise ValueError('at least two classes are required')
    noise = defaults['noise'] if noise is None else noise
    max_ellipsoids = max_ellipsoids or defaults['max_ellipsoids']
    return [synth_sample(i, extents, num_classes, seed, in_channels, noise,
                         max_ellipsoids, multi_label) for i in range(n)]


########################################################################
# Augmentations
########################################################################
def flip_sample(sample, axes):
    """ Flip image and label along the spatial `axes` (0, 1, 2). """
    if not axes:
        return sample
    image = np.flip(sample.image, tuple(a + 1 for a in axes))
    offset = 1 if sample.multi_label else 0
    label = np.flip(sample.label, tuple(a + offset for a in axes))
    return VolumeSample(np.ascontiguousarray(image),
                        np.ascontiguousarray(label))


def crop_sample(sample, start, extents):
    start, extents = triple(start), triple(extents)
    if any(s < 0 or s + e > n for s, e, n in zip(start, extents,
                                                sample.extents)):
        raise ShapeError('crop {} at {} exceeds volume {}'.format(
            extents, start, sample.extents))
    index = tuple(slice(s, s + e) for s, e in zip(start, extents))
    return VolumeSample(sample.image[(slice(None),) + index].copy(),
                        sample.label[(Ellipsis,) + index].copy())


def random_crop(sample, extents, rng):
    extents = triple(extents)
    if any(e > n for e, n in zip(extents, sample.extents)):
        raise ShapeError('crop {} larger than volume {}'.format(
            extents, sample.extents))
    start = [int(rng.integers(0, n - e + 1))
             for e, n in zip(extents, sample.extents)]
    return crop_sample(sample, start, extents)


def foreground_crop(sample, extents):
    """
    Crop a window of `extents` centered on the bounding box of the
    foreground (kept inside the volume).
    """
    extents = triple(extents)
    if any(e > n for e, n in zip(extents, sample.extents)):
        raise ShapeError('crop {} larger than volume {}'.format(
            extents, sample.extents))
    fg = sample.label.any(axis=0) if sample.multi_label else sample.label > 0
    if not fg.any():
        center = [n // 2 for n in sample.extents]
    else:
        coords = np.argwhere(fg)
        center = (coords.min(axis=0) + coords.max(axis=0) + 1) // 2
    start = [min(max(int(c) - e // 2, 0), n - e)
             for c, e, n in zip(center, extents, sample.extents)]
    return crop_sample(sample, start, extents)


def scale_intensity_range(image, a_min, a_max, b_min=0.0, b_max=1.0,
                          clip=True):
    """ Map intensities `[a_min, a_max]` linearly onto `[b_min, b_max]`. """
    if a_max == a_min:
        raise ValueError('empty intensity range')
    out = (image - a_min) / (a_max - a_min) * (b_max - b_min) + b_min
    return np.clip(out, min(b_min, b_max), max(b_min, b_max)) if clip \
        else out


def augment(sample, rng, patch_extents=None, flip_prob=0.5,
            scale_range=(0.9, 1.1), flips=None):
    """
    Random augmentation of `sample`: independent flip of each spatial axis
    with probability `flip_prob` (image and label together), intensity
    scaling of the image by a factor uniform in `scale_range` and random
    crop to `patch_extents`. `flips` forces the flipped axes.
    """
    if flips is None:
        flips = [axis for axis in range(3) if rng.random() < flip_prob]
    sample = flip_sample(sample, flips)
    factor = rng.uniform(*scale_range)
    sample = VolumeSample(sample.image * factor, sample.label)
    if patch_extents is not None:
        sample = random_crop(sample, patch_extents, rng)
    return sample
