"""Tiled local-binary-pattern descriptors and the appearance distance.

Each feature region is cut into a fixed grid of tiles.  Every tile yields a
75-bin histogram: 59 uniform-pattern bins from the circular 8-neighbour code
(two-transition patterns get their own bin, everything else shares bin 58)
followed by 16 bins of the plain 4-neighbour code.  The two segments are
L1-normalized separately.  Region distance is the tile-averaged chi-squared
distance between histograms (each segment normalized to mass one, the two
segment distances averaged); the frame distance is the weighted sum over the
four regions and stays inside [0, 1].
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import DegenerateTileError
from .landmarks import Region, RegionLayout, REGION_ORDER

L8_BINS = 59
L4_BINS = 16
TILE_BINS = L8_BINS + L4_BINS
CHI2_EPS = 1e-10

_MIN_TILE_SIDE = 3


def _bilerp(img: np.ndarray, x: float, y: float) -> float:
    # Scalar clamped bilinear lookup in lerp form, independent of the kernel
    # backends (this is the reference the compiled paths are tested against).
    h, w = img.shape
    x = min(max(x, 0.0), float(w - 1))
    y = min(max(y, 0.0), float(h - 1))
    x0 = int(math.floor(x))
    y0 = int(math.floor(y))
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    v00 = float(img[y0, x0])
    v01 = float(img[y0, x1])
    v10 = float(img[y1, x0])
    v11 = float(img[y1, x1])
    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    return top + fy * (bot - top)


def lbp_code(image: np.ndarray, x: int, y: int, neighbors: int = 8) -> int:
    """Code at one interior pixel.  Neighbours are enumerated counterclockwise
    from east; a bit is set when the neighbour is >= the center, so constant
    patches give the all-ones code.  neighbors=8 samples the unit circle with
    bilinear interpolation; neighbors=4 reads the axis-aligned pixels."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    if not (1 <= x < w - 1 and 1 <= y < h - 1):
        raise ValueError("pixel must be interior to the sampling radius")
    center = img[y, x]
    code = 0
    if neighbors == 8:
        for i in range(8):
            v = _bilerp(img, x + kernels.CIRCLE8[i, 0], y + kernels.CIRCLE8[i, 1])
            if v >= center:
                code |= 1 << i
    elif neighbors == 4:
        for i, (dx, dy) in enumerate(((1, 0), (0, -1), (-1, 0), (0, 1))):
            if img[y + dy, x + dx] >= center:
                code |= 1 << i
    else:
        raise ValueError("neighbors must be 4 or 8")
    return code


def _circular_transitions(code: int) -> int:
    rotated = ((code >> 1) | ((code & 1) << 7)) & 0xFF
    return bin(code ^ rotated).count("1")


@lru_cache(maxsize=None)
def uniform_label_table(neighbors: int = 8) -> np.ndarray:
    """Label map for the 8-neighbour code: the 58 patterns with at most two
    circular transitions get labels 0..57 (ascending code order); the other
    198 codes share the catch-all label 58."""
    if neighbors != 8:
        raise ValueError("the uniform table is defined for the 8-neighbour code")
    table = np.full(256, L8_BINS - 1, dtype=np.uint8)
    label = 0
    for code in range(256):
        if _circular_transitions(code) <= 2:
            table[code] = label
            label += 1
    assert label == L8_BINS - 1
    return table


def _tile_bounds(length: int, cells: int) -> list[tuple[int, int]]:
    # Integer division; the last cell absorbs the remainder.
    size = length // cells
    bounds = [(i * size, (i + 1) * size) for i in range(cells - 1)]
    bounds.append(((cells - 1) * size, length))
    return bounds


def _normalize_segment(counts: np.ndarray) -> np.ndarray:
    total = counts.sum()
    if total == 0:
        return np.full(counts.shape, 1.0 / counts.shape[0])
    return counts / total


def descriptor_from_codes(code8: np.ndarray, code4: np.ndarray, grid: tuple[int, int]) -> np.ndarray:
    """Tile the code maps and build one 75-bin histogram row per tile."""
    rows, cols = grid
    height, width = code8.shape
    if height // rows < _MIN_TILE_SIDE or width // cols < _MIN_TILE_SIDE:
        raise DegenerateTileError(
            f"{rows}x{cols} grid over {width}x{height} region yields tiles smaller than "
            f"{_MIN_TILE_SIDE}x{_MIN_TILE_SIDE}"
        )
    table = uniform_label_table()
    labels = table[code8]
    out = np.empty((rows * cols, TILE_BINS), dtype=np.float64)
    tile = 0
    for ry0, ry1 in _tile_bounds(height, rows):
        for cx0, cx1 in _tile_bounds(width, cols):
            h8 = np.bincount(labels[ry0:ry1, cx0:cx1].ravel(), minlength=L8_BINS)
            h4 = np.bincount(code4[ry0:ry1, cx0:cx1].ravel(), minlength=L4_BINS)
            out[tile, :L8_BINS] = _normalize_segment(h8.astype(np.float64))
            out[tile, L8_BINS:] = _normalize_segment(h4.astype(np.float64))
            tile += 1
    return out


def _clamped_range(lo: int, hi: int, limit: int) -> np.ndarray:
    return np.clip(np.arange(lo, hi), 0, limit - 1)


def region_descriptor(aligned_gray: np.ndarray, region: Region) -> np.ndarray:
    """Descriptor for one region of an already-aligned gray frame.

    Codes are computed for every pixel of the region; the one-pixel sampling
    margin is clamped at the image border.
    """
    img = np.asarray(aligned_gray, dtype=np.float64)
    h, w = img.shape
    ys = _clamped_range(region.y0 - 1, region.y1 + 2, h)
    xs = _clamped_range(region.x0 - 1, region.x1 + 2, w)
    patch = img[np.ix_(ys, xs)]
    code8, code4 = kernels.lbp_code_maps(patch)
    return descriptor_from_codes(code8, code4, region.grid)


@dataclass
class FrameFeatures:
    """Per-frame descriptors for the four feature regions."""

    mouth: np.ndarray
    left_eye: np.ndarray
    right_eye: np.ndarray
    nose: np.ndarray

    def items(self):
        for name in REGION_ORDER:
            yield name, getattr(self, name)

    def region(self, name: str) -> np.ndarray:
        return getattr(self, name)


def features_from_aligned(aligned_gray: np.ndarray, layout: RegionLayout) -> FrameFeatures:
    return FrameFeatures(
        **{name: region_descriptor(aligned_gray, region) for name, region in layout.items()}
    )


def _affine_grid(transform_matrix: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    gx, gy = np.meshgrid(xs.astype(np.float64), ys.astype(np.float64))
    m = transform_matrix
    return m[0, 0] * gx + m[0, 1] * gy + m[0, 2], m[1, 0] * gx + m[1, 1] * gy + m[1, 2]


def align_frame(gray: np.ndarray, transform, size: tuple[int, int]) -> np.ndarray:
    """Resample a gray frame into reference space (size = (width, height)).
    `transform` maps frame coordinates to reference coordinates."""
    width, height = size
    inv = transform.invert().matrix
    sx, sy = _affine_grid(inv, np.arange(width), np.arange(height))
    return kernels.bilinear_sample_map(np.asarray(gray, dtype=np.float64), sx, sy)


def features_from_frame(gray: np.ndarray, transform, layout: RegionLayout, size: tuple[int, int]) -> FrameFeatures:
    """Descriptors sampled straight from the unaligned frame.

    Equivalent to align_frame + features_from_aligned but only touches the
    region rectangles; the reference-space coordinates are clamped to the
    reference canvas exactly like the crop in region_descriptor.
    """
    width, height = size
    inv = transform.invert().matrix
    img = np.asarray(gray, dtype=np.float64)
    built = {}
    for name, region in layout.items():
        ys = _clamped_range(region.y0 - 1, region.y1 + 2, height)
        xs = _clamped_range(region.x0 - 1, region.x1 + 2, width)
        sx, sy = _affine_grid(inv, xs, ys)
        patch = kernels.bilinear_sample_map(img, sx, sy)
        code8, code4 = kernels.lbp_code_maps(patch)
        built[name] = descriptor_from_codes(code8, code4, region.grid)
    return FrameFeatures(**built)


def descriptor_chi2(a: np.ndarray, b: np.ndarray) -> float:
    """Tile-averaged chi-squared distance between two region descriptors.

    Per tile this is the mean of the two per-segment chi-squared distances
    (each segment carries unit mass), which keeps the result in [0, 1]:
    identical descriptors give 0, disjoint support gives 1.
    """
    if a.shape != b.shape:
        raise ValueError("descriptor shapes differ")
    m = a.shape[0]
    diff = a - b
    return float((diff * diff / (a + b + CHI2_EPS)).sum() / (4.0 * m))


def appearance_distance(fa: FrameFeatures, fb: FrameFeatures, region_weights) -> float:
    """Weighted per-region chi-squared distance between two frames' features."""
    weights = tuple(region_weights)
    if len(weights) != len(REGION_ORDER):
        raise ValueError(f"expected {len(REGION_ORDER)} region weights")
    total = 0.0
    for w, name in zip(weights, REGION_ORDER):
        total += w * descriptor_chi2(fa.region(name), fb.region(name))
    return total
