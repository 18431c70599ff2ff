"""Per-frame shape transfer and piecewise-affine appearance warping.

The output shape for a target frame is a fixed blend of (a) the temporally
smoothed target landmarks and (b) the landmarks of the bracketing selected
source frames, each mapped onto the target through a least-squares affine fit
and combined with weights proportional to the frame's position between the
two cluster centers.  Appearance is pulled from the same bracketing source
frames by warping each one onto the output shape triangle by triangle, then
cross-fading.
"""

import numpy as np

from . import kernels
from .landmarks import fit_affine
from .media_io import ImageBuffer


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """Round half up to the nearest integer and clip into [0, 255]."""
    return np.clip(np.floor(values + 0.5), 0.0, 255.0).astype(np.uint8)


def bracket_weights(t: int, prev_center: int, next_center: int) -> tuple[float, float]:
    """Cross-fade weights (w_prev, w_next) for frame t between two cluster
    centers.  Coincident centers put all weight on the next selection."""
    if not prev_center <= t <= next_center:
        raise ValueError(f"frame {t} outside bracket [{prev_center}, {next_center}]")
    if next_center == prev_center:
        return 0.0, 1.0
    w_next = (t - prev_center) / (next_center - prev_center)
    return 1.0 - w_next, w_next


def smoothed_target_shape(t: int, target_points: np.ndarray, smooth_weights) -> np.ndarray:
    """Three-tap temporal smoothing of the target landmark track; the first
    and last frames reuse themselves as the missing neighbour."""
    w_prev, w_cur, w_next = smooth_weights
    n = len(target_points)
    prev_pts = target_points[t - 1] if t > 0 else target_points[t]
    next_pts = target_points[t + 1] if t < n - 1 else target_points[t]
    return w_prev * prev_pts + w_cur * target_points[t] + w_next * next_pts


def reenact_shape(
    t: int,
    target_points: np.ndarray,
    prev_center: int,
    prev_source_points: np.ndarray,
    next_center: int,
    next_source_points: np.ndarray,
    smooth_weights,
    target_shape_weight: float,
    source_shape_weight: float,
) -> np.ndarray:
    """Closed-form output landmarks for target frame t.

    Minimizes the weighted sum of squared deviations from the smoothed target
    shape and from the source-derived shape, which factors into a fixed convex
    blend of the two.  Zero-weight brackets skip their affine fit so a single
    selected frame never drags a second one in.
    """
    smoothed = smoothed_target_shape(t, target_points, smooth_weights)
    w_prev, w_next = bracket_weights(t, prev_center, next_center)
    source_shape = np.zeros_like(smoothed)
    if w_prev != 0.0:
        fit = fit_affine(prev_source_points, target_points[t])
        source_shape += w_prev * fit.apply(prev_source_points)
    if w_next != 0.0:
        fit = fit_affine(next_source_points, target_points[t])
        source_shape += w_next * fit.apply(next_source_points)
    return target_shape_weight * smoothed + source_shape_weight * source_shape


def warp_image_float(
    image: np.ndarray,
    from_points: np.ndarray,
    to_points: np.ndarray,
    mesh: np.ndarray,
    size: tuple[int, int],
    mode: str = "bilinear",
) -> tuple[np.ndarray, np.ndarray]:
    """Warp a float image by mapping each mesh triangle from from_points onto
    to_points.  size is (width, height) of the output.  Returns the float
    output and the boolean coverage mask."""
    src_tris = np.ascontiguousarray(from_points[mesh], dtype=np.float64)
    dst_tris = np.ascontiguousarray(to_points[mesh], dtype=np.float64)
    return kernels.warp_triangles(image, src_tris, dst_tris, (size[1], size[0]), mode=mode)


def piecewise_affine_warp(
    frame: ImageBuffer,
    from_points: np.ndarray,
    to_points: np.ndarray,
    mesh: np.ndarray,
    size: tuple[int, int],
) -> tuple[ImageBuffer, np.ndarray]:
    """Quantized single-frame warp; uncovered pixels stay black."""
    out, covered = warp_image_float(
        frame.data.astype(np.float64), from_points, to_points, mesh, size
    )
    return ImageBuffer(quantize_u8(out)), covered


def transfer_appearance(
    prev_frame: ImageBuffer,
    prev_source_points: np.ndarray,
    next_frame: ImageBuffer,
    next_source_points: np.ndarray,
    output_points: np.ndarray,
    weights: tuple[float, float],
    mesh: np.ndarray,
    size: tuple[int, int],
) -> tuple[ImageBuffer, np.ndarray]:
    """Render the output-shape face from the bracketing source frames.

    Each frame is warped onto output_points and the two renders are blended
    with the given cross-fade weights before quantization.  Coverage is the
    intersection of the individual coverages, so the caller can trust every
    covered pixel to carry contributions at full weight.
    """
    w_prev, w_next = weights
    if w_prev == 0.0:
        return piecewise_affine_warp(next_frame, next_source_points, output_points, mesh, size)
    if w_next == 0.0 or (
        np.array_equal(prev_frame.data, next_frame.data)
        and np.array_equal(prev_source_points, next_source_points)
    ):
        return piecewise_affine_warp(prev_frame, prev_source_points, output_points, mesh, size)
    out_a, cov_a = warp_image_float(
        prev_frame.data.astype(np.float64), prev_source_points, output_points, mesh, size
    )
    out_b, cov_b = warp_image_float(
        next_frame.data.astype(np.float64), next_source_points, output_points, mesh, size
    )
    blended = w_prev * out_a + w_next * out_b
    return ImageBuffer(quantize_u8(blended)), cov_a & cov_b
