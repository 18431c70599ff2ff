"""Pixel kernels with a compiled core and a NumPy fallback.

The hot per-pixel loops (local binary pattern maps, bilinear resampling,
triangle-mesh warping) exist twice: a Cython extension (_native) and a pure
NumPy module (_fallback).  The backend is picked once at import time; both
produce bit-identical output, so everything downstream is backend-agnostic.

Set REENACT_KERNELS=python to force the fallback even when the extension is
installed.  BACKEND reports which implementation is active.
"""

import os
import warnings

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback
if os.environ.get("REENACT_KERNELS", "").strip().lower() not in {"python", "fallback"}:
    try:
        from . import _native as _native_impl

        _impl = _native_impl
        BACKEND = "native"
    except ImportError:
        pass

_SQRT_HALF = float(np.sqrt(0.5))
# Unit circle neighbours enumerated counterclockwise starting east.  The image
# y axis points down, so "counterclockwise" on screen means negative dy first.
# Axis-aligned entries are exact 0.0 / +-1.0 so those samples hit pixel centers.
CIRCLE8 = np.array(
    [
        [1.0, 0.0],
        [_SQRT_HALF, -_SQRT_HALF],
        [0.0, -1.0],
        [-_SQRT_HALF, -_SQRT_HALF],
        [-1.0, 0.0],
        [-_SQRT_HALF, _SQRT_HALF],
        [0.0, 1.0],
        [_SQRT_HALF, _SQRT_HALF],
    ],
    dtype=np.float64,
)


def lbp_code_maps(patch):
    """Compute 8-neighbour and 4-neighbour LBP code maps for a padded patch.

    patch must be float64 with both sides >= 3; codes are produced for its
    interior, so the result shape is (h - 2, w - 2).  Callers pad by one pixel
    (clamping at image borders) to get codes for a full rectangle.
    """
    patch = np.ascontiguousarray(patch, dtype=np.float64)
    if patch.ndim != 2 or patch.shape[0] < 3 or patch.shape[1] < 3:
        raise ValueError("patch must be 2d with both sides >= 3")
    return _impl.lbp_maps(patch, CIRCLE8)


def bilinear_sample_map(image, xs, ys):
    """Sample a float64 image at arbitrary positions with border clamping."""
    image = np.ascontiguousarray(image, dtype=np.float64)
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    if xs.shape != ys.shape:
        raise ValueError("coordinate arrays must share a shape")
    return _impl.bilinear_map(image, xs, ys)


def warp_triangles(src, src_tris, dst_tris, size, mode="bilinear"):
    """Warp src through corresponding triangle lists onto a (height, width) canvas.

    src_tris / dst_tris: (t, 3, 2) float64 vertex arrays in (x, y) order.
    Returns (out, covered): float64 canvas matching src's channel count and a
    boolean coverage mask.  Degenerate destination triangles are skipped with
    a warning and leave their pixels uncovered.
    """
    src = np.asarray(src, dtype=np.float64)
    gray = src.ndim == 2
    if gray:
        src = src[:, :, None]
    src = np.ascontiguousarray(src)
    src_tris = np.asarray(src_tris, dtype=np.float64)
    dst_tris = np.asarray(dst_tris, dtype=np.float64)
    if src_tris.shape != dst_tris.shape or src_tris.ndim != 3 or src_tris.shape[1:] != (3, 2):
        raise ValueError("triangle arrays must both be (t, 3, 2)")
    if mode not in ("bilinear", "nearest"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    height, width = int(size[0]), int(size[1])

    n = src_tris.shape[0]
    minv = np.zeros((n, 3, 3), dtype=np.float64)
    aff = np.zeros((n, 2, 3), dtype=np.float64)
    bbox = np.zeros((n, 4), dtype=np.int64)
    degenerate = 0
    for t in range(n):
        d = dst_tris[t]
        # Row space: barycentric coords are rmat^-1 @ [x, y, 1].
        rmat = np.array(
            [
                [d[0, 0], d[1, 0], d[2, 0]],
                [d[0, 1], d[1, 1], d[2, 1]],
                [1.0, 1.0, 1.0],
            ]
        )
        det = np.linalg.det(rmat)
        if abs(det) < 1e-9:
            degenerate += 1
            bbox[t] = (0, 0, -1, -1)
            continue
        rinv = np.linalg.inv(rmat)
        minv[t] = rinv
        aff[t] = src_tris[t].T @ rinv
        x0 = max(0, int(np.ceil(d[:, 0].min() - 1e-9)))
        x1 = min(width - 1, int(np.floor(d[:, 0].max() + 1e-9)))
        y0 = max(0, int(np.ceil(d[:, 1].min() - 1e-9)))
        y1 = min(height - 1, int(np.floor(d[:, 1].max() + 1e-9)))
        bbox[t] = (x0, y0, x1, y1)
    if degenerate:
        warnings.warn(
            f"skipped {degenerate} degenerate destination triangle(s)",
            RuntimeWarning,
            stacklevel=2,
        )

    out = np.zeros((height, width, src.shape[2]), dtype=np.float64)
    covered = np.zeros((height, width), dtype=np.uint8)
    _impl.warp_tris(src, minv, aff, bbox, out, covered, 1 if mode == "nearest" else 0)
    if gray:
        out = out[:, :, 0]
    return out, covered.astype(bool)
