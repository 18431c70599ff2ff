"""Pure NumPy implementations of the pixel kernels.

Every function here mirrors a compiled twin in _native.pyx.  The two backends
must stay bit-identical, so each per-pixel expression is written in the same
order in both files (lerp-form bilinear, coordinate clamp before floor).
"""

import numpy as np


def bilinear_map(img, xs, ys):
    """Sample img (float64, 2d) at float coordinates, clamped to the border.

    The lerp form v0 + f*(v1 - v0) is used so that sampling a flat
    neighbourhood reproduces the corner value exactly.
    """
    h, w = img.shape
    xs = np.clip(xs, 0.0, float(w - 1))
    ys = np.clip(ys, 0.0, float(h - 1))
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    v00 = img[y0, x0]
    v01 = img[y0, x1]
    v10 = img[y1, x0]
    v11 = img[y1, x1]
    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    return top + fy * (bot - top)


def lbp_maps(patch, offs8):
    # Codes for the interior pixels of patch; callers supply a one pixel
    # margin so every sample position stays inside the array.
    h, w = patch.shape
    center = patch[1:-1, 1:-1]
    ys, xs = np.mgrid[1 : h - 1, 1 : w - 1]
    xs = xs.astype(np.float64)
    ys = ys.astype(np.float64)
    code8 = np.zeros(center.shape, dtype=np.uint8)
    for i in range(8):
        v = bilinear_map(patch, xs + offs8[i, 0], ys + offs8[i, 1])
        code8 |= np.uint8(1 << i) * (v >= center)
    code4 = np.zeros(center.shape, dtype=np.uint8)
    for i, (dx, dy) in enumerate(((1, 0), (0, -1), (-1, 0), (0, 1))):
        nb = patch[1 + dy : h - 1 + dy, 1 + dx : w - 1 + dx]
        code4 |= np.uint8(1 << i) * (nb >= center)
    return code8, code4


def warp_tris(src, minv, aff, bbox, out, covered, nearest):
    """Rasterize triangles into out/covered (both preallocated).

    src: float64 (h, w, c); minv: (t, 3, 3) barycentric matrices; aff: (t, 2, 3)
    destination-to-source affines; bbox: (t, 4) inclusive pixel bounds.
    Triangles are painted in order; later triangles overwrite earlier ones.
    """
    h, w = src.shape[:2]
    channels = src.shape[2]
    for t in range(minv.shape[0]):
        x0, y0, x1, y1 = bbox[t]
        if x1 < x0 or y1 < y0:
            continue
        gx = np.arange(x0, x1 + 1, dtype=np.float64)
        gy = np.arange(y0, y1 + 1, dtype=np.float64)
        gxx, gyy = np.meshgrid(gx, gy)
        m = minv[t]
        l0 = m[0, 0] * gxx + m[0, 1] * gyy + m[0, 2]
        l1 = m[1, 0] * gxx + m[1, 1] * gyy + m[1, 2]
        l2 = m[2, 0] * gxx + m[2, 1] * gyy + m[2, 2]
        inside = (l0 >= -1e-9) & (l1 >= -1e-9) & (l2 >= -1e-9)
        if not inside.any():
            continue
        a = aff[t]
        px = gxx[inside]
        py = gyy[inside]
        sx = a[0, 0] * px + a[0, 1] * py + a[0, 2]
        sy = a[1, 0] * px + a[1, 1] * py + a[1, 2]
        iy, ix = np.nonzero(inside)
        iy = iy + y0
        ix = ix + x0
        if nearest:
            nx = np.clip(np.floor(sx + 0.5), 0.0, float(w - 1)).astype(np.intp)
            ny = np.clip(np.floor(sy + 0.5), 0.0, float(h - 1)).astype(np.intp)
            for c in range(channels):
                out[iy, ix, c] = src[ny, nx, c]
        else:
            for c in range(channels):
                out[iy, ix, c] = bilinear_map(src[:, :, c], sx, sy)
        covered[iy, ix] = 1
