"""Mask construction, color space conversion, gradient-domain cloning, and
seam feathering.

Masks are plain boolean (h, w) arrays.  The blending mask is built once on
the source rest frame from the convex hulls of the facial feature landmarks,
closed into a single blob and softly eroded; per output frame it is warped
onto the synthesized shape and intersected with the target's own feature
mask so the seam never leaves the target face.  Cloning runs per channel in
a log-opponent working space (3x3 matrix, natural log, 3x3 matrix) whose
coefficients ship in data/color_matrices.txt.
"""

import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import scipy.ndimage as ndi
import scipy.sparse as sparse
from scipy.spatial import ConvexHull, QhullError

from .errors import MaskError, SolverError
from .media_io import ImageBuffer, LandmarkGroups
from .transfer import quantize_u8, warp_image_float

LOG_FLOOR = 1.0 / 255.0


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian sampled on integer offsets out to 4 sigma."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    radius = int(math.ceil(4.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of a 2D float array, zero-padded at borders."""
    kernel = gaussian_kernel(sigma)
    data = np.asarray(image, dtype=np.float64)
    out = ndi.correlate1d(data, kernel, axis=0, mode="constant", cval=0.0)
    return ndi.correlate1d(out, kernel, axis=1, mode="constant", cval=0.0)


def fill_convex_hull(points: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Rasterize the filled convex hull of 2D points onto an (h, w) grid.

    A pixel belongs to the hull when its center satisfies every facet
    half-plane inequality (with a small slack so boundary pixels count).
    """
    h, w = size
    pts = np.asarray(points, dtype=np.float64)
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise MaskError(f"cannot build a convex hull: {exc}") from exc
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    inside = np.ones((h, w), dtype=bool)
    for nx, ny, off in hull.equations:
        inside &= nx * xs + ny * ys + off <= 1e-9
    return inside


def _disk(radius: int) -> np.ndarray:
    span = np.arange(-radius, radius + 1)
    yy, xx = np.meshgrid(span, span, indexing="ij")
    return xx * xx + yy * yy <= radius * radius


def gaussian_erode(
    mask: np.ndarray, sigma: float, threshold: float, protected: np.ndarray | None = None
) -> np.ndarray:
    """Soft erosion: blur the binary mask and keep pixels whose blurred value
    clears the threshold.  Pixels in `protected` are never removed."""
    blurred = gaussian_blur(mask.astype(np.float64), sigma)
    out = blurred >= threshold
    if protected is not None:
        out |= mask & protected
    return out


def build_source_mask(
    points: np.ndarray,
    groups: LandmarkGroups,
    size: tuple[int, int],
    *,
    close_radius: int = 12,
    erode_sigma: float = 5.0,
    erode_threshold: float = 0.99,
) -> np.ndarray:
    """Tight blending mask around the inner facial features of one shape.

    Union of the filled convex hulls of eyes+brows, nose, and mouth+chin,
    morphologically closed into one blob, then softly eroded.  The hull
    pixels themselves are protected from the erosion so the mask always
    contains every feature landmark.
    """
    pts = np.asarray(points, dtype=np.float64)
    clusters = [
        np.concatenate([groups.left_eye, groups.right_eye, groups.brows]),
        np.asarray(groups.nose),
        np.concatenate([groups.mouth, groups.chin()]),
    ]
    hulls = np.zeros(size, dtype=bool)
    for idx in clusters:
        hulls |= fill_convex_hull(pts[idx], size)
    closed = ndi.binary_closing(hulls, structure=_disk(close_radius))
    mask = gaussian_erode(closed, erode_sigma, erode_threshold, protected=hulls)
    if not mask.any():
        raise MaskError("erosion removed the entire mask")
    return mask


def transfer_mask(
    mask: np.ndarray,
    from_points: np.ndarray,
    to_points: np.ndarray,
    mesh: np.ndarray,
    size: tuple[int, int],
) -> np.ndarray:
    """Warp a binary mask between shapes with nearest-neighbour sampling;
    pixels outside the warped mesh are background.  size is (width, height)
    of the destination."""
    warped, covered = warp_image_float(
        mask.astype(np.float64), from_points, to_points, mesh, size, mode="nearest"
    )
    return (warped[..., 0] == 1.0) & covered


def clip_to_target(
    mask: np.ndarray,
    target_points: np.ndarray,
    groups: LandmarkGroups,
    *,
    close_radius: int = 12,
    erode_sigma: float = 5.0,
    erode_threshold: float = 0.99,
) -> np.ndarray:
    """Intersect a transferred mask with the target's own feature mask so the
    seam cannot run outside the target face."""
    target_mask = build_source_mask(
        target_points,
        groups,
        mask.shape,
        close_radius=close_radius,
        erode_sigma=erode_sigma,
        erode_threshold=erode_threshold,
    )
    out = mask & target_mask
    if not out.any():
        raise MaskError("transferred mask does not overlap the target features")
    return out


@dataclass(frozen=True)
class ColorMatrices:
    """Forward matrices of the log-opponent working space; inverses cached."""

    pre: np.ndarray
    post: np.ndarray
    pre_inv: np.ndarray = field(init=False)
    post_inv: np.ndarray = field(init=False)

    def __post_init__(self):
        for name, m in (("pre", self.pre), ("post", self.post)):
            if m.shape != (3, 3) or not np.isfinite(m).all():
                raise ValueError(f"{name} matrix must be a finite 3x3 array")
        object.__setattr__(self, "pre_inv", np.linalg.inv(self.pre))
        object.__setattr__(self, "post_inv", np.linalg.inv(self.post))


def load_color_matrices(path=None) -> ColorMatrices:
    """Read the two 3x3 row-major matrices from a text file ('#' comments);
    defaults to the file shipped with the package."""
    if path is None:
        text = resources.files("reenact").joinpath("data/color_matrices.txt").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        values = [float(tok) for tok in line.split()]
        if len(values) != 3:
            raise ValueError(f"expected 3 values per matrix row, got {len(values)}")
        rows.append(values)
    if len(rows) != 6:
        raise ValueError(f"expected 6 matrix rows, got {len(rows)}")
    rows = np.array(rows, dtype=np.float64)
    return ColorMatrices(rows[:3], rows[3:])


def rgb_to_perceptual(image: ImageBuffer, matrices: ColorMatrices) -> np.ndarray:
    """Map an RGB frame into the working space: matrix, clamped natural log,
    matrix.  Returns float64 (h, w, 3)."""
    rgb = image.to_rgb().data.astype(np.float64) / 255.0
    cones = rgb @ matrices.pre.T
    logs = np.log(np.maximum(cones, LOG_FLOOR))
    return logs @ matrices.post.T


def perceptual_to_rgb(values: np.ndarray, matrices: ColorMatrices) -> ImageBuffer:
    """Invert rgb_to_perceptual and quantize to 8-bit."""
    logs = np.asarray(values, dtype=np.float64) @ matrices.post_inv.T
    rgb = np.exp(logs) @ matrices.pre_inv.T
    return ImageBuffer(quantize_u8(np.clip(rgb, 0.0, 1.0) * 255.0))


def _jacobi_pcg(a, b: np.ndarray, x0: np.ndarray, tol: float, max_iter: int):
    """Conjugate gradient with Jacobi preconditioning; converged when the
    true residual satisfies max|b - Ax| <= tol."""
    inv_diag = 1.0 / a.diagonal()
    x = x0.copy()
    r = b - a @ x
    if np.abs(r).max() <= tol:
        return x, float(np.abs(r).max())
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for _ in range(max_iter):
        ap = a @ p
        alpha = rz / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        if np.abs(r).max() <= tol:
            # recurrence residual can drift; confirm against the real one
            true_r = b - a @ x
            if np.abs(true_r).max() <= tol:
                return x, float(np.abs(true_r).max())
            r = true_r
        z = inv_diag * r
        rz_next = float(r @ z)
        p = z + (rz_next / rz) * p
        rz = rz_next
    residual = float(np.abs(b - a @ x).max())
    raise SolverError(
        f"gradient-domain solve stalled after {max_iter} iterations", residual=residual
    )

_SHIFTS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def poisson_clone(
    source: np.ndarray,
    target: np.ndarray,
    mask: np.ndarray,
    tol: float = 1e-6,
    max_iter: int = 10000,
) -> np.ndarray:
    """Seamless cloning: solve the discrete Poisson equation over the mask
    with the source gradients as guidance and the target values just outside
    the mask as Dirichlet boundary.

    source/target: float (h, w) or (h, w, c) in the working color space.
    The mask must be nonempty and must not touch the image border (boundary
    values would be undefined there).  Exterior pixels pass through from the
    target.
    """
    src = np.asarray(source, dtype=np.float64)
    dst = np.asarray(target, dtype=np.float64)
    if src.shape != dst.shape:
        raise ValueError("source and target shapes differ")
    flat_input = src.ndim == 2
    if flat_input:
        src = src[..., None]
        dst = dst[..., None]
    h, w = src.shape[:2]
    if mask.shape != (h, w):
        raise ValueError("mask dimensions do not match the images")
    if not mask.any():
        raise MaskError("empty cloning mask")
    if mask[0, :].any() or mask[-1, :].any() or mask[:, 0].any() or mask[:, -1].any():
        raise MaskError("cloning mask touches the image border")

    ys, xs = np.nonzero(mask)
    n = len(ys)
    ids = np.full((h, w), -1, dtype=np.intp)
    ids[ys, xs] = np.arange(n)

    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [np.full(n, 4.0)]
    b = 4.0 * src[ys, xs]
    for dy, dx in _SHIFTS:
        qy, qx = ys + dy, xs + dx
        b -= src[qy, qx]
        interior = mask[qy, qx]
        rows.append(ids[ys, xs][interior])
        cols.append(ids[qy, qx][interior])
        vals.append(np.full(int(interior.sum()), -1.0))
        b[~interior] += dst[qy[~interior], qx[~interior]]
    a = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )

    out = dst.copy()
    for c in range(src.shape[2]):
        solution, _ = _jacobi_pcg(a, b[:, c], src[ys, xs, c].copy(), tol, max_iter)
        out[ys, xs, c] = solution
    return out[..., 0] if flat_input else out


def feather_seam(
    composited: ImageBuffer, target: ImageBuffer, mask: np.ndarray, sigma: float
) -> ImageBuffer:
    """Blend across the mask boundary with a Gaussian-softened alpha so the
    seam is invisible; deep inside the mask the composite wins, far outside
    the target does."""
    alpha = gaussian_blur(mask.astype(np.float64), sigma)
    comp = composited.data.astype(np.float64)
    tgt = target.data.astype(np.float64)
    if comp.shape != tgt.shape:
        raise ValueError("composite and target dimensions differ")
    if comp.ndim == 3:
        alpha = alpha[..., None]
    return ImageBuffer(quantize_u8(alpha * comp + (1.0 - alpha) * tgt))


def composite_face(
    warped: ImageBuffer,
    target: ImageBuffer,
    mask: np.ndarray,
    matrices: ColorMatrices,
    *,
    seam_sigma: float = 9.0,
    solver_tol: float = 1e-6,
    solver_max_iter: int = 10000,
) -> ImageBuffer:
    """Full per-frame composite: clone the warped face into the target in the
    working color space, convert back, and feather the seam in RGB."""
    src_p = rgb_to_perceptual(warped, matrices)
    dst_p = rgb_to_perceptual(target, matrices)
    blended = poisson_clone(src_p, dst_p, mask, tol=solver_tol, max_iter=solver_max_iter)
    cloned = perceptual_to_rgb(blended, matrices)
    return feather_seam(cloned, target.to_rgb(), mask, seam_sigma)
