"""Landmark geometry: flow-based stabilization, affine alignment to a
reference shape, fixed feature regions, and the reference triangle mesh."""

from dataclasses import dataclass

import numpy as np
import scipy.spatial

from . import kernels
from .errors import SingularFitError, TriangulationError
from .media_io import FlowField, LandmarkShape

# Fixed tile grids (rows, cols) per feature region.
REGION_GRIDS = {
    "mouth": (3, 5),
    "left_eye": (3, 2),
    "right_eye": (3, 2),
    "nose": (4, 2),
}
REGION_ORDER = ("mouth", "left_eye", "right_eye", "nose")


@dataclass(frozen=True)
class AffineTransform2D:
    """2x3 row-major affine map; the linear part must be invertible."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValueError(f"expected (2, 3) matrix, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "AffineTransform2D":
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix[:, :2].T + self.matrix[:, 2]

    def invert(self) -> "AffineTransform2D":
        lin = self.matrix[:, :2]
        inv = np.linalg.inv(lin)
        t = -inv @ self.matrix[:, 2]
        return AffineTransform2D(np.column_stack([inv, t]))


def fit_affine(src_points: np.ndarray, dst_points: np.ndarray) -> AffineTransform2D:
    """Least-squares affine map taking src points onto dst points.

    Exact (up to rounding) whenever dst actually is an affine image of src.
    Raises SingularFitError when the source points are collinear.
    """
    src = np.asarray(src_points, dtype=np.float64)
    dst = np.asarray(dst_points, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2 or src.shape[0] < 3:
        raise ValueError("need matching (n, 2) arrays with n >= 3")
    design = np.column_stack([src, np.ones(len(src))])
    solution, _, rank, _ = np.linalg.lstsq(design, dst, rcond=None)
    if rank < 3:
        raise SingularFitError("source points are collinear; affine fit is singular")
    matrix = solution.T  # rows: [a, b, tx], [c, d, ty]
    if abs(np.linalg.det(matrix[:, :2])) < 1e-12:
        raise SingularFitError("fitted linear part is singular")
    return AffineTransform2D(matrix)


def align_to_reference(shape: LandmarkShape, reference: LandmarkShape) -> tuple[LandmarkShape, AffineTransform2D]:
    """Map a shape onto the reference frame's coordinate system."""
    transform = fit_affine(shape.points, reference.points)
    return LandmarkShape(shape.frame_index, transform.apply(shape.points)), transform


def stabilization_offsets(rings: int, ring_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Sample offsets (n, 2) and normalized Gaussian weights (n,) for
    stabilize_landmarks: the center plus ring_points per circle of radius
    1..rings, weighted by distance with sigma = rings / 2."""
    offsets = [(0.0, 0.0)]
    dists = [0.0]
    for radius in range(1, rings + 1):
        for j in range(ring_points):
            angle = 2.0 * np.pi * j / ring_points
            offsets.append((radius * np.cos(angle), radius * np.sin(angle)))
            dists.append(float(radius))
    offsets = np.array(offsets, dtype=np.float64)
    dists = np.array(dists, dtype=np.float64)
    sigma = rings / 2.0
    weights = np.exp(-(dists**2) / (2.0 * sigma**2))
    return offsets, weights / weights.sum()


def stabilize_landmarks(
    shape: LandmarkShape, flow: FlowField, rings: int = 2, ring_points: int = 8
) -> LandmarkShape:
    """Displace each landmark by a Gaussian-weighted local average of the flow.

    The flow is sampled at the landmark and on circles around it (samples
    clamped to the flow border), which suppresses single-pixel tracker noise.
    """
    offsets, weights = stabilization_offsets(rings, ring_points)
    pts = shape.points
    xs = pts[:, 0:1] + offsets[:, 0]  # (66, n)
    ys = pts[:, 1:2] + offsets[:, 1]
    dx = kernels.bilinear_sample_map(flow.vectors[:, :, 0].astype(np.float64), xs, ys)
    dy = kernels.bilinear_sample_map(flow.vectors[:, :, 1].astype(np.float64), xs, ys)
    moved = np.column_stack([pts[:, 0] + dx @ weights, pts[:, 1] + dy @ weights])
    return LandmarkShape(shape.frame_index, moved)


@dataclass(frozen=True)
class Region:
    """Pixel-inclusive bounds plus the tile grid for one feature region."""

    x0: int
    y0: int
    x1: int
    y1: int
    grid: tuple[int, int]

    @property
    def width(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def height(self) -> int:
        return self.y1 - self.y0 + 1


@dataclass(frozen=True)
class RegionLayout:
    """The four fixed feature regions, in descriptor order."""

    mouth: Region
    left_eye: Region
    right_eye: Region
    nose: Region

    def items(self):
        for name in REGION_ORDER:
            yield name, getattr(self, name)


def compute_rois(
    reference: LandmarkShape,
    groups,
    padding: int,
    image_size: tuple[int, int],
) -> RegionLayout:
    """Expand each feature group's bounding box by `padding` pixels and clamp
    to the reference image.  image_size is (width, height)."""
    width, height = image_size
    regions = {}
    for name, idxs in groups.roi_groups().items():
        pts = reference.points[list(idxs)]
        x0 = int(np.floor(pts[:, 0].min())) - padding
        y0 = int(np.floor(pts[:, 1].min())) - padding
        x1 = int(np.ceil(pts[:, 0].max())) + padding
        y1 = int(np.ceil(pts[:, 1].max())) + padding
        regions[name] = Region(
            max(0, x0), max(0, y0), min(width - 1, x1), min(height - 1, y1), REGION_GRIDS[name]
        )
    return RegionLayout(**regions)


def triangulate_reference(points: np.ndarray) -> np.ndarray:
    """Delaunay triangulation of the 66 reference points.

    Returns an (t, 3) int32 array of landmark index triples.  The topology is
    computed once on the reference and reused for every warp.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("expected (n, 2) points")
    if len(np.unique(pts, axis=0)) != len(pts):
        raise TriangulationError("duplicate landmark positions")
    try:
        tri = scipy.spatial.Delaunay(pts)
    except scipy.spatial.QhullError as exc:
        raise TriangulationError(f"triangulation failed: {exc}") from exc
    simplices = np.asarray(tri.simplices, dtype=np.int32)
    if simplices.size == 0:
        raise TriangulationError("triangulation produced no triangles")
    return simplices
