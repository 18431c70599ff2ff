"""Parametric synthetic face sequences for pipeline tests.

Landmarks and pixels derive from one skeleton, so a frame's texture moves
exactly with its landmark track.  That coherence is what lets warping and
compositing tests make quantitative claims (a warped copy of an expression
looks like that expression rendered directly).

The 66-point layout matches the package defaults: 0-16 jaw outline (chin at
8), 17-26 brows, 27-35 nose, 36-41 / 42-47 eye hexagons, 48-65 mouth (12
outer + 6 inner points).
"""

from dataclasses import dataclass

import numpy as np

from reenact.media_io import (
    ImageBuffer,
    LandmarkShape,
    write_frame_sequence,
    write_landmark_track,
)


@dataclass(frozen=True)
class Expression:
    mouth_open: float = 0.0
    smile: float = 0.0
    brow_raise: float = 0.0
    eye_open: float = 1.0
    jaw_drop: float = 0.0


REST = Expression()


@dataclass(frozen=True)
class Pose:
    center: tuple[float, float]
    scale: float
    angle: float = 0.0


def default_pose(size: tuple[int, int]) -> Pose:
    w, h = size
    return Pose((w / 2.0, h / 2.0), 0.30 * min(w, h), 0.0)


def _mouth_geometry(expr: Expression):
    cy = 0.70
    width = 0.30 + 0.04 * expr.smile
    top = 0.10
    bottom = 0.11 + 0.16 * expr.mouth_open
    inner_width = 0.17
    inner_top = 0.035
    inner_bottom = 0.035 + 0.13 * expr.mouth_open
    lift = 0.09 * expr.smile
    return cy, width, top, bottom, inner_width, inner_top, inner_bottom, lift


def _eye_geometry(expr: Expression):
    half_w = 0.14
    half_h = 0.02 + 0.075 * expr.eye_open
    return (-0.38, -0.30), (0.38, -0.30), half_w, half_h


def _jaw_ry(expr: Expression) -> float:
    return 1.35 * (1.0 + 0.09 * expr.jaw_drop)


def _canonical_landmarks(expr: Expression) -> np.ndarray:
    pts = np.zeros((66, 2))

    ang = np.pi * np.arange(17) / 16.0
    pts[0:17, 0] = -np.cos(ang)
    pts[0:17, 1] = -0.10 + _jaw_ry(expr) * np.sin(ang)

    u = np.linspace(0.0, 1.0, 5)
    brow_y = -0.52 - 0.10 * np.sin(np.pi * u) - 0.14 * expr.brow_raise
    pts[17:22, 0] = -0.62 + 0.44 * u
    pts[17:22, 1] = brow_y
    pts[22:27, 0] = 0.18 + 0.44 * u
    pts[22:27, 1] = brow_y

    pts[27:31, 0] = 0.0
    pts[27:31, 1] = np.linspace(-0.38, 0.16, 4)
    nx = np.linspace(-0.16, 0.16, 5)
    pts[31:36, 0] = nx
    pts[31:36, 1] = 0.26 + 0.06 * (1.0 - (nx / 0.16) ** 2)

    (lc, rc, ew, eh) = _eye_geometry(expr)
    for base, (cx, cy) in ((36, lc), (42, rc)):
        pts[base + 0] = (cx - ew, cy)
        pts[base + 1] = (cx - 0.5 * ew, cy - eh)
        pts[base + 2] = (cx + 0.5 * ew, cy - eh)
        pts[base + 3] = (cx + ew, cy)
        pts[base + 4] = (cx + 0.5 * ew, cy + 0.85 * eh)
        pts[base + 5] = (cx - 0.5 * ew, cy + 0.85 * eh)

    cy, mw, mt, mb, iw, it, ib, lift = _mouth_geometry(expr)
    outer = np.deg2rad(np.arange(180, -180, -30.0))  # 48..59 counterclockwise from left corner
    for i, a in enumerate(outer):
        s, c = np.sin(a), np.cos(a)
        h = mt if s >= 0 else mb
        pts[48 + i] = (mw * c, cy - h * s - lift * c * c)
    inner = np.deg2rad(np.array([180.0, 120.0, 60.0, 0.0, -60.0, -120.0]))
    for i, a in enumerate(inner):
        s, c = np.sin(a), np.cos(a)
        h = it if s >= 0 else ib
        pts[60 + i] = (iw * c, cy - h * s - 0.8 * lift * c * c)
    return pts


def face_landmarks(expr: Expression, pose: Pose) -> np.ndarray:
    """Landmark coordinates (66, 2) in image space."""
    pts = _canonical_landmarks(expr)
    cos_a, sin_a = np.cos(pose.angle), np.sin(pose.angle)
    rot = np.array([[cos_a, -sin_a], [sin_a, cos_a]])
    return np.asarray(pose.center) + pose.scale * (pts @ rot.T)


def _smooth(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _inside(dist: np.ndarray, edge: float) -> np.ndarray:
    # dist is an ellipse-normalized distance (1.0 on the boundary)
    return _smooth((1.0 - dist) / edge + 0.5)


def _blend(img: np.ndarray, alpha: np.ndarray, color) -> None:
    a = alpha[..., None]
    img *= 1.0 - a
    img += a * np.asarray(color)


def render_face(
    expr: Expression,
    pose: Pose,
    size: tuple[int, int],
    noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> ImageBuffer:
    """Render one RGB frame coherent with face_landmarks(expr, pose).

    noise is an additive Gaussian pixel std in intensity levels; pass a seeded
    generator to make it reproducible.
    """
    w, h = size
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    dx = xs - pose.center[0]
    dy = ys - pose.center[1]
    cos_a, sin_a = np.cos(pose.angle), np.sin(pose.angle)
    cx = (cos_a * dx + sin_a * dy) / pose.scale
    cy = (-sin_a * dx + cos_a * dy) / pose.scale

    def ell(x0, y0, rx, ry, x=None, y=None):
        xx = cx if x is None else x
        yy = cy if y is None else y
        return np.sqrt(((xx - x0) / rx) ** 2 + ((yy - y0) / ry) ** 2)

    img = np.empty((h, w, 3))
    ramp = 0.80 - 0.10 * (ys / max(h - 1, 1))
    img[..., 0] = ramp * 0.95
    img[..., 1] = ramp
    img[..., 2] = ramp * 1.05

    # head: forehead dome plus a jaw ellipse that follows the outline points
    jaw = ell(0.0, -0.10, 1.0, _jaw_ry(expr))
    dome = ell(0.0, -0.35, 0.98, 0.72)
    face_a = np.maximum(_inside(jaw, 0.04), _inside(dome, 0.04))
    shade = (1.0 - 0.16 * np.minimum(jaw, dome) ** 2) * (1.0 + 0.03 * cx)
    texture = 1.0 + 0.012 * np.sin(23.0 * cx + 5.0 * cy) * np.sin(17.0 * cy - 3.0 * cx)
    skin = np.stack([0.84 * shade, 0.68 * shade, 0.58 * shade], axis=-1) * texture[..., None]
    alpha = face_a[..., None]
    img *= 1.0 - alpha
    img += alpha * skin

    # brows: soft bands along the brow arcs
    brow_y = -0.52 - 0.14 * expr.brow_raise
    for x0 in (-0.40, 0.40):
        arch = brow_y - 0.10 * np.clip(1.0 - ((cx - x0) / 0.22) ** 2, 0.0, 1.0)
        dist = np.sqrt(((cx - x0) / 0.24) ** 2 + ((cy - arch) / 0.050) ** 2)
        _blend(img, 0.9 * _inside(dist, 0.28), (0.30, 0.22, 0.18))

    # eyes: sclera, iris, pupil, clipped by the lid ellipse
    (lc, rc, ew, eh) = _eye_geometry(expr)
    for ecx, ecy in (lc, rc):
        lid = _inside(ell(ecx, ecy, ew, eh), 0.10)
        _blend(img, lid, (0.96, 0.96, 0.95))
        _blend(img, lid * _inside(ell(ecx, ecy, 0.055, 0.055), 0.18), (0.36, 0.26, 0.16))
        _blend(img, lid * _inside(ell(ecx, ecy, 0.024, 0.024), 0.30), (0.08, 0.08, 0.10))

    # nose: bridge shading band and nostril dots
    bridge = np.sqrt((cx / 0.055) ** 2 + ((cy + 0.11) / 0.30) ** 2)
    _blend(img, 0.30 * _inside(bridge, 0.35), (0.70, 0.55, 0.45))
    for x0 in (-0.10, 0.10):
        _blend(img, 0.8 * _inside(ell(x0, 0.30, 0.035, 0.030), 0.35), (0.45, 0.32, 0.26))

    # mouth: smile lifts the corners via a coordinate warp shared with the
    # landmark formula, so lips and landmarks stay attached
    mcy, mw, mt, mb, iw, it, ib, lift = _mouth_geometry(expr)
    warped_y = cy + lift * np.clip((cx / mw) ** 2, 0.0, 1.3)
    upper = warped_y < mcy
    lip_h = np.where(upper, mt + 0.012, mb + 0.012)
    lips = ell(0.0, mcy, mw, 1.0, y=(warped_y - mcy) / lip_h + mcy)
    _blend(img, _inside(lips, 0.07), (0.72, 0.42, 0.40))
    in_h = np.where(upper, it, ib)
    inner = ell(0.0, mcy, iw, 1.0, y=(warped_y - mcy) / in_h + mcy)
    _blend(img, _inside(inner, 0.10), (0.25, 0.12, 0.12))

    if noise > 0.0:
        if rng is None:
            rng = np.random.default_rng(0)
        img += rng.normal(0.0, noise / 255.0, img.shape)
    return ImageBuffer(np.clip(np.floor(img * 255.0 + 0.5), 0.0, 255.0).astype(np.uint8))


def face_sequence(
    expressions,
    pose: Pose | None = None,
    size: tuple[int, int] = (256, 256),
    noise: float = 0.0,
    seed: int = 0,
    jitter: float = 0.0,
):
    """Render a sequence; returns (frames, shapes).

    noise: pixel noise std (levels).  jitter: landmark noise std (pixels),
    mimicking tracker wobble without touching the rendered pixels.
    """
    pose = pose or default_pose(size)
    rng = np.random.default_rng(seed)
    frames, shapes = [], []
    for i, expr in enumerate(expressions):
        frames.append(render_face(expr, pose, size, noise=noise, rng=rng))
        pts = face_landmarks(expr, pose)
        if jitter > 0.0:
            pts = pts + rng.normal(0.0, jitter, pts.shape)
        shapes.append(LandmarkShape(i, pts))
    return frames, shapes


def block_expressions(blocks) -> list[Expression]:
    """Expand [(expression, count), ...] into a per-frame list."""
    out: list[Expression] = []
    for expr, count in blocks:
        out.extend([expr] * count)
    return out


def write_fixture(directory, frames, shapes) -> None:
    write_frame_sequence(frames, directory)
    write_landmark_track(shapes, directory / "landmarks.txt")
