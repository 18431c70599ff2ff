"""Frame, landmark, flow, and run-configuration I/O.

File formats
------------
Frames:     frame_000000.png (or .ppm), indices contiguous from zero, all
            frames in a sequence share dimensions.
Landmarks:  plain text, one record per frame: the frame index followed by
            132 floats (x0 y0 x1 y1 ... x65 y65).  Blank lines and lines
            starting with '#' are ignored.
Flow:       binary little-endian: float32 magic 202021.25, int32 width and
            height, then row-major interleaved float32 (dx, dy) pairs.
Config:     flat key=value text; see RunConfig for the key set.  Unknown keys
            are rejected.  Relative paths resolve against the config file.
"""

import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, FlowFormatError, FrameSequenceError, LandmarkFormatError

LANDMARK_COUNT = 66
_TRACK_FIELDS = 1 + 2 * LANDMARK_COUNT
FLOW_MAGIC = 202021.25

_FRAME_RE = re.compile(r"^frame_(\d{6})\.(png|ppm)$")
FRAME_TEMPLATE = "frame_{:06d}.png"
FLOW_TEMPLATE = "flow_{:06d}.flo"


@dataclass
class ImageBuffer:
    """8-bit raster, (h, w) gray or (h, w, 3) color, row-major."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype != np.uint8:
            raise ValueError("image data must be uint8")
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
            raise ValueError(f"unsupported image shape {arr.shape}")
        if arr.size == 0:
            raise ValueError("empty image")
        self.data = np.ascontiguousarray(arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]

    def to_rgb(self) -> "ImageBuffer":
        if self.channels == 3:
            return self
        return ImageBuffer(np.repeat(self.data[:, :, None], 3, axis=2))

    def to_float_gray(self) -> np.ndarray:
        """Standard luma combination, float64, no requantization."""
        if self.channels == 1:
            return self.data.astype(np.float64)
        d = self.data.astype(np.float64)
        return 0.299 * d[:, :, 0] + 0.587 * d[:, :, 1] + 0.114 * d[:, :, 2]


@dataclass
class LandmarkShape:
    """One frame's 66 tracked points, pixel coordinates, float64."""

    frame_index: int
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (LANDMARK_COUNT, 2):
            raise ValueError(f"expected ({LANDMARK_COUNT}, 2) points, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("landmark coordinates must be finite")
        self.points = pts


@dataclass
class FlowField:
    """Dense per-pixel (dx, dy) displacement field, float32."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float32)
        if v.ndim != 3 or v.shape[2] != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"expected (h, w, 2) vectors, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("flow components must be finite")
        self.vectors = v

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]


def load_frame_sequence(directory) -> list[ImageBuffer]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FrameSequenceError(f"frame directory not found: {directory}")
    found: dict[int, Path] = {}
    for entry in sorted(directory.iterdir()):
        m = _FRAME_RE.match(entry.name)
        if not m:
            continue
        idx = int(m.group(1))
        if idx in found:
            raise FrameSequenceError(f"frame index {idx} appears more than once in {directory}")
        found[idx] = entry
    if not found:
        raise FrameSequenceError(f"no frames found in {directory}")
    count = len(found)
    for i in range(count):
        if i not in found:
            raise FrameSequenceError(f"missing frame index {i} in {directory}")
    frames = []
    for i in range(count):
        with Image.open(found[i]) as im:
            if im.mode != "L":
                im = im.convert("RGB")
            frames.append(ImageBuffer(np.asarray(im)))
    first = frames[0]
    for i, f in enumerate(frames):
        if (f.width, f.height) != (first.width, first.height):
            raise FrameSequenceError(
                f"frame {i} is {f.width}x{f.height}, expected "
                f"{first.width}x{first.height}"
            )
    return frames


def write_frame_sequence(frames, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        path = directory / FRAME_TEMPLATE.format(i)
        Image.fromarray(frame.data).save(path, format="PNG")
        paths.append(path)
    return paths


def write_image(frame: ImageBuffer, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(frame.data).save(path, format="PNG")
    return path


def load_landmark_track(path, expected_frames: int) -> list[LandmarkShape]:
    path = Path(path)
    if not path.is_file():
        raise LandmarkFormatError(f"landmark track not found: {path}")
    shapes = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            if len(tokens) != _TRACK_FIELDS:
                raise LandmarkFormatError(
                    f"{path}:{lineno}: expected {_TRACK_FIELDS} fields, got {len(tokens)}"
                )
            try:
                idx = int(tokens[0])
                values = np.array([float(t) for t in tokens[1:]], dtype=np.float64)
            except ValueError as exc:
                raise LandmarkFormatError(f"{path}:{lineno}: {exc}") from exc
            if not np.all(np.isfinite(values)):
                raise LandmarkFormatError(f"{path}:{lineno}: non-finite coordinate")
            if idx != len(shapes):
                raise LandmarkFormatError(
                    f"{path}:{lineno}: frame index {idx} out of order (expected {len(shapes)})"
                )
            shapes.append(LandmarkShape(idx, values.reshape(LANDMARK_COUNT, 2)))
    if len(shapes) != expected_frames:
        raise LandmarkFormatError(
            f"{path}: {len(shapes)} records for {expected_frames} frames"
        )
    return shapes


def write_landmark_track(shapes, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for shape in shapes:
            coords = " ".join(f"{v!r}" for v in shape.points.ravel())
            fh.write(f"{shape.frame_index} {coords}\n")


def load_flow_field(path) -> FlowField:
    path = Path(path)
    raw = np.fromfile(path, dtype=np.float32, count=1)
    if raw.size != 1 or raw[0] != np.float32(FLOW_MAGIC):
        raise FlowFormatError(f"{path}: bad magic tag")
    dims = np.fromfile(path, dtype=np.int32, count=2, offset=4)
    if dims.size != 2 or dims[0] <= 0 or dims[1] <= 0:
        raise FlowFormatError(f"{path}: bad dimensions")
    w, h = int(dims[0]), int(dims[1])
    data = np.fromfile(path, dtype=np.float32, offset=12)
    if data.size != 2 * w * h:
        raise FlowFormatError(
            f"{path}: truncated payload ({data.size} floats for {w}x{h})"
        )
    try:
        return FlowField(data.reshape(h, w, 2))
    except ValueError as exc:
        raise FlowFormatError(f"{path}: {exc}") from exc


def write_flow_field(flow: FlowField, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.float32(FLOW_MAGIC).tofile(fh)
        np.array([flow.width, flow.height], dtype=np.int32).tofile(fh)
        np.ascontiguousarray(flow.vectors, dtype=np.float32).tofile(fh)


def _parse_index_list(text: str) -> tuple[int, ...]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


@dataclass(frozen=True)
class LandmarkGroups:
    """Landmark index groups.  The default layout runs jaw outline, brows,
    nose, eyes, mouth in that order over the 66 indices."""

    outline: tuple[int, ...] = tuple(range(0, 17))
    brows: tuple[int, ...] = tuple(range(17, 27))
    nose: tuple[int, ...] = tuple(range(27, 36))
    left_eye: tuple[int, ...] = tuple(range(36, 42))
    right_eye: tuple[int, ...] = tuple(range(42, 48))
    mouth: tuple[int, ...] = tuple(range(48, 66))

    def validate(self) -> None:
        seen: set[int] = set()
        for f in fields(self):
            idxs = getattr(self, f.name)
            if not idxs:
                raise ConfigError(f"group {f.name} is empty")
            for i in idxs:
                if not 0 <= i < LANDMARK_COUNT:
                    raise ConfigError(f"group {f.name}: index {i} out of range")
                if i in seen:
                    raise ConfigError(f"group {f.name}: index {i} used twice")
                seen.add(i)

    def chin(self) -> tuple[int, ...]:
        """Central run of the jaw outline, used to anchor the mouth hull."""
        n = len(self.outline)
        span = max(1, n // 3)
        start = (n - span) // 2
        return self.outline[start : start + span]

    def roi_groups(self) -> dict[str, tuple[int, ...]]:
        return {
            "mouth": self.mouth,
            "left_eye": self.left_eye,
            "right_eye": self.right_eye,
            "nose": self.nose,
        }


_GROUP_KEYS = {
    "group_outline": "outline",
    "group_brows": "brows",
    "group_nose": "nose",
    "group_left_eye": "left_eye",
    "group_right_eye": "right_eye",
    "group_mouth": "mouth",
}


@dataclass
class RunConfig:
    """Everything a reenactment run needs, parsed from a key=value file."""

    source_dir: Path
    target_dir: Path
    output_dir: Path
    source_landmarks: Path | None = None
    target_landmarks: Path | None = None
    source_flow_dir: Path | None = None
    target_flow_dir: Path | None = None
    groups: LandmarkGroups = field(default_factory=LandmarkGroups)
    region_weights: tuple[float, float, float, float] = (0.6, 0.15, 0.15, 0.1)
    motion_weight: float = 0.8
    smooth_weights: tuple[float, float, float] = (0.1, 0.8, 0.1)
    target_shape_weight: float = 0.6
    source_shape_weight: float = 0.4
    roi_padding: int = 10
    seam_sigma: float = 9.0
    erode_sigma: float = 5.0
    erode_threshold: float = 0.99
    mask_close_radius: int = 12
    stabilize_rings: int = 2
    stabilize_ring_points: int = 8

    def __post_init__(self):
        self.source_dir = Path(self.source_dir)
        self.target_dir = Path(self.target_dir)
        self.output_dir = Path(self.output_dir)
        if self.source_landmarks is None:
            self.source_landmarks = self.source_dir / "landmarks.txt"
        if self.target_landmarks is None:
            self.target_landmarks = self.target_dir / "landmarks.txt"

    def validate(self) -> None:
        self.groups.validate()
        for name, weights, expect in (
            ("region_weights", self.region_weights, 4),
            ("smooth_weights", self.smooth_weights, 3),
            ("shape weights", (self.target_shape_weight, self.source_shape_weight), 2),
        ):
            if len(weights) != expect:
                raise ConfigError(f"{name}: expected {expect} values")
            if any(w < 0 for w in weights):
                raise ConfigError(f"{name}: weights must be non-negative")
            if abs(sum(weights) - 1.0) > 1e-9:
                raise ConfigError(f"{name}: weights must sum to 1 (got {sum(weights)!r})")
        if self.motion_weight < 0:
            raise ConfigError("motion_weight must be >= 0")
        if self.roi_padding < 0:
            raise ConfigError("roi_padding must be >= 0")
        for name, value in (("seam_sigma", self.seam_sigma), ("erode_sigma", self.erode_sigma)):
            if value <= 0:
                raise ConfigError(f"{name} must be > 0")
        if not 0.0 < self.erode_threshold <= 1.0:
            raise ConfigError("erode_threshold must be in (0, 1]")
        if self.mask_close_radius < 0:
            raise ConfigError("mask_close_radius must be >= 0")
        if self.stabilize_rings < 1 or self.stabilize_ring_points < 1:
            raise ConfigError("stabilization sampling parameters must be >= 1")

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        base = path.parent
        raw: dict[str, str] = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                key, value = line.split("=", 1)
                key = key.strip()
                value = value.strip()
                if key in raw:
                    raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
                raw[key] = value

        def pop_path(key, required=False):
            if key not in raw:
                if required:
                    raise ConfigError(f"{path}: missing required key {key!r}")
                return None
            p = Path(raw.pop(key))
            return p if p.is_absolute() else base / p

        kwargs = {
            "source_dir": pop_path("source_dir", required=True),
            "target_dir": pop_path("target_dir", required=True),
            "output_dir": pop_path("output_dir", required=True),
            "source_landmarks": pop_path("source_landmarks"),
            "target_landmarks": pop_path("target_landmarks"),
            "source_flow_dir": pop_path("source_flow_dir"),
            "target_flow_dir": pop_path("target_flow_dir"),
        }

        group_kwargs = {}
        for key, attr in _GROUP_KEYS.items():
            if key in raw:
                try:
                    group_kwargs[attr] = _parse_index_list(raw.pop(key))
                except ValueError as exc:
                    raise ConfigError(f"{path}: {key}: {exc}") from exc
        if group_kwargs:
            kwargs["groups"] = replace(LandmarkGroups(), **group_kwargs)

        def pop_floats(key, n):
            if key not in raw:
                return None
            parts = [p for p in raw.pop(key).split(",") if p.strip()]
            if len(parts) != n:
                raise ConfigError(f"{path}: {key}: expected {n} comma-separated values")
            try:
                return tuple(float(p) for p in parts)
            except ValueError as exc:
                raise ConfigError(f"{path}: {key}: {exc}") from exc

        def pop_scalar(key, conv):
            if key not in raw:
                return None
            try:
                return conv(raw.pop(key))
            except ValueError as exc:
                raise ConfigError(f"{path}: {key}: {exc}") from exc

        scalars = {
            "region_weights": pop_floats("region_weights", 4),
            "smooth_weights": pop_floats("smooth_weights", 3),
            "motion_weight": pop_scalar("motion_weight", float),
            "target_shape_weight": pop_scalar("target_shape_weight", float),
            "source_shape_weight": pop_scalar("source_shape_weight", float),
            "roi_padding": pop_scalar("roi_padding", int),
            "seam_sigma": pop_scalar("seam_sigma", float),
            "erode_sigma": pop_scalar("erode_sigma", float),
            "erode_threshold": pop_scalar("erode_threshold", float),
            "mask_close_radius": pop_scalar("mask_close_radius", int),
            "stabilize_rings": pop_scalar("stabilize_rings", int),
            "stabilize_ring_points": pop_scalar("stabilize_ring_points", int),
        }
        kwargs.update({k: v for k, v in scalars.items() if v is not None})

        if raw:
            unknown = ", ".join(sorted(raw))
            raise ConfigError(f"{path}: unknown key(s): {unknown}")

        config = cls(**kwargs)
        config.validate()
        return config
