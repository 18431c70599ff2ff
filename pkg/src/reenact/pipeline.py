"""End-to-end reenactment runs: stage orchestration, caching, reporting.

A run loads both frame sequences with their landmark tracks, optionally
applies flow-based landmark stabilization, extracts descriptors in the
reference frame of the first source frame (assumed to show the user at
rest), matches source frames to temporal clusters of the target, then per
target frame synthesizes the output shape, warps the bracketing selected
source frames onto it, and composites the result into the target frame.

Feature and matching results are cached under <output_dir>/.cache (override
with the REENACT_CACHE_DIR environment variable), keyed by a content hash of
the input files and the configuration fields that influence each stage, so
transfer and compositing parameters can be iterated without re-matching.
"""

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .compositing import (
    build_source_mask,
    clip_to_target,
    composite_face,
    load_color_matrices,
    transfer_mask,
)
from .errors import ConfigError, FlowFormatError, ReenactError, StageError
from .features import FrameFeatures, features_from_frame
from .landmarks import REGION_ORDER, compute_rois, fit_affine, triangulate_reference
from .landmarks import stabilize_landmarks as _stabilize_shape
from .matching import (
    ClusterSpan,
    MatchAssignment,
    MatchResult,
    MergeRecord,
    SelectionDetail,
    normalize_for_motion,
    run_matching,
)
from .media_io import (
    FLOW_TEMPLATE,
    ImageBuffer,
    LandmarkShape,
    RunConfig,
    load_flow_field,
    load_frame_sequence,
    load_landmark_track,
    write_frame_sequence,
    write_image,
)
from .transfer import bracket_weights, reenact_shape, transfer_appearance

CACHE_ENV = "REENACT_CACHE_DIR"
_CACHE_FORMAT = "cache-v1"
REPORT_NAME = "report.txt"


@dataclass
class PipelineReport:
    """Everything a run wants to tell the caller, serializable as structured
    text with one [section] per stage."""

    source_frames: int = 0
    target_frames: int = 0
    backend: str = ""
    workers: int = 1
    spans: list[ClusterSpan] = field(default_factory=list)
    merges: list[MergeRecord] = field(default_factory=list)
    assignments: list[MatchAssignment] = field(default_factory=list)
    mismatches: int | None = None
    mismatch_rate: float | None = None
    stage_seconds: dict[str, float] = field(default_factory=dict)
    intermediates: dict | None = None

    def to_text(self) -> str:
        lines = [
            "[run]",
            f"source_frames = {self.source_frames}",
            f"target_frames = {self.target_frames}",
            f"backend = {self.backend}",
            f"workers = {self.workers}",
            "[clustering]",
            f"clusters = {len(self.spans)}",
            "lengths = " + ",".join(str(len(s)) for s in self.spans),
            f"merges_total = {len(self.merges)}",
            f"merges_accepted = {sum(1 for m in self.merges if m.accepted)}",
            "[matching]",
        ]
        for a in self.assignments:
            motion = "-" if a.motion is None else repr(a.motion)
            lines.append(
                f"cluster_{a.cluster_index:03d} = start={a.span.start} end={a.span.end} "
                f"center={a.span.center} source={a.source_index} "
                f"appearance={a.appearance!r} motion={motion} total={a.total!r}"
            )
        if self.mismatches is not None:
            lines += [
                "[validation]",
                f"mismatches = {self.mismatches}",
                f"rate = {self.mismatch_rate!r}",
            ]
        lines.append("[timing]")
        for name, seconds in self.stage_seconds.items():
            lines.append(f"{name} = {seconds:.3f}")
        return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict[str, dict[str, str]]:
    """Parse report text back into {section: {key: value}} string maps."""
    sections: dict[str, dict[str, str]] = {}
    current: dict[str, str] | None = None
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = sections.setdefault(line[1:-1], {})
        elif " = " in line:
            if current is None:
                raise ValueError(f"report line outside any section: {line!r}")
            key, value = line.split(" = ", 1)
            current[key] = value
        else:
            raise ValueError(f"unparseable report line: {line!r}")
    return sections


@contextmanager
def _stage(name: str, timings: dict[str, float]):
    """Tag ReenactErrors with the stage name and record wall time."""
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except ReenactError as exc:
        raise StageError(name, str(exc)) from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - start


def _map_frames(fn, count: int, workers: int) -> list:
    if workers <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


def _load_side(frames_dir: Path, landmarks_path: Path):
    frames = [f.to_rgb() for f in load_frame_sequence(frames_dir)]
    shapes = load_landmark_track(landmarks_path, expected_frames=len(frames))
    return frames, np.stack([s.points for s in shapes])


def _stabilize_side(
    points: np.ndarray, frames: list[ImageBuffer], flow_dir: Path | None, config: RunConfig
) -> np.ndarray:
    if flow_dir is None:
        return points
    out = points.copy()
    for t in range(len(points)):
        flow = load_flow_field(flow_dir / FLOW_TEMPLATE.format(t))
        if (flow.height, flow.width) != (frames[t].height, frames[t].width):
            raise FlowFormatError(
                f"frame {t}: flow field is {flow.width}x{flow.height}, "
                f"frame is {frames[t].width}x{frames[t].height}"
            )
        shape = _stabilize_shape(
            LandmarkShape(t, points[t]),
            flow,
            rings=config.stabilize_rings,
            ring_points=config.stabilize_ring_points,
        )
        out[t] = shape.points
    return out


def _cache_dir(config: RunConfig) -> Path:
    override = os.environ.get(CACHE_ENV)
    return Path(override) if override else config.output_dir / ".cache"


def _digest_tree(h, directory: Path | None, pattern: str) -> None:
    if directory is None or not directory.is_dir():
        return
    for path in sorted(directory.glob(pattern)):
        h.update(path.name.encode())
        h.update(path.read_bytes())


def _features_key(config: RunConfig) -> str:
    h = hashlib.sha256(_CACHE_FORMAT.encode())
    _digest_tree(h, config.source_dir, "frame_*")
    _digest_tree(h, config.target_dir, "frame_*")
    for path in (config.source_landmarks, config.target_landmarks):
        if path.is_file():
            h.update(path.read_bytes())
    _digest_tree(h, config.source_flow_dir, "flow_*.flo")
    _digest_tree(h, config.target_flow_dir, "flow_*.flo")
    fields = (
        tuple(sorted(vars(config.groups).items())),
        config.roi_padding,
        config.stabilize_rings,
        config.stabilize_ring_points,
    )
    h.update(repr(fields).encode())
    return h.hexdigest()[:24]


def _matching_key(config: RunConfig, features_key: str) -> str:
    h = hashlib.sha256(features_key.encode())
    h.update(repr((config.region_weights, config.motion_weight)).encode())
    return h.hexdigest()[:24]


def _save_features(path: Path, bundle: dict) -> None:
    arrays = {}
    for side in ("source", "target"):
        feats: list[FrameFeatures] = bundle[f"{side}_features"]
        for name in REGION_ORDER:
            arrays[f"{side}_{name}"] = np.stack([f.region(name) for f in feats])
        arrays[f"{side}_aligned"] = bundle[f"{side}_aligned"]
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


def _load_features(path: Path) -> dict | None:
    if not path.is_file():
        return None
    bundle = {}
    with np.load(path) as data:
        for side in ("source", "target"):
            stacks = {name: data[f"{side}_{name}"] for name in REGION_ORDER}
            count = len(next(iter(stacks.values())))
            bundle[f"{side}_features"] = [
                FrameFeatures(**{name: stacks[name][i] for name in REGION_ORDER})
                for i in range(count)
            ]
            bundle[f"{side}_aligned"] = data[f"{side}_aligned"]
    return bundle


def _save_matching(path: Path, match: MatchResult) -> None:
    payload = {
        "spans": [[s.start, s.end] for s in match.spans],
        "merges": [
            [m.left.start, m.left.end, m.right.start, m.right.end, m.linkage,
             m.merged_variance, m.accepted]
            for m in match.merges
        ],
        "assignments": [
            [a.cluster_index, a.span.start, a.span.end, a.source_index,
             a.appearance, a.motion, a.total]
            for a in match.assignments
        ],
        "details": [
            {
                "appearance": d.appearance_norm.tolist(),
                "motion": None if d.motion_norm is None else d.motion_norm.tolist(),
                "totals": d.totals.tolist(),
            }
            for d in (match.details or [])
        ],
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload))


def _load_matching(path: Path) -> MatchResult | None:
    if not path.is_file():
        return None
    payload = json.loads(path.read_text())
    spans = [ClusterSpan(s, e) for s, e in payload["spans"]]
    merges = [
        MergeRecord(ClusterSpan(ls, le), ClusterSpan(rs, re), linkage, var, accepted)
        for ls, le, rs, re, linkage, var, accepted in payload["merges"]
    ]
    assignments = [
        MatchAssignment(k, ClusterSpan(s, e), src, app, mot, total)
        for k, s, e, src, app, mot, total in payload["assignments"]
    ]
    details = [
        SelectionDetail(
            assignments[i].source_index,
            np.array(d["appearance"]),
            None if d["motion"] is None else np.array(d["motion"]),
            np.array(d["totals"]),
        )
        for i, d in enumerate(payload["details"])
    ]
    return MatchResult(spans, merges, assignments, details)


def _run_until_matching(config: RunConfig, workers: int, use_cache: bool, timings: dict):
    """Shared front half of every command: load, stabilize, features, match."""
    ctx: dict = {}
    with _stage("media_io", timings):
        ctx["source_frames"], source_points = _load_side(
            config.source_dir, config.source_landmarks
        )
        ctx["target_frames"], target_points = _load_side(
            config.target_dir, config.target_landmarks
        )
    with _stage("stabilize", timings):
        source_points = _stabilize_side(
            source_points, ctx["source_frames"], config.source_flow_dir, config
        )
        target_points = _stabilize_side(
            target_points, ctx["target_frames"], config.target_flow_dir, config
        )
        ctx["source_points"] = source_points
        ctx["target_points"] = target_points

    features_key = _features_key(config)
    matching_key = _matching_key(config, features_key)
    cache = _cache_dir(config)
    ctx["features_key"] = features_key
    ctx["matching_key"] = matching_key

    with _stage("features", timings):
        reference = LandmarkShape(0, source_points[0])
        ref_size = (ctx["source_frames"][0].width, ctx["source_frames"][0].height)
        layout = compute_rois(reference, config.groups, config.roi_padding, ref_size)
        ctx["reference"] = reference
        ctx["layout"] = layout

        bundle = _load_features(cache / f"features_{features_key}.npz") if use_cache else None
        if bundle is None:
            bundle = {}
            for side, frames, points in (
                ("source", ctx["source_frames"], source_points),
                ("target", ctx["target_frames"], target_points),
            ):
                grays = [f.to_float_gray() for f in frames]
                transforms = [fit_affine(points[i], reference.points) for i in range(len(frames))]

                def one(i, grays=grays, transforms=transforms):
                    return features_from_frame(grays[i], transforms[i], layout, ref_size)

                bundle[f"{side}_features"] = _map_frames(one, len(frames), workers)
                aligned = np.stack(
                    [transforms[i].apply(points[i]) for i in range(len(frames))]
                )
                bundle[f"{side}_aligned"] = normalize_for_motion(aligned, reference.points)
            if use_cache:
                _save_features(cache / f"features_{features_key}.npz", bundle)
        ctx.update(bundle)

    with _stage("matching", timings):
        match = _load_matching(cache / f"matching_{matching_key}.json") if use_cache else None
        if match is None:
            match = run_matching(
                ctx["target_features"],
                ctx["source_features"],
                ctx["target_aligned"],
                ctx["source_aligned"],
                config.region_weights,
                config.motion_weight,
                keep_details=True,
            )
            if use_cache:
                _save_matching(cache / f"matching_{matching_key}.json", match)
        ctx["match"] = match
    return ctx


def _bracket(t: int, centers: list[int], selections: list[int]):
    """Bracketing (center, selection) pairs for frame t; outside the first or
    last cluster center the nearer selection gets all the weight."""
    lo = int(np.searchsorted(centers, t, side="right")) - 1
    hi = int(np.searchsorted(centers, t, side="left"))
    if lo < 0:
        prev_center, prev_sel = t, selections[0]
    else:
        prev_center, prev_sel = centers[lo], selections[lo]
    if hi >= len(centers):
        next_center, next_sel = t, selections[-1]
    else:
        next_center, next_sel = centers[hi], selections[hi]
    return prev_center, prev_sel, next_center, next_sel


def _render_frames(config: RunConfig, ctx: dict, workers: int, timings: dict):
    source_frames = ctx["source_frames"]
    target_frames = ctx["target_frames"]
    source_points = ctx["source_points"]
    target_points = ctx["target_points"]
    match: MatchResult = ctx["match"]
    centers = [s.center for s in match.spans]
    selections = [a.source_index for a in match.assignments]

    with _stage("render", timings):
        mesh = triangulate_reference(source_points[0])
        matrices = load_color_matrices()
        source_mask = build_source_mask(
            source_points[0],
            config.groups,
            (source_frames[0].height, source_frames[0].width),
            close_radius=config.mask_close_radius,
            erode_sigma=config.erode_sigma,
            erode_threshold=config.erode_threshold,
        )
        size = (target_frames[0].width, target_frames[0].height)

        def one(t: int):
            try:
                prev_center, prev_sel, next_center, next_sel = _bracket(t, centers, selections)
                shape = reenact_shape(
                    t,
                    target_points,
                    prev_center,
                    source_points[prev_sel],
                    next_center,
                    source_points[next_sel],
                    config.smooth_weights,
                    config.target_shape_weight,
                    config.source_shape_weight,
                )
                weights = bracket_weights(t, prev_center, next_center)
                warped, _ = transfer_appearance(
                    source_frames[prev_sel],
                    source_points[prev_sel],
                    source_frames[next_sel],
                    source_points[next_sel],
                    shape,
                    weights,
                    mesh,
                    size,
                )
                mask = transfer_mask(source_mask, source_points[0], shape, mesh, size)
                mask = clip_to_target(
                    mask,
                    target_points[t],
                    config.groups,
                    close_radius=config.mask_close_radius,
                    erode_sigma=config.erode_sigma,
                    erode_threshold=config.erode_threshold,
                )
                out = composite_face(
                    warped, target_frames[t], mask, matrices, seam_sigma=config.seam_sigma
                )
                return out, mask, shape
            except StageError:
                raise
            except ReenactError as exc:
                raise StageError("render", f"frame {t}: {exc}") from exc

        results = _map_frames(one, len(target_frames), workers)
    outputs = [r[0] for r in results]
    masks = [r[1] for r in results]
    shapes = np.stack([r[2] for r in results])
    return outputs, masks, shapes


def _count_mismatches(match: MatchResult) -> int:
    return sum(
        1
        for a in match.assignments
        if not a.span.start <= a.source_index <= a.span.end
    )


def cmd_reenact(
    config: RunConfig,
    workers: int | None = None,
    keep_intermediates: bool = False,
    use_cache: bool = True,
) -> PipelineReport:
    """Run the full pipeline and write output frames plus a report file."""
    config.validate()
    workers = workers or os.cpu_count() or 1
    timings: dict[str, float] = {}
    ctx = _run_until_matching(config, workers, use_cache, timings)
    outputs, masks, shapes = _render_frames(config, ctx, workers, timings)
    with _stage("write", timings):
        config.output_dir.mkdir(parents=True, exist_ok=True)
        write_frame_sequence(outputs, config.output_dir)
    report = PipelineReport(
        source_frames=len(ctx["source_frames"]),
        target_frames=len(ctx["target_frames"]),
        backend=kernels.BACKEND,
        workers=workers,
        spans=ctx["match"].spans,
        merges=ctx["match"].merges,
        assignments=ctx["match"].assignments,
        stage_seconds=timings,
    )
    if keep_intermediates:
        report.intermediates = {"outputs": outputs, "masks": masks, "shapes": shapes}
    (config.output_dir / REPORT_NAME).write_text(report.to_text())
    return report


def cmd_validate_self(
    config: RunConfig, workers: int | None = None, use_cache: bool = True
) -> PipelineReport:
    """Self-reenactment check: match the sequence against itself and count
    selections that fall outside their own cluster."""
    config.validate()
    if config.source_dir.resolve() != config.target_dir.resolve():
        raise ConfigError("self-validation requires source_dir == target_dir")
    if config.source_landmarks.resolve() != config.target_landmarks.resolve():
        raise ConfigError("self-validation requires identical landmark tracks")
    workers = workers or os.cpu_count() or 1
    timings: dict[str, float] = {}
    ctx = _run_until_matching(config, workers, use_cache, timings)
    match: MatchResult = ctx["match"]
    mismatches = _count_mismatches(match)
    report = PipelineReport(
        source_frames=len(ctx["source_frames"]),
        target_frames=len(ctx["target_frames"]),
        backend=kernels.BACKEND,
        workers=workers,
        spans=match.spans,
        merges=match.merges,
        assignments=match.assignments,
        mismatches=mismatches,
        mismatch_rate=mismatches / len(match.spans),
        stage_seconds=timings,
    )
    config.output_dir.mkdir(parents=True, exist_ok=True)
    (config.output_dir / REPORT_NAME).write_text(report.to_text())
    return report


def cmd_dump_diagnostics(config: RunConfig) -> list[Path]:
    """Write the matching audit trail from the cache: a cluster table, the
    per-cluster candidate score vectors, and a strip image of the selected
    source frames.  Requires a prior run with the same inputs and config."""
    config.validate()
    matching_path = _cache_dir(config) / f"matching_{_matching_key(config, _features_key(config))}.json"
    match = _load_matching(matching_path)
    if match is None:
        raise StageError(
            "diagnostics", f"no cached matching result at {matching_path}; run the pipeline first"
        )
    out_dir = config.output_dir / "diagnostics"
    out_dir.mkdir(parents=True, exist_ok=True)

    table = out_dir / "clusters.txt"
    lines = []
    for a in match.assignments:
        motion = "-" if a.motion is None else repr(a.motion)
        lines.append(
            f"cluster={a.cluster_index:03d} start={a.span.start} end={a.span.end} "
            f"center={a.span.center} source={a.source_index} "
            f"appearance={a.appearance!r} motion={motion} total={a.total!r}"
        )
    table.write_text("\n".join(lines) + "\n")

    vectors = out_dir / "candidates.npz"
    arrays: dict[str, np.ndarray] = {
        "selected": np.array([a.source_index for a in match.assignments], dtype=np.int64)
    }
    for k, detail in enumerate(match.details or []):
        arrays[f"appearance_{k:03d}"] = detail.appearance_norm
        arrays[f"totals_{k:03d}"] = detail.totals
        if detail.motion_norm is not None:
            arrays[f"motion_{k:03d}"] = detail.motion_norm
    with open(vectors, "wb") as fh:
        np.savez(fh, **arrays)

    frames = [f.to_rgb() for f in load_frame_sequence(config.source_dir)]
    strip_img = np.concatenate(
        [frames[a.source_index].data for a in match.assignments], axis=1
    )
    strip = write_image(ImageBuffer(strip_img), out_dir / "selected_strip.png")
    return [table, vectors, strip]
