"""Video face reenactment: drive an actor's inner face with a user's
recorded performance, frame-matched by texture and landmark motion."""

from . import errors, kernels
from .compositing import (
    build_source_mask,
    clip_to_target,
    composite_face,
    feather_seam,
    load_color_matrices,
    perceptual_to_rgb,
    poisson_clone,
    rgb_to_perceptual,
    transfer_mask,
)
from .features import (
    appearance_distance,
    features_from_aligned,
    features_from_frame,
    FrameFeatures,
    uniform_label_table,
)
from .landmarks import (
    AffineTransform2D,
    align_to_reference,
    compute_rois,
    fit_affine,
    RegionLayout,
    stabilize_landmarks,
    triangulate_reference,
)
from .matching import (
    ClusterSpan,
    MatchAssignment,
    motion_distance,
    run_matching,
    select_source_frame,
    temporal_clustering,
)
from .media_io import (
    FlowField,
    ImageBuffer,
    LandmarkGroups,
    LandmarkShape,
    load_flow_field,
    load_frame_sequence,
    load_landmark_track,
    RunConfig,
    write_flow_field,
    write_frame_sequence,
    write_landmark_track,
)
from .pipeline import (
    cmd_dump_diagnostics,
    cmd_reenact,
    cmd_validate_self,
    parse_report,
    PipelineReport,
)
from .transfer import bracket_weights, piecewise_affine_warp, reenact_shape, transfer_appearance

__version__ = "0.1.0"

__all__ = [
    "AffineTransform2D",
    "ClusterSpan",
    "FlowField",
    "FrameFeatures",
    "ImageBuffer",
    "LandmarkGroups",
    "LandmarkShape",
    "MatchAssignment",
    "PipelineReport",
    "RegionLayout",
    "RunConfig",
    "align_to_reference",
    "appearance_distance",
    "bracket_weights",
    "build_source_mask",
    "clip_to_target",
    "cmd_dump_diagnostics",
    "cmd_reenact",
    "cmd_validate_self",
    "composite_face",
    "compute_rois",
    "errors",
    "feather_seam",
    "features_from_aligned",
    "features_from_frame",
    "fit_affine",
    "kernels",
    "load_color_matrices",
    "load_flow_field",
    "load_frame_sequence",
    "load_landmark_track",
    "motion_distance",
    "parse_report",
    "perceptual_to_rgb",
    "piecewise_affine_warp",
    "poisson_clone",
    "reenact_shape",
    "rgb_to_perceptual",
    "run_matching",
    "select_source_frame",
    "stabilize_landmarks",
    "temporal_clustering",
    "transfer_appearance",
    "transfer_mask",
    "triangulate_reference",
    "uniform_label_table",
    "write_flow_field",
    "write_frame_sequence",
    "write_landmark_track",
    "__version__",
]
