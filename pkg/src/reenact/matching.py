"""Temporal clustering of the target sequence and per-cluster source frame
selection.

Clusters are built bottom-up from singletons: the pair of *consecutive*
clusters with the lowest average-linkage appearance distance is merged while
the merge keeps the spread of pairwise distances inside the merged cluster
below the worse of its parents (zero spread always passes; a pair of
singletons always passes).  Selection then scores every source frame against
a cluster by the summed appearance distance plus a motion term that compares
the cluster's mean landmark displacement with the displacement the candidate
would introduce relative to the previously selected frame.
"""

from dataclasses import dataclass

import numpy as np

from .features import CHI2_EPS, FrameFeatures, appearance_distance
from .landmarks import REGION_ORDER

NORM_EPS = 1e-8  # below this a landmark displacement has no usable direction


@dataclass(frozen=True)
class ClusterSpan:
    """Inclusive frame range [start, end] of one temporal cluster."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise ValueError(f"bad span [{self.start}, {self.end}]")

    @property
    def center(self) -> int:
        return (self.start + self.end) // 2

    def __len__(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class MergeRecord:
    left: ClusterSpan
    right: ClusterSpan
    linkage: float
    merged_variance: float
    accepted: bool


@dataclass
class MatchAssignment:
    cluster_index: int
    span: ClusterSpan
    source_index: int
    appearance: float
    motion: float | None
    total: float


@dataclass
class SelectionDetail:
    """Per-candidate scores for one cluster (all min-max normalized)."""

    index: int
    appearance_norm: np.ndarray
    motion_norm: np.ndarray | None
    totals: np.ndarray


@dataclass
class MatchResult:
    spans: list[ClusterSpan]
    merges: list[MergeRecord]
    assignments: list[MatchAssignment]
    details: list[SelectionDetail] | None = None


def pairwise_appearance_matrix(
    features_a: list[FrameFeatures], features_b: list[FrameFeatures], region_weights
) -> np.ndarray:
    """Dense appearance-distance matrix; row i, column j compares a[i], b[j]."""
    weights = tuple(region_weights)
    na, nb = len(features_a), len(features_b)
    out = np.zeros((na, nb), dtype=np.float64)
    for w, name in zip(weights, REGION_ORDER):
        stack_a = np.stack([f.region(name) for f in features_a]).reshape(na, -1)
        stack_b = np.stack([f.region(name) for f in features_b]).reshape(nb, -1)
        tiles = features_a[0].region(name).shape[0]
        for i in range(na):
            diff = stack_a[i] - stack_b
            chi2 = (diff * diff / (stack_a[i] + stack_b + CHI2_EPS)).sum(axis=1)
            out[i] += w * (chi2 / (4.0 * tiles))
    return out


def _pair_variance(dist: np.ndarray, start: int, end: int) -> float:
    n = end - start + 1
    if n < 2:
        return 0.0
    block = dist[start : end + 1, start : end + 1]
    iu = np.triu_indices(n, k=1)
    return float(block[iu].var())


def agglomerate_consecutive(dist: np.ndarray) -> tuple[list[ClusterSpan], list[MergeRecord]]:
    """Greedy consecutive-pair agglomeration over a precomputed distance matrix.

    Stops the first time the best candidate merge is rejected.
    """
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1] or dist.shape[0] == 0:
        raise ValueError("need a square non-empty distance matrix")
    t = dist.shape[0]
    clusters: list[tuple[int, int]] = [(i, i) for i in range(t)]
    merges: list[MergeRecord] = []
    while len(clusters) > 1:
        linkages = np.empty(len(clusters) - 1)
        for i in range(len(clusters) - 1):
            s1, e1 = clusters[i]
            s2, e2 = clusters[i + 1]
            linkages[i] = dist[s1 : e1 + 1, s2 : e2 + 1].mean()
        j = int(np.argmin(linkages))
        c1, c2 = clusters[j], clusters[j + 1]
        merged_var = _pair_variance(dist, c1[0], c2[1])
        both_singletons = c1[0] == c1[1] and c2[0] == c2[1]
        accepted = (
            both_singletons
            or merged_var == 0.0
            or merged_var < max(_pair_variance(dist, *c1), _pair_variance(dist, *c2))
        )
        merges.append(
            MergeRecord(ClusterSpan(*c1), ClusterSpan(*c2), float(linkages[j]), merged_var, accepted)
        )
        if not accepted:
            break
        clusters[j : j + 2] = [(c1[0], c2[1])]
    return [ClusterSpan(s, e) for s, e in clusters], merges


def temporal_clustering(features: list[FrameFeatures], region_weights) -> list[ClusterSpan]:
    """Cluster a frame sequence by appearance; spans are contiguous, ordered,
    and partition [0, len(features) - 1]."""
    dist = pairwise_appearance_matrix(features, features, region_weights)
    spans, _ = agglomerate_consecutive(dist)
    return spans


def normalize_for_motion(points: np.ndarray, reference_points: np.ndarray) -> np.ndarray:
    """Scale-normalize aligned landmark coordinates so motion magnitudes are
    comparable across capture resolutions."""
    ref = np.asarray(reference_points, dtype=np.float64)
    centroid = ref.mean(axis=0)
    scale = float(np.sqrt(((ref - centroid) ** 2).sum(axis=1).mean()))
    if scale <= 0:
        raise ValueError("reference shape has zero spread")
    return (np.asarray(points, dtype=np.float64) - centroid) / scale


def cluster_motion(spans: list[ClusterSpan], points: np.ndarray) -> list[np.ndarray | None]:
    """Mean-shape displacement of each cluster relative to its predecessor.

    points: (frames, 66, 2) aligned normalized landmark coordinates.  The
    first cluster has no predecessor and gets None.
    """
    means = [points[span.start : span.end + 1].mean(axis=0) for span in spans]
    fields: list[np.ndarray | None] = [None]
    for k in range(1, len(spans)):
        fields.append(means[k] - means[k - 1])
    return fields


def motion_distance(field_a: np.ndarray, field_b: np.ndarray) -> float:
    """Distance between two 66-vector displacement fields in [0, 1).

    Combines endpoint distance, direction disagreement, and magnitude
    difference; a landmark with either displacement below NORM_EPS contributes
    no direction term.  Identical fields give exactly 0.
    """
    va = np.asarray(field_a, dtype=np.float64)
    vb = np.asarray(field_b, dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 2 or va.shape[1] != 2:
        raise ValueError("need matching (n, 2) displacement fields")
    diff = va - vb
    d1 = float(np.sqrt((diff * diff).sum(axis=1)).mean())
    ss_a = (va * va).sum(axis=1)
    ss_b = (vb * vb).sum(axis=1)
    norm_a = np.sqrt(ss_a)
    norm_b = np.sqrt(ss_b)
    dots = (va * vb).sum(axis=1)
    terms = np.zeros(len(va))
    valid = (norm_a >= NORM_EPS) & (norm_b >= NORM_EPS)
    # sqrt(ss_a * ss_b) rather than norm_a * norm_b keeps the self-distance
    # exactly zero in floating point.
    terms[valid] = 1.0 - dots[valid] / np.sqrt(ss_a[valid] * ss_b[valid])
    d2 = float(terms.mean())
    d3 = float(np.abs(norm_a - norm_b).mean())
    return 1.0 - (np.exp(-d1) + np.exp(-d2) + np.exp(-d3)) / 3.0


def _minmax(values: np.ndarray) -> np.ndarray:
    lo = values.min()
    rng = values.max() - lo
    if rng == 0.0:
        return np.zeros_like(values)
    return (values - lo) / rng


def select_source_frame(
    aggregate: np.ndarray,
    motion_field: np.ndarray | None,
    prev_selection: int | None,
    source_points: np.ndarray | None,
    motion_weight: float,
) -> SelectionDetail:
    """Pick the best source frame for one cluster.

    aggregate: per-candidate summed appearance distance over the cluster's
    frames.  When a motion field and a previous selection exist, each
    candidate is also scored by how well the displacement it would introduce
    matches the cluster's displacement.  Both scores are min-max normalized
    over the candidates; ties resolve to the smallest index.
    """
    a_norm = _minmax(np.asarray(aggregate, dtype=np.float64))
    m_norm = None
    totals = a_norm.copy()
    if motion_field is not None and prev_selection is not None:
        if source_points is None:
            raise ValueError("source landmark array required for the motion term")
        raw = np.array(
            [
                motion_distance(motion_field, source_points[s] - source_points[prev_selection])
                for s in range(len(aggregate))
            ]
        )
        m_norm = _minmax(raw)
        totals = a_norm + motion_weight * m_norm
    return SelectionDetail(int(np.argmin(totals)), a_norm, m_norm, totals)


def run_matching(
    target_features: list[FrameFeatures],
    source_features: list[FrameFeatures],
    target_points: np.ndarray,
    source_points: np.ndarray,
    region_weights,
    motion_weight: float,
    use_clustering: bool = True,
    keep_details: bool = False,
) -> MatchResult:
    """Cluster the target timeline and choose one source frame per cluster.

    target_points / source_points: (frames, 66, 2) aligned normalized
    landmarks.  With use_clustering=False every frame is its own cluster,
    which together with motion_weight=0 degenerates to independent per-frame
    nearest-neighbour matching.
    """
    if not target_features or not source_features:
        raise ValueError("need at least one target and one source frame")
    dist = pairwise_appearance_matrix(target_features, source_features, region_weights)
    if use_clustering:
        spans, merges = agglomerate_consecutive(
            pairwise_appearance_matrix(target_features, target_features, region_weights)
        )
    else:
        spans = [ClusterSpan(i, i) for i in range(len(target_features))]
        merges = []
    fields = cluster_motion(spans, target_points)
    assignments: list[MatchAssignment] = []
    details: list[SelectionDetail] = []
    prev: int | None = None
    for k, span in enumerate(spans):
        aggregate = dist[span.start : span.end + 1].sum(axis=0)
        detail = select_source_frame(aggregate, fields[k], prev, source_points, motion_weight)
        idx = detail.index
        assignments.append(
            MatchAssignment(
                cluster_index=k,
                span=span,
                source_index=idx,
                appearance=float(detail.appearance_norm[idx]),
                motion=None if detail.motion_norm is None else float(detail.motion_norm[idx]),
                total=float(detail.totals[idx]),
            )
        )
        if keep_details:
            details.append(detail)
        prev = idx
    return MatchResult(spans, merges, assignments, details if keep_details else None)
