"""Model-to-scene alignment metric.

The score of a candidate cloud is the fraction of its points that bind to a
distinct scene point within ``tau``. Candidate points are visited in storage
order; each binds to the closest scene point in range that no earlier
candidate point has taken. Nothing is ever rebound.
"""

from __future__ import annotations

from dataclasses import dataclass

from multipose.core.exceptions import EmptyCloudError, GeometryError
from multipose.core.geometry import PointCloud
from multipose.spatial.kdtree import KdTree


@dataclass(frozen=True)
class AlignmentScore:
    """Result of :func:`alignment_score`."""

    value: float
    """matched_count / candidate_size, in [0, 1]."""

    matched_count: int
    """Candidate points bound to a distinct scene point."""

    candidate_size: int
    """Number of candidate points."""

    @classmethod
    def zero(cls, candidate_size: int = 0) -> "AlignmentScore":
        return cls(value=0.0, matched_count=0, candidate_size=candidate_size)


def alignment_score(candidate: PointCloud, scene_tree: KdTree, tau: float) -> AlignmentScore:
    """Greedy unique-correspondence score of ``candidate`` against the indexed scene.

    Raises:
        EmptyCloudError: If the candidate has no points.
    """
    if candidate.is_empty:
        raise EmptyCloudError("Alignment candidate is empty")
    if not tau > 0:
        raise GeometryError(f"tau must be positive, got {tau}")

    offsets, indices, _ = scene_tree.radius_table(candidate.points, tau)
    # each row is ordered by (distance, index)
    offsets, indices = offsets.tolist(), indices.tolist()
    bound = [False] * scene_tree.size
    matched = 0
    for start, stop in zip(offsets, offsets[1:]):
        for scene_index in indices[start:stop]:
            if not bound[scene_index]:
                bound[scene_index] = True
                matched += 1
                break

    size = len(candidate)
    return AlignmentScore(value=matched / size, matched_count=matched, candidate_size=size)
