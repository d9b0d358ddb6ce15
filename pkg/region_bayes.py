"""
Naive-Bayes region labels for visible objects.

p(R_i | o_j, ..., o_k) is proportional to the product of p(o | R_i) over the
candidate objects under a uniform region prior; the proportionality constant
is removed by normalizing over all region categories.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from graph_core import SRG
from scene_world import ObjectInstance

logger = logging.getLogger(__name__)

EPSILON = 1e-4
DEFAULT_K = 4


def smoothing(weight: float, eps: float = EPSILON) -> float:
    """Likelihood used in the product: the SRG weight floored at eps."""
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"SRG weight must lie in [0, 1], got {weight}")
    return max(float(weight), eps)


def _log_likelihoods(srg: SRG, obj: int, eps: float) -> np.ndarray:
    return np.log(np.maximum(srg.includes_matrix[obj], eps))


def _normalize(log_scores: np.ndarray) -> np.ndarray:
    return np.exp(log_scores - logsumexp(log_scores))


@dataclass(frozen=True)
class RegionPosterior:
    """
    Posterior over region categories.

    `log_scores` holds the summed log-likelihoods of the objects folded in so
    far. The plain product underflows to zero on long object lists.
    """

    log_scores: np.ndarray
    distribution: np.ndarray
    objects: Tuple[int, ...]
    degenerate: bool = False
    eps: float = EPSILON

    @property
    def argmax(self) -> int:
        """Most probable region category; the lowest index wins ties."""
        return int(np.argmax(self.distribution))

    def extend(self, srg: SRG, more_objects: Iterable[int]) -> "RegionPosterior":
        return _fold(srg, self.log_scores, self.objects, list(more_objects), self.eps)


def _fold(srg: SRG, log_scores: np.ndarray, seen: Tuple[int, ...], objects: Sequence[int],
          eps: float) -> RegionPosterior:
    log_scores = log_scores.copy()
    for obj in objects:
        log_scores = log_scores + _log_likelihoods(srg, obj, eps)
    all_objects = tuple(seen) + tuple(int(o) for o in objects)
    informative = any(np.any(srg.includes_matrix[o] > eps) for o in all_objects)
    if informative:
        distribution, degenerate = _normalize(log_scores), False
    else:
        distribution, degenerate = np.full(log_scores.shape, 1.0 / len(log_scores)), True
    return RegionPosterior(log_scores, distribution, all_objects, degenerate, eps)


def region_posterior(srg: SRG, candidate_objects: Sequence[int], eps: float = EPSILON) -> RegionPosterior:
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    posterior = _fold(srg, np.zeros(srg.space.num_regions), (), list(candidate_objects), eps)
    if posterior.degenerate:
        logger.debug("degenerate region evidence for objects %s", list(candidate_objects))
    return posterior


@dataclass(frozen=True)
class RegionAssignment:
    object_id: int
    object_category: int
    cell: Tuple[int, int]
    candidate_ids: Tuple[int, ...]
    candidate_categories: Tuple[int, ...]
    label: int
    posterior: RegionPosterior


@dataclass
class VisibleRegionMap:
    assignments: Dict[int, RegionAssignment] = field(default_factory=dict)

    def __len__(self):
        return len(self.assignments)

    def __iter__(self):
        return iter(self.assignments.values())

    def label_of(self, object_id: int) -> int:
        return self.assignments[object_id].label

    def regions(self) -> List[int]:
        """Region categories assigned to at least one visible object, ascending."""
        return sorted({a.label for a in self.assignments.values()})

    def anchors(self, region: int) -> List[RegionAssignment]:
        return [a for a in self.assignments.values() if a.label == region]


def nearest_objects(obj: ObjectInstance, visible: Sequence[ObjectInstance], k: int) -> List[ObjectInstance]:
    """k nearest other objects by Euclidean cell distance, ties by id."""
    others = [o for o in visible if o.id != obj.id]
    others.sort(key=lambda o: ((o.cell[0] - obj.cell[0]) ** 2 + (o.cell[1] - obj.cell[1]) ** 2, o.id))
    return others[:k]


def visible_regions(srg: SRG, visible: Sequence[ObjectInstance], k: int = DEFAULT_K,
                    eps: float = EPSILON) -> VisibleRegionMap:
    if k < 0:
        raise ValueError("k must be >= 0")
    result = VisibleRegionMap()
    for obj in visible:
        candidates = [obj] + nearest_objects(obj, visible, k)
        posterior = region_posterior(srg, [c.category for c in candidates], eps)
        result.assignments[obj.id] = RegionAssignment(
            object_id=obj.id,
            object_category=obj.category,
            cell=obj.cell,
            candidate_ids=tuple(c.id for c in candidates),
            candidate_categories=tuple(c.category for c in candidates),
            label=posterior.argmax,
            posterior=posterior,
        )
    return result
