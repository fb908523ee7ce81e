"""Face-swap source selection: pick the attribute group closest to the query,
then recommend its least-similar members."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from .attributes import (
    ALL_GROUPS,
    INTERSECTION_GROUPS,
    AttributeGroup,
    classify_query,
)
from .corpus import EmbeddingRecord
from .errors import ValidationError
from .metric import ProjectionModel, similarity_score


@dataclass(frozen=True)
class RankedCandidate:
    image_id: str
    similarity: float
    rank: int  # 1 = most similar


@dataclass(frozen=True)
class Recommendation:
    query_id: str
    selected_group: str
    candidates: Tuple[RankedCandidate, ...]  # ascending similarity
    k: int

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "selected_group": self.selected_group,
            "k": self.k,
            "candidates": [
                {"image_id": c.image_id, "similarity": c.similarity, "rank": c.rank}
                for c in self.candidates
            ],
        }


def select_group(
    model: ProjectionModel,
    query: EmbeddingRecord,
    groups: Dict[str, AttributeGroup],
    group_mode: str = "intersection",
) -> str:
    """Closest attribute group by CI-upper-bound distance.

    "intersection" classifies among the four age x gender groups (tightest
    attribute consistency); "all" competes all eight groups.
    """
    if group_mode == "intersection":
        names = INTERSECTION_GROUPS
    elif group_mode == "all":
        names = ALL_GROUPS
    else:
        raise ValidationError(f"unknown group mode '{group_mode}'")
    return classify_query(model, query, [groups[n] for n in names])


def rank_candidates(
    model: ProjectionModel,
    query: EmbeddingRecord,
    group: AttributeGroup,
) -> List[RankedCandidate]:
    """All eligible group members sorted by descending similarity to the query.

    The query's own image and any candidate sharing its identity are excluded
    from candidacy. Ties order by image_id.
    """
    eligible = [
        m
        for m in group.members
        if m.image_id != query.image_id and m.identity_id != query.identity_id
    ]
    if not eligible:
        raise ValidationError(
            f"group '{group.name}' has no candidates distinct from query"
            f" '{query.image_id}'"
        )
    scored = [(similarity_score(model, query, m), m.image_id) for m in eligible]
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return [
        RankedCandidate(image_id=image_id, similarity=sim, rank=i)
        for i, (sim, image_id) in enumerate(scored, start=1)
    ]


def recommend(
    model: ProjectionModel,
    query: EmbeddingRecord,
    groups: Dict[str, AttributeGroup],
    k: int = 5,
    group_mode: str = "intersection",
) -> Recommendation:
    """The k least-similar members of the query's closest attribute group."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    selected = select_group(model, query, groups, group_mode=group_mode)
    ranking = rank_candidates(model, query, groups[selected])
    bottom = list(reversed(ranking[-k:])) if k < len(ranking) else list(reversed(ranking))
    return Recommendation(
        query_id=query.image_id,
        selected_group=selected,
        candidates=tuple(bottom),
        k=k,
    )
