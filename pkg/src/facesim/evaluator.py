"""Pair-based similarity evaluation over annotated triplets.

Each consistently annotated triplet yields a similar pair (reference, chosen)
and a dissimilar pair (reference, other). A prediction is correct when the
similar pair scores strictly higher; exact ties count as incorrect.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

from .corpus import EmbeddingTable, TripletSample
from .errors import EvaluationError
from .metric import ProjectionModel, similarity_score


@dataclass(frozen=True)
class PairRecord:
    triplet_id: str
    sim_pair_score: float
    dissim_pair_score: float
    correct: bool


def eval_triplets(
    model: ProjectionModel,
    samples: Sequence[TripletSample],
    table: EmbeddingTable,
) -> Tuple[float, List[PairRecord]]:
    """Accuracy and per-triplet pair scores over consistent samples."""
    retained = sorted(
        (s for s in samples if s.admitted and s.consistent),
        key=lambda s: s.triplet_id,
    )
    if not retained:
        raise EvaluationError("no consistent samples to evaluate")
    records = []
    for sample in retained:
        ref = table[sample.ref_id]
        sim = similarity_score(model, ref, table[sample.chosen_id()])
        dissim = similarity_score(model, ref, table[sample.other_id()])
        records.append(
            PairRecord(
                triplet_id=sample.triplet_id,
                sim_pair_score=sim,
                dissim_pair_score=dissim,
                correct=sim > dissim,
            )
        )
    accuracy = sum(r.correct for r in records) / len(records)
    return accuracy, records


def export_scatter(records: Sequence[PairRecord], path) -> None:
    """CSV of (similar, dissimilar) score pairs; x > y rows are the correct ones."""
    if not records:
        raise EvaluationError("no pair records to export")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("triplet_id,sim_pair_score,dissim_pair_score,correct\n")
        for r in records:
            fh.write(
                f"{r.triplet_id},{r.sim_pair_score!r},{r.dissim_pair_score!r},"
                f"{'true' if r.correct else 'false'}\n"
            )
