import csv

import numpy as np
import pytest

from facesim import corpus, evaluator
from facesim.errors import EvaluationError
from facesim.metric import ProjectionModel

from conftest import make_record


def make_sample(i, label="A", consistent=True):
    return corpus.TripletSample(
        triplet_id=f"t{i:03d}", ref_id=f"i{i}c", option_a_id=f"i{i}a",
        option_b_id=f"i{i}b", votes=(label,) * 3 if consistent else (label, label, "B" if label == "A" else "A"),
        majority=label, consistent=consistent, admitted=True,
    )


@pytest.fixture()
def aligned_corpus():
    """Base cosines already encode the annotated ordering."""
    rng = np.random.default_rng(10)
    records, samples = [], []
    for i in range(10):
        ref = rng.normal(size=5)
        near = ref + 0.1 * rng.normal(size=5)
        far = -ref + 0.1 * rng.normal(size=5)
        records += [
            make_record(f"i{i}c", ref),
            make_record(f"i{i}a", near),
            make_record(f"i{i}b", far),
        ]
        samples.append(make_sample(i, "A"))
    return corpus.EmbeddingTable(records), samples


def test_perfect_model_scores_one(aligned_corpus):
    table, samples = aligned_corpus
    accuracy, records = evaluator.eval_triplets(ProjectionModel.identity(5), samples, table)
    assert accuracy == 1.0
    assert all(r.sim_pair_score > r.dissim_pair_score for r in records)


def test_tied_scores_count_incorrect():
    records = [
        make_record("i0c", [1.0, 0.0]),
        make_record("i0a", [0.0, 1.0]),
        make_record("i0b", [0.0, 1.0]),
    ]
    table = corpus.EmbeddingTable(records)
    accuracy, (rec,) = evaluator.eval_triplets(
        ProjectionModel.identity(2), [make_sample(0, "A")], table
    )
    assert rec.sim_pair_score == rec.dissim_pair_score
    assert not rec.correct and accuracy == 0.0


def test_inconsistent_samples_filtered(aligned_corpus):
    table, samples = aligned_corpus
    noisy = samples + [make_sample(99, "A", consistent=False)]
    _, records = evaluator.eval_triplets(ProjectionModel.identity(5), noisy, table)
    assert all(r.triplet_id != "t099" for r in records)


def test_empty_retained_set_raises(aligned_corpus):
    table, _ = aligned_corpus
    with pytest.raises(EvaluationError, match="no consistent samples"):
        evaluator.eval_triplets(
            ProjectionModel.identity(5), [make_sample(0, "A", consistent=False)], table
        )


def test_evaluation_is_repeatable(aligned_corpus):
    table, samples = aligned_corpus
    model = ProjectionModel.identity(5)
    first = evaluator.eval_triplets(model, samples, table)
    second = evaluator.eval_triplets(model, samples, table)
    assert first == second


def test_records_ordered_by_triplet_id(aligned_corpus):
    table, samples = aligned_corpus
    _, records = evaluator.eval_triplets(
        ProjectionModel.identity(5), samples[::-1], table
    )
    ids = [r.triplet_id for r in records]
    assert ids == sorted(ids)


class TestExportScatter:
    def test_rows_and_header(self, aligned_corpus, tmp_path):
        table, samples = aligned_corpus
        _, records = evaluator.eval_triplets(ProjectionModel.identity(5), samples[:3], table)
        path = tmp_path / "scatter.csv"
        evaluator.export_scatter(records, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "triplet_id,sim_pair_score,dissim_pair_score,correct"
        assert len(lines) == 4

    def test_accuracy_recomputable_from_csv(self, aligned_corpus, tmp_path):
        table, samples = aligned_corpus
        accuracy, records = evaluator.eval_triplets(
            ProjectionModel.identity(5), samples, table
        )
        path = tmp_path / "scatter.csv"
        evaluator.export_scatter(records, path)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        # independent recomputation: fraction of points with y < x
        below = sum(
            1 for row in rows
            if float(row["dissim_pair_score"]) < float(row["sim_pair_score"])
        )
        assert below / len(rows) == accuracy

    def test_reexport_byte_identical(self, aligned_corpus, tmp_path):
        table, samples = aligned_corpus
        _, records = evaluator.eval_triplets(ProjectionModel.identity(5), samples, table)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        evaluator.export_scatter(records, p1)
        evaluator.export_scatter(records, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_empty_records_rejected(self, tmp_path):
        with pytest.raises(EvaluationError):
            evaluator.export_scatter([], tmp_path / "x.csv")
