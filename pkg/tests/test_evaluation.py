import io

import numpy as np
import pytest

from globalhash.codes import CodeError, CodeMatrix, column_balance
from globalhash.evaluation import (
    EvaluationError,
    GroundTruth,
    affinity_loss_diagnostic,
    average_precision,
    axis_satellite_codes,
    build_ground_truth,
    code_correlation,
    evaluate,
    f1_score,
    ground_truth_from_indices,
    ground_truth_from_labels,
    theorem1_test,
    write_report_csv,
)


def naive_scores(base_bits, query_bits, truth, radius):
    """Score each query with plain Python loops."""
    aps, precisions, recalls = [], [], []
    n = len(base_bits)
    for query, true_set in zip(query_bits, truth):
        distances = [int(np.sum(query != row)) for row in base_bits]
        ranking = sorted(range(n), key=lambda i: (distances[i], i))
        hits, total = 0, 0.0
        for position, index in enumerate(ranking, start=1):
            if index in true_set:
                hits += 1
                total += hits / position
        aps.append(total / len(true_set))
        retrieved = [i for i in range(n) if distances[i] <= radius]
        found = len([i for i in retrieved if i in true_set])
        precisions.append(found / len(retrieved) if retrieved else 0.0)
        recalls.append(found / len(true_set))
    return np.mean(aps), np.mean(precisions), np.mean(recalls)


class TestGroundTruth:
    def test_two_percent_of_one_hundred(self, rng):
        base = rng.standard_normal((100, 4))
        truth = build_ground_truth(base, base[:5], fraction=0.02)
        assert all(len(row) == 2 for row in truth.neighbors)

    def test_query_equal_to_base_point_ranks_first(self, rng):
        base = rng.standard_normal((100, 4))
        truth = build_ground_truth(base, base[[7, 30]])
        assert truth.neighbors[0][0] == 7
        assert truth.neighbors[1][0] == 30

    def test_ties_at_cutoff_go_to_lower_index(self):
        base = np.array([[0.0], [1.0], [1.0], [1.0]])
        truth = build_ground_truth(base, np.array([[1.0]]), fraction=0.5)
        np.testing.assert_array_equal(truth.neighbors[0], [1, 2])

    def test_empty_base(self):
        with pytest.raises(EvaluationError, match="empty base"):
            build_ground_truth(np.zeros((0, 3)), np.zeros((1, 3)))

    def test_from_neighbor_table(self):
        truth = ground_truth_from_indices(np.array([[3, 1], [0, 2]]), n_base=4)
        np.testing.assert_array_equal(truth.neighbors[1], [0, 2])

    def test_indices_must_exist(self):
        with pytest.raises(ValueError, match="outside 0..3"):
            GroundTruth(neighbors=[[4]], n_base=4)


class TestLabelGroundTruth:
    def test_class_ids(self):
        truth = ground_truth_from_labels(np.array([2, 0, 2, 1, 0]), np.array([0, 2, 5]))
        np.testing.assert_array_equal(truth.neighbors[0], [1, 4])
        np.testing.assert_array_equal(truth.neighbors[1], [0, 2])
        assert truth.neighbors[2].size == 0
        assert truth.n_base == 5

    def test_shared_label_columns(self):
        base = np.array([[1, 0, 0], [0, 1, 1], [0, 0, 1], [0, 0, 0]])
        truth = ground_truth_from_labels(base, np.array([[0, 1, 0], [1, 0, 1]]))
        np.testing.assert_array_equal(truth.neighbors[0], [1])
        np.testing.assert_array_equal(truth.neighbors[1], [0, 1, 2])

    def test_label_columns_must_agree(self):
        with pytest.raises(EvaluationError, match="do not share label columns"):
            ground_truth_from_labels(np.zeros((4, 3)), np.zeros((2, 2)))

    def test_empty_base(self):
        with pytest.raises(EvaluationError, match="empty base"):
            ground_truth_from_labels(np.zeros((0, 2)), np.zeros((1, 2)))

    def test_codes_matching_classes_score_perfectly(self):
        base_ids = np.array([0, 1, 0, 1, 1, 0])
        query_ids = np.array([1, 0])
        base = CodeMatrix.from_bits(np.repeat(base_ids[:, None], 4, axis=1).astype(bool))
        queries = CodeMatrix.from_bits(np.repeat(query_ids[:, None], 4, axis=1).astype(bool))
        report = evaluate(base, queries, ground_truth_from_labels(base_ids, query_ids), radius=0)
        assert report.map == 1.0
        assert report.precision == 1.0
        assert report.recall == 1.0


class TestAveragePrecision:
    def test_single_neighbor_at_rank_two(self):
        assert average_precision(np.arange(10), [1]) == 0.5

    def test_neighbors_at_the_top(self):
        assert average_precision(np.array([4, 2, 0, 1]), [2, 4]) == 1.0

    def test_empty_truth_scores_zero(self):
        assert average_precision(np.arange(5), []) == 0.0

    def test_f1_of_nothing(self):
        assert f1_score(0.0, 0.0) == 0.0


class TestEvaluate:
    @pytest.fixture
    def setup(self):
        rng = np.random.default_rng(7)
        base_bits = rng.random((200, 16)) < 0.5
        query_bits = rng.random((20, 16)) < 0.5
        neighbors = [rng.choice(200, size=4, replace=False) for _ in range(20)]
        truth = GroundTruth(neighbors=neighbors, n_base=200)
        return base_bits, query_bits, truth

    def test_matches_naive_scores(self, setup):
        base_bits, query_bits, truth = setup
        report = evaluate(
            CodeMatrix.from_bits(base_bits), CodeMatrix.from_bits(query_bits), truth, radius=5
        )
        sets = [set(row.tolist()) for row in truth.neighbors]
        expected_map, expected_p, expected_r = naive_scores(base_bits, query_bits, sets, 5)
        assert report.map == pytest.approx(expected_map, abs=1e-10)
        assert report.precision == pytest.approx(expected_p, abs=1e-10)
        assert report.recall == pytest.approx(expected_r, abs=1e-10)
        assert report.f1 == pytest.approx(f1_score(expected_p, expected_r), abs=1e-10)
        assert report.map == pytest.approx(report.per_query_ap.mean())

    def test_threads_give_same_report(self, setup):
        base_bits, query_bits, truth = setup
        base, queries = CodeMatrix.from_bits(base_bits), CodeMatrix.from_bits(query_bits)
        single = evaluate(base, queries, truth, threads=1)
        several = evaluate(base, queries, truth, threads=3)
        np.testing.assert_array_equal(single.per_query_ap, several.per_query_ap)

    def test_full_radius_recalls_everything(self, setup):
        base_bits, query_bits, truth = setup
        report = evaluate(
            CodeMatrix.from_bits(base_bits), CodeMatrix.from_bits(query_bits), truth, radius=16
        )
        assert report.recall == 1.0
        assert report.precision == pytest.approx(4 / 200)

    def test_code_lengths_must_agree(self, setup):
        base_bits, query_bits, truth = setup
        with pytest.raises(CodeError, match="disagree"):
            evaluate(
                CodeMatrix.from_bits(base_bits), CodeMatrix.from_bits(query_bits[:, :8]), truth
            )

    def test_truth_must_cover_queries(self, setup):
        base_bits, query_bits, truth = setup
        with pytest.raises(EvaluationError, match="19 query codes"):
            evaluate(
                CodeMatrix.from_bits(base_bits), CodeMatrix.from_bits(query_bits[:19]), truth
            )


class TestDiagnostics:
    def test_affinity_loss_counts_close_disagreements(self):
        points = np.zeros((2, 3))
        codes = CodeMatrix.from_bits(np.array([[1, 0, 1], [1, 1, 1]], dtype=bool))
        assert affinity_loss_diagnostic(points, codes) == pytest.approx(1.0)

    def test_affinity_loss_ignores_distant_pairs(self):
        points = np.array([[0.0], [100.0]])
        codes = CodeMatrix.from_bits(np.array([[1, 0], [0, 1]], dtype=bool))
        assert affinity_loss_diagnostic(points, codes) == pytest.approx(0.0)

    def test_affinity_loss_is_capped(self):
        codes = CodeMatrix.from_bits(np.zeros((5001, 2), dtype=bool))
        with pytest.raises(EvaluationError, match="diagnostic capped at 5000"):
            affinity_loss_diagnostic(np.zeros((5001, 1)), codes)

    def test_identical_columns_fully_correlated(self):
        bits = np.array([[1, 1, 0], [0, 0, 1], [1, 1, 1], [0, 0, 0]], dtype=bool)
        assert code_correlation(CodeMatrix.from_bits(bits)) == 1.0

    @pytest.mark.parametrize("d", [2, 3])
    def test_distant_orthogonal_satellites_give_orthogonal_codes(self, d):
        far = theorem1_test(d, n=20000, rs_factor=100.0, seed=1)
        near = theorem1_test(d, n=20000, rs_factor=1.0, seed=1)
        assert far <= 0.02
        assert near > far

    @pytest.mark.parametrize("rs_factor", [1.0, 100.0])
    def test_axis_satellite_codes_are_balanced(self, rs_factor):
        codes = axis_satellite_codes(4, n=5000, rs_factor=rs_factor, seed=2)
        assert codes.c == 4
        assert np.all(np.abs(column_balance(codes)) <= 1)

    def test_report_csv_columns(self):
        out = io.StringIO()
        write_report_csv([{"method": "dd", "c": 8, "map": 0.5, "r_s": 2.0}], out)
        header = out.getvalue().splitlines()[0]
        assert header == "method,c,map,precision,recall,f1,radius,n,seed,r_s"
