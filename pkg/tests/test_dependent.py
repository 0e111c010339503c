import numpy as np
import pytest

from globalhash.codes import column_balance
from globalhash.constellation import count_median_ties, d2s, encode
from globalhash.dependent import (
    TrainConfigDD,
    TrainingError,
    _rotation_step,
    effective_satellites,
    gps_solve_satellite,
    init_group,
    initial_state,
    loss,
    procrustes_rotation,
    random_orthonormal,
    train_dd,
    update_alpha,
    update_beta,
    update_codes,
    write_trace_csv,
)


class TestGpsSolve:
    def test_recovers_planted_satellites(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            d = int(rng.integers(2, 17))
            anchors = rng.standard_normal((d + 5, d))
            plant = rng.standard_normal(d)
            ranges = np.linalg.norm(anchors - plant, axis=1)
            found = gps_solve_satellite(anchors, ranges, r_s=float(np.linalg.norm(plant)))
            np.testing.assert_allclose(found, plant, atol=1e-6)

    def test_one_dimensional_candidates(self):
        anchors = np.array([[0.0], [10.0]])
        ranges = np.array([3.0, 7.0])
        np.testing.assert_allclose(gps_solve_satellite(anchors, ranges, r_s=3.0), [3.0], atol=1e-6)
        np.testing.assert_allclose(gps_solve_satellite(anchors, ranges, r_s=7.0), [7.0], atol=1e-6)

    def test_too_few_anchors(self):
        with pytest.raises(TrainingError, match="at least 4 points"):
            gps_solve_satellite(np.zeros((3, 3)), np.ones(3), r_s=1.0)

    def test_range_count_must_match(self):
        with pytest.raises(TrainingError, match="5 points but 4"):
            gps_solve_satellite(np.zeros((5, 2)), np.ones(4), r_s=1.0)


class TestProcrustes:
    def test_recovers_planted_rotation(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            d = int(rng.integers(2, 10))
            satellites = rng.standard_normal((d + 1, d))
            rotation = random_orthonormal(d, rng)
            found = procrustes_rotation(satellites @ rotation, satellites)
            assert np.abs(found - rotation).max() <= 1e-8

    def test_result_is_orthogonal(self, rng):
        found = procrustes_rotation(rng.standard_normal((5, 4)), rng.standard_normal((5, 4)))
        np.testing.assert_allclose(found @ found.T, np.eye(4), atol=1e-12)

    def test_shapes_must_match(self):
        with pytest.raises(TrainingError, match="shapes differ"):
            procrustes_rotation(np.zeros((3, 2)), np.zeros((4, 2)))


class TestInitialization:
    def test_group_of_d_plus_one(self, rng):
        group = init_group(4, 5, 2.0, rng)
        np.testing.assert_allclose(np.linalg.norm(group, axis=1), 2.0)
        gram = group[:4] @ group[:4].T
        np.testing.assert_allclose(gram, 4.0 * np.eye(4), atol=1e-10)

    def test_partial_group(self, rng):
        assert init_group(4, 2, 1.0, rng).shape == (2, 4)

    def test_oversized_group(self, rng):
        with pytest.raises(TrainingError, match="between 1 and 5"):
            init_group(4, 6, 1.0, rng)


@pytest.fixture
def state(embedded_clusters, rng):
    d = embedded_clusters.shape[1]
    groups = [(0, d + 1), (d + 1, 4)]
    satellites = np.vstack([init_group(d, length, 2.0, rng) for _, length in groups])
    rotations = [random_orthonormal(d, rng) for _ in groups]
    return initial_state(embedded_clusters, satellites, rotations, groups)


class TestUpdates:
    def test_initial_state(self, state, embedded_clusters):
        np.testing.assert_array_equal(state.alpha, np.ones(12))
        np.testing.assert_array_equal(state.beta, np.zeros(12))
        assert state.objective == pytest.approx(loss(embedded_clusters, state))

    def test_alpha_step_never_increases_loss(self, state, embedded_clusters):
        before = loss(embedded_clusters, state)
        state.alpha = update_alpha(embedded_clusters, state)
        assert loss(embedded_clusters, state) <= before * (1 + 1e-9)

    def test_beta_step_never_increases_loss(self, state, embedded_clusters):
        state.alpha = update_alpha(embedded_clusters, state)
        before = loss(embedded_clusters, state)
        state.beta = update_beta(embedded_clusters, state)
        assert loss(embedded_clusters, state) <= before * (1 + 1e-9)

    def test_effective_satellites_apply_group_rotation(self, state):
        rotated = effective_satellites(state)
        np.testing.assert_allclose(rotated[8:], state.satellites[8:] @ state.rotations[1])

    def test_rotation_step_fits_gps_positions_at_least_as_well(self, state, embedded_clusters):
        y = embedded_clusters
        cfg = TrainConfigDD(c=12, r_s=2.0)
        state.codes = update_codes(y, state)
        state.alpha = update_alpha(y, state)
        state.beta = update_beta(y, state)
        before = effective_satellites(state)
        targets = (state.codes.to_signs() + state.beta) / state.alpha
        solved = [gps_solve_satellite(y, targets[:, j], cfg.r_s, cfg.ridge) for j in range(12)]
        s_prime = np.array(
            [before[j] if position is None else position for j, position in enumerate(solved)]
        )
        _rotation_step(y, state, cfg)
        after = effective_satellites(state)
        for start, length in state.groups:
            rows = slice(start, start + length)
            fitted = np.linalg.norm(after[rows] - s_prime[rows])
            previous = np.linalg.norm(before[rows] - s_prime[rows])
            assert fitted <= previous + 1e-9


class TestTrainDD:
    def test_loss_decreases(self, embedded_clusters):
        _, report = train_dd(embedded_clusters, TrainConfigDD(c=16, max_iter=10, seed=3))
        assert report.objective[-1] <= report.objective[0]
        assert len(report.objective) == report.iterations + 1
        assert len(report.gps_fallbacks) == report.iterations

    def test_loss_never_rises_more_than_two_percent(self, embedded_clusters):
        _, report = train_dd(embedded_clusters, TrainConfigDD(c=16, max_iter=10, seed=3))
        trace = np.array(report.objective)
        assert np.all(trace[1:] <= 1.02 * trace[:-1])

    def test_codes_are_balanced(self, embedded_clusters):
        model, _ = train_dd(embedded_clusters, TrainConfigDD(c=16, max_iter=5))
        assert model.groups == [(0, 8), (8, 8)]
        distances = d2s(embedded_clusters, model.satellites)
        np.testing.assert_allclose(model.thresholds, np.median(distances, axis=0))
        codes = encode(embedded_clusters, model)
        ties = count_median_ties(distances, model.thresholds)
        assert np.all(np.abs(column_balance(codes)) <= 2 * ties + 1)

    def test_same_seed_same_satellites(self, embedded_clusters):
        cfg = TrainConfigDD(c=8, max_iter=4, seed=9)
        first, _ = train_dd(embedded_clusters, cfg)
        second, _ = train_dd(embedded_clusters, cfg.model_copy(update={"threads": 3}))
        np.testing.assert_array_equal(first.satellites, second.satellites)

    def test_groups_of_d(self, embedded_clusters):
        model, _ = train_dd(embedded_clusters, TrainConfigDD(c=14, max_iter=2, extra_anchor=False))
        assert model.groups == [(0, 7), (7, 7)]

    def test_too_few_points(self):
        with pytest.raises(TrainingError, match="at least d\\+2=5"):
            train_dd(np.zeros((4, 3)), TrainConfigDD(c=4))

    def test_trace_file(self, embedded_clusters, tmp_path):
        _, report = train_dd(embedded_clusters, TrainConfigDD(c=8, max_iter=3))
        path = tmp_path / "trace.csv"
        write_trace_csv(report, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "iteration,E,gps_fallbacks,seconds"
        assert len(lines) == report.iterations + 2
        assert "iterations" in str(report)
