import struct

import numpy as np
import pytest

from globalhash.dataio import (
    DatasetError,
    DatasetSpec,
    infer_format,
    make_synthetic,
    one_hot,
    read_labels,
    read_vectors,
    split,
    split_indices,
    write_vectors,
)


class TestVectorFiles:
    @pytest.mark.parametrize("fmt", ["fvecs", "bvecs", "ivecs"])
    def test_binary_formats_are_exact(self, tmp_path, rng, fmt):
        values = rng.integers(0, 200, size=(7, 5)).astype(np.float64)
        if fmt == "fvecs":
            values = values / 4
        path = tmp_path / f"data.{fmt}"
        write_vectors(values, path)
        np.testing.assert_array_equal(read_vectors(DatasetSpec(path=path)), values)

    def test_record_layout(self, tmp_path):
        path = tmp_path / "two.fvecs"
        write_vectors(np.array([[1.0, 2.0], [3.0, 4.0]]), path)
        raw = path.read_bytes()
        assert raw[:4] == struct.pack("<i", 2)
        assert raw[4:12] == struct.pack("<ff", 1.0, 2.0)
        assert len(raw) == 24

    def test_limit(self, tmp_path, rng):
        path = tmp_path / "data.fvecs"
        write_vectors(rng.random((10, 3)), path)
        assert read_vectors(DatasetSpec(path=path, limit=4)).shape == (4, 3)

    def test_truncated_record(self, tmp_path):
        path = tmp_path / "short.fvecs"
        path.write_bytes(struct.pack("<iff", 2, 1.0, 2.0) + struct.pack("<if", 2, 3.0))
        with pytest.raises(DatasetError, match="truncated record 1"):
            read_vectors(DatasetSpec(path=path))

    def test_inconsistent_dimension(self, tmp_path):
        path = tmp_path / "mixed.fvecs"
        path.write_bytes(struct.pack("<iff", 2, 1.0, 2.0) + struct.pack("<ifff", 3, 1.0, 2.0, 3.0))
        with pytest.raises(DatasetError, match="record 1 has dimension 3"):
            read_vectors(DatasetSpec(path=path))

    def test_csv_with_header(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("a,b\n1,2\n3.5,4\n")
        np.testing.assert_array_equal(read_vectors(DatasetSpec(path=path)), [[1, 2], [3.5, 4]])

    def test_csv_ragged_rows(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("1,2\n3\n")
        with pytest.raises(DatasetError, match="line 2 has 1 values"):
            read_vectors(DatasetSpec(path=path))

    def test_csv_round_trip(self, tmp_path, rng):
        values = rng.standard_normal((6, 3))
        path = tmp_path / "data.csv"
        write_vectors(values, path)
        np.testing.assert_array_equal(read_vectors(DatasetSpec(path=path)), values)

    @pytest.mark.parametrize("value", [256.0, -1.0])
    def test_bvecs_out_of_byte_range(self, tmp_path, value):
        with pytest.raises(DatasetError, match="bvecs holds values in 0..255"):
            write_vectors(np.array([[1.0, value]]), tmp_path / "bad.bvecs")
        assert not (tmp_path / "bad.bvecs").exists()

    def test_bvecs_integers_only(self, tmp_path):
        with pytest.raises(DatasetError, match="integers only"):
            write_vectors(np.array([[1.5, 2.0]]), tmp_path / "bad.bvecs")

    def test_bvecs_byte_extremes(self, tmp_path):
        path = tmp_path / "edges.bvecs"
        write_vectors(np.array([[0.0, 255.0]]), path)
        np.testing.assert_array_equal(read_vectors(DatasetSpec(path=path)), [[0.0, 255.0]])

    def test_unknown_extension(self):
        with pytest.raises(DatasetError, match="cannot infer"):
            infer_format("vectors.npy")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="does not exist"):
            read_vectors(DatasetSpec(path=tmp_path / "none.fvecs"))


class TestLabels:
    def test_class_ids_become_one_hot(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("2\n0\n2\n")
        np.testing.assert_array_equal(read_labels(path), [[0, 1], [1, 0], [0, 1]])

    def test_multi_label_matrix(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("1,0,1\n0,1,0\n")
        assert read_labels(path).shape == (2, 3)

    def test_multi_label_values_must_be_binary(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("1,2\n0,1\n")
        with pytest.raises(DatasetError, match="must be 0 or 1"):
            read_labels(path)

    def test_one_hot_rejects_fractions(self):
        with pytest.raises(DatasetError, match="integers"):
            one_hot(np.array([0.5, 1.0]))


class TestSplit:
    def test_no_queries(self, rng):
        data = rng.random((10, 2))
        train, queries = split(data, 0, seed=1)
        np.testing.assert_array_equal(train, data)
        assert queries.shape == (0, 2)

    def test_partition(self):
        train_index, query_index = split_indices(50, 10, seed=2)
        assert len(query_index) == 10
        assert sorted(np.concatenate([train_index, query_index])) == list(range(50))

    def test_seeded(self):
        first = split_indices(50, 10, seed=2)[1]
        np.testing.assert_array_equal(first, split_indices(50, 10, seed=2)[1])

    def test_too_many_queries(self, rng):
        with pytest.raises(DatasetError, match="between 0 and 9"):
            split(rng.random((10, 2)), 10)


class TestSynthetic:
    def test_uniform_ball(self):
        points, labels = make_synthetic("uniform_ball", n=500, d=3, seed=1)
        assert np.linalg.norm(points, axis=1).max() <= 1.0
        assert not labels.any()

    def test_gaussian_clusters(self):
        points, labels = make_synthetic("gaussian_clusters", n=300, d=5, k_clusters=4, seed=1)
        assert points.shape == (300, 5)
        assert set(labels) <= {0, 1, 2, 3}

    def test_unknown_kind(self):
        with pytest.raises(DatasetError, match="unknown synthetic kind"):
            make_synthetic("spiral", n=10, d=2)

    def test_no_outliers_by_default(self):
        plain, _ = make_synthetic("gaussian_clusters", n=400, d=6, seed=3)
        same, _ = make_synthetic("gaussian_clusters", n=400, d=6, seed=3, outlier_fraction=0.0)
        np.testing.assert_array_equal(plain, same)

    def test_outliers_widen_a_few_rows(self):
        plain, labels = make_synthetic("gaussian_clusters", n=1000, d=16, seed=3)
        wide, wide_labels = make_synthetic(
            "gaussian_clusters", n=1000, d=16, seed=3, outlier_fraction=0.01
        )
        np.testing.assert_array_equal(labels, wide_labels)
        changed = np.flatnonzero(np.any(plain != wide, axis=1))
        assert changed.size == 10
        norms = np.linalg.norm(wide, axis=1)
        assert np.median(norms[changed]) > 2 * np.median(norms)

    @pytest.mark.parametrize("fraction", [-0.1, 1.0])
    def test_outlier_fraction_range(self, fraction):
        with pytest.raises(DatasetError, match="outlier_fraction must be in"):
            make_synthetic("gaussian_clusters", n=10, d=2, outlier_fraction=fraction)
