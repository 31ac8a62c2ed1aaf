import numpy as np
import pytest

from usertopics.matrix import (
    domain_stats,
    intensity_histogram,
    matrices_equal,
    matrix_checksum,
    rank_domains,
    read_matrix,
    write_matrix,
)
from usertopics.weighting import tfidf

from helpers import matrix_from_dense, random_dense_positive


class TestDomainStats:
    def test_median_includes_zeros(self):
        m = matrix_from_dense([[0, 1], [0, 2], [5, 3]])
        stats = domain_stats(m)
        assert stats.median[0] == 0 and stats.n_visitors[0] == 1
        assert stats.median[1] == 2 and stats.n_visitors[1] == 3

    def test_all_visited_domain(self):
        m = matrix_from_dense([[7, 1], [7, 0], [7, 0]])
        stats = domain_stats(m)
        assert stats.median[0] == 7
        assert stats.nonzero_median_fraction == 0.5

    def test_lower_median_even_count(self):
        m = matrix_from_dense([[1], [2], [3], [4]])
        stats = domain_stats(m)
        assert stats.median[0] == 2

    def test_empty_matrix(self):
        m = matrix_from_dense(np.zeros((0, 0)))
        stats = domain_stats(m)
        assert stats.nonzero_median_fraction == 0.0
        assert len(stats.domains) == 0

    def test_support_equals_stored_entries(self, rng):
        dense = random_dense_positive(rng)
        m = matrix_from_dense(dense)
        stats = domain_stats(m)
        assert np.array_equal(stats.n_visitors, np.count_nonzero(dense, axis=0))


class TestRankDomains:
    def test_descending(self):
        m = matrix_from_dense([[2, 5]])
        stats = domain_stats(m)
        assert rank_domains(stats, "median") == ["d0001", "d0000"]

    def test_tie_breaks_by_name(self):
        m = matrix_from_dense([[3, 3]])
        stats = domain_stats(m)
        assert rank_domains(stats, "median") == ["d0000", "d0001"]

    def test_empty(self):
        stats = domain_stats(matrix_from_dense(np.zeros((0, 0))))
        assert rank_domains(stats) == []

    def test_is_permutation(self, rng):
        m = matrix_from_dense(random_dense_positive(rng))
        stats = domain_stats(m)
        for by in ("median", "total", "n_j"):
            assert sorted(rank_domains(stats, by)) == sorted(m.domains)

    def test_unknown_key(self):
        stats = domain_stats(matrix_from_dense([[1]]))
        with pytest.raises(ValueError):
            rank_domains(stats, "bogus")


class TestIntensityHistogram:
    def test_log_decades(self):
        m = matrix_from_dense([[10], [10], [1000]])
        h = intensity_histogram(m, "d0000")
        assert h.edges.tolist() == [10.0, 100.0, 1000.0, 10000.0]
        assert h.counts.tolist() == [2, 0, 1]

    def test_unknown_domain(self):
        m = matrix_from_dense([[1]])
        with pytest.raises(KeyError):
            intensity_histogram(m, "missing.com")

    def test_single_value_one(self):
        m = matrix_from_dense([[1]])
        h = intensity_histogram(m, "d0000")
        assert h.counts.tolist() == [1]
        assert h.edges[0] == 1.0

    def test_zero_column_with_zeros_excluded(self):
        # a universal domain weighted away gives an all-zero stored column
        f = tfidf(matrix_from_dense([[5, 1], [5, 0], [5, 2]]))
        h = intensity_histogram(f, "d0000")
        assert h.counts.size == 0 and h.total == 0

    def test_total_matches_zero_policy(self):
        m = matrix_from_dense([[0, 1], [20, 2], [300, 3]])
        h_excl = intensity_histogram(m, "d0000")
        assert h_excl.total == 2
        h_incl = intensity_histogram(m, "d0000", include_zeros=True)
        assert h_incl.total == 3 and h_incl.zeros == 1

    def test_explicit_edges_catch_outliers(self):
        m = matrix_from_dense([[1], [50], [5000]])
        h = intensity_histogram(m, "d0000", bins=[10, 100])
        assert h.below == 1 and h.above == 1 and h.counts.tolist() == [1]
        assert h.total == 3


class TestMatrixIO:
    def test_profile_roundtrip(self, tmp_path, rng):
        m = matrix_from_dense(random_dense_positive(rng))
        write_matrix(m, tmp_path / "m")
        back = read_matrix(tmp_path / "m")
        assert matrices_equal(m, back)
        assert type(back).__name__ == "ProfileMatrix"

    def test_feature_roundtrip_keeps_provenance(self, tmp_path, rng):
        f = tfidf(matrix_from_dense(random_dense_positive(rng)))
        write_matrix(f, tmp_path / "f")
        back = read_matrix(tmp_path / "f")
        assert matrices_equal(f, back)
        assert back.provenance == "tfidf"

    def test_write_is_deterministic(self, tmp_path, rng):
        m = matrix_from_dense(random_dense_positive(rng))
        write_matrix(m, tmp_path / "a")
        write_matrix(m, tmp_path / "b")
        a = (tmp_path / "a.triplets.txt").read_bytes()
        b = (tmp_path / "b.triplets.txt").read_bytes()
        assert a == b

    def test_checksum_tracks_content(self, rng):
        m1 = matrix_from_dense([[1, 2], [3, 4]])
        m2 = matrix_from_dense([[1, 2], [3, 5]])
        assert matrix_checksum(m1) != matrix_checksum(m2)
        assert matrix_checksum(m1) == matrix_checksum(matrix_from_dense([[1, 2], [3, 4]]))
