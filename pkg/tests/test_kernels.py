import os
import subprocess
import sys

import numpy as np
import pytest

from usertopics import _kernels


def random_csr(rng, n_rows=30, n_cols=20, nnz_per_row=6):
    cols = np.sort(
        np.array(
            [rng.choice(n_cols, size=nnz_per_row, replace=False) for _ in range(n_rows)]
        ),
        axis=1,
    ).ravel().astype(np.int64)
    data = rng.uniform(1.0, 1e5, size=cols.size)
    indptr = np.arange(0, cols.size + 1, nnz_per_row, dtype=np.int64)
    return indptr, cols, data


needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba unavailable")


@needs_numba
class TestPathEquivalence:
    def test_tf_values(self, rng):
        indptr, _, data = random_csr(rng)
        a = _kernels.tf_values_np(indptr, data, 1.0)
        b = _kernels.tf_values_nb(indptr, data, 1.0)
        assert np.allclose(a, b, atol=1e-12, rtol=0)

    def test_share_values(self, rng):
        indptr, _, data = random_csr(rng)
        a = _kernels.share_values_np(indptr, data)
        b = _kernels.share_values_nb(indptr, data)
        assert np.allclose(a, b, atol=1e-15, rtol=0)

    def test_csr_matmat(self, rng):
        indptr, indices, data = random_csr(rng)
        block = np.ascontiguousarray(rng.standard_normal((20, 7)))
        a = _kernels.csr_matmat_np(indptr, indices, data, block)
        b = _kernels.csr_matmat_nb(indptr, indices, data, block)
        assert np.allclose(a, b, rtol=1e-12)

    def test_csr_tmatmat(self, rng):
        indptr, indices, data = random_csr(rng)
        tall = np.ascontiguousarray(rng.standard_normal((30, 5)))
        a = _kernels.csr_tmatmat_np(indptr, indices, data, 20, tall)
        b = _kernels.csr_tmatmat_nb(indptr, indices, data, 20, tall)
        assert np.allclose(a, b, rtol=1e-12)

    def test_kmeans_assign(self, rng):
        pts = np.ascontiguousarray(rng.standard_normal((50, 4)))
        cents = np.ascontiguousarray(rng.standard_normal((5, 4)))
        la, da = _kernels.kmeans_assign_np(pts, cents)
        lb, db = _kernels.kmeans_assign_nb(pts, cents)
        assert np.array_equal(la, lb)
        assert np.allclose(da, db, rtol=1e-12)

    def test_kmeans_assign_tie_lowest_index(self):
        pts = np.array([[0.0]])
        cents = np.array([[1.0], [-1.0]])  # equidistant
        for fn in (_kernels.kmeans_assign_np, _kernels.kmeans_assign_nb):
            labels, _ = fn(pts, cents)
            assert labels[0] == 0

    def test_kmeans_update(self, rng):
        pts = np.ascontiguousarray(rng.standard_normal((40, 3)))
        labels = rng.integers(0, 4, size=40).astype(np.int64)
        sa, ca = _kernels.kmeans_update_np(pts, labels, 4)
        sb, cb = _kernels.kmeans_update_nb(pts, labels, 4)
        assert np.array_equal(ca, cb)
        assert np.array_equal(sa, sb)  # same accumulation order

    def test_dsq_update(self, rng):
        pts = np.ascontiguousarray(rng.standard_normal((30, 3)))
        c = np.ascontiguousarray(rng.standard_normal(3))
        da = np.full(30, np.inf)
        db = np.full(30, np.inf)
        _kernels.dsq_update_np(pts, c, da)
        _kernels.dsq_update_nb(pts, c, db)
        assert np.allclose(da, db, rtol=1e-12)


class TestBackendSelection:
    def test_backend_exposed(self):
        assert _kernels.BACKEND in ("numba", "numpy")

    def test_env_flag_forces_numpy(self):
        code = (
            "from usertopics import _kernels; "
            "print(_kernels.BACKEND); print(_kernels.USING_NUMBA)"
        )
        env = dict(os.environ, USERTOPICS_NUMBA="0")
        out = subprocess.run(
            [sys.executable, "-c", code], env=env, capture_output=True, text=True
        )
        assert out.returncode == 0, out.stderr
        lines = out.stdout.split()
        assert lines[0] == "numpy" and lines[1] == "False"

    def test_empty_matrix_kernels(self):
        indptr = np.zeros(1, dtype=np.int64)
        data = np.empty(0)
        assert _kernels.tf_values(indptr, data, 1.0).size == 0
        assert _kernels.share_values(indptr, data).size == 0
