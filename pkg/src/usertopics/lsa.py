"""Truncated singular value decomposition of the feature matrix.

Two methods are provided behind one interface:

* ``exact``: full LAPACK decomposition of the densified matrix, then
  truncation. The default while the smaller matrix dimension is at most
  500; oracle-grade accuracy at desk scale.
* ``randomized``: Gaussian range sketch of width ``m + oversample`` with
  ``power_iters`` subspace iterations, orthonormalization, projection, and
  a small dense SVD. The sparse matrix is never densified on this path;
  only matrix-block products against it are used. Deterministic given
  (matrix, m, oversample, power_iters, seed); the seed feeds a PCG64
  generator whose stream is stable across platforms.

The left factor is the per-user topic embedding used for clustering; the
right factor relates domains to topics. Unscaled left vectors weight all
topics equally, the scaled variant (columns multiplied by the singular
values) preserves the matrix geometry; see :func:`user_features`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .matrix import FeatureMatrix, matrix_checksum

log = logging.getLogger(__name__)

EXACT_METHOD_MAX_DIM = 500
DEFAULT_OVERSAMPLE = 10
DEFAULT_POWER_ITERS = 2


@dataclass(frozen=True, eq=False)
class LsaModel:
    """Truncated factors: u (N_u x M), sigma (M,), v (N_d x M)."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    m: int
    method: str
    seed: int | None
    source_checksum: str = ""

    def __post_init__(self):
        if self.u.shape[1] != self.m or self.v.shape[1] != self.m:
            raise ValueError("factor widths do not match the truncation rank")
        if self.sigma.shape != (self.m,):
            raise ValueError("sigma length does not match the truncation rank")
        if self.sigma.size and (
            np.any(self.sigma < 0) or np.any(np.diff(self.sigma) > 0)
        ):
            raise ValueError("singular values must be non-negative and descending")


def truncated_svd(
    f: FeatureMatrix,
    m: int,
    method: str = "auto",
    seed: int = 0,
    oversample: int = DEFAULT_OVERSAMPLE,
    power_iters: int = DEFAULT_POWER_ITERS,
) -> LsaModel:
    """Top-``m`` singular triplets of ``f``.

    ``m`` may exceed the numerical rank, in which case trailing singular
    values are near zero; it may not exceed min(N_u, N_d).
    """
    if f.n_users < 1 or f.n_domains < 1:
        raise ValueError("feature matrix must be non-empty")
    max_rank = min(f.n_users, f.n_domains)
    if not 1 <= m <= max_rank:
        raise ValueError(f"rank m={m} outside [1, {max_rank}]")
    if method == "auto":
        method = "exact" if max_rank <= EXACT_METHOD_MAX_DIM else "randomized"
    checksum = matrix_checksum(f)
    if method == "exact":
        u_full, s_full, vt_full = np.linalg.svd(f.toarray(), full_matrices=False)
        u, s, vt = u_full[:, :m], s_full[:m], vt_full[:m]
        model_seed = None
    elif method == "randomized":
        u, s, vt = _randomized_svd(f, m, seed, oversample, power_iters)
        model_seed = seed
    else:
        raise ValueError(f"unknown method: {method!r}")
    return LsaModel(
        u=np.ascontiguousarray(u),
        sigma=np.ascontiguousarray(s),
        v=np.ascontiguousarray(vt.T),
        m=m,
        method=method,
        seed=model_seed,
        source_checksum=checksum,
    )


def _randomized_svd(f, m, seed, oversample, power_iters):
    rng = np.random.default_rng(seed)
    width = min(m + oversample, min(f.n_users, f.n_domains))
    sketch = rng.standard_normal((f.n_domains, width))
    y = _kernels.csr_matmat(f.indptr, f.indices, f.data, np.ascontiguousarray(sketch))
    for _ in range(power_iters):
        q, _ = np.linalg.qr(y)
        z = _kernels.csr_tmatmat(
            f.indptr, f.indices, f.data, f.n_domains, np.ascontiguousarray(q)
        )
        y = _kernels.csr_matmat(f.indptr, f.indices, f.data, np.ascontiguousarray(z))
    q, _ = np.linalg.qr(y)
    # b = q.T @ f, computed through the transposed sparse product
    bt = _kernels.csr_tmatmat(
        f.indptr, f.indices, f.data, f.n_domains, np.ascontiguousarray(q)
    )
    u_small, s, vt = np.linalg.svd(bt.T, full_matrices=False)
    u = q @ u_small
    return u[:, :m], s[:m], vt[:m]


def user_features(model: LsaModel, scale: bool = False) -> np.ndarray:
    """Per-user topic coordinates for clustering.

    ``scale=False`` (default) returns the raw left singular vectors;
    ``scale=True`` multiplies each column by its singular value.
    """
    if scale:
        return model.u * model.sigma[None, :]
    return model.u.copy()


def domain_topics(model: LsaModel) -> np.ndarray:
    """Domain-by-topic loading matrix."""
    return model.v.copy()


def reconstruct(model: LsaModel) -> np.ndarray:
    """Dense rank-``m`` approximation of the source matrix.

    The result is a dense N_u x N_d array; mind the memory at scale.
    """
    return (model.u * model.sigma[None, :]) @ model.v.T


def canonicalize_signs(model: LsaModel) -> LsaModel:
    """Fix the per-triplet sign ambiguity of the decomposition.

    Each (u column, v column) pair is flipped jointly so the
    largest-magnitude entry of the v column is positive (ties break at the
    lowest index). Idempotent; the reconstruction is unchanged.
    """
    u = model.u.copy()
    v = model.v.copy()
    for k in range(model.m):
        idx = int(np.argmax(np.abs(v[:, k])))
        if v[idx, k] < 0:
            v[:, k] = -v[:, k]
            u[:, k] = -u[:, k]
    return replace(model, u=u, v=v)


def orthonormality_residual(mat: np.ndarray) -> float:
    """max |mat.T @ mat - I|; zero for perfectly orthonormal columns."""
    gram = mat.T @ mat
    return float(np.abs(gram - np.eye(mat.shape[1])).max())


# --------------------------------------------------------------------------
# model export / import
# --------------------------------------------------------------------------
#
# Three dense text files (<prefix>.U.txt, <prefix>.sigma.txt,
# <prefix>.V.txt), each with "# key: value" header lines recording the
# rank, method, seed and a checksum of the source matrix, followed by one
# space-separated row per line in shortest round-trip form.


def _write_factor(path: Path, mat: np.ndarray, header: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        for key, val in header.items():
            fh.write(f"# {key}: {val}\n")
        fh.write(f"# shape: {mat.shape[0]} {mat.shape[1]}\n")
        for row in mat:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def _read_factor(path: Path) -> tuple[np.ndarray, dict]:
    header: dict[str, str] = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                header[key.strip()] = val.strip()
            else:
                rows.append([float(tok) for tok in line.split()])
    n, m = (int(tok) for tok in header["shape"].split())
    mat = np.array(rows, dtype=np.float64).reshape(n, m)
    return mat, header


def save_model(model: LsaModel, prefix: str | Path) -> list[Path]:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "m": model.m,
        "method": model.method,
        "seed": "none" if model.seed is None else model.seed,
        "source_checksum": model.source_checksum,
    }
    paths = []
    for name, mat in (
        ("U", model.u),
        ("sigma", model.sigma.reshape(-1, 1)),
        ("V", model.v),
    ):
        path = prefix.with_name(prefix.name + f".{name}.txt")
        _write_factor(path, mat, header)
        paths.append(path)
    return paths


def load_model(prefix: str | Path) -> LsaModel:
    prefix = Path(prefix)
    u, header = _read_factor(prefix.with_name(prefix.name + ".U.txt"))
    sigma, h2 = _read_factor(prefix.with_name(prefix.name + ".sigma.txt"))
    v, h3 = _read_factor(prefix.with_name(prefix.name + ".V.txt"))
    if not (header["m"] == h2["m"] == h3["m"]):
        raise ValueError("factor files disagree on the rank")
    seed = None if header["seed"] == "none" else int(header["seed"])
    return LsaModel(
        u=u,
        sigma=sigma.ravel(),
        v=v,
        m=int(header["m"]),
        method=header["method"],
        seed=seed,
        source_checksum=header["source_checksum"],
    )
