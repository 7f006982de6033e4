"""Shared helpers for the test suite."""

import numpy as np

from caprank.decomposition import EmbeddingMatrix


def random_matrix(rng, n: int, d: int) -> EmbeddingMatrix:
    return EmbeddingMatrix(
        data=rng.standard_normal((n, d)),
        row_ids=tuple(f"r{i}" for i in range(n)),
    )


def gapped_matrix(rng, n: int, d: int, ratio: float = 2.0) -> EmbeddingMatrix:
    """Matrix with geometrically separated singular values.

    Every consecutive pair of singular values differs by ``ratio``, so the
    rank-r truncation is unique for every r and invariance properties that
    require a spectral gap hold robustly.
    """
    m = min(n, d)
    u, _ = np.linalg.qr(rng.standard_normal((n, m)))
    v, _ = np.linalg.qr(rng.standard_normal((d, m)))
    spectrum = ratio ** -np.arange(m, dtype=np.float64)
    return EmbeddingMatrix(
        data=(u * spectrum) @ v.T,
        row_ids=tuple(f"r{i}" for i in range(n)),
    )
