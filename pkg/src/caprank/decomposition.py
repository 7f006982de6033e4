"""Embedding-matrix construction and low-rank consensus/residual decomposition.

A scene's candidate captions are embedded and stacked row-wise into an n x d
matrix. The matrix is split into a low-rank consensus part plus a residual,
either by truncated SVD (default) or by robust PCA (principal component
pursuit). Row norms of the residual are the hallucination scores computed in
:mod:`caprank.scoring`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DegenerateResidualWarning,
    DimensionMismatchError,
    DuplicateIdError,
    EmptyInputError,
    InvalidConfigError,
    InvalidOverrideError,
    NonFiniteEntryError,
    NotConvergedWarning,
    NumericalFailureError,
    ZeroRowWarning,
)

__all__ = [
    "EmbeddingMatrix",
    "SingularSpectrum",
    "DecompositionConfig",
    "DecompositionOutput",
    "build_matrix",
    "singular_spectrum",
    "select_rank",
    "decompose_svd",
    "decompose_rpca",
    "decompose",
]


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Immutable n x d fp64 matrix of caption embeddings, one row per caption."""

    data: np.ndarray
    row_ids: tuple[str, ...]

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise DimensionMismatchError(f"expected a 2-D matrix, got ndim={data.ndim}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise EmptyInputError("matrix must have at least one row and one column")
        if not np.isfinite(data).all():
            raise NonFiniteEntryError("matrix contains NaN or infinite entries")
        if len(self.row_ids) != data.shape[0]:
            raise DimensionMismatchError(
                f"{len(self.row_ids)} row ids for {data.shape[0]} rows"
            )
        if len(set(self.row_ids)) != len(self.row_ids):
            raise DuplicateIdError("row ids must be unique")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "row_ids", tuple(self.row_ids))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


def build_matrix(
    embeddings: Sequence[Sequence[float]], ids: Sequence[str]
) -> EmbeddingMatrix:
    """Stack per-caption embedding vectors row-wise into an :class:`EmbeddingMatrix`.

    Raises:
        EmptyInputError: no embeddings given.
        DimensionMismatchError: vectors differ in length, or ids/vectors counts differ.
        NonFiniteEntryError: a vector contains NaN or infinity.
        DuplicateIdError: ids are not unique.
    """
    if len(embeddings) == 0:
        raise EmptyInputError("no embeddings given")
    if len(ids) != len(embeddings):
        raise DimensionMismatchError(
            f"{len(ids)} ids for {len(embeddings)} embeddings"
        )
    rows = [np.asarray(e, dtype=np.float64) for e in embeddings]
    d = rows[0].shape[-1] if rows[0].ndim else 0
    for i, r in enumerate(rows):
        if r.ndim != 1:
            raise DimensionMismatchError(f"embedding {ids[i]!r} is not a vector")
        if r.shape[0] != d:
            raise DimensionMismatchError(
                f"embedding {ids[i]!r} has dimension {r.shape[0]}, expected {d}"
            )
    if d < 1:
        raise EmptyInputError("embeddings must have dimension >= 1")
    data = np.vstack(rows)
    if not np.isfinite(data).all():
        bad = int(np.argwhere(~np.isfinite(data).all(axis=1))[0][0])
        raise NonFiniteEntryError(f"embedding {ids[bad]!r} has non-finite entries")
    return EmbeddingMatrix(data=data, row_ids=tuple(str(i) for i in ids))


@dataclass(frozen=True)
class SingularSpectrum:
    """All min(n, d) singular values plus the cumulative variance profile.

    ``variance_profile[k-1]`` is the fraction of total squared singular-value
    energy captured by the top k values; it is non-decreasing and reaches
    exactly 1 for a nonzero matrix. For an all-zero matrix the profile is all
    zeros.
    """

    values: np.ndarray
    variance_profile: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        profile = np.asarray(self.variance_profile, dtype=np.float64)
        if values.ndim != 1 or profile.shape != values.shape:
            raise InvalidConfigError("spectrum values/profile must be aligned 1-D arrays")
        if values.size and (np.any(values < 0) or np.any(np.diff(values) > 0)):
            raise InvalidConfigError("singular values must be non-negative, non-increasing")
        values = values.copy()
        profile = profile.copy()
        values.setflags(write=False)
        profile.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "variance_profile", profile)

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "SingularSpectrum":
        """Build a spectrum from singular values, deriving the variance profile."""
        values = np.asarray(values, dtype=np.float64)
        energy = np.cumsum(values**2)
        total = energy[-1] if energy.size else 0.0
        if total > 0:
            profile = energy / total
        else:
            profile = np.zeros_like(values)
        return cls(values=values, variance_profile=profile)

    @property
    def total_energy(self) -> float:
        """Sum of squared singular values (squared Frobenius norm)."""
        return float(np.sum(self.values**2))


@dataclass(frozen=True)
class DecompositionConfig:
    """Knobs for the consensus/residual split.

    ``rank_cap`` defaults to n-1 (floored at 1) when left unset: retaining all
    min(n, d) components would zero the residual and tie every score. Passing
    ``rank_cap=min(n, d)`` restores the uncapped variance-threshold rule.
    """

    method: str = "svd"
    variance_threshold: float = 0.95
    rank_cap: Optional[int] = None
    rank_override: Optional[int] = None
    normalize_rows: bool = False
    rpca_lambda: Optional[float] = None
    rpca_tolerance: float = 1e-7
    rpca_max_iterations: int = 500

    def __post_init__(self):
        if self.method not in ("svd", "rpca"):
            raise InvalidConfigError(f"unknown method {self.method!r}")
        if not 0.0 < self.variance_threshold <= 1.0:
            raise InvalidConfigError("variance_threshold must be in (0, 1]")
        if self.rank_cap is not None and self.rank_cap < 1:
            raise InvalidConfigError("rank_cap must be >= 1")
        if self.rank_override is not None and self.rank_override < 1:
            raise InvalidConfigError("rank_override must be >= 1")
        if self.rpca_lambda is not None and not self.rpca_lambda > 0:
            raise InvalidConfigError("rpca_lambda must be positive")
        if not self.rpca_tolerance > 0:
            raise InvalidConfigError("rpca_tolerance must be positive")
        if self.rpca_max_iterations < 1:
            raise InvalidConfigError("rpca_max_iterations must be >= 1")


@dataclass(frozen=True)
class DecompositionOutput:
    """Result of splitting a matrix into consensus + residual.

    ``matrix`` is the matrix that was actually decomposed (row-normalized when
    requested), so ``matrix == consensus + residual`` holds entrywise up to
    numerical tolerance. SVD factors are populated only for the svd method;
    ``iterations``/``gap``/``converged`` are populated only for rpca.
    """

    method: str
    rank: int
    spectrum: SingularSpectrum
    consensus: np.ndarray
    residual: np.ndarray
    matrix: np.ndarray
    u: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    zero_rows: tuple[int, ...] = field(default=())
    degenerate_residual: bool = False
    iterations: Optional[int] = None
    gap: Optional[float] = None
    converged: Optional[bool] = None


def singular_spectrum(matrix: EmbeddingMatrix | np.ndarray) -> SingularSpectrum:
    """Compute all min(n, d) singular values and the variance profile.

    Deterministic for a fixed input. Raises :class:`NumericalFailureError` if
    the underlying SVD iteration fails, which must not happen for finite
    inputs at the matrix sizes this package targets.
    """
    data = matrix.data if isinstance(matrix, EmbeddingMatrix) else np.asarray(matrix)
    try:
        values = np.linalg.svd(data, compute_uv=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK safety net
        raise NumericalFailureError(f"SVD failed to converge: {exc}") from exc
    return SingularSpectrum.from_values(values)


def select_rank(
    spectrum: SingularSpectrum,
    config: DecompositionConfig,
    n_rows: Optional[int] = None,
) -> int:
    """Pick the decomposition rank from the cumulative variance profile.

    Returns the smallest k whose cumulative variance ratio reaches
    ``config.variance_threshold``, clipped to ``rank_cap`` and min(n, d).
    ``n_rows`` supplies the row count used for the default n-1 cap; without it
    an unset ``rank_cap`` imposes no extra cap. An all-zero spectrum yields
    rank 1. A ``rank_override`` bypasses the threshold entirely.
    """
    size = int(spectrum.values.size)
    if config.rank_override is not None:
        if not 1 <= config.rank_override <= size:
            raise InvalidOverrideError(
                f"rank_override {config.rank_override} outside [1, {size}]"
            )
        return config.rank_override
    if spectrum.total_energy == 0.0:
        return 1
    above = np.nonzero(spectrum.variance_profile >= config.variance_threshold)[0]
    k_star = int(above[0]) + 1 if above.size else size
    if config.rank_cap is not None:
        cap = config.rank_cap
    elif n_rows is not None:
        cap = max(n_rows - 1, 1)
    else:
        cap = size
    return max(1, min(k_star, cap, size))


def _prepare(matrix: EmbeddingMatrix, config: DecompositionConfig):
    """Apply optional row normalization; returns (array, zero-row indices)."""
    data = np.array(matrix.data, dtype=np.float64)
    zero_rows: tuple[int, ...] = ()
    if config.normalize_rows:
        norms = np.linalg.norm(data, axis=1)
        zero = norms == 0.0
        if zero.any():
            zero_rows = tuple(int(i) for i in np.nonzero(zero)[0])
            warnings.warn(
                f"rows {list(zero_rows)} have zero norm and were not normalized",
                ZeroRowWarning,
                stacklevel=3,
            )
        norms[zero] = 1.0
        data = data / norms[:, None]
    return data, zero_rows


def _check_degenerate(residual: np.ndarray, data: np.ndarray) -> bool:
    scale = np.linalg.norm(data)
    degenerate = bool(np.linalg.norm(residual) < 1e-12 * scale) or scale == 0.0
    if degenerate:
        warnings.warn(
            "residual is numerically zero; hallucination scores are uninformative",
            DegenerateResidualWarning,
            stacklevel=3,
        )
    return degenerate


def decompose_svd(
    matrix: EmbeddingMatrix, config: DecompositionConfig | None = None
) -> DecompositionOutput:
    """Truncated-SVD split: consensus = top-r reconstruction, residual = rest.

    The rank r is chosen by :func:`select_rank` from the full spectrum. With
    ``normalize_rows`` each nonzero row is scaled to unit L2 norm first and the
    reported residual refers to the normalized matrix.
    """
    config = config or DecompositionConfig()
    data, zero_rows = _prepare(matrix, config)
    try:
        u, values, vt = np.linalg.svd(data, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK safety net
        raise NumericalFailureError(f"SVD failed to converge: {exc}") from exc
    spectrum = SingularSpectrum.from_values(values)
    rank = select_rank(spectrum, config, n_rows=matrix.n)
    consensus = (u[:, :rank] * values[:rank]) @ vt[:rank, :]
    residual = data - consensus
    return DecompositionOutput(
        method="svd",
        rank=rank,
        spectrum=spectrum,
        consensus=consensus,
        residual=residual,
        matrix=data,
        u=u[:, :rank].copy(),
        sigma=values[:rank].copy(),
        v=vt[:rank, :].T.copy(),
        zero_rows=zero_rows,
        degenerate_residual=_check_degenerate(residual, data),
    )


def _svt(a: np.ndarray, tau: float) -> np.ndarray:
    """Singular-value thresholding operator."""
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    return (u[:, keep] * s[keep]) @ vt[keep, :]


def _shrink(a: np.ndarray, tau: float) -> np.ndarray:
    """Entrywise soft-thresholding operator."""
    return np.sign(a) * np.maximum(np.abs(a) - tau, 0.0)


def decompose_rpca(
    matrix: EmbeddingMatrix, config: DecompositionConfig | None = None
) -> DecompositionOutput:
    """Principal component pursuit split via inexact augmented Lagrangian.

    Solves min ||R||_* + lambda ||E||_1 s.t. M = R + E, alternating
    singular-value thresholding on the consensus with entrywise
    soft-thresholding on the residual. Stops when the feasibility gap
    ||M - R - E||_F / ||M||_F drops below ``rpca_tolerance`` or the iteration
    cap is hit (then a :class:`NotConvergedWarning` is emitted and the result
    is still returned with the gap recorded). The reported rank is the
    numerical rank of the consensus.
    """
    config = config or DecompositionConfig(method="rpca")
    data, zero_rows = _prepare(matrix, config)
    n, d = data.shape
    spectrum = singular_spectrum(data)
    fro = np.linalg.norm(data)

    if fro == 0.0:
        consensus = np.zeros_like(data)
        residual = np.zeros_like(data)
        return DecompositionOutput(
            method="rpca",
            rank=1,
            spectrum=spectrum,
            consensus=consensus,
            residual=residual,
            matrix=data,
            zero_rows=zero_rows,
            degenerate_residual=_check_degenerate(residual, data),
            iterations=1,
            gap=0.0,
            converged=True,
        )

    lam = config.rpca_lambda if config.rpca_lambda is not None else 1.0 / np.sqrt(max(n, d))
    sigma1 = float(spectrum.values[0])
    mu = 1.25 / sigma1
    mu_max = mu * 1e7
    rho = 1.5
    dual = data / max(sigma1, np.max(np.abs(data)) / lam)
    residual = np.zeros_like(data)
    consensus = np.zeros_like(data)

    gap = np.inf
    iterations = 0
    converged = False
    for iterations in range(1, config.rpca_max_iterations + 1):
        consensus = _svt(data - residual + dual / mu, 1.0 / mu)
        residual = _shrink(data - consensus + dual / mu, lam / mu)
        slack = data - consensus - residual
        dual = dual + mu * slack
        mu = min(mu * rho, mu_max)
        gap = float(np.linalg.norm(slack) / fro)
        if gap < config.rpca_tolerance:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"principal component pursuit stopped at {iterations} iterations "
            f"with feasibility gap {gap:.3e}",
            NotConvergedWarning,
            stacklevel=2,
        )

    consensus_values = np.linalg.svd(consensus, compute_uv=False)
    top = consensus_values[0] if consensus_values.size else 0.0
    rank = int(np.sum(consensus_values > 1e-9 * top)) if top > 0 else 0
    return DecompositionOutput(
        method="rpca",
        rank=max(rank, 1),
        spectrum=spectrum,
        consensus=consensus,
        residual=residual,
        matrix=data,
        zero_rows=zero_rows,
        degenerate_residual=_check_degenerate(residual, data),
        iterations=iterations,
        gap=gap,
        converged=converged,
    )


def decompose(
    matrix: EmbeddingMatrix, config: DecompositionConfig | None = None
) -> DecompositionOutput:
    """Dispatch to :func:`decompose_svd` or :func:`decompose_rpca` per config."""
    config = config or DecompositionConfig()
    if config.method == "rpca":
        return decompose_rpca(matrix, config)
    return decompose_svd(matrix, config)
