"""Spectral clustering of segment embeddings into speaker-state labels.

Pipeline: cosine affinity, Gaussian blur, row-wise thresholding,
symmetrization, diffusion, row-wise max normalization, eigendecomposition,
cluster-count selection by eigengap ratio, then k-means over the spectral
embedding rows.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .errors import ConvergenceError, ValidationError
from .markov import StateSequence


@dataclass(frozen=True)
class EmbeddingSet:
    """Fixed-dimension real vectors, one per audio segment.

    `times` optionally carries the segment bounds so labels can be emitted
    time-aligned.
    """

    vectors: np.ndarray
    times: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        vectors = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValidationError(f"vectors must be 2-D, got shape {vectors.shape}")
        if vectors.shape[0] < 2:
            raise ValidationError("need at least 2 vectors to cluster")
        if not np.isfinite(vectors).all():
            raise ValidationError("vectors contain NaN or Inf")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        if self.times is not None and len(self.times) != vectors.shape[0]:
            raise ValidationError("times length does not match vector count")

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return int(self.vectors.shape[0])


@dataclass(frozen=True)
class AffinityMatrix:
    """Square pairwise-similarity matrix plus the refinement stages applied."""

    values: np.ndarray
    stages: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValidationError(f"affinity must be square, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValidationError("affinity contains NaN or Inf")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_stage(self, values: np.ndarray, stage: str) -> "AffinityMatrix":
        return AffinityMatrix(values=values, stages=self.stages + (stage,))

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


def _as_matrix(a: AffinityMatrix | np.ndarray) -> np.ndarray:
    return a.values if isinstance(a, AffinityMatrix) else np.asarray(a, dtype=np.float64)


def affinity(embeddings: EmbeddingSet) -> AffinityMatrix:
    """Cosine similarity mapped to [0, 1], diagonal pinned to 1."""
    v = embeddings.vectors
    norms = np.linalg.norm(v, axis=1)
    for i, norm in enumerate(norms):
        if norm == 0.0:
            raise ValidationError(f"embedding {i} has zero norm")
    cos = (v @ v.T) / np.outer(norms, norms)
    a = (1.0 + cos) / 2.0
    np.fill_diagonal(a, 1.0)
    a = np.clip(a, 0.0, 1.0)
    return AffinityMatrix(values=a, stages=("affinity",))


def gaussian_blur(a: AffinityMatrix | np.ndarray, sigma: float = 1.0) -> AffinityMatrix:
    """2-D Gaussian smoothing, kernel renormalized over in-bounds taps.

    The matrix is smoothed as an image, which deliberately couples
    neighbouring segment indices (adjacent segments tend to share a
    speaker). ``sigma=0`` degenerates to the identity.
    """
    if sigma < 0:
        raise ValidationError(f"sigma must be non-negative, got {sigma}")
    values = _as_matrix(a)
    radius = math.ceil(2.0 * sigma)
    if radius == 0:
        blurred = values.copy()
    else:
        offsets = np.arange(-radius, radius + 1)
        line = np.exp(-(offsets**2) / (2.0 * sigma**2))
        kernel = np.outer(line, line)
        kernel /= kernel.sum()
        smoothed = convolve2d(values, kernel, mode="same", boundary="fill")
        coverage = convolve2d(np.ones_like(values), kernel, mode="same", boundary="fill")
        blurred = smoothed / coverage
    if isinstance(a, AffinityMatrix):
        return a.with_stage(blurred, "blur")
    return AffinityMatrix(values=blurred, stages=("blur",))


def _nearest_rank(row: np.ndarray, percentile: float) -> float:
    ordered = np.sort(row)
    idx = min(int(row.size * percentile / 100.0 + 1e-9), row.size - 1)
    return float(ordered[idx])


def row_threshold(
    a: AffinityMatrix | np.ndarray,
    percentile: float = 95.0,
    soft_multiplier: float = 0.01,
) -> AffinityMatrix:
    """Attenuate each row's entries below its nearest-rank percentile.

    Entries at or above the percentile value are kept; the rest are scaled
    by `soft_multiplier` rather than zeroed, so no row gets disconnected.
    """
    if not 0.0 < percentile < 100.0:
        raise ValidationError(f"percentile must be in (0, 100), got {percentile}")
    values = _as_matrix(a).copy()
    for i in range(values.shape[0]):
        cutoff = _nearest_rank(values[i], percentile)
        below = values[i] < cutoff
        values[i, below] *= soft_multiplier
    if isinstance(a, AffinityMatrix):
        return a.with_stage(values, "row_threshold")
    return AffinityMatrix(values=values, stages=("row_threshold",))


def symmetrize(a: AffinityMatrix | np.ndarray) -> AffinityMatrix:
    """Elementwise max of the matrix and its transpose."""
    values = _as_matrix(a)
    result = np.maximum(values, values.T)
    if isinstance(a, AffinityMatrix):
        return a.with_stage(result, "symmetrize")
    return AffinityMatrix(values=result, stages=("symmetrize",))


def diffuse(a: AffinityMatrix | np.ndarray) -> AffinityMatrix:
    """Gram-matrix diffusion: A @ A.T."""
    values = _as_matrix(a)
    result = values @ values.T
    if isinstance(a, AffinityMatrix):
        return a.with_stage(result, "diffuse")
    return AffinityMatrix(values=result, stages=("diffuse",))


def row_normalize(a: AffinityMatrix | np.ndarray) -> AffinityMatrix:
    """Divide each row by its maximum so every row max becomes 1."""
    values = _as_matrix(a)
    maxes = values.max(axis=1)
    for i, m in enumerate(maxes):
        if m <= 0.0:
            raise ValidationError(f"row {i} has no positive entry to normalize by")
    result = values / maxes[:, None]
    if isinstance(a, AffinityMatrix):
        return a.with_stage(result, "row_normalize")
    return AffinityMatrix(values=result, stages=("row_normalize",))


def jacobi_eigh(
    matrix: np.ndarray, tol: float = 1e-10, max_sweeps: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues in descending order and the matching eigenvector
    columns. Convergence is declared when the off-diagonal Frobenius norm
    falls below ``tol * max(1, ||A||_F)``.
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValidationError(f"matrix must be square, got shape {a.shape}")
    if not np.allclose(a, a.T, atol=1e-8):
        raise ValidationError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    threshold = tol * max(1.0, float(np.linalg.norm(a)))

    def off_norm() -> float:
        off = a - np.diag(a.diagonal())
        return float(np.linalg.norm(off))

    residual = off_norm()
    for _ in range(max_sweeps):
        if residual <= threshold:
            break
        # Rotating entries far below the off-diagonal average wastes a whole
        # O(n) update for negligible progress; at least one entry always
        # exceeds this cutoff, so each sweep still reduces the residual.
        cutoff = max(residual / (n * (n - 1)), 1e-300)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= cutoff:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(1.0 + theta * theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                a[p, q] = a[q, p] = 0.0
                vec_p = c * v[:, p] - s * v[:, q]
                vec_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = vec_p, vec_q
        residual = off_norm()
    else:
        raise ConvergenceError(
            f"Jacobi sweep cap {max_sweeps} reached (off-diagonal norm "
            f"{residual:.3e})",
            residual=residual,
        )
    eigenvalues = a.diagonal().copy()
    order = np.argsort(-eigenvalues, kind="stable")
    return eigenvalues[order], v[:, order]


def _eigen_gap_from_values(eigenvalues: np.ndarray, max_k: int) -> int:
    eps = 1e-12
    limit = min(max_k, eigenvalues.size)
    if limit < 2:
        return 1
    ratios = [
        eigenvalues[i - 1] / max(eigenvalues[i], eps) for i in range(1, limit)
    ]
    best = int(np.argmax(ratios)) + 1
    if max(ratios) <= 1.0 + 1e-9:
        warnings.warn(
            "degenerate eigenvalue spectrum; defaulting to a single cluster",
            RuntimeWarning,
            stacklevel=3,
        )
        return 1
    return best


def eigen_gap_k(a: AffinityMatrix | np.ndarray, max_k: int = 8) -> int:
    """Cluster count at the largest ratio between consecutive eigenvalues."""
    values = _as_matrix(a)
    eigenvalues, _ = jacobi_eigh(values)
    return _eigen_gap_from_values(eigenvalues, max_k)


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> np.ndarray:
    """Lloyd's k-means with k-means++ seeding and first-occurrence label ids.

    An empty cluster is re-seeded at the point farthest from its assigned
    centroid (lowest index on ties), keeping the run deterministic.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValidationError(f"points must be 2-D, got shape {pts.shape}")
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"k must be in 1..{n}, got {k}")
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, pts.shape[1]))
    centroids[0] = pts[rng.integers(n)]
    closest_sq = np.sum((pts - centroids[0]) ** 2, axis=1)
    for c in range(1, k):
        total = closest_sq.sum()
        if total <= 0.0:
            choice = int(rng.integers(n))
        else:
            u = rng.random()
            choice = int(np.searchsorted(np.cumsum(closest_sq / total), u, side="right"))
            choice = min(choice, n - 1)
        centroids[c] = pts[choice]
        closest_sq = np.minimum(closest_sq, np.sum((pts - centroids[c]) ** 2, axis=1))

    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        distances = np.linalg.norm(pts[:, None, :] - centroids[None, :, :], axis=2)
        labels = np.argmin(distances, axis=1)
        for c in range(k):
            if not (labels == c).any():
                per_point = distances[np.arange(n), labels]
                farthest = int(np.argmax(per_point))
                centroids[c] = pts[farthest]
                labels[farthest] = c
        new_centroids = np.stack([pts[labels == c].mean(axis=0) for c in range(k)])
        shift = float(np.linalg.norm(new_centroids - centroids, axis=1).max())
        centroids = new_centroids
        if shift < tol:
            break

    remap: dict[int, int] = {}
    for lab in labels:
        if int(lab) not in remap:
            remap[int(lab)] = len(remap)
    return np.asarray([remap[int(lab)] for lab in labels], dtype=np.int64)


def refine(
    embeddings: EmbeddingSet,
    sigma: float = 1.0,
    percentile: float = 95.0,
    soft_multiplier: float = 0.01,
) -> AffinityMatrix:
    """Run the full affinity refinement chain."""
    a = affinity(embeddings)
    a = gaussian_blur(a, sigma)
    a = row_threshold(a, percentile, soft_multiplier)
    a = symmetrize(a)
    a = diffuse(a)
    a = row_normalize(a)
    return a


PERCENTILE_GRID = (50.0, 60.0, 70.0, 80.0, 90.0, 95.0)


def _spectrum_at(
    embeddings: EmbeddingSet, sigma: float, percentile: float, soft_multiplier: float
) -> tuple[np.ndarray, np.ndarray]:
    refined = refine(embeddings, sigma, percentile, soft_multiplier)
    # Row scaling breaks symmetry; the spectral step uses the symmetric average.
    sym = 0.5 * (refined.values + refined.values.T)
    return jacobi_eigh(sym)


def _best_ratio(eigenvalues: np.ndarray, max_k: int) -> float:
    eps = 1e-12
    limit = min(max_k, eigenvalues.size)
    if limit < 2:
        return 0.0
    return max(
        eigenvalues[i - 1] / max(eigenvalues[i], eps) for i in range(1, limit)
    )


def _sweep_percentiles(
    embeddings: EmbeddingSet,
    sigma: float,
    soft_multiplier: float,
    max_k: int,
    grid: tuple[float, ...],
) -> tuple[float, np.ndarray, np.ndarray]:
    """Return (percentile, eigenvalues, eigenvectors) with the sharpest eigengap.

    A fixed percentile keeps a fixed fraction of each row, which is too
    sparse for small segment counts and too dense for large ones; sweeping
    a grid and keeping the sharpest spectrum adapts to the data. Ties
    break toward the sparsest (highest) percentile.
    """
    best: tuple[float, float, np.ndarray, np.ndarray] | None = None
    for p in grid:
        eigenvalues, eigenvectors = _spectrum_at(embeddings, sigma, p, soft_multiplier)
        score = _best_ratio(eigenvalues, max_k)
        if best is None or score >= best[0]:
            best = (score, p, eigenvalues, eigenvectors)
    assert best is not None
    return best[1], best[2], best[3]


def auto_percentile(
    embeddings: EmbeddingSet,
    sigma: float = 1.0,
    soft_multiplier: float = 0.01,
    max_k: int = 8,
    grid: tuple[float, ...] = PERCENTILE_GRID,
) -> float:
    """Thresholding percentile that maximizes the top eigengap ratio."""
    percentile, _, _ = _sweep_percentiles(embeddings, sigma, soft_multiplier, max_k, grid)
    return percentile


def spectral_cluster(
    embeddings: EmbeddingSet,
    k: int | None = None,
    seed: int = 0,
    sigma: float = 1.0,
    percentile: float | None = None,
    soft_multiplier: float = 0.01,
    max_k: int = 8,
) -> StateSequence:
    """Refine, eigendecompose, pick k by eigengap, and k-means the rows.

    `percentile` of None selects the thresholding percentile by eigengap
    sweep (auto_percentile); pass a value to pin it.
    """
    if percentile is None:
        _, eigenvalues, eigenvectors = _sweep_percentiles(
            embeddings, sigma, soft_multiplier, max_k, PERCENTILE_GRID
        )
    else:
        eigenvalues, eigenvectors = _spectrum_at(
            embeddings, sigma, percentile, soft_multiplier
        )
    if k is None:
        k = _eigen_gap_from_values(eigenvalues, max_k)
    if not 1 <= k <= len(embeddings):
        raise ValidationError(f"k must be in 1..{len(embeddings)}, got {k}")
    spectral = eigenvectors[:, :k]
    labels = kmeans(spectral, k, seed)
    return StateSequence(
        labels=tuple(int(x) for x in labels),
        n_states=int(k),
        times=embeddings.times,
    )
