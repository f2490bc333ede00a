"""Origin-level asymmetry statistics computed from learned specific embeddings."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import forward_batch
from .errors import DomainError
from .trajectories import Dataset


@dataclass
class OriginStats:
    mu_specific: np.ndarray  # (K, d_z - d_s)
    counts: np.ndarray  # (K,)

    @property
    def K(self) -> int:
        return len(self.mu_specific)


@dataclass
class AsymmetryReport:
    origin_divergence: float
    origin_divergence_across: float
    global_asymmetry: float
    distance_matrix: np.ndarray
    projection: np.ndarray  # (N, 2)
    projection_origins: np.ndarray  # (N,)
    stats: OriginStats
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "origin_divergence": float(self.origin_divergence),
            "origin_divergence_across_origins": float(self.origin_divergence_across),
            "global_asymmetry": float(self.global_asymmetry),
            "K": int(self.stats.K),
            "distance_matrix": [float(v) for v in self.distance_matrix.ravel()],
            "mu_specific": [[float(v) for v in row] for row in self.stats.mu_specific],
            "counts": [int(c) for c in self.stats.counts],
            "metadata": self.metadata,
        }

    def projection_csv(self) -> str:
        lines = ["x,y,origin"]
        for (x, y), k in zip(self.projection, self.projection_origins):
            lines.append(f"{float(x)!r},{float(y)!r},{int(k)}")
        return "\n".join(lines) + "\n"


def specific_embeddings(params, dataset: Dataset, shared_dim: int, split: str | None = None):
    """z for every trajectory (in dataset order); returns (z, origins)."""
    X, k = dataset.arrays(split)
    out = forward_batch(params, X, k, shared_dim, keep_cache=False)
    return out.z, k


def origin_stats_from(z_specific, origins, K: int | None = None) -> OriginStats:
    z_specific = np.asarray(z_specific, dtype=float)
    origins = np.asarray(origins, dtype=int)
    K = int(origins.max()) + 1 if K is None else K
    mus, counts = [], []
    for kk in range(K):
        m = origins == kk
        if not m.any():
            raise DomainError(f"origin {kk} has no trajectories")
        mus.append(z_specific[m].mean(axis=0))
        counts.append(int(m.sum()))
    return OriginStats(np.stack(mus), np.array(counts))


def origin_means(params, dataset: Dataset, shared_dim: int = 32) -> OriginStats:
    """Per-origin mean of z_specific over all (train and validation) trajectories."""
    z, k = specific_embeddings(params, dataset, shared_dim)
    return origin_stats_from(z[:, shared_dim:], k, dataset.K)


def origin_divergence(stats: OriginStats, mode: str = "component") -> float:
    """Sum over origins of the population variance across each mean vector's components.

    ``mode="across_origins"`` instead sums, over dimensions, the variance of
    the means across origins.
    """
    mu = np.asarray(stats.mu_specific, dtype=float)
    if mode == "component":
        return float(np.sum(np.var(mu, axis=1)))
    if mode == "across_origins":
        return float(np.sum(np.var(mu, axis=0)))
    raise DomainError(f"unknown divergence mode {mode!r}")


def distance_matrix(stats: OriginStats) -> np.ndarray:
    mu = np.asarray(stats.mu_specific, dtype=float)
    diff = mu[:, None, :] - mu[None, :, :]
    M = np.sqrt(np.sum(diff * diff, axis=2))
    M = 0.5 * (M + M.T)
    np.fill_diagonal(M, 0.0)
    return M


def global_asymmetry(stats: OriginStats) -> float:
    """Mean Euclidean distance between origin means over ordered pairs i != j."""
    K = stats.K
    if K < 2:
        raise DomainError("global asymmetry needs at least 2 origins")
    return float(distance_matrix(stats).sum() / (K * (K - 1)))


def project_2d(embeddings) -> np.ndarray:
    """Deterministic PCA projection onto the two leading principal directions."""
    Y = np.asarray(embeddings, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 2 or Y.shape[1] < 2:
        raise DomainError("need at least 2 vectors of dimension >= 2")
    Yc = Y - Y.mean(axis=0)
    if not np.any(Yc):
        raise DomainError("input has rank 0")
    cov = Yc.T @ Yc / len(Y)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(-evals, kind="stable")[:2]
    W = evecs[:, order]
    for j in range(2):
        col = W[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            W[:, j] = -col
    return Yc @ W


def analyze(params, dataset: Dataset, shared_dim: int = 32, metadata: dict | None = None) -> AsymmetryReport:
    z, k = specific_embeddings(params, dataset, shared_dim)
    zp = z[:, shared_dim:]
    stats = origin_stats_from(zp, k, dataset.K)
    return AsymmetryReport(
        origin_divergence=origin_divergence(stats),
        origin_divergence_across=origin_divergence(stats, "across_origins"),
        global_asymmetry=global_asymmetry(stats),
        distance_matrix=distance_matrix(stats),
        projection=project_2d(zp),
        projection_origins=k,
        stats=stats,
        metadata=dict(metadata or {}),
    )


def nearest_centroid_accuracy(params, dataset: Dataset, shared_dim: int = 32) -> float:
    """Classify validation z_specific by the nearest training-set origin centroid."""
    ztr, ktr = specific_embeddings(params, dataset, shared_dim, "train")
    zva, kva = specific_embeddings(params, dataset, shared_dim, "val")
    cents = origin_stats_from(ztr[:, shared_dim:], ktr, dataset.K).mu_specific
    d = np.linalg.norm(zva[:, shared_dim:, None].transpose(0, 2, 1) - cents[None], axis=2)
    return float(np.mean(np.argmin(d, axis=1) == kva))


def shared_dispersion(params, dataset: Dataset, shared_dim: int = 32) -> float:
    """Mean squared distance of z_shared to its mean over the full dataset."""
    z, _ = specific_embeddings(params, dataset, shared_dim)
    zs = z[:, :shared_dim]
    dev = zs - zs.mean(axis=0)
    return float(np.mean(np.sum(dev * dev, axis=1)))
