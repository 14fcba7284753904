"""Dataset container, validation, and randomized fold/cluster partitioning.

Every estimator in the package consumes an immutable :class:`Dataset` and a
:class:`FoldPlan`.  Folds are produced by a seeded shuffle followed by a block
split, so a `(seed, split_id)` pair fully determines the partition.  When
cluster ids are present, entire clusters are shuffled and assigned as units,
which keeps all members of a cluster in the same fold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidK,
    NonBinaryTreatment,
    NonFiniteValue,
    OverlapViolation,
    TooFewUnits,
)

DEFAULT_OVERLAP_DELTA = 0.01


@dataclass(frozen=True)
class Dataset:
    """Outcomes, binary treatment, covariates, and known propensity scores.

    Parameters
    ----------
    y : ndarray of shape (n,)
        Observed outcome.
    d : ndarray of shape (n,)
        Treatment indicator, each entry 0 or 1.
    x : ndarray of shape (n, p)
        Baseline covariates.
    pscore : ndarray of shape (n,)
        Known treatment probability for each unit, interior to (0, 1).
    cluster_id : ndarray of shape (n,), optional
        Integer cluster labels; units sharing a label are sampled together.
    """

    y: np.ndarray
    d: np.ndarray
    x: np.ndarray
    pscore: np.ndarray
    cluster_id: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float))
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "pscore", np.asarray(self.pscore, dtype=float))
        if self.cluster_id is not None:
            object.__setattr__(
                self, "cluster_id", np.asarray(self.cluster_id, dtype=np.int64)
            )
        n = self.y.shape[0]
        for name, arr in (("d", self.d), ("pscore", self.pscore)):
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
        if self.x.shape[0] != n:
            raise ValueError(f"x must have {n} rows, got {self.x.shape[0]}")
        if self.cluster_id is not None and self.cluster_id.shape != (n,):
            raise ValueError("cluster_id must have one entry per observation")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of each observation to one of K folds.

    ``assignment`` maps observation index to a fold label in {0, ..., K-1}.
    Reproducible from ``(seed, split_id)``.
    """

    K: int
    assignment: np.ndarray
    split_id: int = 0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "assignment", np.asarray(self.assignment, dtype=np.int64)
        )

    def fold_indices(self, k: int) -> np.ndarray:
        """Observation indices belonging to fold ``k``."""
        return np.flatnonzero(self.assignment == k)

    def complement_indices(self, k: int) -> np.ndarray:
        """Observation indices outside fold ``k`` (the training set for fold k)."""
        return np.flatnonzero(self.assignment != k)

    def fold_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.K)


def _block_sizes(n_items: int, K: int) -> np.ndarray:
    # larger blocks take the remainder; realized sizes are used downstream
    base, rem = divmod(n_items, K)
    return np.array([base + 1] * rem + [base] * (K - rem), dtype=np.int64)


def make_folds(
    n: int,
    K: int,
    seed: int,
    cluster_id: np.ndarray | None = None,
    split_id: int = 0,
) -> FoldPlan:
    """Randomly partition ``n`` observations into ``K`` folds.

    Observations (or whole clusters, when ``cluster_id`` is given) are
    shuffled with a generator seeded by ``(seed, split_id)`` and then split
    into contiguous blocks, so fold sizes differ by at most one unit (one
    cluster in the clustered case).

    Raises
    ------
    InvalidK
        If ``K < 2``.
    TooFewUnits
        If ``n < 2K``, or fewer than ``2K`` clusters are available.
    """
    if K < 2:
        raise InvalidK(f"need at least 2 folds, got K={K}")
    if n < 2 * K:
        raise TooFewUnits(f"need n >= 2K = {2 * K}, got n={n}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(split_id,)))
    assignment = np.empty(n, dtype=np.int64)
    if cluster_id is None:
        order = rng.permutation(n)
        sizes = _block_sizes(n, K)
        stops = np.cumsum(sizes)
        starts = np.concatenate(([0], stops[:-1]))
        for k, (a, b) in enumerate(zip(starts, stops)):
            assignment[order[a:b]] = k
    else:
        cluster_id = np.asarray(cluster_id)
        clusters = np.unique(cluster_id)
        if clusters.size < 2 * K:
            raise TooFewUnits(
                f"need at least 2K = {2 * K} clusters, got {clusters.size}"
            )
        order = rng.permutation(clusters.size)
        sizes = _block_sizes(clusters.size, K)
        stops = np.cumsum(sizes)
        starts = np.concatenate(([0], stops[:-1]))
        cluster_fold = np.empty(clusters.size, dtype=np.int64)
        for k, (a, b) in enumerate(zip(starts, stops)):
            cluster_fold[order[a:b]] = k
        # map each observation through its cluster's fold
        lookup = {c: f for c, f in zip(clusters, cluster_fold)}
        assignment = np.array([lookup[c] for c in cluster_id], dtype=np.int64)
    return FoldPlan(K=K, assignment=assignment, split_id=split_id, seed=seed)


def validate_dataset(ds: Dataset, delta: float = DEFAULT_OVERLAP_DELTA) -> None:
    """Check the dataset invariants, naming the first offending index.

    Raises
    ------
    NonFiniteValue
        If any column contains NaN or infinity.
    NonBinaryTreatment
        If a treatment indicator is not exactly 0 or 1.
    OverlapViolation
        If a propensity score falls outside ``[delta, 1 - delta]``.
    """
    if not 0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    for name, arr in (("y", ds.y), ("d", ds.d), ("x", ds.x), ("pscore", ds.pscore)):
        bad = ~np.isfinite(arr)
        if bad.any():
            idx = np.argwhere(bad)[0]
            raise NonFiniteValue(f"non-finite value in column '{name}' at index {tuple(idx)}")
    not_binary = (ds.d != 0.0) & (ds.d != 1.0)
    if not_binary.any():
        i = int(np.flatnonzero(not_binary)[0])
        raise NonBinaryTreatment(f"d[{i}] = {ds.d[i]} is not in {{0, 1}}")
    outside = (ds.pscore < delta) | (ds.pscore > 1.0 - delta)
    if outside.any():
        i = int(np.flatnonzero(outside)[0])
        raise OverlapViolation(
            f"pscore[{i}] = {ds.pscore[i]} outside [{delta}, {1.0 - delta}]"
        )
