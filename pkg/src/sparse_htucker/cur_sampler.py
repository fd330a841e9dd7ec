"""Leverage-score CUR sampling on sparse matricizations.

Every matricization is first compacted to its nonzero rows and columns.
Dropping all-zero rows or columns leaves both Gram matrices unchanged, so the
singular vectors (and hence the leverage scores) of the nonzero part are the
same as those of the full, possibly astronomically large, matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .dimension_tree import DimensionTree
from .sparse_tensor import ModeSubsetIndex, SparseTensor, complement

__all__ = [
    "DEFAULT_RANK",
    "LeverageScores",
    "NestingError",
    "NodeSampling",
    "compact_leverage_scores",
    "leverage_scores",
    "nested_sampling",
    "pinv",
    "root_mirror",
    "sample_indices",
    "target_count",
]

DEFAULT_RANK = 5
# Smaller side of the compacted matrix up to which a dense Gram eigensolve is used.
DENSE_GRAM_LIMIT = 128
# Singular values below this fraction of the largest do not count towards the rank
# used for leverage scores; Gram eigenvalues resolve sigma only down to ~sqrt(eps).
LEVERAGE_RANK_RTOL = 1e-6
PINV_RTOL = 1e-12
EIGSH_TOL = 1e-10
EIGSH_MAXITER = 300


class NestingError(RuntimeError):
    """The nesting restriction left no column fibers to sample from."""


@dataclass
class LeverageScores:
    """Sampling distribution over the nonzero rows or columns of a matricization.

    ``tuples[i]`` is the multi-index (over ``modes``) of the i-th candidate and
    ``scores[i]`` its probability.  Indices that are not listed score 0.
    """

    modes: tuple[int, ...]
    tuples: np.ndarray
    scores: np.ndarray
    k: int

    def to_dict(self, dims: Sequence[int]) -> dict[int, float]:
        idx = ModeSubsetIndex.of(self.modes, dims)
        return {idx.encode(t): float(s) for t, s in zip(self.tuples, self.scores)}


def _gram_eig(mat: sp.csr_matrix, k: int, small_rows: bool):
    """Leading eigenpairs of the smaller Gram matrix, descending."""
    s = min(mat.shape)
    if s <= DENSE_GRAM_LIMIT:
        g = (mat @ mat.T) if small_rows else (mat.T @ mat)
        w, v = np.linalg.eigh(g.toarray())
        return w[::-1], v[:, ::-1]
    csr = mat.tocsr()
    csc_t = csr.T.tocsr()
    if small_rows:
        matvec = lambda x: csr @ (csc_t @ x)  # noqa: E731
    else:
        matvec = lambda x: csc_t @ (csr @ x)  # noqa: E731
    op = LinearOperator((s, s), matvec=matvec, dtype=np.float64)
    kk = min(k, s - 1)
    v0 = np.full(s, 1.0 / math.sqrt(s))
    try:
        w, v = eigsh(op, k=kk, which="LA", v0=v0, tol=EIGSH_TOL, maxiter=EIGSH_MAXITER)
    except ArpackNoConvergence as exc:
        if exc.eigenvalues is None or len(exc.eigenvalues) == 0:
            raise
        w, v = exc.eigenvalues, exc.eigenvectors
    order = np.argsort(w)[::-1]
    return w[order], v[:, order]


def compact_leverage_scores(mat: sp.spmatrix, k: int = DEFAULT_RANK):
    """Row and column leverage scores of a matrix with no zero rows/columns.

    Returns ``(row_scores, col_scores, rank)`` where ``rank`` is the number of
    singular vectors used, ``min(k, numerical rank)``.
    """
    mat = sp.csr_matrix(mat, dtype=np.float64)
    m, n = mat.shape
    if mat.nnz == 0 or m == 0 or n == 0:
        raise ValueError("leverage scores of an empty matricization")
    small_rows = m <= n
    w, v = _gram_eig(mat, k, small_rows)
    sigma = np.sqrt(np.clip(w, 0.0, None))
    rank = int(np.sum(sigma > LEVERAGE_RANK_RTOL * sigma[0]))
    kk = max(1, min(k, rank))
    small = v[:, :kk]
    other = (mat.T @ small) if small_rows else (mat @ small)
    other = other / sigma[:kk]
    s_small = np.sum(small**2, axis=1)
    s_other = np.sum(np.asarray(other) ** 2, axis=1)
    s_small /= s_small.sum()
    s_other /= s_other.sum()
    if small_rows:
        return s_small, s_other, kk
    return s_other, s_small, kk


def leverage_scores(
    tensor: SparseTensor, modes: Sequence[int], side: str = "columns", k: int = DEFAULT_RANK
) -> LeverageScores:
    """Leverage scores of the rows or columns of the matricization with rows
    indexed by ``modes``."""
    if side not in ("rows", "columns"):
        raise ValueError(f"side must be 'rows' or 'columns', got {side!r}")
    if tensor.nnz == 0:
        raise ValueError("matricization has rank 0 (empty tensor)")
    t = tuple(sorted(modes))
    mat, rows, cols = tensor.compact_matricization(t)
    rs, cs, kk = compact_leverage_scores(mat, k)
    if side == "rows":
        return LeverageScores(t, rows, rs, kk)
    return LeverageScores(complement(t, tensor.order), cols, cs, kk)


def target_count(k: int, epsilon: float) -> int:
    """Number of fibers to draw, ``ceil(k ln k / epsilon**2)`` (at least 1)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return max(1, math.ceil(k * math.log(k) / epsilon**2))


def sample_indices(
    scores, k: int, epsilon: float, cap: int | None, rng: np.random.Generator
) -> np.ndarray:
    """Draw candidate positions without replacement, proportionally to ``scores``.

    The count is :func:`target_count` clamped to ``cap`` and to the number of
    candidates with positive score.  Returned positions are sorted.
    """
    p = np.asarray(scores.scores if isinstance(scores, LeverageScores) else scores, dtype=float)
    support = int(np.count_nonzero(p > 0))
    if support == 0:
        raise ValueError("no candidate with positive score")
    c = target_count(k, epsilon)
    if cap is not None:
        c = min(c, cap)
    c = max(1, min(c, support))
    if c == support:
        return np.flatnonzero(p > 0)
    p = np.where(p > 0, p, 0.0)
    return np.sort(rng.choice(len(p), size=c, replace=False, p=p / p.sum()))


def pinv(a: np.ndarray, rtol: float = PINV_RTOL, rank: int | None = None) -> np.ndarray:
    """Pseudo-inverse, zeroing singular values below ``rtol * s_max``.

    With ``rank`` set, only the leading ``rank`` singular values are inverted.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        return np.zeros(a.shape[::-1])
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s[0] == 0:
        return np.zeros(a.shape[::-1])
    keep = s > rtol * s[0]
    if rank is not None:
        keep[rank:] = False
    inv = np.where(keep, 1.0 / np.where(s > 0, s, 1.0), 0.0)
    return (vt.T * inv) @ u.T


@dataclass
class NodeSampling:
    """Sampled skeleton of the matricization at one tree node.

    ``rows`` holds the sampled row multi-indices (over ``modes``), ``cols``
    the sampled column multi-indices (over ``col_modes``, the complement of
    ``modes``) and ``link`` the ``len(cols) x len(rows)`` matrix joining them.
    """

    node: int
    modes: tuple[int, ...]
    col_modes: tuple[int, ...]
    rows: np.ndarray
    cols: np.ndarray
    link: np.ndarray = field(repr=False)

    @property
    def rank(self) -> int:
        return len(self.cols)

    def row_indices(self, dims: Sequence[int]) -> list[int]:
        idx = ModeSubsetIndex.of(self.modes, dims)
        return [idx.encode(r) for r in self.rows]

    def col_indices(self, dims: Sequence[int]) -> list[int]:
        idx = ModeSubsetIndex.of(self.col_modes, dims)
        return [idx.encode(c) for c in self.cols]

    def same_as(self, other: "NodeSampling") -> bool:
        return (
            self.node == other.node
            and self.modes == other.modes
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.link, other.link)
        )


def nested_sampling(
    tensor: SparseTensor,
    modes: Sequence[int],
    parent=None,
    epsilon: float = 0.6,
    rng: np.random.Generator | None = None,
    *,
    k: int = DEFAULT_RANK,
    node: int = -1,
    exhaustive: bool = False,
) -> tuple[NodeSampling, SparseTensor]:
    """CUR skeleton of the matricization over ``modes`` under the nesting rule.

    Parameters
    ----------
    tensor : SparseTensor
        Tensor already carrying every ancestor restriction.
    modes : sequence of int
        Mode subset of the node being sampled.
    parent : tuple (parent_modes, parent_cols) or None
        Sampled columns of the parent node.  Only column fibers extending one
        of them are admissible.  ``None`` marks a child of the root, for which
        every column is admissible.
    exhaustive : bool
        Take every nonzero row and column instead of sampling (testing aid).

    Returns
    -------
    sampling : NodeSampling
    restricted : SparseTensor
        ``tensor`` restricted to the sampled columns, for the recursion below
        this node.
    """
    t = tuple(sorted(modes))
    tc = complement(t, tensor.order)
    if parent is not None:
        pmodes, pcols = parent
        tensor = tensor.restrict_tuples(pmodes, pcols)
    if tensor.nnz == 0:
        raise NestingError(
            f"nesting restriction eliminated all fibers at node {node} (modes {list(t)}); "
            "epsilon may be too large for this tree"
        )
    mat, rows, cols = tensor.compact_matricization(t)
    if exhaustive:
        pi = np.arange(mat.shape[0])
        qi = np.arange(mat.shape[1])
    else:
        if rng is None:
            rng = np.random.default_rng(42)
        rs, cs, _ = compact_leverage_scores(mat, k)
        qi = sample_indices(cs, k, epsilon, None, rng)
        pi = sample_indices(rs, k, epsilon, None, rng)
    inter = mat[pi][:, qi].toarray()
    # rank-k inverse keeps C M R stable on ill-conditioned sparse intersections
    link = pinv(inter, rank=None if exhaustive else k)
    sampling = NodeSampling(node, t, tc, rows[pi], cols[qi], link)
    return sampling, tensor.restrict_tuples(t, cols[qi])


def root_mirror(left: NodeSampling, tree: DimensionTree) -> NodeSampling:
    """Sampling of the root's right child from that of its left child.

    The two root-level matricizations are transposes of each other, so rows
    and columns swap and the link matrix is transposed.
    """
    root = tree[tree.root]
    if root.is_leaf or left.node != root.children[0]:
        raise ValueError(f"node {left.node} is not the left child of the root")
    return NodeSampling(
        root.children[1],
        left.col_modes,
        left.modes,
        left.cols.copy(),
        left.rows.copy(),
        np.ascontiguousarray(left.link.T),
    )
