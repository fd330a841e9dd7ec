"""Sparse H-Tucker factorization.

Phase 1 walks the dimension tree top-down and samples a CUR skeleton for
every node but the root, threading the nesting restriction through
progressively restricted tensors.  Phase 2 assembles every node's output
factor independently from the input tensor and that node's sampling data.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cur_sampler import DEFAULT_RANK, NodeSampling, nested_sampling, root_mirror
from .dimension_tree import DimensionTree, balanced_tree, validate
from .model import HTuckerModel
from .sparse_tensor import SparseTensor, complement, match_rows

__all__ = [
    "FactorizationPlan",
    "assemble",
    "check_nesting",
    "factorize",
    "parameterize",
    "transfer_tensor",
]

log = logging.getLogger(__name__)


@dataclass
class FactorizationPlan:
    """Phase 1 output: one :class:`NodeSampling` per non-root node."""

    tree: DimensionTree
    dims: tuple[int, ...]
    samplings: dict[int, NodeSampling]
    epsilon: float
    seed: int
    k: int = DEFAULT_RANK
    exhaustive: bool = False


def _node_rng(seed: int, nid: int) -> np.random.Generator:
    # per-node streams keep results independent of traversal order
    return np.random.default_rng([seed, nid])


def parameterize(
    tensor: SparseTensor,
    tree: DimensionTree,
    epsilon: float = 0.6,
    seed: int = 42,
    *,
    k: int = DEFAULT_RANK,
    exhaustive: bool = False,
) -> FactorizationPlan:
    """Phase 1: sample ``(P_t, Q_t, M_t)`` for every non-root node."""
    problems = validate(tree, tensor.order)
    if problems:
        raise ValueError(f"tree does not fit a {tensor.order}-order tensor: " + "; ".join(problems))
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if tensor.nnz == 0:
        raise ValueError("cannot factorize an empty tensor")
    samplings: dict[int, NodeSampling] = {}

    def sample(a: SparseTensor, child: int):
        return nested_sampling(
            a,
            tree[child].modes,
            None,
            epsilon,
            _node_rng(seed, child),
            k=k,
            node=child,
            exhaustive=exhaustive,
        )

    def recurse(a: SparseTensor, nid: int) -> None:
        node = tree[nid]
        t1, t2 = node.children
        if nid == tree.root:
            s1, a1 = sample(a, t1)
            s2 = root_mirror(s1, tree)
            a2 = a.restrict_tuples(s2.modes, s2.cols)
        else:
            # ``a`` already carries this node's restriction to Q_t, so every
            # nonzero column left in it is admissible for both children
            s1, a1 = sample(a, t1)
            s2, a2 = sample(a, t2)
        samplings[t1], samplings[t2] = s1, s2
        log.debug("node %d: |Q|=%d,%d nnz=%d,%d", nid, s1.rank, s2.rank, a1.nnz, a2.nnz)
        if not tree[t1].is_leaf:
            recurse(a1, t1)
        if not tree[t2].is_leaf:
            recurse(a2, t2)

    recurse(tensor, tree.root)
    return FactorizationPlan(tree, tensor.dims, samplings, epsilon, seed, k, exhaustive)


def transfer_tensor(
    tensor: SparseTensor,
    modes: tuple[int, ...],
    cols: np.ndarray | None,
    left: NodeSampling,
    right: NodeSampling,
) -> np.ndarray:
    """Transfer tensor of a node from its children's skeletons.

    ``B[i, j, l] = sum_{p, q} M_left[j, p] * A[(p, q), q_i] * M_right[l, q]``
    with ``p`` over the left child's sampled rows, ``q`` over the right
    child's and ``q_i`` over the node's own sampled columns (a single column,
    the whole vectorized tensor, at the root when ``cols`` is None).
    """
    dims = tensor.dims
    tc = complement(modes, tensor.order)
    if cols is None:
        sub = tensor
        i_pos = np.zeros(sub.nnz, dtype=np.int64)
        ki = 1
    else:
        sub = tensor.restrict_tuples(modes, cols)
        i_pos = match_rows(sub.sub_tuples(tc), cols, [dims[m - 1] for m in tc])
        ki = len(cols)
    p_pos = match_rows(sub.sub_tuples(left.modes), left.rows, [dims[m - 1] for m in left.modes])
    q_pos = match_rows(sub.sub_tuples(right.modes), right.rows, [dims[m - 1] for m in right.modes])
    hit = (p_pos >= 0) & (q_pos >= 0)
    cube = np.zeros((ki, len(left.rows), len(right.rows)))
    cube[i_pos[hit], p_pos[hit], q_pos[hit]] = sub.vals[hit]
    return np.einsum("jp,ipq,lq->ijl", left.link, cube, right.link, optimize=True)


def _assemble_node(tensor: SparseTensor, plan: FactorizationPlan, nid: int):
    tree = plan.tree
    node = tree[nid]
    if node.is_leaf:
        s = plan.samplings[nid]
        return tensor.column_fibers(node.modes, s.cols)
    s1, s2 = (plan.samplings[c] for c in node.children)
    if nid == tree.root:
        return transfer_tensor(tensor, node.modes, None, s1, s2)[0]
    return transfer_tensor(tensor, node.modes, plan.samplings[nid].cols, s1, s2)


def assemble(tensor: SparseTensor, plan: FactorizationPlan, workers: int = 1) -> HTuckerModel:
    """Phase 2: build leaf factors and transfer tensors, one job per node.

    Every job reads only the input tensor and the plan, so the result does
    not depend on ``workers``.
    """
    tree = plan.tree
    ids = tree.preorder()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(zip(ids, pool.map(lambda i: _assemble_node(tensor, plan, i), ids)))
    else:
        results = {i: _assemble_node(tensor, plan, i) for i in ids}
    leaves = {i: results[i] for i in tree.leaves()}
    transfers = {i: results[i] for i in tree.interior() if i != tree.root}
    return HTuckerModel(tree, tensor.dims, leaves, transfers, results[tree.root])


def factorize(
    tensor: SparseTensor,
    tree: DimensionTree | None = None,
    epsilon: float = 0.6,
    seed: int = 42,
    *,
    workers: int = 1,
    k: int = DEFAULT_RANK,
    exhaustive: bool = False,
) -> HTuckerModel:
    """Factorize ``tensor`` over ``tree`` (balanced by default)."""
    if tree is None:
        tree = balanced_tree(tensor.order)
    plan = parameterize(tensor, tree, epsilon, seed, k=k, exhaustive=exhaustive)
    return assemble(tensor, plan, workers=workers)


def check_nesting(plan: FactorizationPlan) -> list[str]:
    """Violations of the nesting rule ``Q_t ⊆ I_sibling x Q_parent``.

    Children of the root are unconstrained.  An empty list means every
    sampled column extends one of its parent's sampled columns.
    """
    tree, dims = plan.tree, plan.dims
    problems = []
    for nid, s in plan.samplings.items():
        par = tree.parent(nid)
        if par is None:
            problems.append(f"root {nid} carries a sampling")
            continue
        sib = tree.sibling(nid)
        if s.col_modes != complement(tree[nid].modes, len(dims)):
            problems.append(f"node {nid}: column modes {s.col_modes} are not the complement")
            continue
        sib_pos = [s.col_modes.index(m) for m in tree[sib].modes]
        for r, c in enumerate(s.cols):
            for p, m in zip(sib_pos, tree[sib].modes):
                if not 1 <= c[p] <= dims[m - 1]:
                    problems.append(f"node {nid}: column {r} index {c[p]} outside mode {m}")
        if par == tree.root:
            continue
        pmodes = plan.samplings[par].col_modes
        proj = s.cols[:, [s.col_modes.index(m) for m in pmodes]]
        pos = match_rows(proj, plan.samplings[par].cols, [dims[m - 1] for m in pmodes])
        for r in np.flatnonzero(pos < 0):
            problems.append(
                f"node {nid}: sampled column {tuple(int(x) for x in s.cols[r])} "
                f"does not extend a column of parent {par}"
            )
    return problems
