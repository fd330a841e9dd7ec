"""Binary dimension trees over mode subsets.

Node ids are assigned in preorder starting from 0 at the root.  Child order
matters: the left child fixes the second axis of a transfer tensor and the
right child the third.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .sparse_tensor import SparseTensor

__all__ = [
    "DimensionTree",
    "TreeFormatError",
    "TreeNode",
    "balanced_tree",
    "data_driven_tree",
    "jaccard_distances",
    "mode_incidence",
    "read_tree",
    "validate",
    "write_tree",
]


class TreeFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TreeNode:
    id: int
    modes: tuple[int, ...]
    children: tuple[int, int] | None = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None


class DimensionTree:
    """A binary tree whose nodes hold subsets of the modes ``1..d``.

    Build one with :func:`balanced_tree`, :func:`data_driven_tree` or
    :meth:`from_nested`; arbitrary trees can be constructed directly from
    :class:`TreeNode` objects and checked with :func:`validate`.
    """

    def __init__(self, nodes: Iterable[TreeNode], root: int = 0):
        self.nodes: dict[int, TreeNode] = {n.id: n for n in nodes}
        self.root = root
        self._parent: dict[int, int] = {}
        for n in self.nodes.values():
            if n.children:
                for c in n.children:
                    self._parent[c] = n.id

    @classmethod
    def from_nested(cls, nested) -> "DimensionTree":
        """Build from nested pairs of ints, e.g. ``((1, 2), (3, 4))``."""
        nodes: list[TreeNode] = []

        def visit(s) -> tuple[int, tuple[int, ...]]:
            nid = len(nodes)
            nodes.append(None)  # placeholder keeps preorder ids
            if isinstance(s, (int, np.integer)):
                nodes[nid] = TreeNode(nid, (int(s),))
                return nid, (int(s),)
            if len(s) != 2:
                raise ValueError(f"tree nodes must be binary, got {s!r}")
            left, lm = visit(s[0])
            right, rm = visit(s[1])
            modes = tuple(sorted(lm + rm))
            nodes[nid] = TreeNode(nid, modes, (left, right))
            return nid, modes

        visit(nested)
        return cls(nodes, root=0)

    def to_nested(self, nid: int | None = None):
        n = self.nodes[self.root if nid is None else nid]
        if n.is_leaf:
            return n.modes[0]
        return (self.to_nested(n.children[0]), self.to_nested(n.children[1]))

    @property
    def order(self) -> int:
        return len(self.nodes[self.root].modes)

    def __getitem__(self, nid: int) -> TreeNode:
        return self.nodes[nid]

    def __len__(self) -> int:
        return len(self.nodes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DimensionTree):
            return NotImplemented
        return self.root == other.root and self.nodes == other.nodes

    __hash__ = None

    def __repr__(self) -> str:
        return f"DimensionTree({self.to_nested()!r})"

    def parent(self, nid: int) -> int | None:
        return self._parent.get(nid)

    def sibling(self, nid: int) -> int | None:
        p = self.parent(nid)
        if p is None:
            return None
        a, b = self.nodes[p].children
        return b if a == nid else a

    def leaves(self) -> list[int]:
        return [i for i in self.preorder() if self.nodes[i].is_leaf]

    def interior(self) -> list[int]:
        return [i for i in self.preorder() if not self.nodes[i].is_leaf]

    def preorder(self) -> list[int]:
        out, stack = [], [self.root]
        while stack:
            i = stack.pop()
            out.append(i)
            ch = self.nodes[i].children
            if ch:
                stack.extend(reversed(ch))
        return out

    def postorder(self) -> list[int]:
        out = []

        def walk(i):
            ch = self.nodes[i].children
            if ch:
                walk(ch[0])
                walk(ch[1])
            out.append(i)

        walk(self.root)
        return out

    def depth(self) -> int:
        def walk(i):
            ch = self.nodes[i].children
            return 0 if not ch else 1 + max(walk(ch[0]), walk(ch[1]))

        return walk(self.root)

    def leaf_of_mode(self, mode: int) -> int:
        for i in self.leaves():
            if self.nodes[i].modes == (mode,):
                return i
        raise KeyError(mode)


def balanced_tree(d: int) -> DimensionTree:
    """Recursive halving of ``1..d``; the left child takes the first
    ``ceil(k/2)`` modes."""
    if d < 2:
        raise ValueError(f"a dimension tree needs at least 2 modes, got d={d}")

    def split(modes: tuple[int, ...]):
        if len(modes) == 1:
            return modes[0]
        h = math.ceil(len(modes) / 2)
        return (split(modes[:h]), split(modes[h:]))

    return DimensionTree.from_nested(split(tuple(range(1, d + 1))))


def validate(tree: DimensionTree, d: int) -> list[str]:
    """All structural violations of ``tree`` as a dimension tree over ``1..d``.

    An empty list means the tree is valid.
    """
    problems: list[str] = []
    if tree.root not in tree.nodes:
        return [f"root id {tree.root} not present"]
    root = tree.nodes[tree.root]
    if set(root.modes) != set(range(1, d + 1)) or len(root.modes) != d:
        problems.append(f"root != {{1..{d}}}: root holds {list(root.modes)}")
    seen: set[int] = set()
    n_leaves = n_interior = 0
    stack = [tree.root]
    while stack:
        i = stack.pop()
        if i in seen:
            problems.append(f"node {i} reachable more than once")
            continue
        seen.add(i)
        node = tree.nodes[i]
        if node.children is None:
            n_leaves += 1
            if len(node.modes) != 1:
                problems.append(f"leaf {i} is not a singleton: {list(node.modes)}")
            continue
        n_interior += 1
        if len(node.children) != 2:
            problems.append(f"node {i} does not have exactly two children")
            continue
        missing = [c for c in node.children if c not in tree.nodes]
        if missing:
            problems.append(f"node {i} references missing children {missing}")
            continue
        a, b = (set(tree.nodes[c].modes) for c in node.children)
        if a & b:
            problems.append(f"children not disjoint at node {i}: share {sorted(a & b)}")
        if a | b != set(node.modes):
            problems.append(
                f"children of node {i} do not cover its modes: "
                f"{sorted(a | b)} != {list(node.modes)}"
            )
        stack.extend(node.children)
    unreachable = set(tree.nodes) - seen
    if unreachable:
        problems.append(f"unreachable nodes {sorted(unreachable)}")
    if n_leaves != d:
        problems.append(f"expected {d} leaves, found {n_leaves}")
    if n_interior != d - 1:
        problems.append(f"expected {d - 1} interior nodes, found {n_interior}")
    return problems


# --- data-driven construction ---------------------------------------------


def mode_incidence(tensor: SparseTensor, null_index: int | None = None) -> np.ndarray:
    """Boolean ``nnz x d`` matrix marking non-null positions of each nonzero.

    ``null_index`` defaults to the tensor's own null element; with no null
    element every position counts.
    """
    if null_index is None:
        null_index = tensor.null_index
    if null_index is None:
        return np.ones(tensor.subs.shape, dtype=bool)
    return tensor.subs != null_index


def jaccard_distances(incidence: np.ndarray) -> np.ndarray:
    """Pairwise Jaccard distances between the columns of a boolean matrix.

    Two all-false columns are at distance 0.
    """
    x = np.asarray(incidence, dtype=np.float64)
    inter = x.T @ x
    counts = np.diag(inter)
    union = counts[:, None] + counts[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        dist = np.where(union > 0, 1.0 - inter / np.where(union > 0, union, 1), 0.0)
    np.fill_diagonal(dist, 0.0)
    return dist


def data_driven_tree(
    tensor: SparseTensor, linkage: str = "complete", null_index: int | None = None
) -> DimensionTree:
    """Agglomerative clustering of modes by the Jaccard distance of their
    incidence columns.

    Ties between equally distant cluster pairs go to the lexicographically
    smallest ``(sorted modes of a, sorted modes of b)`` pair; within a merge
    the cluster holding the smallest mode becomes the left child.
    """
    if linkage not in ("complete", "average"):
        raise ValueError(f"unknown linkage {linkage!r}")
    if tensor.nnz < 1:
        raise ValueError("data-driven tree needs at least one nonzero")
    d = tensor.order
    if d == 2:
        return balanced_tree(2)
    inc = mode_incidence(tensor, null_index)
    if all(np.array_equal(inc[:, 0], inc[:, mu]) for mu in range(1, d)):
        warnings.warn(
            "all modes have identical incidence; falling back to a balanced tree",
            RuntimeWarning,
            stacklevel=2,
        )
        return balanced_tree(d)
    dist = jaccard_distances(inc)

    clusters: dict[tuple[int, ...], object] = {(m,): m for m in range(1, d + 1)}

    def link(a: tuple[int, ...], b: tuple[int, ...]) -> float:
        block = dist[np.ix_([m - 1 for m in a], [m - 1 for m in b])]
        return float(block.max() if linkage == "complete" else block.mean())

    while len(clusters) > 1:
        keys = sorted(clusters)
        best = None
        for i, a in enumerate(keys):
            for b in keys[i + 1 :]:
                cand = (link(a, b), a, b)
                # exact float ties fall through to the tuple comparison
                if best is None or cand < best:
                    best = cand
        _, a, b = best
        left, right = (a, b) if a[0] < b[0] else (b, a)
        clusters[tuple(sorted(left + right))] = (clusters.pop(left), clusters.pop(right))
    (nested,) = clusters.values()
    return DimensionTree.from_nested(nested)


# --- text format -----------------------------------------------------------


def write_tree(tree: DimensionTree, path) -> None:
    """One line per node: ``id : [modes] : left right`` or ``id : [modes] : leaf``."""
    lines = []
    for i in tree.preorder():
        n = tree.nodes[i]
        modes = "[" + " ".join(str(m) for m in n.modes) + "]"
        tail = "leaf" if n.is_leaf else f"{n.children[0]} {n.children[1]}"
        lines.append(f"{i} : {modes} : {tail}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_tree(path) -> DimensionTree:
    nodes = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(":")]
        if len(parts) != 3:
            raise TreeFormatError(f"{path}:{lineno}: expected 'id : [modes] : children|leaf'")
        try:
            nid = int(parts[0])
            modes = tuple(int(x) for x in parts[1].strip("[]").replace(",", " ").split())
            if parts[2] == "leaf":
                children = None
            else:
                c = [int(x) for x in parts[2].split()]
                if len(c) != 2:
                    raise ValueError("interior node needs two child ids")
                children = (c[0], c[1])
        except ValueError as exc:
            raise TreeFormatError(f"{path}:{lineno}: {exc}") from None
        nodes.append(TreeNode(nid, tuple(sorted(modes)), children))
    if not nodes:
        raise TreeFormatError(f"{path}: no nodes")
    ids = {n.id for n in nodes}
    children = {c for n in nodes if n.children for c in n.children}
    roots = ids - children
    if len(roots) != 1:
        raise TreeFormatError(f"{path}: expected exactly one root, found {sorted(roots)}")
    return DimensionTree(nodes, root=roots.pop())
