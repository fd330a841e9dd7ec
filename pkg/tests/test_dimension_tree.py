import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_htucker import SparseTensor
from sparse_htucker.dimension_tree import (
    DimensionTree,
    TreeFormatError,
    TreeNode,
    balanced_tree,
    data_driven_tree,
    jaccard_distances,
    mode_incidence,
    read_tree,
    validate,
    write_tree,
)


def test_balanced_four_modes():
    tree = balanced_tree(4)
    assert tree.to_nested() == ((1, 2), (3, 4))
    root = tree[tree.root]
    assert root.modes == (1, 2, 3, 4)
    assert [tree[c].modes for c in root.children] == [(1, 2), (3, 4)]
    assert sorted(tree[i].modes for i in tree.leaves()) == [(1,), (2,), (3,), (4,)]


def test_balanced_two_modes():
    tree = balanced_tree(2)
    assert tree.to_nested() == (1, 2) and len(tree) == 3


def test_balanced_five_modes():
    tree = balanced_tree(5)
    a, b = tree[tree.root].children
    assert tree[a].modes == (1, 2, 3) and tree[b].modes == (4, 5)
    assert len(tree) == 9


def test_balanced_rejects_order_one():
    with pytest.raises(ValueError):
        balanced_tree(1)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40))
def test_balanced_tree_is_valid(d):
    tree = balanced_tree(d)
    assert validate(tree, d) == []
    assert len(tree.leaves()) == d and len(tree.interior()) == d - 1
    assert tree.depth() == int(np.ceil(np.log2(d)))


def _all_trees(modes):
    """Every binary dimension tree over ``modes`` (small inputs only)."""
    if len(modes) == 1:
        yield modes[0]
        return
    first, rest = modes[0], modes[1:]
    n = len(rest)
    for mask in range(0, 2**n - 1):
        left = (first,) + tuple(m for j, m in enumerate(rest) if mask >> j & 1)
        right = tuple(m for j, m in enumerate(rest) if not mask >> j & 1)
        for a in _all_trees(left):
            for b in _all_trees(right):
                yield (a, b)


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_every_binary_partition_tree_validates(d):
    for nested in _all_trees(tuple(range(1, d + 1))):
        tree = DimensionTree.from_nested(nested)
        assert validate(tree, d) == []
        for nid in tree.interior():
            a, b = (set(tree[c].modes) for c in tree[nid].children)
            assert not a & b and a | b == set(tree[nid].modes)


def test_validate_overlapping_children():
    nodes = [
        TreeNode(0, (1, 2, 3), (1, 2)),
        TreeNode(1, (1, 2), (3, 4)),
        TreeNode(2, (2, 3), (5, 6)),
        TreeNode(3, (1,), None),
        TreeNode(4, (2,), None),
        TreeNode(5, (2,), None),
        TreeNode(6, (3,), None),
    ]
    problems = validate(DimensionTree(nodes), 3)
    assert any(p.startswith("children not disjoint at node 0") for p in problems)


def test_validate_root_missing_mode():
    tree = DimensionTree.from_nested((1, 2))
    problems = validate(tree, 3)
    assert any(p.startswith("root != {1..3}") for p in problems)


def test_validate_non_singleton_leaf():
    nodes = [TreeNode(0, (1, 2, 3), (1, 2)), TreeNode(1, (1, 2), None), TreeNode(2, (3,), None)]
    problems = validate(DimensionTree(nodes), 3)
    assert any("not a singleton" in p for p in problems)


def test_parent_sibling_navigation():
    tree = balanced_tree(4)
    a, b = tree[tree.root].children
    assert tree.parent(a) == tree.root and tree.sibling(a) == b
    assert tree.parent(tree.root) is None and tree.sibling(tree.root) is None
    assert tree.preorder()[0] == tree.root and tree.postorder()[-1] == tree.root


def test_jaccard_toy():
    # modes 1 and 2 are non-null on the same four nonzeros, mode 3 on two others
    t = SparseTensor.from_coords(
        [3, 3, 3],
        {(2, 2, 1): 1, (3, 3, 1): 1, (2, 2, 2): 1, (1, 1, 3): 1, (3, 2, 1): 1},
        null_index=1,
    )
    inc = mode_incidence(t)
    dist = jaccard_distances(inc)
    assert dist[0, 1] == 0.0
    assert dist[0, 2] == pytest.approx(0.8, abs=1e-15)
    assert dist[1, 2] == pytest.approx(0.8, abs=1e-15)
    tree = data_driven_tree(t)
    assert tree.to_nested() == ((1, 2), 3)


def test_data_driven_two_modes():
    t = SparseTensor.from_coords([2, 2], {(1, 2): 1})
    assert data_driven_tree(t).to_nested() == (1, 2)


def test_data_driven_identical_incidence_falls_back():
    t = SparseTensor.from_coords([3, 3, 3, 3], {(2, 2, 2, 2): 1, (3, 3, 3, 3): 2}, null_index=1)
    with pytest.warns(RuntimeWarning, match="balanced"):
        tree = data_driven_tree(t)
    assert tree == balanced_tree(4)


def test_data_driven_linkage_choices():
    rng = np.random.default_rng(4)
    subs = rng.integers(1, 4, size=(60, 5))
    t = SparseTensor([3] * 5, subs, np.ones(60), null_index=1)
    for linkage in ("complete", "average"):
        tree = data_driven_tree(t, linkage=linkage)
        assert validate(tree, 5) == []
    with pytest.raises(ValueError):
        data_driven_tree(t, linkage="single")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 7))
def test_data_driven_tree_is_valid_and_deterministic(seed, d):
    rng = np.random.default_rng(seed)
    subs = rng.integers(1, 3, size=(25, d))
    t = SparseTensor([2] * d, subs, np.ones(25), null_index=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        tree = data_driven_tree(t)
        again = data_driven_tree(t)
    assert validate(tree, d) == []
    assert tree == again


def test_tree_file_roundtrip(tmp_path):
    tree = balanced_tree(4)
    path = tmp_path / "t.tree"
    write_tree(tree, path)
    assert path.read_text().splitlines()[0] == "0 : [1 2 3 4] : 1 4"
    assert read_tree(path) == tree


def test_tree_file_errors(tmp_path):
    path = tmp_path / "bad.tree"
    path.write_text("0 : [1 2] 1 2\n")
    with pytest.raises(TreeFormatError, match=":1"):
        read_tree(path)
    path.write_text("0 : [1 2] : 1 2\n1 : [1] : leaf\n2 : [2] : leaf\n3 : [3] : leaf\n")
    with pytest.raises(TreeFormatError, match="one root"):
        read_tree(path)
