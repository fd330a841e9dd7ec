"""Shared oracles and generators for the test suite."""

from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np
import pytest

from sparse_htucker import DimensionTree, SparseTensor
from sparse_htucker.factorizer import check_nesting

FIXTURES = Path(__file__).parent / "fixtures"


def dense_matricization(dense: np.ndarray, modes) -> np.ndarray:
    """Rows over ``modes``, columns over the rest, both colexicographic."""
    t = sorted(modes)
    tc = [m for m in range(1, dense.ndim + 1) if m not in t]
    perm = [m - 1 for m in t + tc]
    nr = int(np.prod([dense.shape[m - 1] for m in t]))
    return np.transpose(dense, perm).reshape(nr, -1, order="F")


def colex(index, sizes) -> int:
    """1-based colexicographic linear index, written out as a plain sum."""
    lin, stride = 0, 1
    for i, n in zip(index, sizes):
        lin += (i - 1) * stride
        stride *= n
    return lin + 1


def planted_ht_dense(tree: DimensionTree, dims, ranks, rng) -> np.ndarray:
    """Dense tensor of an exact hierarchical low-rank model.

    Built with plain ``einsum`` calls, independently of the library's
    reconstruction code.  ``ranks[nid]`` gives the rank of each non-root node.
    """

    def build(nid):
        node = tree[nid]
        k = 1 if nid == tree.root else ranks[nid]
        if node.is_leaf:
            (m,) = node.modes
            return {m: 0}, rng.standard_normal((dims[m - 1], k))
        a, b = node.children
        axes_a, fa = build(a)
        axes_b, fb = build(b)
        core = rng.standard_normal((ranks[a], ranks[b], k))
        na, nb = fa.ndim - 1, fb.ndim - 1
        la = "abcdefghij"[:na]
        lb = "klmnopqrst"[:nb]
        out = np.einsum(f"{la}x,{lb}y,xyz->{la}{lb}z", fa, fb, core)
        modes = sorted(axes_a) + sorted(axes_b)
        order = np.argsort(modes)
        out = np.transpose(out, list(order) + [na + nb])
        return {m: i for i, m in enumerate(sorted(modes))}, out

    _, arr = build(tree.root)
    return arr[..., 0]


def random_sparse(rng, dims, density=0.3, integer=True) -> SparseTensor:
    cells = list(itertools.product(*[range(1, n + 1) for n in dims]))
    keep = rng.random(len(cells)) < density
    if not keep.any():
        keep[0] = True
    subs = np.array(cells)[keep]
    if integer:
        vals = rng.integers(1, 6, size=len(subs)).astype(float)
    else:
        vals = rng.standard_normal(len(subs))
    return SparseTensor(dims, subs, vals)


def assert_nested(plan) -> None:
    problems = check_nesting(plan)
    assert problems == [], problems


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def dense_transfer(dense: np.ndarray, plan, nid: int) -> np.ndarray:
    """Transfer tensor of ``nid`` by explicit loops over the sampled indices."""
    tree = plan.tree
    t1, t2 = tree[nid].children
    s1, s2 = plan.samplings[t1], plan.samplings[t2]
    if nid == tree.root:
        cols, col_modes = [()], ()
    else:
        cols, col_modes = [tuple(c) for c in plan.samplings[nid].cols.tolist()], plan.samplings[nid].col_modes
    out = np.zeros((len(cols), len(s1.cols), len(s2.cols)))
    d = dense.ndim
    for i, qi in enumerate(cols):
        for j in range(len(s1.cols)):
            for l in range(len(s2.cols)):
                total = 0.0
                for p, prow in enumerate(s1.rows.tolist()):
                    for q, qrow in enumerate(s2.rows.tolist()):
                        index = [0] * d
                        for m, v in zip(s1.modes, prow):
                            index[m - 1] = v
                        for m, v in zip(s2.modes, qrow):
                            index[m - 1] = v
                        for m, v in zip(col_modes, qi):
                            index[m - 1] = v
                        total += s1.link[j, p] * dense[tuple(x - 1 for x in index)] * s2.link[l, q]
                out[i, j, l] = total
    return out


# --- acceptance summary ----------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
