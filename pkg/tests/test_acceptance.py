"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line that is printed in the terminal summary
(``pytest tests/test_acceptance.py``); add ``-s`` to see them as they run.
"""

import gc
import time
import warnings

import numpy as np
import pytest

from conftest import (
    dense_matricization,
    dense_transfer,
    planted_ht_dense,
    random_sparse,
    record_criterion,
)
from sparse_htucker import (
    SparseTensor,
    balanced_tree,
    data_driven_tree,
    factorize,
    leverage_scores,
)
from sparse_htucker.dimension_tree import DimensionTree
from sparse_htucker.eval import epsilon_sweep, loglog_slope, peak_memory_bytes
from sparse_htucker.factorizer import assemble, check_nesting, parameterize
from sparse_htucker.ingest import SynthProfile, build_cooccurrence_tensor, synth_events
from sparse_htucker.sparse_tensor import ModeSubsetIndex

EPSILONS = (1.0, 0.8, 0.6, 0.4, 0.3)


def planted_instances():
    """Exact hierarchical low-rank tensors: d in {2,3,4}, dims <= 6, ranks <= 3."""
    rng = np.random.default_rng(2024)
    out = []
    for d in (2, 3, 4):
        for _ in range(8):
            tree = balanced_tree(d)
            dims = [int(x) for x in rng.integers(2, 7, size=d)]
            ranks = {i: int(rng.integers(1, 4)) for i in tree.preorder()}
            out.append((tree, dims, planted_ht_dense(tree, dims, ranks, rng)))
    return out


# 1 ---------------------------------------------------------------------------


def test_c01_exactness_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    for tree, _, dense in planted_instances():
        t = SparseTensor.from_dense(dense)
        model = factorize(t, tree, exhaustive=True)
        rel = np.linalg.norm(model.reconstruct_full() - dense) / np.linalg.norm(dense)
        worst = max(worst, rel)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 10
    record_criterion(1, ok, f"max relative error {worst:.2e} (<= 1e-8), {elapsed:.2f} s (< 10 s)")
    assert ok


# 2 ---------------------------------------------------------------------------


def test_c02_nestedness():
    worst = 0.0
    checked = 0
    for tree, _, dense in planted_instances():
        t = SparseTensor.from_dense(dense)
        plan = parameterize(t, tree, exhaustive=True)
        model = assemble(t, plan)
        for nid in tree.interior():
            if nid == tree.root:
                continue
            built = model.node_factor(nid)
            fibers = t.column_fibers(tree[nid].modes, plan.samplings[nid].cols).toarray()
            scale = max(np.abs(fibers).max(), 1e-300)
            worst = max(worst, np.abs(built - fibers).max() / scale)
            checked += 1
    ok = worst <= 1e-8 and checked > 0
    record_criterion(2, ok, f"{checked} interior factors, max relative deviation {worst:.2e} (<= 1e-8)")
    assert ok


# 3 ---------------------------------------------------------------------------


def test_c03_transfer_tensor_oracle():
    rng = np.random.default_rng(33)
    worst = 0.0
    tree = balanced_tree(3)
    for i in range(6):
        t = random_sparse(rng, (4, 4, 4), density=0.3, integer=bool(i % 2))
        dense = t.to_dense()
        for exhaustive in (True, False):
            plan = parameterize(t, tree, 0.6, i, exhaustive=exhaustive)
            model = assemble(t, plan)
            for nid in tree.interior():
                worst = max(worst, np.abs(model.core(nid) - dense_transfer(dense, plan, nid)).max())
    ok = worst <= 1e-12
    record_criterion(3, ok, f"max absolute deviation {worst:.2e} (<= 1e-12)")
    assert ok


# 4 ---------------------------------------------------------------------------


def test_c04_nesting_restriction():
    rng = np.random.default_rng(44)
    runs = violations = 0
    messages = []
    cases = []
    for d in (3, 4, 5, 6, 8):
        for _ in range(4):
            cases.append(random_sparse(rng, (3,) * d, density=0.25 if d < 6 else 0.02))
    for d, records in ((4, 800), (6, 1500), (10, 2000)):
        profile = SynthProfile(modes=d, elements=15, records=records, mode_prob=0.4)
        cases.append(build_cooccurrence_tensor(synth_events(profile, seed=d)))
    for t in cases:
        trees = [balanced_tree(t.order)]
        if t.null_index is not None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                trees.append(data_driven_tree(t))
        for tree in trees:
            for eps in EPSILONS:
                plan = parameterize(t, tree, eps, runs)
                problems = check_nesting(plan)
                violations += len(problems)
                messages.extend(problems[:2])
                runs += 1
    ok = violations == 0
    record_criterion(4, ok, f"{runs} factorizations, {violations} nesting violations")
    assert ok, messages


# 5 ---------------------------------------------------------------------------


def test_c05_epsilon_monotonicity():
    profile = SynthProfile(modes=4, elements=40, records=6600, noise=0.5)
    t = build_cooccurrence_tensor(synth_events(profile, seed=5))
    t0 = time.perf_counter()
    rows = epsilon_sweep(t, balanced_tree(4), EPSILONS, range(10), metric="full")
    elapsed = time.perf_counter() - t0
    errs = [r["mean_error"] for r in rows]
    ups = [(a, b) for a, b in zip(errs, errs[1:]) if b > a]
    ok = (len(ups) == 0 or (len(ups) == 1 and ups[0][1] <= 1.05 * ups[0][0])) and elapsed < 300
    trend = " > ".join(f"{e:.1f}" for e in errs)
    record_criterion(5, ok, f"nnz {t.nnz}, mean errors {trend}, {len(ups)} increases, {elapsed:.1f} s")
    assert ok


# 6 ---------------------------------------------------------------------------


@pytest.mark.slow
def test_c06_near_linear_scaling():
    t_start = time.perf_counter()
    nnz, times, storage_ok = [], [], True
    details = []
    for records in (2300, 4800, 10200, 24000):
        profile = SynthProfile(modes=6, elements=200, records=records, noise=0.5)
        t = build_cooccurrence_tensor(synth_events(profile, seed=3))
        tree = balanced_tree(6)
        factorize(t, tree, 0.6, 0)  # warm-up
        runs = []
        # timed like timeit: collector off, per-seed minimum over three repeats
        gc.disable()
        try:
            for seed in range(15):
                t0 = time.perf_counter()
                factorize(t, tree, 0.6, seed % 5)
                runs.append(time.perf_counter() - t0)
        finally:
            gc.enable()
        nnz.append(t.nnz)
        times.append(float(np.mean(np.min(np.reshape(runs, (3, 5)), axis=0))))
        # storage: leaf part bounded by the sampled fibers, cores by the ranks
        plan = parameterize(t, tree, 0.6, 6)
        model = assemble(t, plan)
        fibers = sum(plan.samplings[i].rank for i in tree.leaves())
        leaf_nnz = sum(model.leaf_factors[i].nnz for i in tree.leaves())
        max_dim = max(t.dims)
        cores = sum(
            model.rank(i) * model.rank(tree[i].children[0]) * model.rank(tree[i].children[1])
            for i in tree.interior()
        )
        storage_ok &= leaf_nnz <= fibers * max_dim and model.storage_size() == leaf_nnz + cores
        details.append(f"{t.nnz}:{times[-1] * 1e3:.0f}ms")
    slope = loglog_slope(nnz, times)
    elapsed = time.perf_counter() - t_start
    ok = 0.7 <= slope <= 1.4 and storage_ok and elapsed < 600
    record_criterion(
        6, ok,
        f"time slope {slope:.3f} (in [0.7, 1.4]); {' '.join(details)}; storage bound {'ok' if storage_ok else 'violated'}",
    )
    assert ok


# 7 ---------------------------------------------------------------------------


@pytest.mark.slow
def test_c07_high_order_feasibility():
    profile = SynthProfile(modes=18, elements=30, records=13000, mode_prob=0.25, noise=0.5)
    t = build_cooccurrence_tensor(synth_events(profile, seed=7))
    model = factorize(t, balanced_tree(18), 0.6, 42)
    peak = peak_memory_bytes()
    rng = np.random.default_rng(0)
    picks = t.subs[rng.choice(t.nnz, size=1000, replace=False)]
    model.query_element(picks[0])
    t0 = time.perf_counter()
    for index in picks:
        model.query_element(index)
    per_query = (time.perf_counter() - t0) / len(picks)
    ok = t.order == 18 and t.nnz >= 100_000 and peak < 8 * 2**30 and per_query < 0.010
    record_criterion(
        7, ok,
        f"order {t.order}, nnz {t.nnz}, peak RSS {peak / 2**30:.2f} GiB (< 8), "
        f"query {per_query * 1e3:.3f} ms (< 10)",
    )
    assert ok


# 8 ---------------------------------------------------------------------------


def test_c08_determinism():
    cases = [
        build_cooccurrence_tensor(synth_events(SynthProfile(modes=4, elements=20, records=1500), seed=8)),
        build_cooccurrence_tensor(synth_events(SynthProfile(modes=6, elements=20, records=1500), seed=9)),
    ]
    ok = True
    for t in cases:
        ref = factorize(t, None, 0.6, 123).to_bytes()
        ok &= factorize(t, None, 0.6, 123).to_bytes() == ref
        for w in (1, 4, 8):
            ok &= factorize(t, None, 0.6, 123, workers=w).to_bytes() == ref
    record_criterion(8, ok, "repeat runs and workers 1/4/8 give identical model bytes")
    assert ok


# 9 ---------------------------------------------------------------------------


def _svd_scores(mat: np.ndarray, k: int) -> np.ndarray:
    _, s, vt = np.linalg.svd(mat, full_matrices=False)
    r = int(np.sum(s > 1e-6 * s[0]))
    kk = max(1, min(k, r))
    p = np.sum(vt[:kk] ** 2, axis=0)
    return p / p.sum()


def test_c09_leverage_scores():
    rng = np.random.default_rng(99)
    worst = 0.0
    zero_ok = True
    for inst in range(30):
        d = int(rng.integers(2, 5))
        dims = tuple(int(x) for x in rng.integers(2, 6, size=d))
        t = random_sparse(rng, dims, density=float(rng.uniform(0.08, 0.4)), integer=bool(inst % 2))
        modes = tuple(sorted(rng.choice(np.arange(1, d + 1), size=int(rng.integers(1, d)), replace=False).tolist()))
        k = int(rng.integers(1, 6))
        mat = dense_matricization(t.to_dense(), modes)
        for side, oracle in (("columns", _svd_scores(mat, k)), ("rows", _svd_scores(mat.T, k))):
            lev = leverage_scores(t, modes, side=side, k=k)
            got = lev.to_dict(t.dims)
            full = np.zeros(len(oracle))
            for lin, v in got.items():
                full[lin - 1] = v
            worst = max(worst, np.abs(full - oracle).max())
            lines = np.abs(mat).sum(axis=0 if side == "columns" else 1)
            zero_ok &= all(full[i] == 0.0 for i in np.flatnonzero(lines == 0))
            idx = ModeSubsetIndex.of(lev.modes, t.dims)
            zero_ok &= idx.size == len(oracle)
    ok = worst <= 1e-8 and zero_ok
    record_criterion(9, ok, f"30 instances, max deviation from SVD oracle {worst:.2e} (<= 1e-8), zero lines score 0: {zero_ok}")
    assert ok


# 10 --------------------------------------------------------------------------


def test_c10_sparsity_preservation():
    cases = [
        build_cooccurrence_tensor(synth_events(SynthProfile(modes=5, elements=25, records=2000), seed=10)),
        random_sparse(np.random.default_rng(10), (5, 4, 6, 3), density=0.2, integer=False),
    ]
    ok = True
    leaves = 0
    for t in cases:
        values = dict(zip(map(tuple, t.subs.tolist()), t.vals.tolist()))
        for eps in (1.0, 0.6, 0.3):
            plan = parameterize(t, balanced_tree(t.order), eps, 1)
            model = assemble(t, plan)
            for nid in plan.tree.leaves():
                (mode,) = plan.tree[nid].modes
                s = plan.samplings[nid]
                u = model.leaf_factors[nid].tocoo()
                for r, c, v in zip(u.row, u.col, u.data):
                    index = list(s.cols[c])
                    index.insert(mode - 1, int(r) + 1)
                    ok &= values.get(tuple(index)) == v
                fiber_nnz = t.restrict_tuples((mode,), s.cols).nnz
                ok &= u.nnz <= fiber_nnz
                leaves += 1
    record_criterion(10, ok, f"{leaves} leaf factors: every value copied from the input, nnz within fiber support")
    assert ok


# 11 --------------------------------------------------------------------------


def test_c11_planted_concepts():
    profile = SynthProfile(modes=4, elements=12, records=400, blocks=2, block_elements=4, noise=0.0, mode_prob=1.0)
    t = build_cooccurrence_tensor(synth_events(profile, seed=11))
    model = factorize(t, balanced_tree(4), 0.6, 42)
    report = model.concept_report(top_n=3)
    mixed = 0
    seen = {}
    for nid, mode, concept, items in report.leaf_concepts:
        blocks = {profile.block_of(e - 2) for e, _ in items if e != 1}
        if len(blocks) > 1:
            mixed += 1
        seen.setdefault(mode, set()).update(blocks)
    both = all(s == {0, 1} for s in seen.values()) and len(seen) == 4
    ok = mixed == 0 and both
    record_criterion(
        11, ok, f"{len(report.leaf_concepts)} leaf concepts, {mixed} mixing blocks in top-3, both blocks found per mode: {both}"
    )
    assert ok
