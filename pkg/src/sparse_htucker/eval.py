"""Error metrics and experiment drivers."""

from __future__ import annotations

import csv
import logging
import resource
import sys
import time
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .dimension_tree import DimensionTree, balanced_tree
from .factorizer import factorize
from .model import DEFAULT_CELL_CAP, HTuckerModel
from .sparse_tensor import SparseTensor

__all__ = [
    "EvalReport",
    "epsilon_sweep",
    "frobenius_error",
    "loglog_slope",
    "model_norm",
    "peak_memory_bytes",
    "read_reports",
    "sampled_nnz_error",
    "scaling_run",
    "write_reports",
]

log = logging.getLogger(__name__)

DEFAULT_SAMPLE_SIZE = 50_000


@dataclass
class EvalReport:
    metric: str
    value: float
    nnz: int
    order: int
    epsilon: float
    seed: int
    wall_time: float
    peak_memory: int
    status: str = "ok"
    message: str = ""


REPORT_COLUMNS = [f.name for f in fields(EvalReport)]


def peak_memory_bytes() -> int:
    """Process resident-set high-water mark (approximate)."""
    rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return int(rss if sys.platform == "darwin" else rss * 1024)


def model_norm(model: HTuckerModel) -> float:
    """Frobenius norm of the represented tensor, via Gram matrices of the factors."""
    tree = model.tree
    grams: dict[int, np.ndarray] = {}
    for nid in tree.postorder():
        node = tree[nid]
        if node.is_leaf:
            u = model.leaf_factors[nid]
            grams[nid] = (u.T @ u).toarray()
            continue
        g1, g2 = (grams.pop(c) for c in node.children)
        core = model.core(nid)
        grams[nid] = np.einsum("ijl,jJ,lL,IJL->iI", core, g1, g2, core, optimize=True)
    return float(np.sqrt(max(grams[tree.root][0, 0], 0.0)))


def frobenius_error(
    tensor: SparseTensor, model: HTuckerModel, cap: int = DEFAULT_CELL_CAP
) -> float:
    """``||T - reconstruction||_F`` over the full index space.

    Tensors up to ``cap`` cells are compared densely.  Larger ones use
    ``||T||^2 - 2<T, R> + ||R||^2`` with ``<T, R>`` evaluated on the support
    of ``T`` and ``||R||`` from the factor Gram matrices, which never forms
    the dense reconstruction (accuracy then limited to about ``1e-8 ||T||``).
    """
    if tuple(tensor.dims) != tuple(model.dims):
        raise ValueError(f"tensor dims {tensor.dims} differ from model dims {model.dims}")
    if tensor.size <= cap:
        diff = model.reconstruct_full(cap=cap)
        diff[tuple((tensor.subs - 1).T)] -= tensor.vals
        return float(np.linalg.norm(diff))
    approx = model.query_elements(tensor.subs)
    sq = tensor.norm() ** 2 - 2.0 * float(approx @ tensor.vals) + model_norm(model) ** 2
    return float(np.sqrt(max(sq, 0.0)))


def sampled_nnz_error(
    tensor: SparseTensor,
    model: HTuckerModel,
    sample_size: int = DEFAULT_SAMPLE_SIZE,
    seed: int = 42,
) -> float:
    """Frobenius norm of the error over a uniform sample of the nonzeros.

    The whole support is used when it has no more than ``sample_size``
    entries.
    """
    if sample_size < 1:
        raise ValueError("sample_size must be at least 1")
    if tensor.nnz <= sample_size:
        pick = np.arange(tensor.nnz)
    else:
        rng = np.random.default_rng(seed)
        pick = np.sort(rng.choice(tensor.nnz, size=sample_size, replace=False))
    approx = model.query_elements(tensor.subs[pick])
    return float(np.linalg.norm(tensor.vals[pick] - approx))


def _measure(tensor, tree, epsilon, seed, workers, metric, sample_size) -> EvalReport:
    t0 = time.perf_counter()
    model = factorize(tensor, tree, epsilon, seed, workers=workers)
    elapsed = time.perf_counter() - t0
    if metric == "full":
        value = frobenius_error(tensor, model)
    else:
        value = sampled_nnz_error(tensor, model, sample_size, seed)
    return EvalReport(metric, value, tensor.nnz, tensor.order, epsilon, seed, elapsed, peak_memory_bytes())


def scaling_run(
    series: Sequence[tuple[SparseTensor, DimensionTree | None, float]],
    seed: int = 42,
    workers: int = 1,
    *,
    metric: str = "sampled_nnz",
    sample_size: int = DEFAULT_SAMPLE_SIZE,
) -> list[EvalReport]:
    """Factorize every ``(tensor, tree, epsilon)`` item and record cost and error.

    A failing item yields a report with ``status="error"``; the run goes on.
    """
    if not series:
        raise ValueError("empty series")
    if metric not in ("full", "sampled_nnz"):
        raise ValueError(f"unknown metric {metric!r}")
    reports = []
    for tensor, tree, eps in series:
        try:
            rep = _measure(tensor, tree, eps, seed, workers, metric, sample_size)
        except Exception as exc:  # recorded, the series continues
            log.warning("series item (nnz=%d, eps=%g) failed: %s", tensor.nnz, eps, exc)
            rep = EvalReport(
                metric, float("nan"), tensor.nnz, tensor.order, eps, seed,
                float("nan"), peak_memory_bytes(), "error", str(exc),
            )
        reports.append(rep)
    return reports


def epsilon_sweep(
    tensor: SparseTensor,
    tree: DimensionTree | None,
    epsilons: Iterable[float] = (1.0, 0.8, 0.6, 0.4, 0.3),
    seeds: Iterable[int] = range(10),
    *,
    metric: str = "full",
    workers: int = 1,
    sample_size: int = DEFAULT_SAMPLE_SIZE,
) -> list[dict]:
    """Mean error and time per epsilon, averaged over seeds."""
    tree = tree or balanced_tree(tensor.order)
    seeds = list(seeds)
    rows = []
    for eps in epsilons:
        reps = [_measure(tensor, tree, eps, s, workers, metric, sample_size) for s in seeds]
        rows.append(
            {
                "epsilon": eps,
                "mean_error": float(np.mean([r.value for r in reps])),
                "mean_time": float(np.mean([r.wall_time for r in reps])),
                "runs": len(reps),
            }
        )
    return rows


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def write_reports(reports: Iterable[EvalReport], path) -> None:
    """CSV with columns ``metric,value,nnz,order,epsilon,seed,wall_time,peak_memory,status,message``."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in reports:
            w.writerow(asdict(r))


def read_reports(path) -> list[EvalReport]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                EvalReport(
                    row["metric"], float(row["value"]), int(row["nnz"]), int(row["order"]),
                    float(row["epsilon"]), int(row["seed"]), float(row["wall_time"]),
                    int(row["peak_memory"]), row["status"], row["message"],
                )
            )
    return out
