"""``sparse-htucker`` command line.

Exit codes: 0 success, 2 bad input (flags, files, formats, indices),
1 anything unexpected.  Failures print one ``sparse-htucker <command>:
error: <kind>: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .dimension_tree import DimensionTree, balanced_tree, data_driven_tree, read_tree, write_tree
from .eval import DEFAULT_SAMPLE_SIZE, frobenius_error, sampled_nnz_error, scaling_run, write_reports
from .factorizer import factorize
from .ingest import build_cooccurrence_tensor, parse_profile, read_events, synth_events, write_events
from .model import load_model, save_model
from .sparse_tensor import SparseTensor, read_tensor, write_tensor

PROG = "sparse-htucker"
EXIT_INPUT = 2
EXIT_INTERNAL = 1

log = logging.getLogger(PROG)


class UsageError(ValueError):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _range(text: str, n: int, mode: int):
    """``i``, ``lo:hi`` (inclusive) or ``:`` for a whole mode."""
    text = text.strip()
    try:
        if text in (":", "*"):
            return (1, n)
        if ":" in text:
            lo, hi = text.split(":", 1)
            return (int(lo) if lo else 1, int(hi) if hi else n)
        i = int(text)
        return (i, i)
    except ValueError:
        raise UsageError(f"bad range {text!r} for mode {mode}; use i, lo:hi or :") from None


def _tree_for(choice: str, tensor: SparseTensor, linkage: str = "complete") -> DimensionTree:
    if choice == "balanced":
        return balanced_tree(tensor.order)
    if choice == "data-driven":
        return data_driven_tree(tensor, linkage=linkage)
    return read_tree(choice)


# --- commands --------------------------------------------------------------


def cmd_build_tensor(args) -> None:
    events = read_events(args.events)
    modes = [m for m in args.modes.split(",") if m] if args.modes else None
    if modes:
        unknown = [m for m in modes if m not in events.modes]
        if unknown:
            raise UsageError(f"modes not present in {args.events}: {', '.join(unknown)}")
    tensor = build_cooccurrence_tensor(events, modes, drop_all_null=args.drop_all_null)
    write_tensor(tensor, args.out)
    log.info("wrote %s: dims %s, %d nonzeros", args.out, tensor.dims, tensor.nnz)


def cmd_synth(args) -> None:
    profile = parse_profile(Path(args.profile).read_text())
    events = synth_events(profile, seed=args.seed)
    write_events(events, args.out)
    log.info("wrote %s: %d records, %d events", args.out, len(events.records), events.n_events)


def cmd_tree(args) -> None:
    tensor = read_tensor(args.tensor)
    if args.balanced:
        tree = balanced_tree(tensor.order)
    else:
        tree = data_driven_tree(tensor, linkage=args.linkage)
    write_tree(tree, args.out)
    log.info("wrote %s: %s", args.out, tree.to_nested())


def cmd_factorize(args) -> None:
    tensor = read_tensor(args.tensor)
    tree = _tree_for(args.tree, tensor)
    model = factorize(
        tensor, tree, args.epsilon, args.seed, workers=args.workers, k=args.rank,
        exhaustive=args.exhaustive,
    )
    save_model(model, args.out)
    log.info("wrote %s: %d stored values", args.out, model.storage_size())


def cmd_query(args) -> None:
    model = load_model(args.model)
    if args.index is not None:
        index = _int_list(args.index)
        if len(index) != model.order:
            raise UsageError(f"--index needs {model.order} entries, got {len(index)}")
        print(repr(model.query_element(index)))
        return
    parts = args.block.split(",")
    if len(parts) != model.order:
        raise UsageError(f"--block needs {model.order} ranges, got {len(parts)}")
    ranges = [_range(p, n, mu) for mu, (p, n) in enumerate(zip(parts, model.dims), start=1)]
    block = model.query_block(ranges)
    offsets = [lo for lo, _ in ranges]
    out = sys.stdout
    for pos in np.ndindex(*block.shape):
        index = " ".join(str(p + o) for p, o in zip(pos, offsets))
        out.write(f"{index} {float(block[pos])!r}\n")


def cmd_report(args) -> None:
    model = load_model(args.model)
    if args.top < 1:
        raise UsageError("--top must be at least 1")
    model.concept_report(args.top).to_csv(args.out)
    log.info("wrote %s", args.out)


def cmd_eval(args) -> None:
    model = load_model(args.model)
    tensor = read_tensor(args.tensor)
    if args.full:
        value = frobenius_error(tensor, model)
        metric = "full"
    else:
        value = sampled_nnz_error(tensor, model, args.sample, seed=args.seed)
        metric = "sampled_nnz"
    print(f"{metric} {value!r}")


def _read_series(path: str):
    base = Path(path).parent
    items = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise UsageError(f"{path}:{lineno}: expected 'tensor tree epsilon'")
        tpath, tree, eps = parts
        tfile = Path(tpath) if Path(tpath).is_absolute() else base / tpath
        tensor = read_tensor(tfile)
        if tree not in ("balanced", "data-driven") and not Path(tree).is_absolute():
            tree = str(base / tree)
        try:
            eps = float(eps)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad epsilon {eps!r}") from None
        items.append((tensor, _tree_for(tree, tensor), eps))
    return items


def cmd_bench(args) -> None:
    series = _read_series(args.series)
    metric = "full" if args.full else "sampled_nnz"
    reports = scaling_run(
        series, seed=args.seed, workers=args.workers, metric=metric, sample_size=args.sample
    )
    write_reports(reports, args.out)
    failed = sum(r.status != "ok" for r in reports)
    log.info("wrote %s: %d items, %d failed", args.out, len(reports), failed)


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42, help="random seed (default 42)")
    common.add_argument("--workers", type=int, default=1, help="threads for factor assembly")
    common.add_argument("--verbose", "-v", action="count", default=0, help="log progress to stderr")

    parser = argparse.ArgumentParser(prog=PROG, description="Sparse hierarchical Tucker factorization.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("build-tensor", parents=[common], help="co-occurrence tensor from an events CSV")
    p.add_argument("--events", required=True, help="CSV with record_id,mode_id,element_name")
    p.add_argument("--modes", help="comma-separated mode ids, in tensor order (default: all)")
    p.add_argument("--out", required=True, help="output tensor file")
    p.add_argument("--drop-all-null", action="store_true", help="skip records with no event in any selected mode")
    p.set_defaults(func=cmd_build_tensor)

    p = sub.add_parser("synth", parents=[common], help="synthetic events CSV from a key=value profile")
    p.add_argument("--profile", required=True, help="profile file (key = value lines)")
    p.add_argument("--out", required=True, help="output events CSV")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("tree", parents=[common], help="dimension tree for a tensor")
    p.add_argument("--tensor", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--balanced", action="store_true", help="balanced binary tree")
    g.add_argument("--data-driven", action="store_true", help="Jaccard clustering of the modes")
    p.add_argument("--linkage", choices=("complete", "average"), default="complete")
    p.add_argument("--out", required=True, help="output tree file")
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("factorize", parents=[common], help="factorize a tensor into a model file")
    p.add_argument("--tensor", required=True)
    p.add_argument("--tree", required=True, help="tree file, or 'balanced' / 'data-driven'")
    p.add_argument("--epsilon", type=float, default=0.6)
    p.add_argument("--rank", type=int, default=5, help="target rank k (default 5)")
    p.add_argument("--exhaustive", action="store_true", help="keep every fiber (exact, small inputs only)")
    p.add_argument("--out", required=True, help="output model file")
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("query", parents=[common], help="approximate entries from a model")
    p.add_argument("--model", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--index", help="one multi-index, e.g. 2,1,3,1")
    g.add_argument("--block", help="per-mode ranges i, lo:hi or :, e.g. 1:3,2,:,1")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("report", parents=[common], help="concept report as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("eval", parents=[common], help="reconstruction error of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--tensor", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--full", action="store_true", help="Frobenius error over all cells")
    g.add_argument("--sample", type=int, metavar="N", help="error over N sampled nonzeros")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="time a series of factorizations")
    p.add_argument("--series", required=True, help="lines of 'tensor tree epsilon'")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--full", action="store_true", help="use the full error instead of sampled nonzeros")
    p.add_argument("--sample", type=int, default=DEFAULT_SAMPLE_SIZE)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(name)s: %(message)s", stream=sys.stderr)
    if args.workers < 1:
        parser.error("--workers must be at least 1")

    def fail(code: int, exc: BaseException) -> int:
        print(f"{PROG} {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code

    try:
        args.func(args)
    except (OSError, ValueError, IndexError, KeyError, MemoryError) as exc:
        # format errors, missing files, bad indices and caps are all the caller's input
        return fail(EXIT_INPUT, exc)
    except Exception as exc:  # noqa: BLE001
        log.debug("unexpected failure", exc_info=True)
        return fail(EXIT_INTERNAL, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
