"""The Sparse H-Tucker model: storage, reconstruction, queries and reports."""

from __future__ import annotations

import csv
import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .dimension_tree import DimensionTree, TreeNode

__all__ = [
    "ConceptReport",
    "HTuckerModel",
    "ModelFormatError",
    "load_model",
    "save_model",
]

DEFAULT_CELL_CAP = 10**8
FORMAT_VERSION = 1
_MAGIC = b"SHTUCKER\n"
# rows processed per chunk in batched element queries
_QUERY_CHUNK_CELLS = 1 << 22


class ModelFormatError(ValueError):
    """Raised when a model file is corrupt or of an unsupported version."""


@dataclass
class HTuckerModel:
    """Transfer tensors at the interior nodes and sparse factors at the leaves.

    Attributes
    ----------
    tree : DimensionTree
    dims : tuple of int
    leaf_factors : dict
        Leaf id -> ``n_mu x k_t`` sparse matrix of sampled column fibers.
    transfer_tensors : dict
        Non-root interior id -> dense ``k_t x k_t1 x k_t2`` array.
    root_matrix : ndarray
        Dense ``k_t1 x k_t2`` matrix of the root.
    """

    tree: DimensionTree
    dims: tuple[int, ...]
    leaf_factors: dict[int, sp.csr_matrix]
    transfer_tensors: dict[int, np.ndarray]
    root_matrix: np.ndarray
    _dense_leaves: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def order(self) -> int:
        return len(self.dims)

    def rank(self, nid: int) -> int:
        """Number of columns ``k_t`` of the factor at node ``nid`` (1 at the root)."""
        if nid == self.tree.root:
            return 1
        if nid in self.leaf_factors:
            return self.leaf_factors[nid].shape[1]
        return self.transfer_tensors[nid].shape[0]

    def core(self, nid: int) -> np.ndarray:
        """Transfer tensor at ``nid``; the root matrix gets a leading unit axis."""
        if nid == self.tree.root:
            return self.root_matrix[None]
        return self.transfer_tensors[nid]

    def storage_size(self) -> int:
        """Stored numbers: leaf nonzeros plus transfer tensor entries."""
        return (
            sum(u.nnz for u in self.leaf_factors.values())
            + sum(b.size for b in self.transfer_tensors.values())
            + self.root_matrix.size
        )

    def _dense_leaf(self, nid: int) -> np.ndarray:
        u = self._dense_leaves.get(nid)
        if u is None:
            u = self.leaf_factors[nid].toarray()
            self._dense_leaves[nid] = u
        return u

    # --- reconstruction ----------------------------------------------------

    def _contract(self, nid: int, leaf_blocks: dict[int, np.ndarray]) -> np.ndarray:
        """Factor of ``nid`` restricted to the leaf rows in ``leaf_blocks``.

        The result has one axis per mode of the node (ascending mode order)
        followed by the rank axis.
        """
        node = self.tree[nid]
        if node.is_leaf:
            return leaf_blocks[node.id]
        a, b = node.children
        ua = self._contract(a, leaf_blocks)
        ub = self._contract(b, leaf_blocks)
        tmp = np.tensordot(ua, self.core(nid), axes=([-1], [1]))
        out = np.tensordot(tmp, ub, axes=([-1], [-1]))
        na = len(self.tree[a].modes)
        mode_axes = list(self.tree[a].modes) + list(self.tree[b].modes)
        positions = list(range(na)) + list(range(na + 1, out.ndim))
        perm = [positions[i] for i in np.argsort(mode_axes, kind="stable")] + [na]
        return out.transpose(perm)

    def _selected_rows(self, ranges, cap: int) -> list[np.ndarray]:
        if len(ranges) != self.order:
            raise ValueError(f"expected {self.order} index ranges, got {len(ranges)}")
        rows = []
        for mu, (r, n) in enumerate(zip(ranges, self.dims), start=1):
            if isinstance(r, range):
                idx = np.arange(r.start, r.stop, r.step)
            elif isinstance(r, tuple) and len(r) == 2 and all(np.isscalar(x) for x in r):
                idx = np.arange(int(r[0]), int(r[1]) + 1)
            else:
                idx = np.atleast_1d(np.asarray(r, dtype=np.int64))
            if len(idx) and (idx.min() < 1 or idx.max() > n):
                raise IndexError(f"index range out of 1..{n} in mode {mu}")
            rows.append(idx)
        cells = math.prod(len(x) for x in rows)
        if cells > cap:
            raise MemoryError(
                f"block of {cells} cells exceeds cap {cap}; query a smaller block "
                "with query_block or single cells with query_element"
            )
        return rows

    def query_block(self, ranges: Sequence, cap: int = DEFAULT_CELL_CAP) -> np.ndarray:
        """Dense sub-array over per-mode index ranges.

        Each range is an inclusive ``(lo, hi)`` pair, a ``range`` or an explicit
        sequence of 1-based indices.
        """
        rows = self._selected_rows(ranges, cap)
        blocks = {}
        for nid in self.tree.leaves():
            (mode,) = self.tree[nid].modes
            blocks[nid] = self._dense_leaf(nid)[rows[mode - 1] - 1]
        out = self._contract(self.tree.root, blocks)
        return out[..., 0]

    def reconstruct_full(self, cap: int = DEFAULT_CELL_CAP) -> np.ndarray:
        """Dense approximation of the whole tensor."""
        return self.query_block([(1, n) for n in self.dims], cap=cap)

    def node_factor(self, nid: int, cap: int = DEFAULT_CELL_CAP) -> np.ndarray:
        """Dense ``|I_t| x k_t`` factor of any node, rows in colexicographic order.

        Interior factors are built bottom-up from the transfer tensors; they are
        never stored in the model.
        """
        modes = self.tree[nid].modes
        cells = math.prod(self.dims[m - 1] for m in modes) * self.rank(nid)
        if cells > cap:
            raise MemoryError(f"factor of node {nid} has {cells} cells, above cap {cap}")
        blocks = {i: self._dense_leaf(i) for i in self.tree.leaves()}
        arr = self._contract(nid, blocks)
        return arr.reshape(-1, arr.shape[-1], order="F")

    def query_elements(self, indices) -> np.ndarray:
        """Approximate values at many 1-based multi-indices, shape ``(N, d)``."""
        idx = np.atleast_2d(np.asarray(indices, dtype=np.int64))
        if idx.shape[1] != self.order:
            raise ValueError(f"expected multi-indices of length {self.order}")
        for mu, n in enumerate(self.dims):
            col = idx[:, mu]
            if len(col) and (col.min() < 1 or col.max() > n):
                bad = int(col[(col < 1) | (col > n)][0])
                raise IndexError(f"index {bad} out of range 1..{n} in mode {mu + 1}")
        widest = max(
            [self.rank(i) * max(self.rank(c) for c in self.tree[i].children) for i in self.tree.interior()]
        )
        chunk = max(1, _QUERY_CHUNK_CELLS // max(widest, 1))
        out = np.empty(len(idx))
        for start in range(0, len(idx), chunk):
            out[start : start + chunk] = self._query_rows(idx[start : start + chunk])
        return out

    def _query_rows(self, idx: np.ndarray) -> np.ndarray:
        vecs: dict[int, np.ndarray] = {}
        for nid in self.tree.postorder():
            node = self.tree[nid]
            if node.is_leaf:
                vecs[nid] = self._dense_leaf(nid)[idx[:, node.modes[0] - 1] - 1]
                continue
            a, b = node.children
            va, vb = vecs.pop(a), vecs.pop(b)
            if nid == self.tree.root:
                return np.einsum("nl,nl->n", va @ self.root_matrix, vb)
            core = self.transfer_tensors[nid]
            ki, ka, kb = core.shape
            tmp = va @ core.transpose(1, 0, 2).reshape(ka, ki * kb)
            vecs[nid] = np.einsum("nil,nl->ni", tmp.reshape(-1, ki, kb), vb)
        raise AssertionError("tree without interior root")

    def query_element(self, index: Sequence[int]) -> float:
        """Approximate value at one 1-based multi-index.

        Only one row of each leaf factor is touched, so the cost does not
        depend on the tensor size.
        """
        return float(self.query_elements([tuple(index)])[0])

    # --- interpretation ----------------------------------------------------

    def concept_report(self, top_n: int = 5) -> "ConceptReport":
        """Top elements per leaf column and dominant child pairs per transfer slice."""
        leaf_rows = []
        for nid in self.tree.leaves():
            u = self.leaf_factors[nid].tocsc()
            (mode,) = self.tree[nid].modes
            for c in range(u.shape[1]):
                lo, hi = u.indptr[c], u.indptr[c + 1]
                rows, vals = u.indices[lo:hi], u.data[lo:hi]
                order = np.lexsort((rows, -vals))[:top_n]
                items = [(int(rows[o]) + 1, float(vals[o])) for o in order]
                leaf_rows.append((nid, mode, c + 1, items))
        interactions = []
        for nid in self.tree.interior():
            core = self.core(nid)
            for i in range(core.shape[0]):
                sl = np.abs(core[i])
                peak = sl.max() if sl.size else 0.0
                pairs = np.argwhere(sl == peak) if peak > 0 else np.zeros((0, 2), int)
                items = [(int(j) + 1, int(v) + 1, float(core[i, j, v])) for j, v in pairs]
                interactions.append((nid, i + 1, items))
        return ConceptReport(top_n, leaf_rows, interactions)

    # --- persistence -----------------------------------------------------

    def to_bytes(self) -> bytes:
        arrays: list[tuple[str, np.ndarray]] = []
        for nid in sorted(self.leaf_factors):
            u = sp.csr_matrix(self.leaf_factors[nid])
            u.sum_duplicates()
            u.sort_indices()
            coo = u.tocoo()
            arrays.append((f"leaf:{nid}:rows", coo.row.astype("<i8")))
            arrays.append((f"leaf:{nid}:cols", coo.col.astype("<i8")))
            arrays.append((f"leaf:{nid}:vals", coo.data.astype("<f8")))
        for nid in sorted(self.transfer_tensors):
            arrays.append((f"transfer:{nid}", np.ascontiguousarray(self.transfer_tensors[nid], dtype="<f8")))
        arrays.append(("root", np.ascontiguousarray(self.root_matrix, dtype="<f8")))
        offset = 0
        entries = []
        for name, arr in arrays:
            entries.append(
                {"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape), "offset": offset}
            )
            offset += arr.nbytes
        header = {
            "version": FORMAT_VERSION,
            "dims": list(self.dims),
            "root": self.tree.root,
            "tree": [
                [n.id, list(n.modes), list(n.children) if n.children else None]
                for n in (self.tree[i] for i in self.tree.preorder())
            ],
            "leaf_shapes": {str(i): list(self.leaf_factors[i].shape) for i in sorted(self.leaf_factors)},
            "arrays": entries,
            "payload_bytes": offset,
        }
        hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        buf = io.BytesIO()
        buf.write(_MAGIC)
        buf.write(f"version {FORMAT_VERSION}\n".encode())
        buf.write(struct.pack("<Q", len(hbytes)))
        buf.write(hbytes)
        for _, arr in arrays:
            buf.write(arr.tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "HTuckerModel":
        if not data.startswith(_MAGIC):
            raise ModelFormatError("not a Sparse H-Tucker model file (bad magic)")
        pos = len(_MAGIC)
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise ModelFormatError("truncated model file (no version line)")
        vline = data[pos:nl].decode(errors="replace")
        if vline != f"version {FORMAT_VERSION}":
            raise ModelFormatError(f"unsupported model version line {vline!r}")
        pos = nl + 1
        if len(data) < pos + 8:
            raise ModelFormatError("truncated model file (no header length)")
        (hlen,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        if len(data) < pos + hlen:
            raise ModelFormatError("truncated model file (header)")
        try:
            header = json.loads(data[pos : pos + hlen])
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"corrupt model header: {exc}") from None
        pos += hlen
        try:
            return cls._from_header(header, data[pos:])
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            if isinstance(exc, ModelFormatError):
                raise
            raise ModelFormatError(f"corrupt model header: {exc!r}") from None

    @classmethod
    def _from_header(cls, header: dict, payload: bytes) -> "HTuckerModel":
        if len(payload) != header["payload_bytes"]:
            raise ModelFormatError(
                f"truncated or padded payload: expected {header['payload_bytes']} bytes, "
                f"found {len(payload)}"
            )
        arrs = {}
        for e in header["arrays"]:
            dt = np.dtype(e["dtype"])
            count = math.prod(e["shape"])
            a = np.frombuffer(payload, dtype=dt, count=count, offset=e["offset"])
            arrs[e["name"]] = a.reshape(e["shape"]).astype(dt.newbyteorder("="))
        tree = DimensionTree(
            [TreeNode(i, tuple(m), tuple(c) if c else None) for i, m, c in header["tree"]],
            root=header["root"],
        )
        leaves = {}
        for key, shape in header["leaf_shapes"].items():
            nid = int(key)
            leaves[nid] = sp.csr_matrix(
                (arrs[f"leaf:{nid}:vals"], (arrs[f"leaf:{nid}:rows"], arrs[f"leaf:{nid}:cols"])),
                shape=tuple(shape),
            )
        transfers = {int(k.split(":")[1]): v for k, v in arrs.items() if k.startswith("transfer:")}
        return cls(tree, tuple(header["dims"]), leaves, transfers, arrs["root"])


def save_model(model: HTuckerModel, path) -> None:
    Path(path).write_bytes(model.to_bytes())


def load_model(path) -> HTuckerModel:
    return HTuckerModel.from_bytes(Path(path).read_bytes())


@dataclass
class ConceptReport:
    """Concepts of the leaf factors and dominant interactions of the transfer tensors.

    ``leaf_concepts`` holds ``(node, mode, concept, [(element, weight), ...])``
    and ``interactions`` holds ``(node, slice, [(j, l, value), ...])``; all
    ids are 1-based.
    """

    top_n: int
    leaf_concepts: list
    interactions: list

    def to_rows(self) -> list[tuple]:
        rows = []
        for nid, _, c, items in self.leaf_concepts:
            rows.extend((nid, c, str(e), w) for e, w in items)
        for nid, i, items in self.interactions:
            rows.extend((nid, i, f"{j}:{l}", w) for j, l, w in items)
        return rows

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node_id", "concept_id", "element_id", "weight"])
        for nid, c, e, wt in self.to_rows():
            w.writerow([nid, c, e, repr(float(wt))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_text(self, names: dict | None = None) -> str:
        """Readable summary; ``names`` optionally maps ``(mode, element)`` to a label."""
        lines = []
        for nid, mode, c, items in self.leaf_concepts:
            label = lambda e: names.get((mode, e), str(e)) if names else str(e)  # noqa: E731
            body = ", ".join(f"{label(e)} ({w:g})" for e, w in items)
            lines.append(f"leaf {nid} (mode {mode}) concept {c}: {body}")
        for nid, i, items in self.interactions:
            body = ", ".join(f"({j},{l}) {v:.4g}" for j, l, v in items)
            lines.append(f"node {nid} slice {i}: {body}")
        return "\n".join(lines)
