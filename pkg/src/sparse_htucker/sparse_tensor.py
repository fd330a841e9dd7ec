"""Coordinate-format sparse tensors and multi-index bookkeeping.

Indices exposed to users are 1-based, both for modes (1..d) and for the
elements of each mode (1..n_mu).  Linear indices over a subset of modes
follow a colexicographic convention: the first listed (smallest) mode varies
fastest.  The same convention is used for matricizations, Kronecker products
and vectorization throughout the package.

Linear indices are returned as Python ints, so they stay exact even for
index spaces far beyond 2**63.  Internally, tuples are compared through
order-preserving int64 codes (see :func:`tuple_codes`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ModeSubsetIndex",
    "SparseTensor",
    "TensorFormatError",
    "complement",
    "match_rows",
    "read_tensor",
    "tuple_codes",
    "write_tensor",
]

_CODE_LIMIT = 2**62


class TensorFormatError(ValueError):
    """Raised when a tensor file cannot be parsed."""


def complement(modes: Iterable[int], order: int) -> tuple[int, ...]:
    """Sorted modes of ``1..order`` not contained in ``modes``."""
    s = set(modes)
    return tuple(m for m in range(1, order + 1) if m not in s)


@dataclass(frozen=True)
class ModeSubsetIndex:
    """Colexicographic linearization of the index set of a mode subset.

    Parameters
    ----------
    modes : tuple of int
        Sorted 1-based mode ids.
    sizes : tuple of int
        Mode sizes, aligned with ``modes``.
    """

    modes: tuple[int, ...]
    sizes: tuple[int, ...]

    @classmethod
    def of(cls, modes: Iterable[int], dims: Sequence[int]) -> "ModeSubsetIndex":
        ms = tuple(sorted(int(m) for m in modes))
        if len(set(ms)) != len(ms):
            raise ValueError(f"repeated mode in subset {ms}")
        for m in ms:
            if not 1 <= m <= len(dims):
                raise ValueError(f"mode {m} outside 1..{len(dims)}")
        return cls(ms, tuple(int(dims[m - 1]) for m in ms))

    @property
    def size(self) -> int:
        return math.prod(self.sizes)

    def encode(self, index: Sequence[int]) -> int:
        if len(index) != len(self.modes):
            raise ValueError(f"expected {len(self.modes)} indices, got {len(index)}")
        lin, stride = 0, 1
        for m, n, i in zip(self.modes, self.sizes, index):
            i = int(i)
            if not 1 <= i <= n:
                raise IndexError(f"index {i} out of range 1..{n} in mode {m}")
            lin += (i - 1) * stride
            stride *= n
        return lin + 1

    def decode(self, lin: int) -> tuple[int, ...]:
        lin = int(lin)
        if not 1 <= lin <= self.size:
            raise IndexError(f"linear index {lin} out of range 1..{self.size}")
        rem = lin - 1
        out = []
        for n in self.sizes:
            rem, r = divmod(rem, n)
            out.append(r + 1)
        return tuple(out)


def tuple_codes(blocks: Sequence[np.ndarray], sizes: Sequence[int]) -> list[np.ndarray]:
    """Order-preserving int64 codes for the rows of several tuple arrays.

    All blocks share the same columns (1-based indices with the given
    ``sizes``).  Equal rows get equal codes across blocks and the code order
    is colexicographic.  When the subset's index space fits below 2**62 the
    code is exactly ``linear index - 1``; otherwise the running code is rank
    compressed whenever it would overflow.
    """
    lens = [len(b) for b in blocks]
    width = len(sizes)
    if width == 0:
        return [np.zeros(n, dtype=np.int64) for n in lens]
    allrows = np.concatenate([np.asarray(b, dtype=np.int64).reshape(-1, width) for b in blocks])
    code = np.zeros(len(allrows), dtype=np.int64)
    bound = 1
    for col in range(width - 1, -1, -1):
        n = int(sizes[col])
        if bound * n > _CODE_LIMIT:
            uniq, code = np.unique(code, return_inverse=True)
            code = code.astype(np.int64).ravel()
            bound = max(len(uniq), 1)
        code = code * n + (allrows[:, col] - 1)
        bound *= n
    return np.split(code, np.cumsum(lens)[:-1])


def match_rows(keys: np.ndarray, table: np.ndarray, sizes: Sequence[int]) -> np.ndarray:
    """Position of each row of ``keys`` within ``table`` (-1 when absent).

    ``table`` rows must be unique.
    """
    kc, tc = tuple_codes([keys, table], sizes)
    if len(tc) == 0:
        return np.full(len(kc), -1, dtype=np.int64)
    order = np.argsort(tc, kind="stable")
    sorted_tc = tc[order]
    pos = np.searchsorted(sorted_tc, kc)
    pos = np.minimum(pos, len(sorted_tc) - 1)
    hit = sorted_tc[pos] == kc
    return np.where(hit, order[pos], -1)


def _lex_order(subs: np.ndarray) -> np.ndarray:
    if subs.shape[1] == 0:
        return np.arange(len(subs))
    return np.lexsort(subs.T[::-1])


class SparseTensor:
    """Immutable d-order tensor in coordinate format.

    Entries are kept sorted by their multi-index tuple, duplicates summed and
    explicit zeros dropped.

    Parameters
    ----------
    dims : sequence of int
        Mode sizes ``(n_1, ..., n_d)``.
    subs : array_like of int, shape (nnz, d)
        1-based multi-indices.
    vals : array_like of float, shape (nnz,)
    null_index : int, optional
        Element id that stands for "absent" in every mode (set by
        co-occurrence ingestion).  Used when deriving mode incidence.
    """

    __slots__ = ("dims", "subs", "vals", "null_index")

    def __init__(self, dims, subs, vals, null_index: int | None = None):
        dims = tuple(int(n) for n in dims)
        if len(dims) == 0 or any(n < 1 for n in dims):
            raise ValueError(f"invalid dims {dims}")
        d = len(dims)
        subs = np.asarray(subs, dtype=np.int64).reshape(-1, d)
        vals = np.asarray(vals, dtype=np.float64).reshape(-1)
        if len(subs) != len(vals):
            raise ValueError("subs and vals differ in length")
        if len(subs):
            lo = subs.min(axis=0)
            hi = subs.max(axis=0)
            for mu in range(d):
                if lo[mu] < 1 or hi[mu] > dims[mu]:
                    bad = subs[(subs[:, mu] < 1) | (subs[:, mu] > dims[mu])][0]
                    raise IndexError(
                        f"index {int(bad[mu])} out of range 1..{dims[mu]} in mode {mu + 1} "
                        f"(multi-index {tuple(int(x) for x in bad)})"
                    )
        order = _lex_order(subs)
        subs, vals = subs[order], vals[order]
        if len(subs) > 1:
            new = np.ones(len(subs), dtype=bool)
            new[1:] = np.any(subs[1:] != subs[:-1], axis=1)
            starts = np.flatnonzero(new)
            if len(starts) != len(subs):
                vals = np.add.reduceat(vals, starts)
                subs = subs[starts]
        keep = vals != 0
        subs = np.ascontiguousarray(subs[keep])
        vals = np.ascontiguousarray(vals[keep])
        subs.setflags(write=False)
        vals.setflags(write=False)
        self.dims = dims
        self.subs = subs
        self.vals = vals
        self.null_index = null_index

    @classmethod
    def from_coords(cls, dims, coords, null_index: int | None = None) -> "SparseTensor":
        """Build from ``(multi_index, value)`` pairs or a mapping thereof."""
        items = list(coords.items()) if isinstance(coords, Mapping) else list(coords)
        d = len(dims)
        subs = np.array([tuple(ix) for ix, _ in items], dtype=np.int64).reshape(-1, d)
        vals = np.array([v for _, v in items], dtype=np.float64)
        return cls(dims, subs, vals, null_index=null_index)

    @classmethod
    def from_dense(cls, array) -> "SparseTensor":
        a = np.asarray(array, dtype=np.float64)
        nz = np.nonzero(a)
        subs = np.stack(nz, axis=1) + 1 if a.ndim else np.zeros((0, 0))
        return cls(a.shape, subs, a[nz])

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def nnz(self) -> int:
        return len(self.vals)

    @property
    def size(self) -> int:
        """Logical number of cells (exact Python int)."""
        return math.prod(self.dims)

    def norm(self) -> float:
        return float(np.linalg.norm(self.vals))

    def index(self, modes: Iterable[int]) -> ModeSubsetIndex:
        return ModeSubsetIndex.of(modes, self.dims)

    def sub_tuples(self, modes: Sequence[int]) -> np.ndarray:
        """Columns of the multi-index array for the given (sorted) modes."""
        return self.subs[:, [m - 1 for m in modes]]

    def __repr__(self) -> str:
        return f"SparseTensor(dims={self.dims}, nnz={self.nnz})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseTensor):
            return NotImplemented
        return (
            self.dims == other.dims
            and np.array_equal(self.subs, other.subs)
            and np.array_equal(self.vals, other.vals)
        )

    __hash__ = None

    def _take(self, mask) -> "SparseTensor":
        out = object.__new__(SparseTensor)
        out.dims = self.dims
        out.subs = self.subs[mask]
        out.vals = self.vals[mask]
        out.subs.setflags(write=False)
        out.vals.setflags(write=False)
        out.null_index = self.null_index
        return out

    def to_dense(self, cap: int = 10**8) -> np.ndarray:
        if self.size > cap:
            raise MemoryError(f"dense tensor of {self.size} cells exceeds cap {cap}")
        out = np.zeros(self.dims)
        out[tuple((self.subs - 1).T)] = self.vals
        return out

    # --- matricization -------------------------------------------------

    def _check_subset(self, modes: Sequence[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
        t = self.index(modes).modes
        if not t:
            raise ValueError("mode subset must be nonempty")
        return t, complement(t, self.order)

    def matricize_columns(self, modes: Iterable[int], col: int) -> dict[int, float]:
        """Column ``col`` of the matricization with rows over ``modes``.

        Returns a map from row linear index (over ``modes``) to value.
        """
        t, tc = self._check_subset(modes)
        cidx = self.index(tc)
        if not 1 <= int(col) <= cidx.size:
            raise IndexError(f"column {col} out of range 1..{cidx.size}")
        mask = np.ones(self.nnz, dtype=bool)
        for m, i in zip(tc, cidx.decode(col)):
            mask &= self.subs[:, m - 1] == i
        ridx = self.index(t)
        rows = self.sub_tuples(t)[mask]
        return {ridx.encode(r): float(v) for r, v in zip(rows, self.vals[mask])}

    def restrict_tuples(self, modes: Sequence[int], cols: np.ndarray) -> "SparseTensor":
        """Keep entries whose multi-index over the complement of ``modes``
        is one of the rows of ``cols``."""
        t, tc = self._check_subset(modes)
        if not tc:
            return self
        cols = np.asarray(cols, dtype=np.int64).reshape(-1, len(tc))
        if len(cols) == 0:
            return self._take(np.zeros(self.nnz, dtype=bool))
        sizes = [self.dims[m - 1] for m in tc]
        ec, qc = tuple_codes([self.sub_tuples(tc), cols], sizes)
        return self._take(np.isin(ec, qc))

    def restrict(self, modes: Iterable[int], cols: Iterable[int]) -> "SparseTensor":
        """Keep entries whose complement-of-``modes`` linear index is in ``cols``."""
        t, tc = self._check_subset(modes)
        if not tc:
            return self
        cidx = self.index(tc)
        tuples = np.array([cidx.decode(q) for q in cols], dtype=np.int64).reshape(-1, len(tc))
        return self.restrict_tuples(t, tuples)

    def compact_matricization(self, modes: Sequence[int]):
        """Matricization restricted to its nonzero rows and columns.

        Returns
        -------
        matrix : scipy.sparse.csr_matrix, shape (m, n)
        row_tuples : ndarray, shape (m, |modes|)
            Multi-indices of the nonzero rows, in colexicographic order.
        col_tuples : ndarray, shape (n, d - |modes|)
            Multi-indices of the nonzero columns, in colexicographic order.
        """
        t, tc = self._check_subset(modes)
        rows = self.sub_tuples(t)
        cols = self.sub_tuples(tc)
        (rc,) = tuple_codes([rows], [self.dims[m - 1] for m in t])
        (cc,) = tuple_codes([cols], [self.dims[m - 1] for m in tc])
        ru, rfirst, rinv = np.unique(rc, return_index=True, return_inverse=True)
        cu, cfirst, cinv = np.unique(cc, return_index=True, return_inverse=True)
        mat = sp.csr_matrix(
            (self.vals, (rinv.ravel(), cinv.ravel())), shape=(len(ru), len(cu))
        )
        return mat, rows[rfirst], cols[cfirst]

    def column_fibers(self, modes: Sequence[int], cols: np.ndarray) -> sp.csr_matrix:
        """Columns ``cols`` (complement tuples) of the matricization over
        ``modes`` as a sparse ``|I_t| x len(cols)`` matrix.

        Values are copied verbatim from the stored entries.
        """
        t, tc = self._check_subset(modes)
        size = self.index(t).size
        if size > _CODE_LIMIT:
            raise OverflowError(f"row index space of modes {t} too large for a sparse matrix")
        cols = np.asarray(cols, dtype=np.int64).reshape(-1, len(tc))
        sub = self.restrict_tuples(t, cols)
        pos = match_rows(sub.sub_tuples(tc), cols, [self.dims[m - 1] for m in tc])
        (rc,) = tuple_codes([sub.sub_tuples(t)], [self.dims[m - 1] for m in t])
        return sp.csr_matrix((sub.vals.copy(), (rc, pos)), shape=(size, len(cols)))


# --- text format -----------------------------------------------------------


def _fmt_value(v: float) -> str:
    if v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(v)


def write_tensor(tensor: SparseTensor, path) -> None:
    """Write the line-oriented text format.

    ``dims: n1 ... nd`` header, an optional ``null: k`` line, then one line
    ``i1 ... id value`` per nonzero.
    """
    lines = ["dims: " + " ".join(str(n) for n in tensor.dims)]
    if tensor.null_index is not None:
        lines.append(f"null: {tensor.null_index}")
    for row, v in zip(tensor.subs.tolist(), tensor.vals.tolist()):
        lines.append(" ".join(map(str, row)) + " " + _fmt_value(v))
    Path(path).write_text("\n".join(lines) + "\n")


def read_tensor(path) -> SparseTensor:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("dims:"):
        raise TensorFormatError(f"{path}: missing 'dims:' header")
    try:
        dims = [int(x) for x in text[0][5:].split()]
    except ValueError as exc:
        raise TensorFormatError(f"{path}: bad dims header: {exc}") from None
    d = len(dims)
    if d == 0:
        raise TensorFormatError(f"{path}: empty dims header")
    null_index = None
    body = text[1:]
    if body and body[0].startswith("null:"):
        null_index = int(body[0][5:])
        body = body[1:]
    subs = np.zeros((len(body), d), dtype=np.int64)
    vals = np.zeros(len(body))
    n = 0
    for lineno, line in enumerate(body, start=2):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) != d + 1:
            raise TensorFormatError(f"{path}:{lineno}: expected {d + 1} fields, got {len(parts)}")
        try:
            subs[n] = [int(x) for x in parts[:d]]
            vals[n] = float(parts[d])
        except ValueError as exc:
            raise TensorFormatError(f"{path}:{lineno}: {exc}") from None
        n += 1
    return SparseTensor(dims, subs[:n], vals[:n], null_index=null_index)
