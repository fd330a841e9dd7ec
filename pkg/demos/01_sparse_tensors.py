"""Coordinate tensors, unfoldings and index restriction."""

import numpy as np

from sparse_htucker import SparseTensor, read_tensor, write_tensor

# A 2x2x2 tensor whose entries, read colexicographically, are 1..8.
coords = {
    (1, 1, 1): 1, (2, 1, 1): 3, (1, 2, 1): 2, (2, 2, 1): 4,
    (1, 1, 2): 5, (2, 1, 2): 7, (1, 2, 2): 6, (2, 2, 2): 8,
}
t = SparseTensor.from_coords([2, 2, 2], coords)
print(t)                              # dims, nnz
print(t.size, t.norm())               # logical size is an exact int

# Unfold with rows over modes {1,2}; column 1 is the slice where mode 3 == 1.
# Row indices are colexicographic: mode 1 moves fastest.
print(t.matricize_columns([1, 2], 1))  # rows 1..4 hold 1, 3, 2, 4

# Keep only entries whose complement index (mode 3) is in {1}
r = t.restrict([1, 2], [1])
print(r.nnz, sorted(r.vals.tolist()))  # 4 [1.0, 2.0, 3.0, 4.0]

# Only the nonzero rows and columns of an unfolding are ever materialized
mat, rows, cols = t.compact_matricization([1])
print(mat.shape, rows.ravel(), cols.tolist())

# Duplicates add up, cancellations vanish
print(SparseTensor([2, 2], [[1, 2], [2, 1], [1, 2]], [1, -1, -1]).vals)

# Huge logical shapes are fine as long as the nonzeros are few
big = SparseTensor([10**5] * 6, np.ones((1, 6), dtype=int), [2.0])
print(f"{big.size:.3e} cells, {big.nnz} stored")

# Text round trip
write_tensor(t, "/tmp/demo_tensor.tns")
print(open("/tmp/demo_tensor.tns").read().splitlines()[:3])
assert read_tensor("/tmp/demo_tensor.tns") == t
