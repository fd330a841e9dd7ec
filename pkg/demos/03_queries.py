"""Element and block queries without rebuilding the tensor."""

import time

import numpy as np

from sparse_htucker import SynthProfile, build_cooccurrence_tensor, factorize, synth_events

profile = SynthProfile(modes=12, elements=30, records=6000, mode_prob=0.3)
tensor = build_cooccurrence_tensor(synth_events(profile, seed=3))
print(tensor.order, "modes,", tensor.nnz, "nonzeros,", f"{tensor.size:.2e} cells")

model = factorize(tensor, epsilon=0.6, seed=0)

# One cell touches one row per leaf factor
index = tuple(int(i) for i in tensor.subs[0])
t0 = time.perf_counter()
value = model.query_element(index)
print(index, "->", value, "(stored", tensor.vals[0], ")", f"{(time.perf_counter() - t0) * 1e3:.2f} ms")

# Many cells at once
approx = model.query_elements(tensor.subs[:1000])
print("rms error on 1000 nonzeros:", np.sqrt(np.mean((approx - tensor.vals[:1000]) ** 2)))

# A block: per-mode inclusive ranges, here 3 x 3 in the first two modes
block = model.query_block([(1, 3), (1, 3)] + [(1, 1)] * 10)
print(block.shape)
print(np.round(block.reshape(3, 3), 3))

# The whole tensor is far too large for a dense reconstruction
try:
    model.reconstruct_full()
except MemoryError as exc:
    print("refused:", exc)
