"""From event records to a factorized model."""

from sparse_htucker import (
    SynthProfile,
    balanced_tree,
    build_cooccurrence_tensor,
    factorize,
    frobenius_error,
    sampled_nnz_error,
    synth_events,
)

# Synthetic records standing in for patients: 4 modes, 40 elements each
profile = SynthProfile(modes=4, elements=40, records=3000, noise=0.5)
events = synth_events(profile, seed=1)
print(len(events.records), "records,", events.n_events, "events")

# Each record adds 1 to every combination of its elements, one per mode.
# Element 1 of each mode is "nothing recorded here".
tensor = build_cooccurrence_tensor(events)
print(tensor.dims, tensor.nnz, "nonzeros")

tree = balanced_tree(4)
print(tree.to_nested())                # ((1, 2), (3, 4))

model = factorize(tensor, tree, epsilon=0.6, seed=42)
for nid in tree.preorder():
    node = tree[nid]
    kind = "leaf" if node.is_leaf else "transfer"
    print(nid, node.modes, kind, "rank", model.rank(nid))
print("stored numbers:", model.storage_size())

print("full error   ", frobenius_error(tensor, model))
print("sampled error", sampled_nnz_error(tensor, model, sample_size=2000))
print("tensor norm  ", tensor.norm())

# Keeping every fiber gives an exact (and large) factorization
small = build_cooccurrence_tensor(synth_events(SynthProfile(elements=8, records=80), seed=2))
exact = factorize(small, exhaustive=True)
print("exhaustive error", frobenius_error(small, exact))
