"""Tree shape and sampling accuracy."""

from sparse_htucker import (
    SynthProfile,
    balanced_tree,
    build_cooccurrence_tensor,
    data_driven_tree,
    epsilon_sweep,
    synth_events,
)

# Modes 1-3 are busy, modes 4-6 rare: their incidence patterns differ
profile = SynthProfile(modes=6, elements=20, records=3000, mode_probs=(0.9, 0.9, 0.9, 0.1, 0.1, 0.1))
tensor = build_cooccurrence_tensor(synth_events(profile, seed=4))

print("balanced   ", balanced_tree(6).to_nested())
print("complete   ", data_driven_tree(tensor, "complete").to_nested())
print("average    ", data_driven_tree(tensor, "average").to_nested())

# Smaller epsilon samples more fibers: slower, more accurate
small = build_cooccurrence_tensor(synth_events(SynthProfile(modes=4, elements=25, records=2000), seed=5))
for row in epsilon_sweep(small, None, (1.0, 0.6, 0.3), seeds=range(5)):
    print(f"eps {row['epsilon']:.1f}: error {row['mean_error']:.2f}  time {row['mean_time'] * 1e3:.1f} ms")
