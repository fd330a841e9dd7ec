"""Reading concepts off the leaf factors."""

from sparse_htucker import SynthProfile, build_cooccurrence_tensor, factorize, synth_events

# Two planted groups: records of group 0 only use elements 0..3 of every mode,
# records of group 1 only elements 4..7.
profile = SynthProfile(modes=4, elements=12, records=400, blocks=2, block_elements=4, noise=0.0, mode_prob=1.0)
events = synth_events(profile, seed=11)
tensor = build_cooccurrence_tensor(events)
model = factorize(tensor, epsilon=0.6, seed=42)

report = model.concept_report(top_n=3)
labels = events.tensor_labels(events.modes)
for nid, mode, concept, items in report.leaf_concepts[:8]:
    names = [labels[(mode, e)] for e, _ in items]
    groups = {profile.block_of(e - 2) for e, _ in items if e != 1}
    print(f"leaf {nid} concept {concept}: {names} -> group {groups}")

# Strongest child pairs per slice of the transfer tensors
for nid, slice_, pairs in report.interactions[:4]:
    print("node", nid, "slice", slice_, pairs)

report.to_csv("/tmp/demo_concepts.csv")
print(open("/tmp/demo_concepts.csv").read().splitlines()[:4])
