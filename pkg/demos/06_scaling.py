"""Cost of growing inputs, written out as CSV."""

from sparse_htucker import SynthProfile, build_cooccurrence_tensor, scaling_run, synth_events
from sparse_htucker.eval import loglog_slope, write_reports

series = []
for records in (2300, 4800, 10200, 24000):
    profile = SynthProfile(modes=6, elements=200, records=records)
    series.append((build_cooccurrence_tensor(synth_events(profile, seed=3)), None, 0.6))

reports = scaling_run(series, seed=0)
for r in reports:
    print(f"nnz {r.nnz:>6}  time {r.wall_time * 1e3:6.1f} ms  sampled error {r.value:8.2f}  {r.status}")
print("log-log slope", loglog_slope([r.nnz for r in reports], [r.wall_time for r in reports]))

write_reports(reports, "/tmp/demo_scaling.csv")
print(open("/tmp/demo_scaling.csv").read().splitlines()[0])
