"""Count group operations per algorithm and compare with the reference table."""

from groupdiscount.harness.bench import bench_opcounts

report = bench_opcounts()
print(report.format())

print("\nComb at n=10 as the group grows:")
for t, counts in report.comb_sweep[10]:
    print(f"  t={t:>2}  mult={counts[0]:>2}  exp={counts[1]:>2}")
