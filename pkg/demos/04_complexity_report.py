"""Layer-by-layer parameter and FLOPs accounting for all four variants.

The counter is closed-form (it never runs the network) and is verified in
the test suite against an instrumented multiply-add tally.  Convention:
one multiply-add = 2 flops.
"""

from ldrpmnet.complexity import count
from ldrpmnet.model import MODEL_PRESETS, build_preset

reports = {}
for method in ("cnt", "cnt-mdsc", "cnt-bsa", "ld-rpmnet"):
    reports[method] = count(build_preset(method))

# full breakdown for the lightweight variant
print("ld-rpmnet, default configuration:")
print(reports["ld-rpmnet"].to_text())

# four-way summary
print("\nmethod      conv       attn    params(M)  flops(M)")
for method, report in reports.items():
    conv, attn = MODEL_PRESETS[method]
    pm, fm = report.totals_millions
    print(f"{method:<11} {conv:<10} {attn:<7} {pm:>8.3f} {fm:>9.2f}")

p_ld, f_ld = reports["ld-rpmnet"].totals
p_cnt, f_cnt = reports["cnt"].totals
print(f"\nld-rpmnet vs cnt: params x{p_ld / p_cnt:.3f}, "
      f"flops x{f_ld / f_cnt:.3f}")
