"""
Denoiser comparison table
=========================

Run every filter over the standard grating fixture at four noise levels
and print MESR per cell, raw stream first.
"""

import io
import sys

from evdn import BenchmarkPlan, InputSource, emit_report, run_benchmark
from evdn.bench import standard_fixture
from evdn.filters import DENOISERS

plan = BenchmarkPlan(
    inputs=(InputSource("grating", scene=standard_fixture()),),
    filters=tuple((fid, None) for fid in ("identity", *DENOISERS)),
    seed=0,
)
report = run_benchmark(plan)

# pivot: one row per filter, one column per noise level
levels = plan.noise_levels
print("filter   " + "".join(f"rho={r:<6g}" for r in levels))
for fid, _ in plan.filters:
    row = [report.cell("grating", r, fid).mesr for r in levels]
    print(f"{fid:<9}" + "".join(f"{v:<10.4f}" if v is not None else f"{'-':<10}" for v in row))

# the same numbers as a machine-readable CSV
buf = io.StringIO()
emit_report(report, "csv", buf)
sys.stdout.write("\n" + buf.getvalue())
