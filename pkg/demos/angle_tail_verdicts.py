"""When does the angle between the two invariant directions degenerate?

For i.i.d. products with two distinct exponents the splitting exists
almost surely, but its angle can have arbitrarily heavy tails.  Two
contrasting families:

  * a triangular family with heavy-tailed upper entry pushes the two
    directions together so hard that E[-log sin(gap)] diverges: the
    truncated means keep growing as the cutoff rises;
  * a rotation-times-gain family spreads the directions smoothly, the
    truncated means stabilize almost immediately.

The report's verdict is just that comparison plus error bars.
"""

import numpy as np

from oseledets import scalars
from oseledets.cocycle import rotgain_distribution
from oseledets.estimation import (
    angle_tail_report,
    angle_tail_report_neglog,
    build_counterexample_cocycle,
    oseledets_angle_samples,
    triangular_gap_neglog_samples,
)

THRESHOLDS = (4.0, 8.0, 16.0, 32.0, 64.0)


def show(tag, report):
    print(f"{tag}: verdict = {report.verdict}")
    for m, mean, se in zip(report.thresholds, report.truncated_means, report.stderrs):
        print(f"  cutoff {m:5.0f}: truncated mean {mean:8.4f} +- {se:.4f}")


# heavy tail: -log sin(gap) sampled in the log domain, so the enormous
# matrix entries (up to e^(2^26)) never have to be materialized
grow = build_counterexample_cocycle()
v = triangular_gap_neglog_samples(grow, 80_000, seed=3)
show("heavy-tailed family", angle_tail_report_neglog(v, THRESHOLDS))
print(f"  largest sampled -log sin(gap): {v.max():.3g}")

print()

# control: uniform rotation times a fixed gain; both directions are
# uniform on the circle of lines, so the tail is integrable
calm = rotgain_distribution(scalars.uniform(0.0, np.pi), scalars.constant(1.0))
s = oseledets_angle_samples(calm, 80_000, 200, seed=3)
show("rotation-gain control", angle_tail_report(s, THRESHOLDS))
print(f"  smallest sampled gap angle: {s.min():.3g} rad")
