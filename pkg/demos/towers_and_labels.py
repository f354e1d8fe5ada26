"""Skyscraper towers: return times, stationary occupancy, and labels.

A tower vector assigns mass to floors-per-tower; dividing each tower's
mass by its height gives the base (return) measure, and the product of
height and base mass sums back to one.  A stationary renewal walk climbs
each tower floor by floor; labeling a floor by its distance to the
nearer end makes the label sequence move at most one step at a time,
with closed-form occupancy.
"""

import math

import numpy as np

from oseledets import skyscraper

# three label weights, strictly decreasing -> towers of heights 1, 4, 6
p = (0.75, 0.2, 0.05)
pi = skyscraper.bounded_tower_vector(p)
print(f"label weights {p} -> tower vector {pi.entries}")

base = skyscraper.kac_base_measures(pi)
print("base measures (mass / height):")
for k, m in base.items():
    print(f"  height {k}: base mass {m:.6f}, height * base = {k * m:.6f}")
total = math.fsum(k * m for k, m in base.items())
print(f"sum of height * base over towers = {total:.12f}")

print("\nstationary walk, one million steps:")
heights, levels = skyscraper.renewal_trajectory(pi, 1_000_000, seed=5)
for k, mass in pi.entries.items():
    frac = float(np.mean(heights == k))
    print(f"  fraction of time in tower {k}: {frac:.4f} (stationary {mass:.4f})")

labels = skyscraper.trajectory_labels(heights, levels)
print(f"\nlabel jumps: max |change per step| = {int(np.abs(np.diff(labels)).max())}")
want = skyscraper.label_measures(p)
for n, mass in enumerate(p):
    frac = float(np.mean(labels == n))
    print(f"  label {n}: occupancy {frac:.4f} (closed form {want[n]:.4f})")

# picking tower heights against a cost schedule: tall enough that the
# two label changes per climb amortize below any requested budget
costs = [0.3, 0.8, 1.0, 1.1]
for eps in (0.5, 0.1, 0.02):
    ks = skyscraper.lowcost_heights(costs, eps)
    worst = max(2.0 * c / k for c, k in zip(costs, ks))
    print(f"epsilon {eps:5.2f}: heights {ks} (worst amortized cost {worst:.4f})")
