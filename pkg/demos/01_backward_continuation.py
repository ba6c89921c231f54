#!/usr/bin/env python3
"""Backward continuation can fail or branch.

The scalar problem x' = 2x - x(beta(t))^2 on the unit grid is the
cleanest demonstration: the one-interval shooting map is a downward
parabola, so a target value above its maximum has no preimage and every
value below it has two.  This script walks through both phenomena and
shows the collision identity that makes the backward branch ambiguous.
"""

import math

import numpy as np

from epcag_lab import back_continue, back_continue_interval, get_problem, solve_forward

spec = get_problem("paper-example-1")
e2 = math.exp(2.0)

print("forward orbit from x(0) = 1:")
path = solve_forward(spec, 0.0, [1.0], 3.0)
for t, y in zip(*path.at_knots()):
    print(f"  x({t:g}) = {y[0]: .6f}")
print("closed form at t=1:", e2 - (e2 - 1) / 2)

print("\npreimages of selected targets at t = 1 (interval [0, 1]):")
for z in (0.0, 2.0, 4.0, 4.5, 6.0):
    ps = back_continue_interval(spec, 0, 1.0, [z], substeps=128)
    roots = ", ".join(f"{p[0]:.6f}" for p in ps.preimages)
    print(f"  z = {z:4.1f}: {ps.classification:8s} {roots}")
print("solvability threshold e^4 / (2(e^2-1)) =",
      e2 ** 2 / (2 * (e2 - 1)))

print("\ntwo distinct starts that collide after one interval:")
s = 2 * e2 / (e2 - 1)
x0, x1 = 0.6, s - 0.6
p0 = solve_forward(spec, 0.0, [x0], 1.0).ys[-1][0]
p1 = solve_forward(spec, 0.0, [x1], 1.0).ys[-1][0]
print(f"  x0 = {x0}, x1 = {x1:.6f} (sum = 2e^2/(e^2-1))")
print(f"  both reach {p0:.9f} vs {p1:.9f} (gap {abs(p0 - p1):.2e})")

print("\nchained backward continuation from (1, 0):")
res = back_continue(spec, 1.0, [0.0], 0.0, substeps=128)
print("  reached t = 0 with x =", res.path.ys[0][0])
for flag in res.flags:
    print("  note:", flag)

print("\na target with no preimage dies immediately:")
res = back_continue(spec, 1.0, [6.0], 0.0)
print("  ok =", res.ok, "| failed at interval", res.failed_interval)
