#!/usr/bin/env python3
"""The smallness inequalities that gate every construction.

Backward uniqueness needs the one-interval map to stay injective; the
manifold iteration needs its decay budget, contraction factor and
iterate-Lipschitz conditions; the bounded-solution iteration needs
2KL/sigma < 1; the off-manifold growth estimates need the cone-trapping
condition.  All are explicit formulas, so we can sweep the Lipschitz
constant and watch each verdict flip exactly once.
"""

import numpy as np

from epcag_lab import check_backward_uniqueness, check_smallness

print("backward uniqueness for mu = 1, theta = 1, sweeping the Lipschitz l:")
for l in (0.0, 0.01, 0.05, 0.1, 0.2):
    chk = check_backward_uniqueness(1.0, l, 1.0)
    verdict = "holds" if chk.holds else "FAILS"
    print(f"  l = {l:5.2f}: lhs = {chk.lhs:8.5f}  rhs = {chk.rhs:.5f}  {verdict}")

print("\nsmallness report for K=1, sigma=1, alpha=1/2, theta=1, eps=1:")
for L in (0.02, 0.06, 0.1, 0.3, 0.6):
    rep = check_smallness(K=1.0, sigma=1.0, alpha=0.5, theta=1.0, L=L, eps=1.0)
    flips = " ".join(f"{c.name}={'ok' if c.holds else 'NO'}" for c in rep.checks)
    print(f"  L = {L:4.2f}: {flips}")

print("\nthe contraction threshold itself:")
rep = check_smallness(K=1.0, sigma=1.0, alpha=0.5, theta=1.0, L=0.0, eps=1.0)
print(f"  L must stay below {rep['contraction'].rhs:.6f}")

print("\nmargins are monotone in L:")
Ls = np.linspace(0.0, 0.12, 7)
for L in Ls:
    rep = check_smallness(1.0, 1.0, 0.5, 1.0, float(L), 1.0)
    print(f"  L = {L:5.3f}: contraction margin = {rep['contraction'].margin: .5f}")
