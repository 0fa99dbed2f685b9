"""
Choosing block sizes
====================

``advise_partition`` keeps every block away from the number of observations
and prefers balanced splits among those that qualify.
"""

from cocoagen import advise_partition

for n, p, K in ((50, 150, 2), (50, 100, 2), (40, 200, 4), (10, 11, 1)):
    adv = advise_partition(n, p, K)
    tag = "ok" if adv.feasible else "no safe split"
    print(f"n={n:3d} p={p:3d} K={K}: {adv.spec.sizes}  proxy {float(adv.score):.4g}  [{tag}]")
