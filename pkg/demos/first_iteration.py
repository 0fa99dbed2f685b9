"""
First-iteration error across two-node partitions
================================================

Splits p = 150 unknowns between two nodes and compares the measured error
after one CoCoA round with the closed-form prediction. Splits that leave a
node with about as many columns as there are observations are the bad ones.
"""

from cocoagen import PartitionSpec, SweepConfig, predict_first_iteration_error, run_first_iteration_experiment
from cocoagen.harness import draw_x_true

n, p = 50, 150
x = draw_x_true(p, seed=0)

# prediction only: no sampling needed
for p1 in (25, 49, 50, 51, 75, 100):
    pred = predict_first_iteration_error(x, PartitionSpec(p, (p1, p - p1)), n)
    print(f"p1={p1:3d}  predicted {float(pred.epsilon_G):.4g}")

# a coarse sweep with 40 trials per cell
grid = [(p1, p - p1) for p1 in (10, 30, 50, 75, 120)]
rows = run_first_iteration_experiment(SweepConfig(n=n, p=p, partition_grid=grid, N=40))
print()
print(" p1   measured     +/- SE     theory")
for r in rows:
    print(f"{r.sizes[0]:3d}  {r.empirical_first_iter:10.4g}  {r.first_iter_se:9.3g}  {float(r.theory_first_iter):9.4g}")
