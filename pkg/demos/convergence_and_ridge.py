"""
Interpolation versus generalization after many rounds
=====================================================

With lam = 0 CoCoA drives the training error to round-off for every
partition, yet the test error near p_k = n is orders of magnitude larger.
A little ridge regularization removes most of that spike.
"""

from cocoagen import SweepConfig, run_centralized_baseline, run_convergence_sweep

grid = [(p1, 150 - p1) for p1 in (25, 50, 75, 100)]
cfg = SweepConfig(partition_grid=grid, lambdas=[0.0, 1e-4, 1.0], N=10, T=100,
                  record_first_iteration=False)

print("    sizes     lambda   train err    gen err")
for r in run_convergence_sweep(cfg):
    print(f"{'|'.join(map(str, r.sizes)):>9}  {r.lam:9.1e}  {r.train_error:10.3g}  {r.gen_error:10.4g}")

base = run_centralized_baseline(SweepConfig(N=20))
print(f"\ncentralized A^+ y: train {base.train_error:.3g}, "
      f"||x - x_hat||^2 {base.population_gen_error:.4g}, (1 - n/p)||x||^2 {base.reference:.4g}")
