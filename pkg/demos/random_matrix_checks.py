"""
Random-matrix identities behind the prediction
==============================================

Monte Carlo checks of the two Gaussian facts the error formula uses, plus
the equivalence of the CoCoA iteration with its closed form.
"""

from cocoagen import PartitionSpec
from cocoagen.harness import (
    validate_closed_form,
    validate_projection_expectation,
    validate_wishart_moment,
)

# E[C^+ C] is min(n, p_c)/p_c times the identity
for n, p_c in ((50, 75), (50, 10), (1, 2)):
    rep = validate_projection_expectation(n, p_c, trials=1000)
    print(f"projection n={n} p_c={p_c}: {rep.empirical_mean:.4f} vs {rep.analytic:.4f}  pass={rep.passed}")

# E[(A A^T)^+] is a multiple of the identity
rep = validate_wishart_moment(50, 75, trials=500)
print(f"pinv-Wishart diag mean {rep.empirical_mean:.5f} vs {rep.analytic:.5f}  pass={rep.passed}")

# near p_k = n the running mean keeps growing instead of settling
demo = validate_wishart_moment(50, 50, trials=500, demo=True)
print("critical running means:", {t: round(v, 3) for t, v in demo.details["running_diag_mean"].items()})

rep = validate_closed_form(30, 60, PartitionSpec(60, (20, 40)), T=30, trials=10)
print(f"iterative vs closed form, worst relative gap {rep.empirical_mean:.2e}")
