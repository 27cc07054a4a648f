"""Window-size sweet spot on the quadratic model.

Sweeps the window size k over powers of two, then prints three things per k:
the Monte-Carlo excess risk, the exact expectation and the upper bound.
The measured minimum should sit where the exact curve bottoms out, near the
continuous optimum (sigma^2 / beta^2 eta^2)^(1/3).

    python3 demos/sweet_spot.py [eta] [sigma]
"""

import sys

from stream_ttt.theory import optimal_k, theorem_sweep

eta = float(sys.argv[1]) if len(sys.argv) > 1 else 0.02
sigma = float(sys.argv[2]) if len(sys.argv) > 2 else 1.0
grid = [2 ** i for i in range(9)]

reports = theorem_sweep(1.0, 1.0, eta, sigma, grid, trials=500, d=8, seed=1)
print(f"{'k':>4} {'measured':>10} {'+-':>8} {'exact':>10} {'bound':>10}")
for r in reports:
    print(f"{r.k:>4} {r.measured_mean:10.5f} {r.measured_stderr:8.5f} "
          f"{r.oracle_expectation:10.5f} {r.bound:10.5f}")

best = min(reports, key=lambda r: r.measured_mean)
exact = min(reports, key=lambda r: r.oracle_expectation)
kstar = optimal_k(1.0, 1.0, eta, sigma)
print(f"\nmeasured argmin k={best.k}, exact argmin k={exact.k}, "
      f"bound optimum k*={kstar.continuous:.2f} (integer {kstar.integer})")
