"""Monte Carlo over the disorder with exact enumeration per sample.

Run: python3 demos/05_disorder_mc.py
"""

import math

from pspin_replica import ModelParams
from pspin_replica.disorder import energy_variance_check, moment_mc, tilted_overlap_law_mc
from pspin_replica.oracle import annealed_moment_exact, tilted_overlap_distribution

params = ModelParams.create(p=2, beta=0.3, h=0.1, a=2)
N = 10

print("energy covariance check:", energy_variance_check(N, params, seed=0, n_samples=200))

# a = 1 has a closed form; a = 2 is compared with the exact oracle.
truth1 = math.log(2) + math.log(math.cosh(params.h)) + params.beta ** 2 / 2
est1 = moment_mc(N, 1.0, 400, 0, params)
print(f"a = 1: {est1.mean:.6f} +- {est1.stderr:.6f}, exact {truth1:.6f}")
truth2 = annealed_moment_exact(N, 2, params)
est2 = moment_mc(N, 2.0, 400, 0, params, threads=4)
print(f"a = 2: {est2.mean:.6f} +- {est2.stderr:.6f}, exact {truth2:.6f}, ESS {est2.ess:.0f}")

# The same seed gives the same numbers whatever the thread count.
assert moment_mc(N, 2.0, 100, 3, params, threads=1).mean == moment_mc(N, 2.0, 100, 3, params, threads=8).mean

exact = tilted_overlap_distribution(N, params)
ks, ests = tilted_overlap_law_mc(N, 2.0, 400, 0, params)
print("\n  k    MC prob              exact")
for k, e in zip(ks, ests):
    if (k - N) % 2 == 0:
        print(f"{k:+3d}  {e.mean:.5f} +- {e.stderr:.5f}   {exact.probs[k + N]:.5f}")
