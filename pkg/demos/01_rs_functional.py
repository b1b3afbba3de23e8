"""The replica-symmetric functional: its shape in q, its maximizer, and how the maximum moves with a.

Run: python3 demos/01_rs_functional.py
"""

import numpy as np

from pspin_replica import ModelParams
from pspin_replica.rs import critical_points, rs_in_a_scan, rs_maximize, rs_values

params = ModelParams.create(p=2, beta=0.8, h=0.3, a=2.5)

# A coarse look at RS(q). The curve is smooth because one quadrature order is
# fixed per parameter set.
qs = np.linspace(0, 1, 11)
for q, v in zip(qs, rs_values(qs, params)):
    print(f"RS({q:.1f}) = {v:.10f}")

rep = rs_maximize(params, with_critical_points=True)
print(f"\nmaximizer q0 = {rep.q0:.12f}, RS(q0) = {rep.value:.12f}, unique = {rep.unique_max}")
print("critical points (q, residual of the fixed-point equation):")
for q, r in critical_points(params):
    print(f"  q = {q:.12f}   residual = {r:+.1e}")

# a = 1 is the annealed case: RS does not depend on q, so every q is a maximizer.
flat = rs_maximize(params.replace(a=1.0))
print(f"\na = 1: unique = {flat.unique_max}, reported q0 = {flat.q0}, value = {flat.value:.12f}")

print("\nmaximum as a function of a (second differences are a convexity diagnostic):")
for row in rs_in_a_scan(params, [1.0, 1.5, 2.0, 2.5, 3.0, 3.5]):
    print(f"  a = {row['a']:.1f}  q0 = {row['q']:.6f}  RS = {row['value']:.10f}  d2 = {row['second_difference']:+.3e}")
