"""Gauss-Hermite expectations, checked against closed forms.

Run: python3 demos/02_gaussian_expectations.py
"""

import math

import numpy as np

from pspin_replica.gaussian import expect_nd, log_expect_cosh_power

# E ch^2(z + h) with z ~ N(0, s^2) equals (1 + e^{2 s^2} ch 2h) / 2.
for s, h in [(0.3, 0.0), (1.0, 0.5), (2.0, -1.0)]:
    exact = math.log((1 + math.exp(2 * s * s) * math.cosh(2 * h)) / 2)
    got = log_expect_cosh_power(2.0, s * s, h)
    print(f"s={s}, h={h}: log E ch^2 = {got:.15f}  (closed form {exact:.15f})")

# Fractional powers have no closed form. Increasing the rule order shows the convergence.
for order in (16, 32, 64, 128):
    print(f"order {order:3d}: log E ch^2.5(z + 0.2), var 3 = {log_expect_cosh_power(2.5, 3.0, 0.2, order, adaptive=False):.15f}")

# A rank-one covariance: the rule runs on its one-dimensional range.
u = np.array([0.6, -0.8])
C = np.outer(u, u)
val = expect_nd(lambda z: np.exp(z[:, 0] + z[:, 1]), C)
print(f"\nE exp(z1 + z2), rank-one C: {val:.15f}  (closed form {math.exp(0.5 * (u.sum()) ** 2):.15f})")
