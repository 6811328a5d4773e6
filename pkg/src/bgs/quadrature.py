"""Quadrature rules on the reference triangle and the unit interval.

The triangle rule is the 7-point degree-5 rule (exact for the quartic
products of quadratic basis functions and for the degree-5 advection
integrand); the edge rule is 4-point Gauss-Legendre (degree 7).
"""

from __future__ import annotations

import numpy as np


def triangle_rule():
    """7-point degree-5 rule on the reference triangle (0,0)-(1,0)-(0,1).

    Returns (points, weights): points (7, 2) in reference coordinates,
    weights (7,) normalized to sum to 1.  Element contributions are
    ``area * sum(w_q * f(x_q))``.
    """
    s15 = np.sqrt(15.0)
    r_in = (6.0 + s15) / 21.0     # repeated coordinate, interior group
    r_out = (6.0 - s15) / 21.0    # repeated coordinate, vertex-heavy group
    w_in = (155.0 + s15) / 1200.0
    w_out = (155.0 - s15) / 1200.0

    bary = [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)]
    weights = [9.0 / 40.0]
    for r, w in ((r_in, w_in), (r_out, w_out)):
        x = 1.0 - 2.0 * r
        for lam in ((x, r, r), (r, x, r), (r, r, x)):
            bary.append(lam)
            weights.append(w)

    bary = np.array(bary)
    points = bary[:, 1:3]  # (lambda_1, lambda_2) -> (xi, eta)
    return points, np.array(weights)


def edge_rule(n: int = 4):
    """n-point Gauss-Legendre rule mapped to [0, 1]; weights sum to 1."""
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1.0), 0.5 * w
