"""Independent reference implementations used as test oracles.

Deliberately naive: linear scans, exact rational arithmetic and explicit
loops, sharing no code with the package.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def brute_knn(points, query, k, exclude=None):
    """Indices of the k nearest points; ties by ascending index."""
    pts = np.asarray(points, dtype=float)
    q = np.asarray(query, dtype=float)
    cand = []
    for i, p in enumerate(pts):
        if i == exclude:
            continue
        cand.append((math.sqrt(sum((a - b) ** 2 for a, b in zip(p, q))), i))
    cand.sort()
    return [i for _, i in cand[:k]], [d for d, _ in cand[:k]]


def sort_cumulate_quantile(values, weights, p):
    """min{v : sum of weights at values <= v >= p * total}, in exact arithmetic."""
    pairs = sorted(zip(values, weights), key=lambda t: t[0])
    total = sum(Fraction(w) for w in weights)
    # p is read as the decimal it denotes (0.1 means 1/10, not the nearest double)
    target = Fraction(repr(float(p))) * total
    if p <= 0:
        return min(v for v, w in zip(values, weights) if w > 0)
    acc = Fraction(0)
    for v, w in pairs:
        acc += Fraction(w)
        if acc >= target:
            return v
    return pairs[-1][0]


def order_statistic(values, rank):
    """rank-th smallest value (1-based)."""
    return sorted(values)[rank - 1]


def bessel_k_quadrature(nu, x, upper=None, n=200000):
    """K_nu(x) from its integral representation by composite Simpson's rule."""
    if upper is None:
        upper = math.acosh(max(1.0, 50.0 / x)) + 10.0
    h = upper / n
    def f(t):
        return math.exp(-x * math.cosh(t)) * math.cosh(nu * t)
    s = f(0.0) + f(upper)
    for i in range(1, n):
        s += (4 if i % 2 else 2) * f(i * h)
    return s * h / 3.0


def k_half_integer(nu, x):
    """Closed forms for K at orders 1/2, 3/2, 5/2."""
    base = math.sqrt(math.pi / (2 * x)) * math.exp(-x)
    if nu == 0.5:
        return base
    if nu == 1.5:
        return base * (1 + 1 / x)
    if nu == 2.5:
        return base * (1 + 3 / x + 3 / x**2)
    raise ValueError(nu)


def normal_quantile_sample(n):
    """Deterministic symmetric sample: standard normal quantiles at (i - 0.5)/n."""
    from statistics import NormalDist
    nd = NormalDist()
    return np.array([nd.inv_cdf((i - 0.5) / n) for i in range(1, n + 1)])
