"""Error-free transformations used to get correctly rounded dot products.

``math.fsum`` rounds a sum of floats exactly once. Combined with an
error-free product split (Dekker/Veltkamp) this yields the correctly rounded
value of ``sum(a[i] * b[i])``, independent of term order. Energies built this
way are bit-reproducible and satisfy the discrete identities exactly whenever
the underlying real sums do.
"""

import math

import numpy as np

_SPLITTER = 134217729.0  # 2**27 + 1


def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def two_product(a, b):
    """Return ``(p, e)`` with ``p = fl(a*b)`` and ``p + e == a*b`` exactly."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    p = a * b
    ahi, alo = _split(a)
    bhi, blo = _split(b)
    e = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    return p, e


def product_terms(a, b):
    """Flat float array whose exact sum equals ``sum(a * b)``."""
    p, e = two_product(a, b)
    return np.concatenate([p.ravel(), e.ravel()])


def exact_dot(a, b):
    """Correctly rounded ``sum(a * b)``."""
    return math.fsum(product_terms(a, b))


def exact_sum(*parts):
    """Correctly rounded sum of several term arrays (each may be signed)."""
    if not parts:
        return 0.0
    return math.fsum(np.concatenate([np.ravel(p) for p in parts]))
