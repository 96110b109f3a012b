"""Cell-pair integrals of the kernel |z|^-(d+sigma) on a cubic lattice.

For two axis-aligned cubes of side 1 whose low corners differ by an integer
offset ``o``, the pair integral reduces to a single d-dimensional integral in
the difference variable ``z = y - x``:

    w(o) = int prod_i (1 - |z_i - o_i|)^+ |z|^-(d+sigma) dz

The tent weight is linear on each of the ``2^d`` unit sub-boxes of
``[o-1, o+1]``. Sub-boxes bounded away from the origin are integrated with
tensor Gauss-Legendre rules refined by dyadic bisection. Sub-boxes with a
corner at the origin carry the singularity; there the integrand splits into
monomials ``z^k |z|^-(d+sigma)`` that are homogeneous, and the integral over
the unit cube follows exactly from its 2^d - 1 non-corner children:

    I_k = S_k / (1 - 2^(sigma - |k|))

Weights at cell size ``h`` follow by scaling: ``w_h(o) = h^(d - sigma) w_1(o)``.
"""

import itertools
import math
from functools import lru_cache

import numpy as np

from .errors import DivergenceError

GL_ORDER = 8
MAX_DEPTH = 20


@lru_cache(maxsize=None)
def _tensor_rule(dim):
    x, w = np.polynomial.legendre.leggauss(GL_ORDER)
    nodes = np.array(list(itertools.product(x, repeat=dim)))
    weights = np.array([math.prod(c) for c in itertools.product(w, repeat=dim)])
    return nodes, weights


@lru_cache(maxsize=None)
def _child_shifts(dim):
    return np.array(list(itertools.product((0.0, 1.0), repeat=dim)))


def _gl(f, lo, hi):
    """Tensor Gauss-Legendre estimate on a batch of boxes of shape (B, d)."""
    nodes, weights = _tensor_rule(lo.shape[1])
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    pts = mid[:, None, :] + half[:, None, :] * nodes[None, :, :]
    return (f(pts) @ weights) * np.prod(half, axis=1)


def _children(lo, hi):
    dim = lo.shape[1]
    shifts = _child_shifts(dim)
    half = 0.5 * (hi - lo)
    clo = (lo[:, None, :] + shifts[None, :, :] * half[:, None, :]).reshape(-1, dim)
    return clo, clo + np.repeat(half, len(shifts), axis=0)


def adaptive_integral(f, lo, hi, rtol):
    """Integrate a positive smooth ``f`` over boxes by dyadic refinement.

    ``f`` maps points of shape (..., d) to values of shape (...). ``lo`` and
    ``hi`` have shape (B, d). Each box is bisected along every axis until the
    parent and summed-children estimates agree to ``rtol``.

    Returns
    -------
    total : float
        Sum of the integrals over all boxes.
    converged : bool
        False if some box was still unresolved at ``MAX_DEPTH``.
    """
    lo = np.atleast_2d(np.asarray(lo, dtype=float))
    hi = np.atleast_2d(np.asarray(hi, dtype=float))
    nchild = 2 ** lo.shape[1]
    coarse = _gl(f, lo, hi)
    accepted = []
    for _ in range(MAX_DEPTH):
        clo, chi = _children(lo, hi)
        child_vals = _gl(f, clo, chi).reshape(-1, nchild)
        fine = child_vals.sum(axis=1)
        ok = np.abs(fine - coarse) <= rtol * np.abs(fine)
        accepted.append(fine[ok])
        if ok.all():
            return math.fsum(np.concatenate(accepted)), True
        keep = np.repeat(~ok, nchild)
        lo, hi = clo[keep], chi[keep]
        coarse = child_vals[~ok].ravel()
    accepted.append(coarse)
    return math.fsum(np.concatenate(accepted)), False


def _kernel(sigma):
    def k(pts):
        return np.sum(pts * pts, axis=-1) ** (-0.5 * (pts.shape[-1] + sigma))
    return k


def _corner_monomial(k, sigma, rtol):
    """Integral of z^k |z|^-(d+sigma) over [0,1]^d via self-similarity."""
    dim = len(k)
    degree = sum(k)
    if degree - sigma <= 0:
        raise DivergenceError(
            f"cell self-interaction diverges for sigma={sigma} (need sigma < 0)")
    expo = np.array(k, dtype=float)
    base = _kernel(sigma)

    def f(pts):
        return np.prod(pts ** expo, axis=-1) * base(pts)

    shifts = _child_shifts(dim)[1:]  # skip the corner child
    lo = 0.5 * shifts
    total, ok = adaptive_integral(f, lo, lo + 0.5, rtol)
    return total / (1.0 - 2.0 ** (sigma - degree)), ok


def unit_pair_weight(offset, sigma, rtol=1e-10, closed_form_1d=True):
    """Pair integral of |x-y|^-(d+sigma) for unit cells at integer ``offset``.

    Returns ``(weight, converged)``. In 1D the closed form is used unless
    ``closed_form_1d`` is False, which routes through the generic adaptive
    path (useful as a cross-check).
    """
    offset = tuple(int(v) for v in offset)
    dim = len(offset)
    if dim == 1 and closed_form_1d:
        return pair_weight_1d(offset[0], sigma, 1.0), True
    # per axis: two unit intervals with linear tent weight a + b*z
    axis_pieces = []
    for o in offset:
        axis_pieces.append(((o - 1.0, o, 1.0 - o, 1.0), (o, o + 1.0, 1.0 + o, -1.0)))
    base = _kernel(sigma)
    total = []
    converged = True
    for combo in itertools.product(*axis_pieces):
        lo = np.array([c[0] for c in combo])
        hi = np.array([c[1] for c in combo])
        a = np.array([c[2] for c in combo])
        b = np.array([c[3] for c in combo])
        if all(l == 0.0 or u == 0.0 for l, u in zip(lo, hi)):
            # reflect negative axes onto [0,1]: z -> -u flips the slope
            b = np.where(lo < 0.0, -b, b)
            for k in itertools.product((0, 1), repeat=dim):
                coef = math.prod(b[i] if k[i] else a[i] for i in range(dim))
                if coef == 0.0:
                    continue
                val, ok = _corner_monomial(k, sigma, rtol)
                total.append(coef * val)
                converged &= ok
        else:
            def f(pts, a=a, b=b):
                return np.prod(a + b * pts, axis=-1) * base(pts)
            val, ok = adaptive_integral(f, lo[None, :], hi[None, :], rtol)
            total.append(val)
            converged &= ok
    return math.fsum(total), converged


def _relative_expm1(x):
    # (1 - e^-x) / x, equal to 1 at x = 0
    if abs(x) < 1e-8:
        return 1.0 - x / 2.0
    return -math.expm1(-x) / x


def _second_antiderivative_1d(t, sigma):
    # G'' = |t|^-(1+sigma), up to a linear term that the second difference removes:
    # G(t) = t log t g(sigma log t) / (1 - sigma) with g(x) = (1 - e^-x)/x,
    # which stays accurate as sigma -> 0
    t = abs(t)
    if t == 0.0:
        return 0.0
    L = math.log(t)
    return t * L * _relative_expm1(sigma * L) / (1.0 - sigma)


def pair_weight_1d(offset, sigma, h):
    """Closed-form pair integral for 1D cells of length ``h`` at ``offset``.

    The double integral is the second difference of an even second
    antiderivative ``G`` of the kernel: ``G((o+1)h) - 2 G(oh) + G((o-1)h)``.
    """
    o = abs(int(offset))
    if o == 0 and sigma >= 0:
        raise DivergenceError(
            f"cell self-interaction diverges for sigma={sigma} (need sigma < 0)")
    g = _second_antiderivative_1d
    if o == 0:
        # the dropped linear term is c|t|, whose second difference at 0 is 2 c h
        return 2.0 * g(h, sigma) + 2.0 * h / (-sigma * (1.0 - sigma))
    return g((o + 1) * h, sigma) - 2.0 * g(o * h, sigma) + g((o - 1) * h, sigma)
