"""Composition of symbols, Poisson brackets and smoothing-order fits."""
from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial

import numpy as np

from .quantization import ParaOp, op_bw
from .symbols import GridSymbol, Symbol, as_symbol
from .torus import japanese, modes

MAX_RHO = 4


def _check(a):
    a = as_symbol(a)
    if getattr(a, "order", None) is None:
        raise ValueError("symbol has no order metadata")
    return a


def expansion_terms(rho):
    """[(k, l, weight)] with weight (1/k!) (-i/2)^k C(k,l) (-1)^(k-l).

    The term multiplies (d_xi^l d_x^(k-l) a)(d_x^l d_xi^(k-l) b).
    """
    out = []
    for k in range(rho + 1):
        for l in range(k + 1):
            w = (-0.5j) ** k / factorial(k) * comb(k, l) * (-1) ** (k - l)
            out.append((k, l, w))
    return out


def sharp(a, b, rho):
    """Symbol a #_rho b as a grid-evaluated symbol."""
    if rho > MAX_RHO or rho < 0:
        raise ValueError(f"rho must lie in 0..{MAX_RHO}")
    a, b = _check(a), _check(b)
    terms = expansion_terms(rho)
    x_ind = a.x_independent and b.x_independent

    def sampler(M, xi):
        out = 0
        for k, l, w in terms:
            if x_ind and k > 0:
                continue
            out = out + w * a.sample(M, xi, k - l, l) * b.sample(M, xi, l, k - l)
        return np.broadcast_to(out, (np.size(xi), M))

    return GridSymbol(sampler, a.order + b.order, name=f"{a.name}#{rho}{b.name}", x_independent=x_ind)


@dataclass
class CompositionResult:
    composed: Symbol
    residual: ParaOp | None
    rho: int


def compose(a, b, rho, N=64, cutoff=None, residual=True):
    """a #_rho b and the residual Op(a)Op(b) - Op(a #_rho b)."""
    c = sharp(a, b, rho)
    res = None
    if residual:
        A = op_bw(a, cutoff, N)
        B = op_bw(b, cutoff, N)
        res = ParaOp(A.matrix @ B.matrix - op_bw(c, cutoff, N).matrix, c.order - rho,
                     f"residual {c.name}")
        res.reference_order = c.order
    return CompositionResult(c, res, rho)


def poisson(a, b):
    """{a, b} = d_xi a d_x b - d_x a d_xi b."""
    a, b = _check(a), _check(b)

    def sampler(M, xi):
        return a.sample(M, xi, 0, 1) * b.sample(M, xi, 1, 0) - a.sample(M, xi, 1, 0) * b.sample(M, xi, 0, 1)

    return GridSymbol(sampler, a.order + b.order - 1, name=f"{{{a.name},{b.name}}}",
                      x_independent=a.x_independent and b.x_independent)


def commutator_symbol(a, b, rho):
    """a #_rho b - b #_rho a."""
    ab, ba = sharp(a, b, rho), sharp(b, a, rho)

    def sampler(M, xi):
        return ab.sample(M, xi) - ba.sample(M, xi)

    return GridSymbol(sampler, ab.order - 1, name=f"[{a.name},{b.name}]", x_independent=ab.x_independent)


def smoothing_order(op, lo=0.55, hi=0.95, floor=1e-12):
    """Slope of log ||A e_j|| against log <j> for lo N <= |j| <= hi N.

    Columns below floor * <j>^ref are treated as round-off, with ref the
    `reference_order` attribute of the operator (0 if absent).  Returns
    -inf when fewer than three columns survive.
    """
    mat = op.matrix if isinstance(op, ParaOp) else np.asarray(op)
    N = (mat.shape[1] - 1) // 2
    j = modes(N)
    sel = (np.abs(j) >= lo * N) & (np.abs(j) <= hi * N)
    col = np.linalg.norm(mat[:, sel], axis=0)
    jj = j[sel]
    ref = getattr(op, "reference_order", 0.0)
    ok = col > floor * japanese(jj, ref)
    if ok.sum() < 3:
        return -np.inf
    X = np.log(japanese(jj[ok]))
    Y = np.log(col[ok])
    slope = np.polyfit(X, Y, 1)[0]
    return float(slope)
