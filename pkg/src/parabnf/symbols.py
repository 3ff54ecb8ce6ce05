"""Symbols a(x, xi) on the circle, cutoffs and seminorm estimates.

A symbol is evaluated on the periodic grid x_k = 2 pi k / M against an
arbitrary array of frequencies xi (half-integers in practice).  The
x-dependence is handled spectrally; xi-derivatives are analytic when the
symbol registers them and fourth-order central differences otherwise.
"""
from __future__ import annotations

import numbers

import numpy as np

from .torus import FourierField, SQRT2PI, grid, japanese, modes

FD_STEP = 0.5
# fourth-order central stencils on offsets -3..3 (step h)
_STENCILS = {
    1: (np.array([0, 1, -8, 0, 8, -1, 0]) / 12.0, 1),
    2: (np.array([0, -1, 16, -30, 16, -1, 0]) / 12.0, 2),
    3: (np.array([1, -8, 13, 0, -13, 8, -1]) / 8.0, 3),
    4: (np.array([-1, 12, -39, 56, -39, 12, -1]) / 6.0, 4),
}
_OFFSETS = np.arange(-3, 4)


def fd_xi_derivative(fn, xi, k, h=FD_STEP):
    """k-th derivative of fn at xi by a fourth-order central stencil."""
    w, p = _STENCILS[k]
    out = 0
    for o, c in zip(_OFFSETS, w):
        if c != 0:
            out = out + c * fn(xi + o * h)
    return out / h ** p


# ---------------------------------------------------------------------------
# functions of xi with registered derivatives

class XiFn:
    """A function of xi with optional analytic derivatives."""

    def __init__(self, fn, derivs=None, name="f", order=0.0, real=True, even=None):
        self.fn = fn
        self.derivs = dict(derivs or {})
        self.name = name
        self.order = order
        self.real = real
        self.even = even

    def __call__(self, xi):
        return self.fn(np.asarray(xi, dtype=float))

    def derivative(self, k=1):
        if k == 0:
            return self
        if k in self.derivs:
            d = self.derivs[k]
            return d if isinstance(d, XiFn) else XiFn(d, name=f"d{k}{self.name}", order=self.order - k, real=self.real)
        if k > 4:
            raise ValueError("xi-derivatives are limited to order 4")
        return XiFn(lambda xi, k=k: fd_xi_derivative(self.fn, np.asarray(xi, float), k),
                    name=f"fd{k}{self.name}", order=self.order - k, real=self.real)

    def has_analytic(self, k):
        return k == 0 or k in self.derivs

    def __repr__(self):
        return f"XiFn({self.name})"


class PowerComposite(XiFn):
    """sum_t c_t xi^p_t (alpha + xi^d)^b_t, differentiated in closed form."""

    def __init__(self, terms, alpha, d, name="pc", order=0.0, even=None):
        self.terms = [(complex(c), int(p), float(b)) for c, p, b in terms if c != 0]
        self.alpha = float(alpha)
        self.d = int(d)
        super().__init__(self._eval, name=name, order=order, real=all(abs(c.imag) == 0 for c, _, _ in self.terms), even=even)

    def _eval(self, xi):
        xi = np.asarray(xi, dtype=float)
        base = self.alpha + xi ** self.d
        out = np.zeros(xi.shape, complex)
        for c, p, b in self.terms:
            out = out + c * xi ** p * base ** b
        return out.real if self.real else out

    def derivative(self, k=1):
        f = self
        for _ in range(k):
            new = []
            for c, p, b in f.terms:
                if p > 0:
                    new.append((c * p, p - 1, b))
                if b != 0:
                    new.append((c * b * f.d, p + f.d - 1, b - 1))
            f = PowerComposite(new, f.alpha, f.d, name=f"d{f.name}", order=f.order - 1)
        return f

    def has_analytic(self, k):
        return True


def const_fn(c=1.0):
    c = complex(c)
    real = c.imag == 0
    val = c.real if real else c
    return XiFn(lambda xi: np.full(np.shape(xi), val), derivs={1: zero_fn(), 2: zero_fn(), 3: zero_fn(), 4: zero_fn()},
                name=f"{c:g}", order=0.0, real=real, even=True)


def zero_fn():
    return XiFn(lambda xi: np.zeros(np.shape(xi)), name="0", order=-np.inf, even=True)


def japanese_fn(m):
    """<xi>^m."""
    return PowerComposite([(1.0, 0, m / 2.0)], 1.0, 2, name=f"<xi>^{m:g}", order=m, even=True)


def power_fn(p, coef=1.0):
    """coef * xi^p for integer p >= 0."""
    return PowerComposite([(coef, p, 0.0)], 0.0, 1, name=f"xi^{p}", order=p, even=(p % 2 == 0))


def ixi_fn():
    """The symbol i xi of d_x."""
    return PowerComposite([(1j, 1, 0.0)], 0.0, 1, name="i xi", order=1)


def nls_potential_fn(mvec):
    """p(xi) = sum_k m_k <xi>^{-(2k+1)}."""
    terms = [(mk, 0, -(2 * k + 1) / 2.0) for k, mk in enumerate(mvec, start=1)]
    return PowerComposite(terms, 1.0, 2, name="p", order=-3, even=True)


def nls_f2_fn(mvec):
    """f_2(xi) = xi^2 + p(xi)."""
    terms = [(1.0, 2, 0.0)] + [(mk, 0, -(2 * k + 1) / 2.0) for k, mk in enumerate(mvec, start=1)]
    return PowerComposite(terms, 1.0, 2, name="f2", order=2, even=True)


def beam_f2_fn(mass):
    """sqrt(xi^4 + mass)."""
    return PowerComposite([(1.0, 0, 0.5)], mass, 4, name="sqrt(xi^4+m)", order=2, even=True)


def abs_fn():
    return XiFn(np.abs, derivs={1: XiFn(np.sign, derivs={1: zero_fn(), 2: zero_fn(), 3: zero_fn()}, name="sign", order=0),
                                2: zero_fn(), 3: zero_fn(), 4: zero_fn()}, name="|xi|", order=1, even=True)


def absxi_xi_fn():
    """|xi| xi, the symbol of -i H d_xx up to the factor i."""
    return XiFn(lambda xi: np.abs(xi) * xi,
                derivs={1: XiFn(lambda xi: 2 * np.abs(xi), name="2|xi|", order=1),
                        2: XiFn(lambda xi: 2 * np.sign(xi), name="2sign", order=0),
                        3: zero_fn(), 4: zero_fn()},
                name="|xi|xi", order=2, even=False)


# ---------------------------------------------------------------------------
# symbols

def _spectral_dx(vals, k):
    """k-th x-derivative of samples on the last axis (periodic grid)."""
    if k == 0:
        return vals
    M = vals.shape[-1]
    n = np.fft.fftfreq(M, 1.0 / M)
    if M % 2 == 0:
        n[M // 2] = 0.0
    out = np.fft.ifft(np.fft.fft(vals, axis=-1) * (1j * n) ** k, axis=-1)
    return out


class Symbol:
    """Base class.  Subclasses implement _eval(x, xi) -> array (len(xi), len(x))."""

    x_independent = False

    def __init__(self, order, real=False, degree=None, name="a"):
        if order is None:
            raise ValueError("symbol order must be given")
        self.order = float(order)
        self.real = bool(real)
        self.degree = degree
        self.name = name

    # evaluation ----------------------------------------------------------
    def _eval(self, x, xi):
        raise NotImplementedError

    def _dxi_exact(self, k):
        return None

    def __call__(self, x, xi):
        x = np.atleast_1d(np.asarray(x, float))
        xi = np.atleast_1d(np.asarray(xi, float))
        return self._eval(x, xi)

    def sample(self, M, xi, ax=0, bxi=0):
        """d_x^ax d_xi^bxi a on grid(M) x xi, shape (len(xi), M)."""
        xi = np.atleast_1d(np.asarray(xi, float))
        if bxi:
            d = self._dxi_exact(bxi)
            if d is not None:
                return d.sample(M, xi, ax, 0)
            w, p = _STENCILS[bxi]
            out = 0
            for o, c in zip(_OFFSETS, w):
                if c != 0:
                    out = out + c * self.sample(M, xi + o * FD_STEP, ax, 0)
            return out / FD_STEP ** p
        vals = self._eval(grid(M), xi)
        vals = np.broadcast_to(vals, (xi.size, M))
        if ax:
            if self.x_independent:
                return np.zeros((xi.size, M), dtype=vals.dtype)
            vals = _spectral_dx(vals, ax)
        return vals

    def xfourier(self, N, xi):
        """Plain x-Fourier coefficients a(x, xi) = sum_n c_n(xi) e^{inx}, |n| <= 2N.

        Returns an array (len(xi), 4N+1) indexed by n + 2N.
        """
        M = 2 * (2 * N + 1)
        vals = self.sample(M, xi)
        f = np.fft.fft(vals, axis=-1) / M
        return f[:, np.arange(-2 * N, 2 * N + 1) % M]

    # algebra -------------------------------------------------------------
    def __add__(self, other):
        return SumSymbol([self, as_symbol(other)])

    __radd__ = __add__

    def __sub__(self, other):
        return SumSymbol([self, -1.0 * as_symbol(other)])

    def __rsub__(self, other):
        return as_symbol(other) - self

    def __mul__(self, other):
        if isinstance(other, numbers.Number):
            return ScaledSymbol(self, other)
        return ProductSymbol([self, as_symbol(other)])

    __rmul__ = __mul__

    def __neg__(self):
        return ScaledSymbol(self, -1.0)

    def conj(self):
        return ConjSymbol(self)

    def reflect(self):
        """a(x, -xi)."""
        return ReflectSymbol(self)

    def __repr__(self):
        return f"{type(self).__name__}({self.name}, m={self.order:g})"


def as_symbol(a):
    if isinstance(a, Symbol):
        return a
    if isinstance(a, numbers.Number):
        return Multiplier(const_fn(a))
    raise TypeError(f"cannot interpret {a!r} as a symbol")


class Multiplier(Symbol):
    """x-independent symbol f(xi)."""

    x_independent = True

    def __init__(self, fn, order=None, name=None):
        if not isinstance(fn, XiFn):
            fn = XiFn(fn, order=order if order is not None else 0.0)
        super().__init__(order if order is not None else fn.order, real=fn.real, degree=0, name=name or fn.name)
        self.fn = fn

    def _eval(self, x, xi):
        return np.repeat(np.asarray(self.fn(xi))[:, None], x.size, axis=1)

    def _dxi_exact(self, k):
        if self.fn.has_analytic(k):
            return Multiplier(self.fn.derivative(k), order=self.order - k)
        return None

    def xfourier(self, N, xi):
        out = np.zeros((np.size(xi), 4 * N + 1), complex)
        out[:, 2 * N] = self.fn(np.atleast_1d(xi))
        return out


class SeparableSymbol(Symbol):
    """sum_t c_t(x) f_t(xi).

    Each x-part is a FourierField (exact spectral data), a scalar, or a
    callable of x.  Each xi-part is an XiFn.
    """

    def __init__(self, terms, order=None, real=False, degree=None, name="sep"):
        self.terms = []
        for xp, f in terms:
            if not isinstance(f, XiFn):
                f = XiFn(f)
            self.terms.append((xp, f))
        if order is None:
            order = max(f.order for _, f in self.terms) if self.terms else 0.0
        super().__init__(order, real=real, degree=degree, name=name)
        self.x_independent = all(isinstance(xp, numbers.Number) for xp, _ in self.terms)

    @staticmethod
    def _xvals(xp, x):
        if isinstance(xp, numbers.Number):
            return np.full(x.shape, xp, dtype=complex)
        if isinstance(xp, FourierField):
            n = modes(xp.N)
            return (np.exp(1j * np.outer(x, n)) @ xp.coeffs) / SQRT2PI
        return np.asarray(xp(x), dtype=complex)

    def _eval(self, x, xi):
        out = np.zeros((xi.size, x.size), complex)
        for xp, f in self.terms:
            out += np.asarray(f(xi))[:, None] * self._xvals(xp, x)[None, :]
        return out.real if self.real else out

    def _dxi_exact(self, k):
        if all(f.has_analytic(k) for _, f in self.terms):
            return SeparableSymbol([(xp, f.derivative(k)) for xp, f in self.terms], order=self.order - k,
                                   real=self.real, degree=self.degree, name=f"d{k}{self.name}")
        return None

    def sample(self, M, xi, ax=0, bxi=0):
        if ax and not bxi and all(not callable(xp) or isinstance(xp, FourierField) for xp, _ in self.terms):
            xi = np.atleast_1d(np.asarray(xi, float))
            terms = []
            for xp, f in self.terms:
                if isinstance(xp, FourierField):
                    terms.append((xp.derivative(ax), f))
            return SeparableSymbol(terms, order=self.order, real=self.real).sample(M, xi) if terms else np.zeros((xi.size, M))
        return super().sample(M, xi, ax, bxi)

    def xfourier(self, N, xi):
        xi = np.atleast_1d(np.asarray(xi, float))
        if all(isinstance(xp, (FourierField, numbers.Number)) for xp, _ in self.terms):
            out = np.zeros((xi.size, 4 * N + 1), complex)
            for xp, f in self.terms:
                fx = np.asarray(f(xi))
                if isinstance(xp, numbers.Number):
                    out[:, 2 * N] += xp * fx
                else:
                    m = min(xp.N, 2 * N)
                    c = xp.coeffs[xp.N - m:xp.N + m + 1] / SQRT2PI
                    out[:, 2 * N - m:2 * N + m + 1] += np.outer(fx, c)
            return out
        return super().xfourier(N, xi)


class FunctionSymbol(Symbol):
    """Symbol from a vectorized callable fn(x, xi) (x, xi broadcast as X[None,:], XI[:,None])."""

    def __init__(self, fn, order, dxi=None, real=False, degree=None, name="fn", x_independent=False):
        super().__init__(order, real=real, degree=degree, name=name)
        self.fn = fn
        self.dxi = dict(dxi or {})
        self.x_independent = x_independent

    def _eval(self, x, xi):
        v = self.fn(x[None, :], xi[:, None])
        return np.broadcast_to(v, (xi.size, x.size))

    def _dxi_exact(self, k):
        if k in self.dxi:
            return FunctionSymbol(self.dxi[k], self.order - k, real=self.real, name=f"d{k}{self.name}",
                                  x_independent=self.x_independent)
        return None


class SumSymbol(Symbol):
    def __init__(self, parts):
        flat = []
        for p in parts:
            flat.extend(p.parts if isinstance(p, SumSymbol) else [p])
        self.parts = flat
        super().__init__(max(p.order for p in flat), real=all(p.real for p in flat), name="sum")
        self.x_independent = all(p.x_independent for p in flat)

    def _eval(self, x, xi):
        return sum(np.broadcast_to(p._eval(x, xi), (xi.size, x.size)) for p in self.parts)

    def sample(self, M, xi, ax=0, bxi=0):
        return sum(p.sample(M, xi, ax, bxi) for p in self.parts)

    def xfourier(self, N, xi):
        return sum(p.xfourier(N, xi) for p in self.parts)


class ScaledSymbol(Symbol):
    def __init__(self, a, c):
        self.a, self.c = a, complex(c)
        super().__init__(a.order, real=a.real and self.c.imag == 0, name=f"{c}*{a.name}")
        self.x_independent = a.x_independent

    def _eval(self, x, xi):
        return self.c * self.a._eval(x, xi)

    def sample(self, M, xi, ax=0, bxi=0):
        return self.c * self.a.sample(M, xi, ax, bxi)

    def xfourier(self, N, xi):
        return self.c * self.a.xfourier(N, xi)


class ProductSymbol(Symbol):
    def __init__(self, parts):
        self.parts = parts
        super().__init__(sum(p.order for p in parts), real=all(p.real for p in parts), name="prod")
        self.x_independent = all(p.x_independent for p in parts)

    def _eval(self, x, xi):
        out = 1.0
        for p in self.parts:
            out = out * np.broadcast_to(p._eval(x, xi), (xi.size, x.size))
        return out


class ConjSymbol(Symbol):
    def __init__(self, a):
        self.a = a
        super().__init__(a.order, real=a.real, degree=a.degree, name=f"conj({a.name})")
        self.x_independent = a.x_independent

    def _eval(self, x, xi):
        return np.conj(self.a._eval(x, xi))

    def sample(self, M, xi, ax=0, bxi=0):
        return np.conj(self.a.sample(M, xi, ax, bxi))


class ReflectSymbol(Symbol):
    def __init__(self, a):
        self.a = a
        super().__init__(a.order, real=a.real, degree=a.degree, name=f"{a.name}(x,-xi)")
        self.x_independent = a.x_independent

    def _eval(self, x, xi):
        return self.a._eval(x, -xi)

    def sample(self, M, xi, ax=0, bxi=0):
        return (-1) ** bxi * self.a.sample(M, -np.atleast_1d(np.asarray(xi, float)), ax, bxi)


class GridSymbol(Symbol):
    """Symbol defined only through a sampler(M, xi) -> (len(xi), M)."""

    def __init__(self, sampler, order, real=False, name="grid", x_independent=False):
        super().__init__(order, real=real, name=name)
        self.sampler = sampler
        self.x_independent = x_independent

    def _eval(self, x, xi):
        M = x.size
        if not np.allclose(x, grid(M)):
            raise ValueError("GridSymbol can only be evaluated on the periodic grid")
        return self.sampler(M, xi)


class MatrixSymbol:
    """A(x, xi) = [[a, b], [conj b(x,-xi), conj a(x,-xi)]]."""

    def __init__(self, a, b=None):
        self.a = as_symbol(a)
        self.b = as_symbol(0.0) if b is None else as_symbol(b)

    @property
    def order(self):
        return max(self.a.order, self.b.order)

    def lower_left(self):
        return self.b.reflect().conj()

    def lower_right(self):
        return self.a.reflect().conj()


def multiplier(fn, order=None, name=None):
    return Multiplier(fn if isinstance(fn, XiFn) else XiFn(fn, order=order or 0.0), order=order, name=name)


# ---------------------------------------------------------------------------
# admissible cutoff

def _smoothstep(s):
    """C^infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


class CutoffFn:
    """chi(xi', xi) = chi~(xi'/<xi>), equal to 1 on |t| <= delta/2 and 0 on |t| >= delta."""

    def __init__(self, delta=0.25):
        if not 0.0 < delta < 1.0:
            raise ValueError("cutoff parameter delta must lie in (0, 1)")
        self.delta = float(delta)

    def profile(self, t):
        t = np.abs(np.asarray(t, float))
        h = self.delta / 2.0
        return 1.0 - _smoothstep((t - h) / h)

    def __call__(self, xip, xi):
        return self.profile(np.asarray(xip, float) / japanese(xi))

    def __repr__(self):
        return f"CutoffFn(delta={self.delta})"


def make_cutoff(delta=0.25):
    return CutoffFn(delta)


# ---------------------------------------------------------------------------
# diagnostics

def xi_grid(N):
    """Half-integers in [-N-1, N+1]."""
    return np.arange(-2 * N - 2, 2 * N + 3) / 2.0


def seminorm_estimate(sym, alpha, beta, N=64, M=None):
    """max over the sample grid of <xi>^(beta-m) |d_x^alpha d_xi^beta a|."""
    if alpha > 4 or beta > 4:
        raise ValueError("alpha, beta <= 4")
    xi = xi_grid(N)
    M = M or 2 * (2 * N + 1)
    v = np.abs(sym.sample(M, xi, alpha, beta)) * japanese(xi, beta - sym.order)[:, None]
    return float(np.max(v))


def frequency_localize(field, xi, eps):
    """S_xi: keep the modes |k| <= eps |xi| (ties included)."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    n = modes(field.N)
    keep = np.abs(n) <= eps * abs(xi) + 1e-12
    return FourierField(np.where(keep, field.coeffs, 0), field.N)
