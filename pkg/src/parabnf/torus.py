"""Truncated Fourier series on the circle.

A field is stored by its coefficients u_n, |n| <= N, in the convention

    u(x) = sum_n u_n exp(i n x) / sqrt(2 pi),

ordered n = -N..N.  Grids are equispaced on [0, 2 pi).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SQRT2PI = np.sqrt(2.0 * np.pi)

E = np.diag([1.0, -1.0])
J = np.array([[0.0, 1.0], [-1.0, 0.0]])


def japanese(xi, s=1.0):
    """<xi>^s = (1 + xi^2)^(s/2)."""
    return (1.0 + np.asarray(xi, dtype=float) ** 2) ** (0.5 * s)


def modes(N):
    return np.arange(-N, N + 1)


def grid(M):
    return 2.0 * np.pi * np.arange(M) / M


def good_size(M):
    """Smallest 2^a 3^b 5^c >= M."""
    best = None
    p2 = 1
    while p2 < 2 * M:
        p3 = p2
        while p3 < 2 * M:
            p5 = p3
            while p5 < 2 * M:
                if p5 >= M and (best is None or p5 < best):
                    best = p5
                p5 *= 5
            p3 *= 3
        p2 *= 2
    return best


@dataclass(frozen=True, eq=False)
class FourierField:
    coeffs: np.ndarray
    N: int

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != (2 * self.N + 1,):
            raise ValueError(f"expected {2 * self.N + 1} coefficients, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, N):
        return cls(np.zeros(2 * N + 1, complex), N)

    @classmethod
    def from_function(cls, fn, N, M=None):
        M = M or good_size(2 * (2 * N + 1))
        return analyze(fn(grid(M)), N)

    def __getitem__(self, n):
        return self.coeffs[n + self.N]

    def __add__(self, other):
        return FourierField(self.coeffs + other.coeffs, self.N)

    def __sub__(self, other):
        return FourierField(self.coeffs - other.coeffs, self.N)

    def __mul__(self, c):
        return FourierField(self.coeffs * c, self.N)

    __rmul__ = __mul__

    def values(self, M=None):
        return synthesize(self, M)

    def norm(self, s=0.0):
        return sobolev_norm(self, s)

    def derivative(self, k=1):
        return FourierField(self.coeffs * (1j * modes(self.N)) ** k, self.N)

    def conj(self):
        """Coefficients of the complex conjugate function."""
        return FourierField(np.conj(self.coeffs[::-1]), self.N)

    def resize(self, N):
        out = np.zeros(2 * N + 1, complex)
        m = min(N, self.N)
        out[N - m:N + m + 1] = self.coeffs[self.N - m:self.N + m + 1]
        return FourierField(out, N)

    @property
    def mean(self):
        return self.coeffs[self.N] / SQRT2PI


def analyze(values, N):
    """Coefficients u_n, |n| <= N, from samples on an equispaced grid."""
    v = np.asarray(values)
    M = v.shape[-1]
    if M < 2 * N + 1:
        raise ValueError(f"grid of {M} points aliases {2 * N + 1} modes")
    f = np.fft.fft(v, axis=-1) * (SQRT2PI / M)
    return FourierField(f[..., modes(N) % M], N)


def analyze_array(values, N):
    """Like analyze but for stacked samples, returns a plain array (..., 2N+1)."""
    v = np.asarray(values)
    M = v.shape[-1]
    if M < 2 * N + 1:
        raise ValueError(f"grid of {M} points aliases {2 * N + 1} modes")
    f = np.fft.fft(v, axis=-1) * (SQRT2PI / M)
    return f[..., modes(N) % M]


def synthesize_array(coeffs, M):
    c = np.asarray(coeffs)
    N = (c.shape[-1] - 1) // 2
    if M < 2 * N + 1:
        raise ValueError(f"grid of {M} points aliases {2 * N + 1} modes")
    pad = np.zeros(c.shape[:-1] + (M,), complex)
    pad[..., modes(N) % M] = c
    return np.fft.ifft(pad, axis=-1) * (M / SQRT2PI)


def synthesize(field, M=None):
    """Grid values of the field on M points (default 2N+1)."""
    M = M or 2 * field.N + 1
    return synthesize_array(field.coeffs, M)


def sobolev_norm(field, s=0.0):
    c = field.coeffs if isinstance(field, FourierField) else np.asarray(field)
    N = (c.shape[-1] - 1) // 2
    w = japanese(modes(N), 2 * s)
    return float(np.sqrt(np.sum(w * np.abs(c) ** 2)))


def sobolev_weight(N, s):
    """Diagonal of <D>^s."""
    return japanese(modes(N), s)


def project(field, n):
    """Pi_n: keep the modes +-n (n = 0 keeps the mean)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    out = np.zeros_like(field.coeffs)
    if n <= field.N:
        out[field.N + n] = field.coeffs[field.N + n]
        out[field.N - n] = field.coeffs[field.N - n]
    return FourierField(out, field.N)


def product(fields, N=None):
    """Dealiased pointwise product of several fields, truncated to N modes."""
    N0 = max(f.N for f in fields)
    N = N0 if N is None else N
    d = len(fields)
    M = good_size(max(3 * N0 + 1, (d + 1) * N0 + 1))
    v = np.ones(M, complex)
    for f in fields:
        v = v * synthesize(f, M)
    return analyze(v, N)


def antiderivative(field, tol=1e-9):
    """d_x^{-1} on zero-mean data; the result has zero mean."""
    if abs(field.mean) > tol:
        raise ValueError(f"mean {abs(field.mean):.3e} is not zero, d_x^-1 undefined")
    n = modes(field.N)
    c = np.zeros_like(field.coeffs)
    nz = n != 0
    c[nz] = field.coeffs[nz] / (1j * n[nz])
    return FourierField(c, field.N)


@dataclass(frozen=True, eq=False)
class RealPair:
    """U = (u, ubar) as two coefficient vectors."""
    first: FourierField
    second: FourierField

    @property
    def N(self):
        return self.first.N

    def stacked(self):
        return np.concatenate([self.first.coeffs, self.second.coeffs])

    @classmethod
    def from_stacked(cls, v):
        n = v.shape[0] // 2
        N = (n - 1) // 2
        return cls(FourierField(v[:n], N), FourierField(v[n:], N))

    def is_real(self, tol=1e-11):
        scale = max(1.0, float(np.max(np.abs(self.first.coeffs), initial=0)))
        return bool(np.max(np.abs(self.second.coeffs - np.conj(self.first.coeffs[::-1])), initial=0) <= tol * scale)


def make_real_pair(u):
    return RealPair(u, u.conj())


def random_field(N, rng, decay=2.0, s=0.0, r=None, support=None):
    """Random coefficients with algebraic decay; rescaled to H^s norm r if given."""
    n = modes(N)
    c = (rng.standard_normal(2 * N + 1) + 1j * rng.standard_normal(2 * N + 1)) * japanese(n, -decay)
    if support is not None:
        c[np.abs(n) > support] = 0
    f = FourierField(c, N)
    if r is not None:
        f = f * (r / sobolev_norm(f, s))
    return f


def evaluate(field, x):
    """u(x) at arbitrary points by direct summation of the Fourier series."""
    x = np.asarray(x, dtype=float)
    n = modes(field.N)
    return (np.exp(1j * np.multiply.outer(x, n)) @ field.coeffs) / SQRT2PI


def real_field(values, N):
    """Analyze real grid samples, enforcing the reality symmetry exactly."""
    f = analyze(np.asarray(values, dtype=float), N)
    c = 0.5 * (f.coeffs + np.conj(f.coeffs[::-1]))
    return FourierField(c, N)
