"""Conjugation drivers and Birkhoff normal-form steps.

Frequencies, non-resonance enumeration, homological equations on
homogeneous coefficient tensors, the resonant projector, the
constant-coefficient reductions of the principal and lower-order symbols,
and the normal-form pipeline acting on cubic vector fields.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import simpson

from .torus import japanese, modes

DIVISOR_FLOOR = 1e-8


class DivisorError(ValueError):
    """A non-resonant divisor fell below the configured floor."""


# ---------------------------------------------------------------------------
# frequencies

@dataclass
class FrequencySpec:
    omega: np.ndarray
    family: str = "custom"
    params: dict = dc_field(default_factory=dict)
    floor: float = DIVISOR_FLOOR

    @property
    def N(self):
        return (len(self.omega) - 1) // 2

    def __call__(self, j):
        j = np.asarray(j)
        if np.any(np.abs(j) > self.N):
            raise IndexError("mode outside the frequency table")
        return self.omega[j + self.N]

    def is_even(self, tol=0.0):
        return bool(np.max(np.abs(self.omega - self.omega[::-1])) <= tol)

    @classmethod
    def custom(cls, fn, N, **kw):
        return cls(np.asarray(fn(modes(N)), float), "custom", kw)


def nls_frequencies(mvec, N):
    """omega_j = j^2 + sum_k m_k <j>^-(2k+1)."""
    j = modes(N)
    p = sum(mk * japanese(j, -(2 * k + 1)) for k, mk in enumerate(mvec, start=1))
    return FrequencySpec(j ** 2 + p, "nls", {"m": list(map(float, mvec)), "M": len(mvec)})


def beam_frequencies(mass, N):
    """omega_j = sqrt(j^4 + mass)."""
    j = modes(N).astype(float)
    return FrequencySpec(np.sqrt(j ** 4 + mass), "beam", {"mass": float(mass)})


def sample_nls_parameters(M, rng, floor=DIVISOR_FLOOR, p=4, J_max=10, max_draws=20):
    """Draw m in [-1/2, 1/2]^M until the divisor floor holds up to order p."""
    for _ in range(max_draws):
        m = rng.uniform(-0.5, 0.5, M)
        freq = nls_frequencies(m, J_max)
        if all(check_nonresonance(freq, q, J_max)["min_divisor"] > floor for q in range(1, p + 1)):
            return m
    raise DivisorError("no admissible parameter draw found")


# ---------------------------------------------------------------------------
# resonance

def is_resonant(signs, idx):
    """Membership in S_p: even length, as many + as -, and the |j| multisets
    of the two sign classes coincide."""
    p = len(signs)
    if p % 2:
        return False
    plus = sorted(abs(j) for s, j in zip(signs, idx) if s > 0)
    minus = sorted(abs(j) for s, j in zip(signs, idx) if s < 0)
    return len(plus) == len(minus) and plus == minus


def _tuples(p, J_max):
    """Sign/index tuples up to permutation: indices nondecreasing within a sign class."""
    js = range(-J_max, J_max + 1)
    for n_plus in range(p + 1):
        n_minus = p - n_plus
        for ip in itertools.combinations_with_replacement(js, n_plus):
            for im in itertools.combinations_with_replacement(js, n_minus):
                yield (1,) * n_plus + (-1,) * n_minus, ip + im


def check_nonresonance(freq, p, J_max=20, momentum=None, top=10):
    """min |sum sigma_i omega_{j_i}| over tuples of length p off S_p.

    momentum: restrict to sum sigma_i j_i == momentum when given.
    """
    if p > 6 or J_max > 40:
        raise ValueError("enumeration limited to p <= 6, J_max <= 40")
    if J_max > freq.N:
        raise ValueError("frequency table too short for J_max")
    best = np.inf
    worst = []
    resonant = 0
    for signs, idx in _tuples(p, J_max):
        if momentum is not None and sum(s * j for s, j in zip(signs, idx)) != momentum:
            continue
        if is_resonant(signs, idx):
            resonant += 1
            continue
        d = abs(sum(s * freq(j) for s, j in zip(signs, idx)))
        if d < best:
            best = d
        worst.append((d, signs, idx))
        if len(worst) > 4 * top:
            worst = sorted(worst)[:top]
    worst = sorted(worst)[:top]
    violating = [(s, i) for d, s, i in worst if d <= freq.floor]
    return {"p": p, "J_max": J_max, "min_divisor": float(best), "resonant_count": resonant,
            "violating_tuples": violating,
            "smallest": [{"divisor": float(d), "signs": list(s), "indices": list(i)} for d, s, i in worst]}


def divisor(freq, signs, idx):
    return float(sum(s * freq(j) for s, j in zip(signs, idx)))


def _resonant_rows(sig, absn):
    """Vectorized S_p membership for rows of signed letters (E, p)."""
    p = sig.shape[1]
    if p % 2:
        return np.zeros(sig.shape[0], bool)
    big = np.iinfo(np.int64).max
    plus = np.sort(np.where(sig > 0, absn, big), axis=1)
    minus = np.sort(np.where(sig < 0, absn, big), axis=1)
    balanced = (sig > 0).sum(axis=1) == p // 2
    return balanced & np.all(plus == minus, axis=1)


# ---------------------------------------------------------------------------
# homogeneous tensors

class HomogeneousTensor:
    """Coefficients over letters (sigma_i, n_i), |n_i| <= K, stored densely.

    kind "field": contributes coeffs * prod u^{sigma_i}_{n_i} to the output
        mode k = sum sigma_i n_i of the u-component.
    kind "symbol": plain x-Fourier coefficient at frequency sum sigma_i n_i of
        a symbol sum_b basis_b(xi) * coeffs[b]; `momentum` restricts the
        stored tuples (0 for x-independent symbols).
    """

    def __init__(self, signs, coeffs, K, kind="field", basis=None, momentum=None, N_out=None):
        self.signs = tuple(int(s) for s in signs)
        self.K = int(K)
        self.kind = kind
        self.basis = basis
        self.momentum = momentum
        c = np.asarray(coeffs, dtype=complex)
        shape = (2 * self.K + 1,) * len(self.signs)
        if kind == "symbol":
            if basis is None or c.shape != (len(basis),) + shape:
                raise ValueError("symbol tensor needs coeffs of shape (len(basis),) + letters")
        elif c.shape != shape:
            raise ValueError(f"field tensor needs shape {shape}")
        self.N_out = N_out if N_out is not None else len(self.signs) * self.K
        self.coeffs = c * self.admissible()

    @property
    def degree(self):
        return len(self.signs)

    def letters(self):
        """Index grids n_i, one per axis."""
        n = np.arange(-self.K, self.K + 1)
        return np.meshgrid(*([n] * self.degree), indexing="ij")

    def out_modes(self):
        return sum(s * n for s, n in zip(self.signs, self.letters()))

    def admissible(self):
        k = self.out_modes()
        if self.kind == "symbol":
            return (k == self.momentum) if self.momentum is not None else np.ones(k.shape, bool)
        return np.abs(k) <= self.N_out

    def copy_with(self, coeffs):
        return HomogeneousTensor(self.signs, coeffs, self.K, self.kind, self.basis, self.momentum, self.N_out)

    def resonant_mask(self):
        """S_p membership; field tensors append the output letter (-, k)."""
        L = [n.ravel() for n in self.letters()]
        sig = [np.full(L[0].shape, s) for s in self.signs]
        if self.kind == "field":
            L.append(self.out_modes().ravel())
            sig.append(np.full(L[0].shape, -1))
        sig = np.stack(sig, axis=1)
        absn = np.abs(np.stack(L, axis=1))
        return _resonant_rows(sig, absn).reshape(self.letters()[0].shape)

    def divisors(self, freq):
        """sum sigma_i omega_{n_i} (minus omega_k for field tensors); nan if out of table."""
        d = sum(s * freq.omega[n + freq.N] for s, n in zip(self.signs, self.letters()))
        if self.kind == "field":
            k = self.out_modes()
            ok = np.abs(k) <= freq.N
            d = np.where(ok, d - freq.omega[np.clip(k, -freq.N, freq.N) + freq.N], np.nan)
        return d

    def evaluate(self, u, N=None):
        """Field tensors: output vector on modes |k| <= N."""
        if self.kind != "field":
            raise ValueError("evaluate() is for field tensors")
        u = np.asarray(u, complex)
        Nu = (len(u) - 1) // 2
        N = Nu if N is None else N
        v = u[Nu - self.K:Nu + self.K + 1]
        prod = self.coeffs
        for axis, s in enumerate(self.signs):
            w = v if s > 0 else np.conj(v)
            shape = [1] * self.degree
            shape[axis] = -1
            prod = prod * w.reshape(shape)
        k = self.out_modes()
        ok = np.abs(k) <= N
        out = np.zeros(2 * N + 1, complex)
        np.add.at(out, k[ok] + N, prod[ok])
        return out

    def symbol_values(self, u, xi):
        """x-independent symbol tensors: value at each xi."""
        u = np.asarray(u, complex)
        Nu = (len(u) - 1) // 2
        v = u[Nu - self.K:Nu + self.K + 1]
        prod = self.coeffs
        for axis, s in enumerate(self.signs):
            w = v if s > 0 else np.conj(v)
            shape = [1] * (self.degree + 1)
            shape[axis + 1] = -1
            prod = prod * w.reshape(shape)
        coef = prod.reshape(len(self.basis), -1).sum(axis=1)
        xi = np.asarray(xi, float)
        return sum(c * np.asarray(b(xi)) for c, b in zip(coef, self.basis))

    def entries(self, tol=0.0):
        """Nonzero entries as (letters, coefficient) for dumps."""
        L = self.letters()
        if self.kind == "symbol":
            mag = np.max(np.abs(self.coeffs), axis=0)
        else:
            mag = np.abs(self.coeffs)
        idx = np.argwhere(mag > tol)
        for ix in idx:
            yield tuple(int(L[a][tuple(ix)]) for a in range(self.degree)), self.coeffs[(Ellipsis,) + tuple(ix)]


class TensorSum(dict):
    """Sign pattern -> HomogeneousTensor."""

    def evaluate(self, u, N=None):
        out = None
        for t in self.values():
            v = t.evaluate(u, N)
            out = v if out is None else out + v
        if out is None:
            Nu = (len(u) - 1) // 2
            return np.zeros(2 * (Nu if N is None else N) + 1, complex)
        return out

    def map(self, fn):
        return TensorSum({k: fn(t) for k, t in self.items()})

    def max_abs(self):
        return max((float(np.max(np.abs(t.coeffs))) for t in self.values()), default=0.0)


def resonant_project(tensor, freq=None):
    """Keep exactly the tuples in S_p (zero for odd total length)."""
    if isinstance(tensor, TensorSum):
        return tensor.map(lambda t: resonant_project(t, freq))
    mask = tensor.resonant_mask()
    return tensor.copy_with(np.where(mask, tensor.coeffs, 0))


def _solve(tensor, freq, floor, what):
    d = tensor.divisors(freq)
    res = tensor.resonant_mask()
    nz = (np.max(np.abs(tensor.coeffs), axis=0) if tensor.kind == "symbol" else np.abs(tensor.coeffs)) > 0
    active = nz & ~res
    if np.any(np.isnan(d) & active):
        raise DivisorError(f"{what}: output mode outside the frequency table")
    small = active & (np.abs(np.nan_to_num(d, nan=np.inf)) < floor)
    if np.any(small):
        ix = tuple(np.argwhere(small)[0])
        L = tensor.letters()
        bad = [(s, int(L[a][ix])) for a, s in enumerate(tensor.signs)]
        raise DivisorError(f"{what}: divisor {d[ix]:.3e} below floor {floor:g} at letters {bad}")
    safe = np.where(active, np.nan_to_num(d, nan=1.0), 1.0)
    return tensor.copy_with(np.where(active, -tensor.coeffs / (1j * safe), 0))


def homological_symbol_step(m, freq, floor=None):
    """b = -m / (i sum sigma_i omega_{n_i}) off S_p, 0 on it."""
    if isinstance(m, TensorSum):
        return m.map(lambda t: homological_symbol_step(t, freq, floor))
    if m.kind != "symbol":
        raise ValueError("symbol step acts on symbol tensors")
    return _solve(m, freq, freq.floor if floor is None else floor, "symbol step")


def homological_smoothing_step(q, freq, floor=None):
    """q_aux = -q / (i (sum sigma_i omega_{n_i} - omega_k)) off S_p, 0 on it."""
    if isinstance(q, TensorSum):
        return q.map(lambda t: homological_smoothing_step(t, freq, floor))
    if q.kind != "field":
        raise ValueError("smoothing step acts on field tensors")
    return _solve(q, freq, freq.floor if floor is None else floor, "smoothing step")


def lie_action(g, freq):
    """Coefficients of dG[i Omega u] - i Omega G(u): i * divisor * g."""
    if isinstance(g, TensorSum):
        return g.map(lambda t: lie_action(t, freq))
    d = g.divisors(freq)
    return g.copy_with(np.where(np.isnan(d), 0, 1j * np.nan_to_num(d) * g.coeffs))


def back_substitution_residual(q, g, freq):
    """max |non-resonant part of q + i d g| / max |q|."""
    if isinstance(q, TensorSum):
        num = max((_bsr(q[k], g[k], freq) for k in q), default=0.0)
        den = q.max_abs()
        return num / den if den > 0 else num
    den = float(np.max(np.abs(q.coeffs)))
    return _bsr(q, g, freq) / den if den > 0 else _bsr(q, g, freq)


def _bsr(q, g, freq):
    d = q.divisors(freq)
    mix = q.coeffs + (1j * np.nan_to_num(d) * g.coeffs if q.kind == "field" else 1j * np.nan_to_num(d) * g.coeffs)
    mix = np.where(q.resonant_mask(), 0, mix)
    return float(np.max(np.abs(mix)))


def tensors_to_json(tensors, freq=None, path=None, tol=0.0):
    """[{degree, tuple, divisor, coefficient_re, coefficient_im}]."""
    rows = []
    items = tensors.items() if isinstance(tensors, TensorSum) else [(tensors.signs, tensors)]
    for _, t in items:
        dv = t.divisors(freq) if freq is not None else None
        for lett, c in t.entries(tol):
            ix = tuple(n + t.K for n in lett)
            c = complex(np.ravel(c)[0]) if np.ndim(c) else complex(c)
            row = {"degree": t.degree, "tuple": {"signs": list(t.signs), "indices": list(lett)},
                   "divisor": None if dv is None or np.isnan(dv[ix]) else float(dv[ix]),
                   "coefficient_re": c.real, "coefficient_im": c.imag}
            rows.append(row)
    text = json.dumps(rows, indent=1)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def divisor_report_json(report, path=None):
    rows = [{"degree": report["p"], "tuple": {"signs": r["signs"], "indices": r["indices"]},
             "divisor": r["divisor"], "coefficient_re": None, "coefficient_im": None}
            for r in report["smallest"]]
    text = json.dumps(rows, indent=1)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------------------
# tensors from jet polynomials
#
# jet data: {"symbols": {name: sympy.Symbol},
#            "letters": {name: [(sigma, weight(n)), ...]},
#            "field": [(expr, out_weight(k)), ...],
#            "symbol_a": [(XiFn, expr), ...]}
# A jet variable stands for sum_n sum_(sigma, w) w(n) u^sigma_n e^{i sigma n x}/sqrt(2 pi).

def _monomials(expr, names, syms):
    import sympy as sp
    if expr == 0:
        return []
    poly = sp.Poly(sp.expand(expr), *syms)
    out = []
    for powers, c in poly.terms():
        factors = [nm for nm, p in zip(names, powers) for _ in range(p)]
        out.append((factors, complex(c)))
    return out


def _accumulate(store, factors, c, letters, K, scale, out_weight, kind, basis_index, nb, momentum, N_out):
    n = np.arange(-K, K + 1)
    for choice in itertools.product(*[letters[f] for f in factors]):
        # canonical order: + letters first
        order = sorted(range(len(choice)), key=lambda i: -choice[i][0])
        signs = tuple(choice[i][0] for i in order)
        coef = np.asarray(c * scale, complex)
        for axis, i in enumerate(order):
            shape = [1] * len(order)
            shape[axis] = -1
            coef = coef * np.asarray(choice[i][1](n), complex).reshape(shape)
        grids = np.meshgrid(*([n] * len(order)), indexing="ij")
        k = sum(s * g for s, g in zip(signs, grids))
        if out_weight is not None:
            coef = coef * np.asarray(out_weight(k), complex)
        key = signs
        if key not in store:
            shape = (nb,) + coef.shape if kind == "symbol" else coef.shape
            store[key] = np.zeros(shape, complex)
        if kind == "symbol":
            store[key][basis_index] += coef
        else:
            store[key] += coef


def field_tensors(jet, K=12, N_out=None, degree=None):
    """Field tensors of the nonlinear part, letters |n| <= K, output |k| <= N_out."""
    names = list(jet["symbols"])
    syms = [jet["symbols"][nm] for nm in names]
    N_out = K if N_out is None else N_out
    store = {}
    for expr, ow in jet["field"]:
        for factors, c in _monomials(expr, names, syms):
            d = len(factors)
            if degree is not None and d != degree:
                continue
            scale = (2 * np.pi) ** (-(d - 1) / 2)
            _accumulate(store, factors, c, jet["letters"], K, scale, ow, "field", 0, 1, None, N_out)
    return TensorSum({s: HomogeneousTensor(s, c, K, "field", N_out=N_out) for s, c in store.items()
                      if np.any(c != 0)})


def symbol_tensors(jet, K, momentum=0, degree=None):
    """x-Fourier coefficient tensors of the nonlinear part of the a-symbol."""
    names = list(jet["symbols"])
    syms = [jet["symbols"][nm] for nm in names]
    basis = [b for b, _ in jet["symbol_a"]]
    store = {}
    for bi, (_, expr) in enumerate(jet["symbol_a"]):
        for factors, c in _monomials(expr, names, syms):
            d = len(factors)
            if degree is not None and d != degree:
                continue
            _accumulate(store, factors, c, jet["letters"], K, (2 * np.pi) ** (-d / 2), None,
                        "symbol", bi, len(basis), momentum, None)
    return TensorSum({s: HomogeneousTensor(s, c, K, "symbol", basis=basis, momentum=momentum)
                      for s, c in store.items() if np.any(c != 0)})


# ---------------------------------------------------------------------------
# x-independent symbol generators

class MultiplierGenerator:
    """G(u)_k = i beta(U; k) u_k with beta(U; xi) = sum b(xi) u^s1_n u^s2_n' (momentum 0)."""

    def __init__(self, beta, N):
        self.beta = beta            # TensorSum of symbol tensors
        self.N = N
        self._basis = {key: np.array([np.asarray(b(modes(N).astype(float)), complex) * np.ones(2 * N + 1)
                                      for b in t.basis]) for key, t in beta.items()}

    def _pair_values(self, t, u):
        Nu = (len(u) - 1) // 2
        v = u[Nu - t.K:Nu + t.K + 1]
        prod = t.coeffs
        for axis, s in enumerate(t.signs):
            w = v if s > 0 else np.conj(v)
            shape = [1] * (t.degree + 1)
            shape[axis + 1] = -1
            prod = prod * w.reshape(shape)
        return prod.reshape(len(t.basis), -1).sum(axis=1)

    def multiplier(self, u, coeffs_of=None):
        out = np.zeros(2 * self.N + 1, complex)
        for key, t in self.beta.items():
            c = self._pair_values(t if coeffs_of is None else coeffs_of[key], u)
            out += c @ self._basis[key]
        return out

    def __call__(self, u):
        u = np.asarray(u, complex)
        return 1j * self.multiplier(u) * u

    def lie(self, freq):
        """L(G) as a callable: i * divisor of the symbol letters (output letter cancels)."""
        lb = lie_action_symbol(self.beta, freq)
        return lambda u: 1j * self.multiplier(np.asarray(u, complex), lb) * np.asarray(u, complex)

    def is_zero(self):
        return all(not np.any(t.coeffs) for t in self.beta.values())


def lie_action_symbol(b, freq):
    return b.map(lambda t: t.copy_with(1j * t.divisors(freq) * t.coeffs))


# ---------------------------------------------------------------------------
# frozen-state constant-coefficient reductions

@dataclass
class DiagDiagnostics:
    offdiag_history: list
    C_history: list
    a_plus: np.ndarray
    converged: bool


def _offdiag_ode(a, b, C, n_tau=64):
    """g1' = -2 Re(g2 conj C), g2' = -2 (1+g1) C from (a, b); RK4 in tau."""
    h = 1.0 / n_tau

    def rhs(g1, g2):
        return -2 * np.real(g2 * np.conj(C)), -2 * (1 + g1) * C

    g1, g2 = np.asarray(a, float).copy(), np.asarray(b, complex).copy()
    hist = [(g1.copy(), g2.copy())]
    for _ in range(n_tau):
        k1 = rhs(g1, g2)
        k2 = rhs(g1 + h / 2 * k1[0], g2 + h / 2 * k1[1])
        k3 = rhs(g1 + h / 2 * k2[0], g2 + h / 2 * k2[1])
        k4 = rhs(g1 + h * k3[0], g2 + h * k3[1])
        g1 = g1 + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        g2 = g2 + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        hist.append((g1.copy(), g2.copy()))
    return hist


def diagonalize_highest(a, b, n_picard=2, n_tau=64, tol=1e-14):
    """Generator C (tau-independent, frozen state) removing the principal off-diagonal part.

    a, b: grid values of the real diagonal and complex off-diagonal principal
    coefficients.  The conjugated principal block satisfies the tau-system of
    _offdiag_ode; C is iterated as
        C_n = b / (2(1+a) - 4 int_0^1 int_0^s Re(g2 conj C_{n-1}) dt ds),
    starting from C_0 = 0 (so C_1 = b / (2(1+a))).
    Returns (C, a_plus, diagnostics) with a_plus = g1(1).
    """
    a = np.asarray(a, float)
    b = np.asarray(b, complex)
    if np.any(1 + a <= 0):
        raise ValueError("1 + a must be positive")
    C = np.zeros_like(b)
    off = [float(np.max(np.abs(b), initial=0.0))]
    Cs = []
    tau = np.linspace(0, 1, n_tau + 1)
    hist = _offdiag_ode(a, b, C, n_tau)
    for _ in range(n_picard):
        re = np.array([np.real(g2 * np.conj(C)) for _, g2 in hist])
        # int_0^1 int_0^s f dt ds = int_0^1 (1 - t) f dt
        dbl = simpson((1 - tau)[:, None] * re, x=tau, axis=0)
        C = b / (2 * (1 + a) - 4 * dbl)
        Cs.append(C.copy())
        hist = _offdiag_ode(a, b, C, n_tau)
        off.append(float(np.max(np.abs(hist[-1][1]), initial=0.0)))
        if off[-1] <= tol:
            break
    return C, hist[-1][0], DiagDiagnostics(off, Cs, hist[-1][0], off[-1] <= max(tol, 1e-3 * off[0]))


def conjugate_principal_block(ms, C, cutoff, N, order=2.0):
    """Operator-level check: e^{Op(G)} E Op(A) e^{-Op(G)} with G = [[0, C], [Cbar, 0]].

    ms: MatrixSymbol of the full system; C: FourierField (x-part of the
    bounded generator).  Returns (before, after) = max over high columns of the
    off-diagonal block column norm / <j>^order.
    """
    from scipy.linalg import expm
    from .quantization import block_op_bw
    from .symbols import MatrixSymbol, SeparableSymbol, const_fn, zero_fn
    A = block_op_bw(ms, cutoff, N).matrix
    n = 2 * N + 1
    E = np.diag(np.r_[np.ones(n), -np.ones(n)])
    gen = MatrixSymbol(SeparableSymbol([(0.0, zero_fn())], order=0), SeparableSymbol([(C, const_fn(1.0))], order=0))
    Gm = block_op_bw(gen, cutoff, N).matrix
    M0 = E @ A
    M1 = expm(Gm) @ M0 @ expm(-Gm)
    j = modes(N)
    hi = np.abs(j) >= N // 2
    w = japanese(j, order)

    def measure(M):
        off = M[:n, n:]
        return float(np.max(np.linalg.norm(off[:, hi], axis=0) / w[hi]))
    return measure(M0), measure(M1)


@dataclass
class LowerReduction:
    c: object                 # callable (x, xi) -> generator symbol
    constant: object          # callable xi -> x-average
    variance_before: np.ndarray
    variance_after: np.ndarray


def _xgrid(M):
    return 2 * np.pi * np.arange(M) / M


def _dx_inverse(vals, tol=1e-9):
    """Zero-mean periodic antiderivative along the last axis."""
    M = vals.shape[-1]
    mean = np.mean(vals, axis=-1)
    if np.max(np.abs(mean)) > tol * max(1.0, float(np.max(np.abs(vals)))):
        raise ValueError("antiderivative of data with nonzero mean")
    n = np.fft.fftfreq(M, 1.0 / M)
    mult = np.zeros(M, complex)
    mult[n != 0] = 1.0 / (1j * n[n != 0])
    out = np.fft.ifft(np.fft.fft(vals, axis=-1) * mult, axis=-1)
    return out.real if np.isrealobj(vals) else out


def reduce_constant_lower(a_lower, f_m, mfrak=0.0, M=64, xi=None):
    """Lower-order constant-coefficient reduction at a frozen state.

    a_lower(x, xi) -> values (broadcasting); f_m: XiFn; mfrak: constant of the
    principal part.  c = d_x^{-1}((a - <a>)/((1+mfrak) f_m')).
    """
    xi = np.arange(1, 33, dtype=float) if xi is None else np.asarray(xi, float)
    x = _xgrid(M)
    A = np.asarray(a_lower(x[None, :], xi[:, None]), complex) * np.ones((len(xi), M))
    mean = A.mean(axis=1)
    df = np.asarray(f_m.derivative(1)(xi), float)
    if np.any(df == 0):
        raise ValueError("f_m' vanishes on the sampled xi")
    C = _dx_inverse((A - mean[:, None]) / ((1 + mfrak) * df[:, None]))
    conj = A - (1 + mfrak) * df[:, None] * _spectral_dx(C)
    cfun = _grid_interp(C, xi)

    def constant(q):
        return np.asarray(a_lower(x[None, :], np.atleast_1d(np.asarray(q, float))[:, None]),
                          complex).mean(axis=1)

    return cfun, constant, LowerReduction(cfun, constant, np.var(A, axis=1), np.var(conj, axis=1))


def _spectral_dx(vals):
    M = vals.shape[-1]
    n = np.fft.fftfreq(M, 1.0 / M)
    if M % 2 == 0:
        n[M // 2] = 0
    return np.fft.ifft(np.fft.fft(vals, axis=-1) * 1j * n, axis=-1)


def _grid_interp(C, xi):
    """(x, q) -> C at the sampled xi nearest to q, trigonometric in x."""
    M = C.shape[1]
    hat = np.fft.fft(C, axis=1) / M
    n = np.fft.fftfreq(M, 1.0 / M)

    def fn(x, q):
        x = np.asarray(x, float)
        i = np.abs(xi[:, None] - np.atleast_1d(q)[None, :]).argmin(axis=0)
        vals = np.einsum("qn,...n->q...", hat[i], np.exp(1j * np.multiply.outer(x, n)))
        return vals
    return fn


def eliminate_offdiag_lower(b_lower, a_m, f_m, M=64, xi=None):
    """C = b_lower / (2 (1+a_m) f_m) at a frozen state; returns (C, residual).

    b_lower(x, xi), a_m(x) callables; f_m XiFn.  xi = 0 takes the value at the
    smallest sampled |xi| > 0 (even extension) when f_m(0) = 0.  The residual
    is measured on the xi with f_m(xi) != 0.
    """
    xi = np.arange(-16, 17, dtype=float) if xi is None else np.asarray(xi, float)
    x = _xgrid(M)
    Bv = np.asarray(b_lower(x[None, :], xi[:, None]), complex) * np.ones((len(xi), M))
    av = np.asarray(a_m(x), float) * np.ones(M)
    fv = np.asarray(f_m(xi), float)
    zero = fv == 0
    if np.any(zero & (xi != 0)):
        raise ValueError("f_m vanishes at a sampled xi != 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        C = Bv / (2 * (1 + av)[None, :] * fv[:, None])
    if np.any(zero):
        nz = np.abs(xi[~zero])
        q = nz.min()
        ref = np.where(~zero & (np.abs(xi) == q))[0][0]
        C[zero] = C[ref]
    # the equation is void where f_m = 0; the residual skips those rows
    resid = (Bv - 2 * (1 + av)[None, :] * fv[:, None] * C)[~zero]
    return C, float(np.max(np.abs(resid), initial=0.0))


# ---------------------------------------------------------------------------
# normal form pipeline

def rk4_flow(G, u, t=1.0, steps=8):
    u = np.asarray(u, complex)
    h = t / steps
    for _ in range(steps):
        k1 = G(u)
        k2 = G(u + h / 2 * k1)
        k3 = G(u + h / 2 * k2)
        k4 = G(u + h * k3)
        u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(u)):
            raise FloatingPointError("generator flow blew up")
    return u


@dataclass
class BnfTransform:
    """Time-one flow of G = G_sym + G_s; steps record the coefficient tensors."""
    N: int
    steps: list
    generator: object
    flow_steps: int = 8

    def forward(self, u):
        return rk4_flow(self.generator, u, 1.0, self.flow_steps)

    def inverse(self, z):
        return rk4_flow(self.generator, z, -1.0, self.flow_steps)

    __call__ = forward

    def round_trip(self, u):
        u = np.asarray(u, complex)
        return float(np.linalg.norm(self.forward(self.inverse(u)) - u) / max(np.linalg.norm(u), 1e-300))

    def is_identity(self):
        return all(_tensor_zero(s["coeffs"]) for s in self.steps)

    def norm_constants(self, probes, s=0.0):
        """(C_lin, C_quad) with ||B(Z)|| = ||Z||(1 + C ||Z||) or (1 + C ||Z||^2)."""
        from .torus import sobolev_weight
        w = sobolev_weight(self.N, s)
        out = []
        for z in probes:
            nz = np.linalg.norm(w * z)
            nb = max(np.linalg.norm(w * self.forward(z)), np.linalg.norm(w * self.inverse(z)))
            ratio = abs(nb / nz - 1)
            out.append((ratio / nz, ratio / nz ** 2))
        return np.max(np.array(out), axis=0)


def _tensor_zero(t):
    if isinstance(t, TensorSum):
        return all(not np.any(x.coeffs) for x in t.values())
    if isinstance(t, MultiplierGenerator):
        return t.is_zero()
    return not np.any(t.coeffs)


@dataclass
class TransformedSystem:
    """Z' = X(Z) + L(G)(Z): the conjugated field truncated at the order eliminated."""
    base: object
    correction: object

    @property
    def N(self):
        return self.base.N

    @property
    def linear(self):
        return self.base.linear

    def field(self, u):
        return self.base.field(u) + self.correction(u)

    def nonlinear(self, u):
        return self.field(u) - self.linear * np.asarray(u, complex)


def bnf_pipeline(system, N_order=1, K=12, check_J=None, floor=None):
    """One normal-form step on the lowest-degree nonlinear terms.

    Symbol step on the x-independent part of the a-symbol (all modes), then
    a smoothing step on the remaining non-resonant field monomials with every
    letter, including the output, in the box |n| <= K.
    """
    if N_order != 1:
        raise NotImplementedError("only the first normal-form step is implemented")
    jet = getattr(system, "jet", None)
    if jet is None:
        raise ValueError(f"system {system.name} carries no jet data")
    freq = system.freq
    if floor is not None:
        freq = FrequencySpec(freq.omega, freq.family, freq.params, floor)
    if freq.omega[freq.N] == 0:
        raise DivisorError("omega_0 = 0")
    X = field_tensors(jet, K, K)
    if not X:
        return BnfTransform(system.N, [], lambda u: np.zeros_like(u)), TransformedSystem(system, lambda u: 0)
    deg = min(t.degree for t in X.values())
    if check_J:
        rep = check_nonresonance(freq, deg + 1, min(check_J, freq.N))
        if rep["min_divisor"] <= freq.floor:
            raise DivisorError(f"non-resonance fails at order {deg + 1}: {rep['violating_tuples'][:3]}")
    X = TensorSum({k: t for k, t in X.items() if t.degree == deg})

    steps = []
    gsym = MultiplierGenerator(TensorSum(), system.N)
    Y = X
    if jet.get("symbol_a"):
        m = symbol_tensors(jet, system.N, 0, deg - 1)
        beta = homological_symbol_step(m, freq)
        gsym = MultiplierGenerator(beta, system.N)
        steps.append({"kind": "symbol-step", "degree": deg - 1, "coeffs": beta})
        # L(G_sym) restricted to the box, as field tensors
        Lsym = _multiplier_to_field(lie_action_symbol(beta, freq), K)
        Y = _add(X, Lsym)
    gs = homological_smoothing_step(Y, freq)
    steps.append({"kind": "smoothing-step", "degree": deg, "coeffs": gs, "input": Y})
    Ls = gs.map(lambda t: lie_action(t, freq))

    def G(u):
        return gsym(u) + gs.evaluate(u, system.N)

    Lg = gsym.lie(freq)

    def correction(u):
        return Lg(u) + Ls.evaluate(u, system.N)

    tr = BnfTransform(system.N, steps, G)
    tr.degree = deg
    tr.box_field = X
    tr.box_input = Y
    tr.freq = freq
    return tr, TransformedSystem(system, correction)


def _multiplier_to_field(beta, K):
    """Box restriction of u -> i beta(U; k) u_k as field tensors (letters s1, s2, +)."""
    out = {}
    n = np.arange(-K, K + 1)
    for key, t in beta.items():
        if t.degree != 2:
            raise NotImplementedError("symbol generators of degree 2 only")
        Nt = t.K
        sub = t.coeffs[:, Nt - K:Nt + K + 1, Nt - K:Nt + K + 1]
        xi_vals = np.array([np.asarray(b(n.astype(float)), complex) * np.ones(len(n)) for b in t.basis])
        coef = 1j * np.einsum("bpq,bk->pqk", sub, xi_vals)
        signs = key + (1,)
        out[signs] = HomogeneousTensor(signs, coef, K, "field", N_out=K)
    return TensorSum(out)


def _add(X, Y):
    out = dict(X)
    for k, t in Y.items():
        if k in out:
            out[k] = out[k].copy_with(out[k].coeffs + t.coeffs)
        else:
            # reorder signs canonically (+ first) by permuting axes
            order = sorted(range(len(k)), key=lambda i: -k[i])
            key = tuple(k[i] for i in order)
            t2 = HomogeneousTensor(key, np.transpose(t.coeffs, order), t.K, "field", N_out=t.N_out)
            if key in out:
                out[key] = out[key].copy_with(out[key].coeffs + t2.coeffs)
            else:
                out[key] = t2
    return TensorSum(out)
