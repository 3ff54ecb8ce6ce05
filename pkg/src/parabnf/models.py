"""Paralinearized model systems: quasi-linear NLS, beam, Benjamin-Ono.

State conventions.  NLS and beam act on a complex u with the pair
U = (u, ubar) implied; a system returns du as a coefficient vector and its
paralinearization as u' = i(A u + B ubar) with dense matrices A, B.
Benjamin-Ono is scalar and real: u' = L(u) u.

Nonlinearities are polynomials in jet variables, differentiated with sympy.
Wirtinger derivatives are the formal ones (d/dz z = 1, u and ubar
independent).
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
import sympy as sp

from .calculus import sharp
from .egorov_bnf import FrequencySpec, beam_frequencies, nls_frequencies
from .quantization import DEFAULT_CUTOFF, ParaOp, op_bw
from .symbols import (MatrixSymbol, SeparableSymbol, absxi_xi_fn, abs_fn,
                      const_fn, ixi_fn, nls_f2_fn, nls_potential_fn)
from .torus import (FourierField, analyze_array, good_size, modes,
                    sobolev_norm, synthesize_array)
from .calculus import smoothing_order


def hilbert_multiplier(N):
    """Diagonal of the periodic Hilbert transform, -i sign(j), sign(0) = 0."""
    return -1j * np.sign(modes(N))


def _dx(vals, k=1):
    M = vals.shape[-1]
    n = np.fft.fftfreq(M, 1.0 / M)
    if M % 2 == 0:
        n[M // 2] = 0
    return np.fft.ifft(np.fft.fft(vals, axis=-1) * (1j * n) ** k, axis=-1)


# ---------------------------------------------------------------------------
# jet polynomials

class JetPoly:
    """Polynomial in named jet variables with numpy evaluation of partials."""

    def __init__(self, expr, variables, name="F"):
        self.variables = list(variables)
        self.syms = sp.symbols(self.variables)
        self.expr = sp.expand(sp.sympify(expr, locals=dict(zip(self.variables, self.syms))))
        self.name = name
        self._cache = {}

    @property
    def degree(self):
        return int(sp.Poly(self.expr, *self.syms).total_degree()) if self.expr != 0 else 0

    def partial(self, *names):
        """Partial derivative in the listed variables, as a JetPoly."""
        e = self.expr
        for nm in names:
            e = sp.diff(e, self.syms[self.variables.index(nm)])
        return JetPoly(e, self.variables, f"d{''.join(names)}{self.name}")

    def __call__(self, **vals):
        f = self._cache.get("f")
        if f is None:
            f = sp.lambdify(self.syms, self.expr, "numpy")
            self._cache["f"] = f
        shape = np.shape(next(iter(vals.values())))
        out = f(*[vals[v] for v in self.variables])
        return np.broadcast_to(np.asarray(out, dtype=complex), shape).copy()


@dataclass
class CatalogEntry:
    id: str
    poly: JetPoly
    note: str = ""


NLS_VARS = ("u0", "u1", "v0", "v1")           # u, u_x, ubar, ubar_x
BEAM_VARS = ("p0", "p1", "p2")                 # psi, psi_x, psi_xx
BO_VARS = ("z0", "z1", "z2", "z3", "z4")       # u, Hu, u_x, Hu_x, Hu_xx

NLS_CATALOG = {
    "abs2_absux2": CatalogEntry("abs2_absux2", JetPoly("u0*v0*u1*v1", NLS_VARS), "|u|^2 |u_x|^2"),
    "reu2_absux2": CatalogEntry("reu2_absux2", JetPoly("(u0**2 + v0**2)*u1*v1/2", NLS_VARS), "Re(u^2) |u_x|^2"),
    "abs4": CatalogEntry("abs4", JetPoly("u0**2*v0**2/2", NLS_VARS), "|u|^4 / 2, semilinear"),
}

BEAM_CATALOG = {
    "pxx3": CatalogEntry("pxx3", JetPoly("p2**3", BEAM_VARS), "psi_xx^3"),
    "p2pxx2": CatalogEntry("p2pxx2", JetPoly("p0**2*p2**2", BEAM_VARS), "psi^2 psi_xx^2"),
}

BO_CATALOG = {
    "example_i": CatalogEntry("example_i", JetPoly("z0**2*z4 + 2*z0*z2*z3", BO_VARS), "u^2 Hu_xx + 2 u u_x Hu_x"),
    "u2ux": CatalogEntry("u2ux", JetPoly("z0**2*z2", BO_VARS), "u^2 u_x"),
    "uHuux": CatalogEntry("uHuux", JetPoly("z0*z1*z2", BO_VARS), "u Hu u_x"),
}


def _entry(catalog, key):
    if isinstance(key, CatalogEntry):
        return key
    if isinstance(key, JetPoly):
        return CatalogEntry(key.name, key)
    try:
        return catalog[key]
    except KeyError:
        raise KeyError(f"unknown catalog id {key!r}; known: {sorted(catalog)}") from None


# ---------------------------------------------------------------------------
# systems

@dataclass
class ParaSystem:
    """Evolution u' = X(u) with its paralinearization.

    field(u) -> du (exact nonlinearity on a dealiased grid)
    operators(u) -> (A, B), the nonlinear part of the paralinearized field
        i(A u + B ubar); for scalar systems B is None and it is A u.
    The full field adds linear * u.
    """
    name: str
    N: int
    freq: FrequencySpec
    linear: np.ndarray                   # diagonal of the linear part of X
    field: Callable
    operators: Callable
    order: float
    kind: str = "pair"
    hamiltonian: Callable | None = None
    matrix_symbol: Callable | None = None
    leading: Callable | None = None      # a_m(U; x) on a grid of M points
    catalog_id: str = ""
    params: dict = dc_field(default_factory=dict)
    cutoff: object = None
    jet: dict | None = None              # jet polynomials for coefficient tensors

    def para_field(self, u):
        u = _coeffs(u)
        return self.linear * u + self.para_nonlinear(u)

    def para_nonlinear(self, u):
        """Paralinearized field minus the linear part."""
        u = _coeffs(u)
        A, B = self.operators(u)
        if self.kind == "scalar":
            return A @ u
        return 1j * (A @ u + B @ np.conj(u[::-1]))

    def full_operators(self, u):
        """(A, B) including the linear multiplier."""
        A, B = self.operators(_coeffs(u))
        lin = self.linear if self.kind == "scalar" else self.linear / 1j
        return A + np.diag(lin), B

    def nonlinear(self, u):
        u = _coeffs(u)
        return self.field(u) - self.linear * u


def _coeffs(u):
    return u.coeffs if isinstance(u, FourierField) else np.asarray(u, complex)


def _grid_for(N, degree):
    return good_size(max(4 * N + 2, (degree + 1) * N + 1))


def _field_x(vals, N):
    """Grid samples -> FourierField on 2N modes (x-parts of symbols)."""
    return FourierField(analyze_array(vals, 2 * N), 2 * N)


def nls_system(mvec=(0.31, -0.17), F_id="abs2_absux2", N=64, cutoff=None):
    """i u_t - u_xx + P*u + f(u, u_x, u_xx) = 0 with f = F_vbar0 - d/dx F_vbar1."""
    entry = _entry(NLS_CATALOG, F_id)
    mvec = np.atleast_1d(np.asarray(mvec, float))
    if np.any(np.abs(mvec) > 0.5):
        raise ValueError("m must lie in [-1/2, 1/2]^M")
    F = entry.poly
    freq = nls_frequencies(mvec, N)
    omega = freq.omega
    M = _grid_for(N, max(F.degree, 2))
    k = modes(N)
    cut = cutoff or DEFAULT_CUTOFF

    Fv0, Fv1 = F.partial("v0"), F.partial("v1")
    # second partials used in the Weyl symbol
    P = {key: F.partial(*key) for key in [("u1", "v1"), ("v1", "v1"), ("u1", "v0"), ("u0", "v1"),
                                          ("u0", "v0"), ("v0", "v1"), ("v0", "v0")]}

    def jets(u):
        v = synthesize_array(u, M)
        vx = synthesize_array(1j * k * u, M)
        return dict(u0=v, u1=vx, v0=np.conj(v), v1=np.conj(vx))

    def f_grid(u):
        J = jets(u)
        return Fv0(**J) - _dx(Fv1(**J))

    def field(u):
        u = _coeffs(u)
        return 1j * omega * u + 1j * analyze_array(f_grid(u), N)

    def coefficients(u):
        """Grid values of (a2~, a1~, a0~, b2~, b1~, b0~)."""
        J = jets(u)
        d = {key: p(**J) for key, p in P.items()}
        g2 = -d["u1", "v1"]
        h2 = -d["v1", "v1"]
        g1 = d["u1", "v0"] - d["u0", "v1"] + _dx(g2)
        h1 = _dx(h2)                               # F_v0v1 - F_v1v0 = 0
        g0 = d["u0", "v0"] - _dx(d["u0", "v1"])
        h0 = d["v0", "v0"] - _dx(d["v0", "v1"])
        # Weyl symbol of sum Op(g_i) d_x^i
        a2, a1, a0 = g2, g1 - _dx(g2), g0 - 0.5 * _dx(g1) + 0.25 * _dx(g2, 2)
        b2, b1, b0 = h2, h1 - _dx(h2), h0 - 0.5 * _dx(h1) + 0.25 * _dx(h2, 2)
        return a2, a1, a0, b2, b1, b0

    f2 = nls_f2_fn(mvec)
    pfn = nls_potential_fn(mvec)

    def matrix_symbol(u):
        a2, a1, a0, b2, b1, b0 = (_field_x(c, N) for c in coefficients(_coeffs(u)))
        terms = [(-1.0 * a2, f2), (a1, ixi_fn()), (a0, const_fn(1.0)), (a2, pfn)]
        a = SeparableSymbol([(1.0, f2)] + terms, order=2, real=True, name="a")
        a_nl = SeparableSymbol(terms, order=2, real=True, name="a-f2")
        b = SeparableSymbol([(-1.0 * b2, f2), (b1, ixi_fn()), (b0, const_fn(1.0)), (b2, pfn)],
                            order=2, name="b")
        ms = MatrixSymbol(a, b)
        ms.a_nonlinear = a_nl
        return ms

    def operators(u):
        ms = matrix_symbol(u)
        return op_bw(ms.a_nonlinear, cut, N).matrix, op_bw(ms.b, cut, N).matrix

    def hamiltonian(u):
        u = _coeffs(u)
        J = jets(u)
        return float(np.sum(omega * np.abs(u) ** 2) + 2 * np.pi * np.mean(F(**J)).real)

    def leading(u, M_out=None):
        """a_2(U; x) = F_{u_x ubar_x} on the grid."""
        J = jets(_coeffs(u))
        v = P["u1", "v1"](**J).real
        return v if M_out is None else np.real(synthesize_array(analyze_array(v, N), M_out))

    letters = {"u0": [(1, lambda n: np.ones(np.shape(n)))], "u1": [(1, lambda n: 1j * n)],
               "v0": [(-1, lambda n: np.ones(np.shape(n)))], "v1": [(-1, lambda n: -1j * n)]}
    jet = {"symbols": dict(zip(F.variables, F.syms)), "letters": letters,
           "field": [(Fv0.expr, lambda q: 1j * np.ones(np.shape(q))), (Fv1.expr, lambda q: q + 0j)],
           # x-averages of the Weyl coefficients; total derivatives average to zero
           "symbol_a": [(f2, P["u1", "v1"].expr), (ixi_fn(), P["u1", "v0"].expr - P["u0", "v1"].expr),
                        (const_fn(1.0), P["u0", "v0"].expr), (pfn, -P["u1", "v1"].expr)]}
    return ParaSystem(f"nls[{entry.id}]", N, freq, 1j * omega, field, operators, 2.0,
                      hamiltonian=hamiltonian, matrix_symbol=matrix_symbol, leading=leading,
                      catalog_id=entry.id, params={"m": mvec.tolist()}, cutoff=cut, jet=jet)


def beam_system(mass=1.0, G_id="pxx3", N=64, cutoff=None):
    """psi_tt + psi_xxxx + mass psi + g(psi) = 0, g the Euler-Lagrange expression of G.

    Complex variable u = (Omega^{1/2} psi - i Omega^{-1/2} psi_t)/sqrt 2 gives
    u' = i Omega u + (i/sqrt 2) Omega^{-1/2} g(psi).
    """
    import warnings
    if not 1.0 <= mass <= 2.0:
        warnings.warn(f"mass {mass} outside [1, 2]", stacklevel=2)
    entry = _entry(BEAM_CATALOG, G_id)
    G = entry.poly
    freq = beam_frequencies(mass, N)
    omega = freq.omega
    k = modes(N)
    M = _grid_for(N, max(G.degree, 2))
    cut = cutoff or DEFAULT_CUTOFF
    w = omega ** -0.5
    D = 1j * k

    names = BEAM_VARS
    G1 = [G.partial(nm) for nm in names]
    G2 = {(a, b): G.partial(names[a], names[b]) for a in range(3) for b in range(3)}

    def psi_of(u):
        return w * (u + np.conj(u[::-1])) / np.sqrt(2.0)

    def jets(u):
        psi = psi_of(u)
        return {f"p{d}": synthesize_array(D ** d * psi, M).real for d in range(3)}

    def g_grid(u):
        J = jets(u)
        return sum((-1) ** d * _dx(G1[d](**J), d) for d in range(3))

    def field(u):
        u = _coeffs(u)
        return 1j * omega * u + 1j / np.sqrt(2.0) * w * analyze_array(g_grid(u), N)

    def c_fields(u):
        J = jets(u)
        return {key: FourierField(analyze_array(p(**J).real, 2 * N), 2 * N) for key, p in G2.items()}

    def b_operator(u):
        """B = 1/2 sum (-1)^k W d^k Op(c_kj) d^j W, W = Omega^{-1/2}."""
        B = np.zeros((2 * N + 1, 2 * N + 1), complex)
        for (a, b), c in c_fields(u).items():
            if np.max(np.abs(c.coeffs)) == 0:
                continue
            C = op_bw(SeparableSymbol([(c, const_fn(1.0))], order=0, real=True), cut, N).matrix
            B += 0.5 * (-1) ** a * (w * D ** a)[:, None] * C * (D ** b * w)[None, :]
        return B

    def operators(u):
        B = b_operator(_coeffs(u))
        return B, B

    def hamiltonian(u):
        u = _coeffs(u)
        return float(np.sum(omega * np.abs(u) ** 2) + 2 * np.pi * np.mean(G(**jets(u))).real)

    def leading(u, M_out=None):
        """a_2 = c_22 / 2 (coefficient of f_2 in Op(a) = Omega + B)."""
        v = 0.5 * G2[2, 2](**jets(_coeffs(u))).real
        return v if M_out is None else np.real(synthesize_array(analyze_array(v, N), M_out))

    def wn(n):
        return (np.asarray(n, float) ** 4 + mass) ** -0.25

    def letter(d):
        return [(1, lambda n: wn(n) * (1j * n) ** d / np.sqrt(2.0)),
                (-1, lambda n: wn(n) * (-1j * n) ** d / np.sqrt(2.0))]

    def out(d):
        return lambda q: 1j / np.sqrt(2.0) * wn(q) * (-1) ** d * (1j * q) ** d

    jet = {"symbols": dict(zip(G.variables, G.syms)), "letters": {f"p{d}": letter(d) for d in range(3)},
           "field": [(G1[d].expr, out(d)) for d in range(3)]}
    return ParaSystem(f"beam[{entry.id}]", N, freq, 1j * omega, field, operators, 2.0,
                      hamiltonian=hamiltonian, leading=leading, catalog_id=entry.id,
                      params={"mass": float(mass)}, cutoff=cut, jet=jet)


def benonoassump_defect(g_id, u, N=None):
    """sup |d_{z3} g - d/dx d_{z4} g| on the grid for the state u."""
    entry = _entry(BO_CATALOG, g_id)
    u = _coeffs(u)
    N = N or (len(u) - 1) // 2
    M = _grid_for(N, max(entry.poly.degree, 2))
    J = _bo_jets(u, M)
    b3 = entry.poly.partial("z3")(**J)
    b4 = entry.poly.partial("z4")(**J)
    return float(np.max(np.abs(b3 - _dx(b4))))


def _bo_jets(u, M):
    N = (len(u) - 1) // 2
    H = hilbert_multiplier(N)
    D = 1j * modes(N)
    ops = [1, H, D, H * D, H * D * D]
    return {f"z{i}": synthesize_array(op * u, M).real for i, op in enumerate(ops)}


def benjamin_ono_system(g_id="example_i", N=64, cutoff=None):
    """u_t + H u_xx + u u_x + g(u, Hu, u_x, Hu_x, Hu_xx) = 0 for real u."""
    entry = _entry(BO_CATALOG, g_id)
    g = entry.poly
    M = _grid_for(N, max(g.degree, 2))
    k = modes(N)
    H = hilbert_multiplier(N)
    D = 1j * k
    cut = cutoff or DEFAULT_CUTOFF
    lin = -H * D * D                              # -H d_xx = -i |j| j
    freq = FrequencySpec(np.abs(k) * k.astype(float), "bo", {})
    bparts = [g.partial(f"z{i}") for i in range(5)]
    ops = [np.ones(2 * N + 1), H, D, H * D, H * D * D]

    def field(u):
        u = _coeffs(u)
        J = _bo_jets(u, M)
        nl = J["z0"] * J["z2"] + g(**J)
        return lin * u - analyze_array(nl, N)

    def b_fields(u):
        J = _bo_jets(_coeffs(u), M)
        return [FourierField(analyze_array(b(**J).real, 2 * N), 2 * N) for b in bparts]

    def operators(u):
        u = _coeffs(u)
        uf = FourierField(np.pad(u, N), 2 * N)
        L = -_mult(uf, cut, N) * D[None, :] - _mult(uf.derivative(), cut, N)
        for b, op in zip(b_fields(u), ops):
            L -= _mult(b, cut, N) * op[None, :]
        return L, None

    def leading(u, M_out=None):
        J = _bo_jets(_coeffs(u), M)
        v = bparts[4](**J).real
        return v if M_out is None else np.real(synthesize_array(analyze_array(v, N), M_out))

    sysm = ParaSystem(f"bo[{entry.id}]", N, freq, lin, field, operators, 2.0, kind="scalar",
                      leading=leading, catalog_id=entry.id, cutoff=cut)
    sysm.b_fields = b_fields
    return sysm


def _mult(f, cut, N):
    if np.max(np.abs(f.coeffs)) == 0:
        return np.zeros((2 * N + 1, 2 * N + 1), complex)
    return op_bw(SeparableSymbol([(f, const_fn(1.0))], order=0, real=True), cut, N).matrix


def bo_order_one_coefficient(system, u, xi_min=2.0):
    """sup over x and |xi| >= xi_min of the |xi|-coefficient of the operator
    Op(b4) H d_xx + Op(b3) H d_x, computed through the symbolic expansion:
    ((b4 #_1 i|xi|xi) - b4 i|xi|xi)/|xi| + b3."""
    N = system.N
    b = system.b_fields(u)
    s4 = SeparableSymbol([(b[4], const_fn(1.0))], order=0, real=True)
    q = SeparableSymbol([(1j, absxi_xi_fn())], order=2)
    M = 2 * (4 * N + 1)
    xi = np.arange(xi_min, N + 1)
    xi = np.concatenate([-xi[::-1], xi])
    first = sharp(s4, q, 1).sample(M, xi) - sharp(s4, q, 0).sample(M, xi)
    b3 = SeparableSymbol([(b[3], abs_fn())], order=1, real=True).sample(M, xi)
    coef = (first + b3) / np.abs(xi)[:, None]
    return float(np.max(np.abs(coef)))


# ---------------------------------------------------------------------------
# checks

def gradient_field(system, u, h=1e-6):
    """i dH/d(ubar_n) by central differences, dH/dubar = (d_Re + i d_Im)/2."""
    u = _coeffs(u).astype(complex)
    n = len(u)
    out = np.zeros(n, complex)
    H = system.hamiltonian
    for m in range(n):
        e = np.zeros(n, complex)
        e[m] = h
        dre = (H(u + e) - H(u - e)) / (2 * h)
        dim = (H(u + 1j * e) - H(u - 1j * e)) / (2 * h)
        out[m] = 0.5 * (dre + 1j * dim)
    return 1j * out


def _linearized_difference(system, u, eps=None, cols=None, rel_floor=1e-11):
    """Columns d/de [X(u + e e_j) - X_para(u + e e_j)] at e = 0.

    The linear parts cancel exactly and are dropped before differencing.
    Columns below rel_floor times the matching column of the linearized
    paralinearization are round-off and are zeroed.
    """
    u = _coeffs(u)
    n = len(u)
    eps = 1e-3 * float(np.max(np.abs(u))) if eps is None else eps
    cols = range(n) if cols is None else cols
    out = np.zeros((n, n), complex)
    def central(j, h):
        e = np.zeros(n, complex)
        e[j] = h
        pp, pm = system.para_nonlinear(u + e), system.para_nonlinear(u - e)
        dp, dm = system.nonlinear(u + e) - pp, system.nonlinear(u - e) - pm
        return (dp - dm) / (2 * h), (pp - pm) / (2 * h)

    for j in cols:
        # one Richardson step removes the h^2 term (exact for cubic fields)
        c1, ref = central(j, eps)
        c2, _ = central(j, 0.5 * eps)
        col = (4 * c2 - c1) / 3.0
        out[:, j] = col if np.linalg.norm(col) > rel_floor * np.linalg.norm(ref) else 0.0
    return out


def hamiltonian_gradient_check(system, u, h=1e-6, smoothing=True):
    """Compare i dH/dubar with the paralinearized field.

    Returns relative error, the relative error of the nonlinear parts, and
    the smoothing order of the linearized difference X - X_para.
    """
    if system.hamiltonian is None:
        raise ValueError("system carries no Hamiltonian")
    u = _coeffs(u)
    grad = gradient_field(system, u, h)
    para = system.para_field(u)
    exact = system.field(u)
    lin = system.linear * u
    rep = {
        "relative_error": float(np.linalg.norm(grad - para) / np.linalg.norm(grad)),
        "exact_relative_error": float(np.linalg.norm(grad - exact) / np.linalg.norm(grad)),
        "nonlinear_relative_error": float(np.linalg.norm((grad - lin) - (para - lin)) /
                                          max(np.linalg.norm(grad - lin), 1e-300)),
    }
    if smoothing:
        R = _linearized_difference(system, u)
        rep["difference_smoothing_order"] = smoothing_order(ParaOp(R, 0.0))
    return rep


def paralinearization_residual(system, u, s=4.0):
    """Residual X(u) - X_para(u) and its size at u and u/2."""
    u = _coeffs(u)
    r1 = system.field(u) - system.para_field(u)
    r2 = system.field(0.5 * u) - system.para_field(0.5 * u)
    n1, n2 = sobolev_norm(r1, s), sobolev_norm(r2, s)
    R = _linearized_difference(system, u)
    return r1, {"norm": n1, "norm_half": n2, "ratio": n1 / n2 if n2 > 0 else np.inf,
                "smoothing_order": smoothing_order(ParaOp(R, 0.0))}


NLS_DEFAULT_M = (0.31, -0.17)


def build_system(model="nls", N=64, cutoff=None, **kw):
    """Factory used by the harness: model in {nls, beam, bo}."""
    if model == "nls":
        return nls_system(kw.get("m", NLS_DEFAULT_M), kw.get("catalog", "abs2_absux2"), N, cutoff)
    if model == "beam":
        return beam_system(kw.get("mass", 1.0), kw.get("catalog", "pxx3"), N, cutoff)
    if model == "bo":
        return benjamin_ono_system(kw.get("catalog", "example_i"), N, cutoff)
    raise ValueError(f"unknown model {model!r}")


def linear_system(N=64, omega=None):
    """The multiplier flow u' = i omega u (no nonlinearity)."""
    omega = modes(N).astype(float) ** 2 + 1.0 if omega is None else np.asarray(omega, float)
    freq = FrequencySpec(omega, "custom")

    def operators(u):
        Z = np.zeros((2 * N + 1, 2 * N + 1), complex)
        return Z, Z

    return ParaSystem("linear", N, freq, 1j * omega, lambda u: 1j * omega * _coeffs(u), operators, 2.0,
                      hamiltonian=lambda u: float(np.sum(omega * np.abs(_coeffs(u)) ** 2)))
