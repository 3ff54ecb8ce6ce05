"""Nonlinear para-differential flows and the transport machinery.

The flow d_tau z = Op^BW(i f(tau, z; x, xi)) z on tau in [0, 1] is computed
by Picard iteration: each sweep freezes the coefficients along the previous
trajectory and integrates the resulting linear problem with a classical
RK4 step.  Midpoint states are recovered by cubic Hermite interpolation.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field

import numpy as np

from .quantization import DEFAULT_CUTOFF, op_bw
from .symbols import SeparableSymbol, power_fn
from .torus import (FourierField, antiderivative, evaluate, good_size, grid,
                    real_field, sobolev_norm, synthesize)


class FlowError(RuntimeError):
    """Picard iteration failed to contract."""

    def __init__(self, msg, history=()):
        super().__init__(msg)
        self.history = list(history)


class BlowUpError(FlowError):
    pass


FORMS = ("transport", "order-m-real", "bounded", "multiplier")


class GeneratorSpec:
    """f(tau, z; x, xi) for the flow d_tau z = Op^BW(i f) z.

    `symbol_fn(tau, z)` returns a Symbol (without the factor i).
    """

    def __init__(self, form, symbol_fn, order=None, name="gen"):
        if form not in FORMS:
            raise ValueError(f"unknown generator form {form!r}")
        self.form = form
        self.symbol_fn = symbol_fn
        self.order = order
        self.name = name

    def symbol(self, tau, z):
        return self.symbol_fn(tau, z)

    def matrix(self, tau, z, cutoff=None):
        sym = self.symbol(tau, z)
        A = op_bw(sym, cutoff, z.N).matrix
        return 1j * A, sym.x_independent

    def reversed(self):
        """Generator of w(sigma) = z(1 - sigma)."""
        parent = self

        class _Rev(GeneratorSpec):
            def matrix(self, tau, z, cutoff=None):
                A, diag = parent.matrix(1.0 - tau, z, cutoff)
                return -A, diag

        return _Rev(self.form, lambda t, z: -1.0 * parent.symbol(1.0 - t, z), self.order, f"rev({self.name})")


def transport(b_fn, name="transport"):
    """Generator b(tau, z; x) xi with b_fn(tau, z) -> real FourierField."""
    gen = GeneratorSpec("transport", lambda t, z: SeparableSymbol([(b_fn(t, z), power_fn(1))], order=1, real=True),
                        order=1, name=name)
    gen.b_fn = b_fn
    return gen


def multiplier_generator(fn, order=0.0, name="multiplier"):
    """x-independent generator; fn(tau, z) -> Symbol."""
    return GeneratorSpec("multiplier", fn, order=order, name=name)


@dataclass
class FlowResult:
    taus: np.ndarray
    trajectory: list
    picard_iterations: int
    converged: bool
    contraction_ratios: list
    increments: list
    derivatives: np.ndarray = dc_field(default=None, repr=False)

    @property
    def final(self):
        return self.trajectory[-1]

    def norms(self, s):
        return np.array([sobolev_norm(z, s) for z in self.trajectory])

    def norm_constant(self, s=4.0, s0=2.0):
        """C in ||z(tau)||_s <= ||u0||_s (1 + C ||u0||_{s0})."""
        n = self.norms(s)
        u0 = self.trajectory[0]
        return float(np.max(np.abs(n / n[0] - 1.0)) / sobolev_norm(u0, s0))

    def to_csv(self, path, s=4.0):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "h_s_norm", "picard_count"])
            for t, nv in zip(self.taus, self.norms(s)):
                w.writerow([f"{t:.17g}", f"{nv:.17g}", self.picard_iterations])


def _hermite_mid(z0, z1, d0, d1, h):
    return 0.5 * (z0 + z1) + h * (d0 - d1) / 8.0


def flow_nonlinear(gen, u0, dtau=1e-2, picard_tol=1e-10, max_iter=30, s=4.0, cutoff=None):
    """Solve d_tau z = Op^BW(i f(tau, z)) z, z(0) = u0, for tau in [0, 1]."""
    cutoff = cutoff or DEFAULT_CUTOFF
    N = u0.N
    n = int(round(1.0 / dtau))
    h = 1.0 / n
    taus = np.linspace(0.0, 1.0, n + 1)
    Z = np.tile(u0.coeffs, (n + 1, 1))
    D = np.zeros_like(Z)
    incs, ratios = [], []
    converged = False
    it = 0

    def L(t, c):
        return gen.matrix(t, FourierField(c, N), cutoff)

    for it in range(1, max_iter + 1):
        Y = np.empty_like(Z)
        Yd = np.empty_like(Z)
        Y[0] = u0.coeffs
        A0, diag0 = L(taus[0], Z[0])
        for k in range(n):
            zm = _hermite_mid(Z[k], Z[k + 1], D[k], D[k + 1], h)
            Am, diagm = L(taus[k] + 0.5 * h, zm)
            A1, diag1 = L(taus[k + 1], Z[k + 1])
            y = Y[k]
            if diag0 and diagm and diag1:
                d0, dm, d1 = np.diag(A0), np.diag(Am), np.diag(A1)
                Yd[k] = d0 * y
                Y[k + 1] = np.exp(h * (d0 + 4 * dm + d1) / 6.0) * y
            else:
                k1 = A0 @ y
                k2 = Am @ (y + 0.5 * h * k1)
                k3 = Am @ (y + 0.5 * h * k2)
                k4 = A1 @ (y + h * k3)
                Yd[k] = k1
                Y[k + 1] = y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            A0, diag0 = A1, diag1
        Yd[n] = A0 @ Y[n]
        if not np.all(np.isfinite(Y)):
            raise BlowUpError(f"non-finite state in Picard sweep {it}", incs)
        inc = max(sobolev_norm(Y[k] - Z[k], s - 1) for k in range(n + 1))
        if incs:
            ratios.append(inc / incs[-1] if incs[-1] > 0 else 0.0)
        incs.append(inc)
        Z, D = Y, Yd
        if inc < picard_tol:
            converged = True
            break
    if not converged:
        raise FlowError(f"Picard iteration did not contract in {max_iter} sweeps; increments {incs[-3:]}", incs)
    traj = [FourierField(z, N) for z in Z]
    return FlowResult(taus, traj, it, converged, ratios, incs, D)


def flow_inverse(gen, z1, **kw):
    """Phi^{-1}(z1): integrate the flow backwards from tau = 1."""
    return flow_nonlinear(gen.reversed(), z1, **kw).final


# ---------------------------------------------------------------------------
# torus diffeomorphisms

def _grid_size(N):
    return good_size(2 * (2 * N + 1))


def invert_torus_diffeo(gamma, tol=1e-12, max_iter=50, M=None):
    """beta with x + gamma(x) + beta(x + gamma(x)) = x, by Newton per grid point."""
    N = gamma.N
    M = M or _grid_size(N)
    dg = gamma.derivative()
    xs = np.linspace(0, 2 * np.pi, 8 * M, endpoint=False)
    if np.max(np.abs(evaluate(dg, xs).real)) >= 1.0:
        raise ValueError("|gamma'| >= 1: x + gamma(x) is not a diffeomorphism")
    y = grid(M)
    x = y - evaluate(gamma, y).real
    for _ in range(max_iter):
        g = evaluate(gamma, x).real
        F = x + g - y
        x = x - F / (1.0 + evaluate(dg, x).real)
        x = y + (x - y + np.pi) % (2 * np.pi) - np.pi
        if np.max(np.abs(F)) < tol:
            break
    else:
        raise FlowError("Newton inversion of the torus diffeomorphism did not converge")
    return real_field(-evaluate(gamma, x).real, N)


def diffeo_residual(gamma, beta, M=None):
    """max |x + gamma(x) + beta(x + gamma(x)) - x| on the grid."""
    M = M or _grid_size(gamma.N)
    x = grid(M)
    g = evaluate(gamma, x).real
    return float(np.max(np.abs(g + evaluate(beta, x + g).real)))


def _on_grid(f, M):
    return synthesize(f, M).real


def solve_generator_b(beta_fn, W, tau=1.0, tol=1e-9, max_iter=50, eps=1e-3, cutoff=None):
    """Fixed point b = [beta + tau d beta(W)[Op^BW(i b xi) W]] / (1 + tau beta_x).

    Starts from b0 = beta / (1 + tau beta_x).  Returns (b, residual history).
    """
    N = W.N
    M = _grid_size(N)
    beta = beta_fn(W)
    bv = _on_grid(beta, M)
    den = 1.0 + tau * _on_grid(beta.derivative(), M)
    b = real_field(bv / den, N)
    hist = []
    if tau == 0.0:
        return b, hist
    wn = sobolev_norm(W)
    for _ in range(max_iter):
        op = op_bw(SeparableSymbol([(b, power_fn(1))], order=1, real=True), cutoff, N)
        hdir = FourierField(1j * (op.matrix @ W.coeffs), N)
        hn = sobolev_norm(hdir)
        if hn == 0.0 or wn == 0.0:
            db = np.zeros(M)
        else:
            e = eps * wn / hn
            db = (_on_grid(beta_fn(W + e * hdir), M) - _on_grid(beta_fn(W - e * hdir), M)) / (2 * e)
        bn = real_field((bv + tau * db) / den, N)
        res = float(np.max(np.abs(_on_grid(bn - b, M))))
        hist.append(res)
        b = bn
        if res < tol:
            break
    else:
        raise FlowError(f"generator fixed point did not contract; residuals {hist[-3:]}", hist)
    return b, hist


def transport_from_beta(beta_fn, tol=1e-9, name="b(beta)"):
    """Transport generator whose b solves the fixed point for beta."""
    return transport(lambda t, z: solve_generator_b(beta_fn, z, t, tol=tol)[0], name=name)


# ---------------------------------------------------------------------------
# characteristic system

@dataclass
class CharFlowResult:
    taus: np.ndarray
    z: list
    x: np.ndarray
    xi: np.ndarray
    x0: np.ndarray
    xi0: np.ndarray
    flow: FlowResult

    @property
    def psi_x(self):
        return self.x - self.x0

    @property
    def psi_xi(self):
        return self.xi / self.xi0 - 1.0


def characteristic_flow(gen, z0, x0, xi0, dtau=1e-2, picard_tol=1e-10, s=4.0, tol=1e-12):
    """Solve dx = -b, dxi = b_x xi, dz = Op^BW(i b xi) z for a transport generator.

    The z-equation does not involve (x, xi), so z is computed first by the
    Picard flow; (x, xi) are then integrated by RK4 along z with Hermite
    midpoints, and the alternation is repeated until the increments of
    (x, xi) fall below `tol`.
    """
    if gen.form != "transport":
        raise ValueError("characteristic flow needs a transport generator")
    fl = flow_nonlinear(gen, z0, dtau=dtau, picard_tol=picard_tol, s=s)
    x0 = np.atleast_1d(np.asarray(x0, float))
    xi0 = np.atleast_1d(np.asarray(xi0, float))
    x0, xi0 = np.broadcast_arrays(x0, xi0)
    n = len(fl.taus) - 1
    h = 1.0 / n
    Zc = np.array([z.coeffs for z in fl.trajectory])
    N = z0.N

    def bfield(t, c):
        return gen.b_fn(t, FourierField(c, N))

    bs = [bfield(fl.taus[k], Zc[k]) for k in range(n + 1)]
    bm = [bfield(fl.taus[k] + 0.5 * h, _hermite_mid(Zc[k], Zc[k + 1], fl.derivatives[k], fl.derivatives[k + 1], h))
          for k in range(n)]

    def rhs(bf, x, xi):
        return -evaluate(bf, x).real, evaluate(bf.derivative(), x).real * xi

    X = np.empty((n + 1,) + x0.shape)
    XI = np.empty_like(X)
    X[0], XI[0] = x0, xi0
    for k in range(n):
        x, xi = X[k], XI[k]
        a1, c1 = rhs(bs[k], x, xi)
        a2, c2 = rhs(bm[k], x + 0.5 * h * a1, xi + 0.5 * h * c1)
        a3, c3 = rhs(bm[k], x + 0.5 * h * a2, xi + 0.5 * h * c2)
        a4, c4 = rhs(bs[k + 1], x + h * a3, xi + h * c3)
        X[k + 1] = x + h * (a1 + 2 * a2 + 2 * a3 + a4) / 6.0
        XI[k + 1] = xi + h * (c1 + 2 * c2 + 2 * c3 + c4) / 6.0
    return CharFlowResult(fl.taus, fl.trajectory, X, XI, x0, xi0, fl)


# ---------------------------------------------------------------------------
# constant coefficient m_b

def _mb_formula(avals, m):
    """[2 pi / int (1 + a)^(-1/m)]^m - 1 from grid samples."""
    return float(np.mean((1.0 + avals) ** (-1.0 / m)) ** (-m) - 1.0)


@dataclass
class MbDiagnostics:
    m_history: list
    variance_history: list
    F_samples: list


def constant_m_b(atilde_fn, m, n_iters, w, dtau_inner=0.1, picard_tol=1e-13, fp_tol=1e-12):
    """Iterate m_n, gamma_n, beta_n, b_n for the principal coefficient 1 + atilde.

    atilde_fn(z) returns a real FourierField.  Returns (m_b, generator,
    diagnostics); `variance_history[n]` is the x-variance of F(b_n), with
    F(b_0) = 1 + atilde(w).
    """
    N = w.N
    M = _grid_size(N)
    a0 = _on_grid(atilde_fn(w), M)
    if np.min(1.0 + a0) <= 0:
        raise ValueError("1 + atilde must be positive (ellipticity)")
    flow_kw = dict(dtau=dtau_inner, picard_tol=picard_tol)

    def make_beta(prev_gen):
        def pulled(W):
            return W if prev_gen is None else flow_inverse(prev_gen, W, **flow_kw)

        def gamma_fn(W):
            av = _on_grid(atilde_fn(pulled(W)), M)
            if np.min(1.0 + av) <= 0:
                raise ValueError("1 + atilde must be positive (ellipticity)")
            mn = _mb_formula(av, m)
            g = real_field(((1.0 + mn) / (1.0 + av)) ** (1.0 / m) - 1.0, N)
            return antiderivative(g), mn

        def beta_fn(W):
            return invert_torus_diffeo(gamma_fn(W)[0])

        return beta_fn, gamma_fn, pulled

    def F_of(beta_fn, gen):
        beta = beta_fn(w)
        z0 = flow_inverse(gen, w, **flow_kw) if gen is not None else w
        x = grid(M)
        shift = x + evaluate(beta, x).real
        av = evaluate(atilde_fn(z0), shift).real
        return (1.0 + av) * (1.0 + evaluate(beta.derivative(), x).real) ** (-m)

    F0 = 1.0 + a0
    var = [float(np.var(F0))]
    ms = [_mb_formula(a0, m)]
    Fs = [F0]
    gen = None
    for _ in range(n_iters):
        beta_fn, gamma_fn, _ = make_beta(gen)
        mn = gamma_fn(w)[1]
        new_gen = transport_from_beta(beta_fn, tol=fp_tol)
        F = F_of(beta_fn, new_gen)
        ms.append(mn)
        var.append(float(np.var(F)))
        Fs.append(F)
        gen = new_gen
    return ms[-1], gen, MbDiagnostics(ms, var, Fs)
