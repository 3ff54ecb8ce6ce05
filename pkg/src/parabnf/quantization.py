"""Dense matrices of Bony-Weyl and standard quantizations.

Op^BW(a) acts on coefficient vectors (u_n), |n| <= N, with entries

    (k, j) -> chi(k - j, (k + j)/2) * a^(k - j, (k + j)/2),

where a^(n, xi) is the plain x-Fourier coefficient of a(., xi), i.e.
a(x, xi) = sum_n a^(n, xi) e^{inx}.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .symbols import CutoffFn, MatrixSymbol, Symbol, as_symbol
from .torus import FourierField, RealPair, modes, sobolev_weight

DEFAULT_CUTOFF = CutoffFn(0.25)


@lru_cache(maxsize=32)
def _weyl_tables(N, delta):
    k = modes(N)[:, None]
    j = modes(N)[None, :]
    diff = k - j
    summ = k + j
    chi = CutoffFn(delta)(diff, summ / 2.0)
    chi.setflags(write=False)
    return diff + 2 * N, summ + 2 * N, chi


@lru_cache(maxsize=32)
def _standard_tables(N, delta):
    k = modes(N)[:, None]
    j = modes(N)[None, :]
    diff = k - j
    chi = CutoffFn(delta)(diff, np.broadcast_to(j, diff.shape).astype(float))
    chi.setflags(write=False)
    return diff + 2 * N, np.broadcast_to(j + N, diff.shape), chi


class ParaOp:
    """Dense operator on Fourier coefficients with a declared order."""

    def __init__(self, matrix, order=0.0, note=""):
        self.matrix = np.asarray(matrix, dtype=complex)
        self.order = float(order)
        self.note = note

    @property
    def N(self):
        return (self.matrix.shape[0] - 1) // 2

    def __call__(self, u):
        if isinstance(u, FourierField):
            return FourierField(self.matrix @ u.coeffs, u.N)
        return self.matrix @ u

    def __matmul__(self, other):
        if isinstance(other, ParaOp):
            return ParaOp(self.matrix @ other.matrix, self.order + other.order, f"({self.note})({other.note})")
        return self(other)

    def __add__(self, other):
        return ParaOp(self.matrix + other.matrix, max(self.order, other.order), f"{self.note}+{other.note}")

    def __sub__(self, other):
        return ParaOp(self.matrix - other.matrix, max(self.order, other.order), f"{self.note}-{other.note}")

    def __mul__(self, c):
        return ParaOp(self.matrix * c, self.order, self.note)

    __rmul__ = __mul__

    def adjoint(self):
        return adjoint(self)

    def opnorm(self):
        return float(np.linalg.norm(self.matrix, 2))

    def to_csv(self, path):
        """Row-major dump: row, col, re, im."""
        n = self.matrix.shape[0]
        r, c = np.divmod(np.arange(n * n), n)
        m = self.matrix.ravel()
        np.savetxt(path, np.column_stack([r, c, m.real, m.imag]), delimiter=",",
                   header="row,col,re,im", comments="", fmt=["%d", "%d", "%.17g", "%.17g"])

    def to_binary(self, path):
        """Row-major complex128 pairs, preceded by the int64 dimension."""
        with open(path, "wb") as fh:
            np.array([self.matrix.shape[0]], dtype=np.int64).tofile(fh)
            np.ascontiguousarray(self.matrix, dtype=np.complex128).tofile(fh)

    @classmethod
    def from_binary(cls, path, order=0.0):
        with open(path, "rb") as fh:
            n = int(np.fromfile(fh, dtype=np.int64, count=1)[0])
            m = np.fromfile(fh, dtype=np.complex128, count=n * n).reshape(n, n)
        return cls(m, order, f"loaded from {path}")


def _check(symbol):
    if not isinstance(symbol, Symbol):
        symbol = as_symbol(symbol)
    if getattr(symbol, "order", None) is None:
        raise ValueError("symbol has no order metadata")
    return symbol


def op_bw(symbol, cutoff=None, N=64):
    """Bony-Weyl quantization of a scalar symbol."""
    symbol = _check(symbol)
    cutoff = cutoff or DEFAULT_CUTOFF
    if symbol.x_independent:
        d = np.asarray(symbol(np.zeros(1), modes(N).astype(float)))[:, 0]
        return ParaOp(np.diag(d.astype(complex)), symbol.order, f"BW({symbol.name})")
    dif, sm, chi = _weyl_tables(N, cutoff.delta)
    xi = np.arange(-2 * N, 2 * N + 1) / 2.0
    C = symbol.xfourier(N, xi)
    return ParaOp(chi * C[sm, dif], symbol.order, f"BW({symbol.name})")


def op_standard(symbol, cutoff=None, N=64):
    """Standard (left) quantization with the same cutoff."""
    symbol = _check(symbol)
    cutoff = cutoff or DEFAULT_CUTOFF
    if symbol.x_independent:
        return op_bw(symbol, cutoff, N)
    dif, col, chi = _standard_tables(N, cutoff.delta)
    C = symbol.xfourier(N, modes(N).astype(float))
    return ParaOp(chi * C[col, dif], symbol.order, f"Std({symbol.name})")


def adjoint(op):
    return ParaOp(op.matrix.conj().T, op.order, f"({op.note})*")


def reflect_conj(mat):
    """P conj(M) P with P the reversal n -> -n."""
    return np.conj(mat[::-1, ::-1])


class BlockParaOp:
    """[[A, B], [C, D]] acting on (u, ubar)."""

    def __init__(self, A, B, C, D):
        self.blocks = (A, B, C, D)

    @property
    def matrix(self):
        A, B, C, D = (b.matrix for b in self.blocks)
        return np.block([[A, B], [C, D]])

    @property
    def order(self):
        return max(b.order for b in self.blocks)

    def __call__(self, U):
        A, B, C, D = self.blocks
        if isinstance(U, RealPair):
            u, v = U.first.coeffs, U.second.coeffs
            return RealPair(FourierField(A.matrix @ u + B.matrix @ v, U.N), FourierField(C.matrix @ u + D.matrix @ v, U.N))
        n = U.shape[0] // 2
        return np.concatenate([A.matrix @ U[:n] + B.matrix @ U[n:], C.matrix @ U[:n] + D.matrix @ U[n:]])

    def adjoint(self):
        A, B, C, D = self.blocks
        return BlockParaOp(adjoint(A), adjoint(C), adjoint(B), adjoint(D))


def block_op_bw(matrix_symbol, cutoff=None, N=64):
    """Quantize [[a, b], [conj b(x,-xi), conj a(x,-xi)]] blockwise."""
    if not isinstance(matrix_symbol, MatrixSymbol):
        matrix_symbol = MatrixSymbol(*matrix_symbol)
    A = op_bw(matrix_symbol.a, cutoff, N)
    B = op_bw(matrix_symbol.b, cutoff, N)
    C = ParaOp(reflect_conj(B.matrix), B.order, f"conj-refl({B.note})")
    D = ParaOp(reflect_conj(A.matrix), A.order, f"conj-refl({A.note})")
    return BlockParaOp(A, B, C, D)


def action_bound(op, s, m=None):
    """sup_j ||A e_j||_{s-m} / ||e_j||_s."""
    m = op.order if m is None else m
    N = op.N
    col = np.sqrt(np.sum((sobolev_weight(N, s - m)[:, None] * np.abs(op.matrix)) ** 2, axis=0))
    return float(np.max(col / sobolev_weight(N, s)))


def self_adjoint_defect(block):
    """||A - A*|| / ||A|| in operator norm for a block or scalar operator."""
    M = block.matrix
    nrm = np.linalg.norm(M, 2)
    return float(np.linalg.norm(M - M.conj().T, 2) / nrm) if nrm > 0 else 0.0
