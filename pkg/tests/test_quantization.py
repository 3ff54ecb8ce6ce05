import numpy as np
import pytest
from hypothesis import given, strategies as st

from parabnf.quantization import (ParaOp, action_bound, adjoint, block_op_bw, op_bw, op_standard,
                                  self_adjoint_defect)
from parabnf.symbols import (ConjSymbol, CutoffFn, MatrixSymbol, Multiplier, SeparableSymbol, const_fn,
                             japanese_fn, power_fn)
from parabnf.torus import FourierField, RealPair, modes, random_field

N = 24


def sep(fn, xi_fn, order, real=False):
    return SeparableSymbol([(FourierField.from_function(fn, N), xi_fn)], order=order, real=real)


def test_xi_quantizes_to_diag():
    A = op_bw(SeparableSymbol([(1.0, power_fn(1))], order=1), None, N).matrix
    assert np.max(np.abs(A - np.diag(modes(N)))) == 0


def test_constant_one_is_identity():
    A = op_bw(SeparableSymbol([(1.0, const_fn(1.0))], order=0), None, N).matrix
    assert np.array_equal(A, np.eye(2 * N + 1))


def test_plane_wave_band():
    chi = CutoffFn(0.25)
    A = op_bw(sep(lambda x: np.exp(1j * x), const_fn(1.0), 0), chi, N).matrix
    j = modes(N)[:-1]
    sub = np.diagonal(A, -1)
    assert np.allclose(sub, chi(1.0, j + 0.5), atol=1e-13)
    mask = np.ones_like(A, bool)
    mask[np.arange(1, 2 * N + 1), np.arange(2 * N)] = False
    assert np.max(np.abs(A[mask])) < 1e-13


def test_standard_vs_weyl_midpoint():
    chi = CutoffFn(0.25)
    a = sep(lambda x: np.exp(1j * x), power_fn(1), 1)
    W = np.diagonal(op_bw(a, chi, N).matrix, -1)
    S = np.diagonal(op_standard(a, chi, N).matrix, -1)
    j = modes(N)[:-1]
    assert np.allclose(W, chi(1.0, j + 0.5) * (j + 0.5), atol=1e-12)
    assert np.allclose(S, chi(1.0, j) * j, atol=1e-12)


def test_multiplier_standard_equals_weyl():
    a = Multiplier(japanese_fn(2.0))
    assert np.array_equal(op_bw(a, None, N).matrix, op_standard(a, None, N).matrix)


def test_real_symbol_self_adjoint():
    A = op_bw(sep(np.cos, japanese_fn(1.0), 1, real=True), None, N)
    assert self_adjoint_defect(A) < 1e-12


def test_imaginary_constant_adjoint():
    A = op_bw(Multiplier(const_fn(1j)), None, N)
    assert np.allclose(adjoint(A).matrix, -A.matrix)


def test_adjoint_is_conj_symbol(rng):
    c = random_field(6, rng)
    a = SeparableSymbol([(c, japanese_fn(1.0))], order=1)
    A = op_bw(a, None, N).matrix
    B = op_bw(ConjSymbol(a), None, N).matrix
    assert np.linalg.norm(A.conj().T - B, 2) <= 1e-11


def test_block_multiplier_is_block_diagonal():
    a = Multiplier(power_fn(1))
    zero = SeparableSymbol([(0.0, const_fn(1.0))], order=0)
    blk = block_op_bw(MatrixSymbol(a, zero), None, N).matrix
    n = 2 * N + 1
    j = modes(N)
    assert np.allclose(blk[:n, :n], np.diag(j)) and np.allclose(blk[n:, n:], np.diag(-j))
    assert np.max(np.abs(blk[:n, n:])) == 0


def test_block_real_to_real(rng):
    a = sep(np.cos, japanese_fn(2.0), 2, real=True)
    b = sep(np.sin, japanese_fn(1.0), 1)
    B = block_op_bw(MatrixSymbol(a, b), None, N)
    u = random_field(N, rng)
    out = B(RealPair(u, u.conj()))
    assert out.is_real(1e-11)


def test_block_self_adjoint_when_b_even():
    a = sep(np.cos, japanese_fn(2.0), 2, real=True)
    b = sep(lambda x: 0.3 * np.sin(2 * x) + 0.1j, japanese_fn(2.0), 2)
    B = block_op_bw(MatrixSymbol(a, b), None, N)
    M = B.matrix
    # real diagonal symbol plus symmetric off-diagonal part gives a Hermitian block
    assert self_adjoint_defect(B.blocks[0]) < 1e-12
    assert np.linalg.norm(M - M.conj().T, 2) / np.linalg.norm(M, 2) < 1e-10


def test_action_bounds():
    I = op_bw(Multiplier(const_fn(1.0)), None, N)
    assert abs(action_bound(I, 3.0) - 1.0) < 1e-14
    D2 = op_bw(Multiplier(japanese_fn(2.0)), None, N)
    assert abs(action_bound(D2, 1.0, 2.0) - 1.0) < 1e-12
    S = op_bw(sep(np.sin, japanese_fn(1.0), 1, real=True), None, N)
    assert action_bound(S, 3.0, 1.0) <= 2.0


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_linearity(s, t):
    a = sep(np.cos, japanese_fn(1.0), 1)
    b = sep(np.sin, power_fn(2), 2)
    lhs = op_bw(SeparableSymbol(a.terms + [(s * 1.0, power_fn(0))], order=2), None, 8).matrix
    A, B = op_bw(a, None, 8).matrix, op_bw(b, None, 8).matrix
    combo = op_bw(SeparableSymbol([(xp * s, f) for xp, f in a.terms] + [(xp * t, f) for xp, f in b.terms],
                                  order=2), None, 8).matrix
    assert np.allclose(combo, s * A + t * B, atol=1e-12)
    assert lhs.shape == (17, 17)


@given(st.sampled_from([0.125, 0.25, 0.5]))
def test_band_structure(delta):
    chi = CutoffFn(delta)
    c = FourierField(np.ones(2 * N + 1, complex), N)
    A = op_bw(SeparableSymbol([(c, const_fn(1.0))], order=0), chi, N).matrix
    k, j = np.meshgrid(modes(N), modes(N), indexing="ij")
    outside = np.abs(k - j) >= delta * np.sqrt(1 + ((k + j) / 2) ** 2)
    assert np.max(np.abs(A[outside])) == 0


def test_dump_round_trip(tmp_path, rng):
    A = op_bw(sep(np.cos, japanese_fn(1.0), 1), None, 8)
    A.to_binary(tmp_path / "a.bin")
    B = ParaOp.from_binary(tmp_path / "a.bin")
    assert np.array_equal(A.matrix, B.matrix)
    A.to_csv(tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_text().count("\n") >= 17


def test_missing_order_rejected():
    a = SeparableSymbol([(1.0, const_fn(1.0))], order=0)
    a.order = None
    with pytest.raises(ValueError):
        op_bw(a, None, 4)
