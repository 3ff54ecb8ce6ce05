import numpy as np
import pytest
from hypothesis import given, strategies as st

from parabnf.torus import (FourierField, SQRT2PI, analyze, antiderivative, evaluate, good_size, japanese,
                           make_real_pair, product, project, random_field, real_field,
                           sobolev_norm, synthesize)


def test_plane_wave_coefficient():
    # e^{ix} has coefficient sqrt(2 pi) at n = 1
    f = FourierField.from_function(lambda x: np.exp(1j * x), 8)
    assert abs(f[1] - SQRT2PI) < 1e-13
    assert np.max(np.abs(np.delete(f.coeffs, 9))) < 1e-13


def test_japanese_bracket():
    assert japanese(0.0) == 1.0
    assert abs(japanese(3.0, 2.0) - 10.0) < 1e-14


def test_sobolev_norm_single_mode():
    c = np.zeros(9, complex)
    c[4 + 2] = 1.0
    assert abs(sobolev_norm(FourierField(c, 4), 4.0) - 25.0) < 1e-12


@given(st.integers(2, 24), st.integers(0, 2 ** 31))
def test_analyze_synthesize_round_trip(N, seed):
    f = random_field(N, np.random.default_rng(seed))
    M = good_size(2 * N + 1)
    g = analyze(synthesize(f, M), N)
    assert np.max(np.abs(g.coeffs - f.coeffs)) < 1e-12 * max(1.0, np.max(np.abs(f.coeffs)))


def test_evaluate_matches_synthesis(rng):
    f = random_field(10, rng)
    M = 32
    x = 2 * np.pi * np.arange(M) / M
    assert np.allclose(evaluate(f, x), synthesize(f, M), atol=1e-12)


def test_random_field_rescaling(rng):
    f = random_field(16, rng, decay=3.0, s=4.0, r=0.02)
    assert abs(sobolev_norm(f, 4.0) - 0.02) < 1e-15


def test_antiderivative_rejects_mean():
    f = FourierField.from_function(lambda x: 1.0 + np.cos(x), 6)
    with pytest.raises(ValueError):
        antiderivative(f)
    g = antiderivative(FourierField.from_function(np.cos, 6))
    assert np.allclose(synthesize(g, 16), np.sin(2 * np.pi * np.arange(16) / 16), atol=1e-13)


def test_product_and_projection(rng):
    a = FourierField.from_function(np.cos, 8)
    p = product([a, a])
    # cos^2 = 1/2 + cos(2x)/2
    assert abs(p[0] - 0.5 * SQRT2PI) < 1e-12 and abs(p[2] - 0.25 * SQRT2PI) < 1e-12
    q = project(p, 2)
    assert abs(q[0]) == 0 and abs(q[2] - p[2]) == 0


def test_real_field_symmetry(rng):
    v = rng.standard_normal(33)
    f = real_field(v, 16)
    assert np.allclose(f.coeffs, np.conj(f.coeffs[::-1]))
    assert make_real_pair(f).is_real()
