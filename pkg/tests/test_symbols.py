import numpy as np
import pytest
from hypothesis import given, strategies as st

from parabnf.symbols import (CutoffFn, SeparableSymbol, beam_f2_fn, fd_xi_derivative, japanese_fn,
                             nls_f2_fn, nls_potential_fn, power_fn, seminorm_estimate)
from parabnf.torus import FourierField


def test_potential_value():
    assert abs(nls_potential_fn([0.5])(1.0) - 0.17677670) < 1e-8


def test_beam_frequency_value():
    assert abs(beam_f2_fn(1.0)(1.0) - np.sqrt(2.0)) < 1e-15


@pytest.mark.parametrize("fn", [japanese_fn(1.0), nls_f2_fn([0.31, -0.17]), beam_f2_fn(1.5), power_fn(3)])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_analytic_derivatives_match_stencil(fn, k):
    xi = np.linspace(1.5, 9.5, 7)
    exact = fn.derivative(k)(xi)
    approx = fd_xi_derivative(fn, xi, k, h=1e-2)
    assert np.allclose(exact, approx, rtol=1e-6, atol=1e-6)


@given(st.floats(0.05, 0.95), st.floats(-200, 200))
def test_cutoff_support(delta, xi):
    chi = CutoffFn(delta)
    t = np.linspace(-2, 2, 81)
    vals = chi(t * np.sqrt(1 + xi ** 2), xi)
    assert np.all(vals[np.abs(t) >= delta] == 0)
    assert np.all(vals[np.abs(t) <= delta / 2] == 1)
    assert np.all((vals >= 0) & (vals <= 1))


def test_cutoff_rejects_delta():
    with pytest.raises(ValueError):
        CutoffFn(1.0)


def test_separable_seminorm():
    a = SeparableSymbol([(FourierField.from_function(np.sin, 8), japanese_fn(1.0))], order=1, real=True)
    assert seminorm_estimate(a, 0, 0, N=16) <= 1.0 + 1e-12
