import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sudonet import activations as act
from sudonet.activations import ActivationKind, ConfigError, InputError, Kind

from checks import activation_suite


def test_sudo_forward_examples():
    assert act.sudo_forward(20.0, 2) == 1.0
    assert act.sudo_forward(0.0, 4) == pytest.approx(-1 / 3, abs=1e-15)
    assert act.sudo_forward(-0.6, 2) == -1.0


def test_sudo_backward_examples():
    for L in (2, 7, 256):
        assert act.sudo_backward(0.0, L) == 1.0
        assert act.sudo_backward(20.0, L) < 1e-15


def test_rsudo_examples():
    assert act.rsudo_forward(-3.0, 256) == 0.0
    assert act.rsudo_forward(0.3, 4) == pytest.approx(1 / 3, abs=1e-15)
    assert act.rsudo_forward(0.0, 4) == 0.0
    assert act.rsudo_backward(-1.0, 8) == 0.0
    assert act.rsudo_backward(1.0, 8) == pytest.approx(0.41997434161402614, abs=1e-12)
    assert act.rsudo_backward(1e-9, 8) == pytest.approx(1.0, abs=1e-12)
    assert act.rsudo_backward(0.0, 8) == 0.0


def test_continuous_scalars():
    assert act.relu_forward(-2.0) == 0.0
    assert act.relu_forward(3.0) == 3.0
    assert act.tanh_backward(0.0) == 1.0
    assert act.relu_backward(0.0) == 0.0
    assert act.relu_backward(1e-300) == 1.0


@pytest.mark.parametrize("bad", [1, 0, -3])
def test_levels_below_two_rejected(bad):
    with pytest.raises(ConfigError):
        act.sudo(bad)
    with pytest.raises(ConfigError):
        act.sudo_forward(0.0, bad)


@pytest.mark.parametrize("x", [math.nan, math.inf, -math.inf])
def test_non_finite_input_rejected(x):
    for f in (lambda v: act.sudo_forward(v, 4), act.tanh_forward, act.relu_backward):
        with pytest.raises(InputError):
            f(x)
    with pytest.raises(InputError):
        act.apply_forward(act.sudo(4), np.array([[0.0, x]]))


def test_names_and_parse():
    assert act.sudo(64).name == "sudo-64"
    assert act.rsudo(8).name == "r-sudo-8"
    assert ActivationKind.parse("sudo-64") == act.sudo(64)
    assert ActivationKind.parse("r-sudo", levels=16) == act.rsudo(16)
    assert ActivationKind.parse("tanh") == act.TANH
    with pytest.raises(ConfigError):
        ActivationKind.parse("sudo")
    with pytest.raises(ConfigError):
        ActivationKind.parse("sigmoid")


def test_batch_examples():
    assert np.all(act.apply_forward(act.sudo(2), np.zeros((2, 2))) == -1.0)
    m = np.random.default_rng(1).normal(scale=3, size=(4, 5))
    for kind in (act.TANH, act.RELU, act.sudo(5), act.rsudo(6), act.sudo(256)):
        fwd = np.vectorize(lambda v: act.scalar_forward(kind, v))(m)
        bwd = np.vectorize(lambda v: act.scalar_backward(kind, v))(m)
        np.testing.assert_array_equal(act.apply_forward(kind, m), fwd)
        np.testing.assert_array_equal(act.apply_backward(kind, m), bwd)


def test_softmax_rows_sum_to_one():
    m = np.array([[1000.0, 1000.0, 0.0], [-5.0, 0.0, 5.0]])
    s = act.apply_forward(act.SOFTMAX, m)
    np.testing.assert_allclose(s.sum(axis=1), 1.0)
    assert s[0, 0] == pytest.approx(0.5)


def test_level_values():
    np.testing.assert_allclose(act.level_values(act.sudo(4)), [-1, -1 / 3, 1 / 3, 1])
    np.testing.assert_allclose(act.level_values(act.rsudo(4)), [0, 1 / 3, 1])
    assert len(act.level_values(act.rsudo(9))) == 5
    with pytest.raises(ConfigError):
        act.level_values(act.TANH)


def test_exhaustive_activation_properties():
    ok, detail = activation_suite()
    assert ok, detail


levels = st.integers(2, 300)
xs = st.floats(-30, 30, allow_nan=False)


@given(xs, xs, levels)
def test_monotone(a, b, L):
    lo, hi = min(a, b), max(a, b)
    assert act.sudo_forward(lo, L) <= act.sudo_forward(hi, L)
    assert act.rsudo_forward(lo, L) <= act.rsudo_forward(hi, L)


@given(xs, levels)
def test_output_is_a_level(x, L):
    y = act.sudo_forward(x, L)
    j = (y + 1.0) * (L - 1) / 2.0
    assert abs(j - round(j)) < 1e-9 and 0 <= round(j) < L
    assert abs(y - math.tanh(x)) <= 2.0 / L + 1e-15


@given(xs, levels)
def test_antisymmetric_off_boundaries(x, L):
    # away from bin edges, sudo(-x) == -sudo(x)
    u = np.tanh(x)
    edge = (u + 1.0) * L / 2.0
    if abs(edge - round(edge)) > 1e-6:
        assert act.sudo_forward(-x, L) == -act.sudo_forward(x, L)


@given(xs, levels)
def test_rsudo_matches_sudo_on_positive_side(x, L):
    if np.tanh(x) > 0:
        first = (2 * (L // 2 + 1) - 1 - L) / (L - 1)  # 0 for odd L
        assert act.rsudo_forward(x, L) == max(act.sudo_forward(x, L), first)
        assert act.rsudo_backward(x, L) == act.sudo_backward(x, L)
    else:
        assert act.rsudo_forward(x, L) == 0.0


def test_rsudo_tiny_positive_input_stays_positive():
    # 1 + u rounds to 1 here; the output must still be the first level above zero
    assert act.rsudo_forward(6.3e-282, 2) == 1.0
    assert act.rsudo_forward(1e-300, 4) == pytest.approx(1 / 3)
    assert act.apply_forward(act.rsudo(2), np.array([[1e-300]]))[0, 0] == 1.0


def test_unchecked_batch_propagates_nan():
    m = np.array([[np.nan, 0.5]])
    for kind in (act.sudo(4), act.rsudo(4)):
        out = act.apply_forward(kind, m, check=False)
        assert np.isnan(out[0, 0]) and out[0, 1] == act.scalar_forward(kind, 0.5)
        h, _ = act.forward_traced(kind, m)
        assert np.isnan(h[0, 0])


def test_kind_flags():
    assert act.sudo(3).discrete and not act.TANH.discrete
    assert act.rsudo(3).kind is Kind.RSUDO
