import numpy as np
import pytest
from hypothesis import given, strategies as st

from lnsnet import grm
from lnsnet.errors import InvalidArgument, ShapeError
from oracles import central_difference, rel_err


def test_recon_zero_and_selector():
    assert not grm.recon_forward(np.zeros((4, 3, 3)), np.ones((4, 5))).any()
    z = np.random.default_rng(0).random((4, 3, 2))
    w = np.zeros((4, 5))
    w[2, 4] = 1.0
    xr = grm.recon_forward(z, w)
    np.testing.assert_array_equal(xr[4], z[2])
    assert not xr[:4].any()


def test_recon_matches_per_pixel_product():
    rng = np.random.default_rng(1)
    z, w = rng.normal(size=(6, 3, 4)), rng.normal(size=(6, 5))
    xr = grm.recon_forward(z, w)
    for r in range(3):
        for c in range(4):
            np.testing.assert_allclose(xr[:, r, c], z[:, r, c] @ w, atol=1e-12)


def test_recon_shape_error():
    with pytest.raises(ShapeError):
        grm.recon_forward(np.zeros((4, 2, 2)), np.zeros((3, 5)))


@pytest.mark.parametrize("seed", range(20))
def test_recon_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    z, w, probe = rng.normal(size=(3, 2, 3)), rng.normal(size=(3, 5)), rng.normal(size=(5, 2, 3))
    gz, gw = grm.recon_backward(probe, z, w)

    def f():
        return float((grm.recon_forward(z, w) * probe).sum())

    assert rel_err(gz, central_difference(f, z)) < 1e-6
    assert rel_err(gw, central_difference(f, w)) < 1e-6


def test_channel_strength_examples():
    np.testing.assert_array_equal(grm.channel_strength(np.ones((3, 5))), 1.0)
    w = np.ones((3, 5))
    w[:, 3:] = 0
    assert not grm.channel_strength(w).any()
    assert grm.channel_strength(np.array([[0.3, 0.6, 0.9, 0.5, 1.5]]))[0] == pytest.approx(0.6)


def test_channel_strength_ignores_sign():
    w = np.random.default_rng(2).normal(size=(4, 5))
    np.testing.assert_array_equal(grm.channel_strength(w), grm.channel_strength(-w))


def test_memory_examples():
    mem = grm.ChannelMemory.ones(3)
    np.testing.assert_array_equal(mem.update(np.ones(3)).m, 1.0)
    np.testing.assert_allclose(mem.update(np.zeros(3)).m, 0.9)
    g = np.array([0.2, 2.0, 0.0])
    m = mem
    for _ in range(3):
        m = grm.update_memory(m, g)
    np.testing.assert_allclose(m.m, 0.9**3 * 1.0 + (1 - 0.9**3) * g, atol=1e-15)


def test_memory_rejects_bad_inputs():
    with pytest.raises(InvalidArgument):
        grm.ChannelMemory.ones(2, lam=1.0)
    with pytest.raises(InvalidArgument):
        grm.ChannelMemory.ones(2).update(np.array([-1.0, 0.0]))


@given(seed=st.integers(0, 2**16), steps=st.integers(1, 30), lam=st.floats(0.01, 0.99))
def test_memory_stays_in_convex_envelope(seed, steps, lam):
    rng = np.random.default_rng(seed)
    mem = grm.ChannelMemory.ones(4, lam)
    lo, hi = np.ones(4), np.ones(4)
    for _ in range(steps):
        g = rng.random(4) * 3
        lo, hi = np.minimum(lo, g), np.maximum(hi, g)
        mem = mem.update(g)
        assert np.all(mem.m > 0)
    assert np.all(mem.m >= lo - 1e-12) and np.all(mem.m <= hi + 1e-12)


def test_gal_examples():
    grad = np.ones((2, 3, 3))
    np.testing.assert_array_equal(grm.gal_scale(grad, np.ones(2), np.ones(2)), 0.5)
    out = grm.gal_scale(grad, np.array([0.0, 1.0]), np.ones(2))
    assert not out[0].any()
    np.testing.assert_allclose(grm.gal_factors([1.0, 3.0], [1.0, 1.0]), [0.5, 0.75])


def test_gal_requires_positive_memory():
    with pytest.raises(InvalidArgument):
        grm.gal_factors([1.0], [0.0])


@given(seed=st.integers(0, 2**16))
def test_gal_factor_range(seed):
    rng = np.random.default_rng(seed)
    g = rng.random(10) * 5
    g[0] = 0.0
    psi = grm.gal_factors(g, rng.random(10) + 1e-3)
    assert np.all((psi >= 0) & (psi < 1)) and psi[0] == 0 and np.all(psi[1:] > 0)


def test_gbl_examples():
    grad = np.ones((2, 2, 2))
    np.testing.assert_array_equal(grm.gbl_scale(grad, np.zeros((2, 2)), 0.1), grad)
    b = np.array([[1.0, 0.5], [0.05, 0.1]])
    np.testing.assert_array_equal(grm.gbl_factors(b, 0.1), [[-1.0, -0.5], [1.0, 1.0]])
    np.testing.assert_array_equal(grm.gbl_scale(grad, b, 0.1)[1], [[-1.0, -0.5], [1.0, 1.0]])


def test_forward_layers_are_identities():
    x = np.random.default_rng(3).normal(size=(3, 4, 4))
    assert grm.gal_forward(x) is x and grm.gbl_forward(x) is x
