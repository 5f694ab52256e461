import numpy as np
import pytest
from hypothesis import given, strategies as st

from lnsnet import gradcore as gc
from lnsnet.errors import InvalidArgument, ShapeError
from oracles import cell_means, central_difference, conv_nested_loop, matmul_loops, rel_err

SEEDS = range(20)


# ---- conv2d

def test_conv_zero_input_gives_zero_output():
    spec = gc.ConvSpec(1, 2, has_bias=False)
    w = np.random.default_rng(0).normal(size=spec.weight_shape)
    assert np.all(gc.conv2d_forward(np.zeros((1, 3, 3)), spec, w) == 0)


def test_conv_center_tap_is_identity():
    spec = gc.ConvSpec(1, 1, has_bias=False)
    w = np.zeros(spec.weight_shape)
    w[0, 0, 1, 1] = 1.0
    x = np.random.default_rng(1).normal(size=(1, 5, 4))
    np.testing.assert_array_equal(gc.conv2d_forward(x, spec, w), x)


@pytest.mark.parametrize("mode", gc.PADDING_MODES)
def test_conv_matches_nested_loops_dilation_2(mode):
    rng = np.random.default_rng(2)
    spec = gc.ConvSpec(2, 3, dilation=2, padding_mode=mode)
    x = rng.normal(size=(2, 4, 4))
    w = rng.normal(size=spec.weight_shape)
    b = rng.normal(size=3)
    out = gc.conv2d_forward(x, spec, w, b)
    assert np.max(np.abs(out - conv_nested_loop(x, w, b, 2, mode))) < 1e-12


@pytest.mark.parametrize("dilation", [1, 2, 4])
def test_conv_preserves_spatial_shape(dilation):
    spec = gc.ConvSpec(3, 2, dilation=dilation)
    assert spec.padding == dilation
    out = gc.conv2d_forward(np.ones((3, 7, 5)), spec, np.ones(spec.weight_shape))
    assert out.shape == (2, 7, 5)


def test_conv_default_padding_is_zeros():
    assert gc.ConvSpec(1, 1).padding_mode == "zeros"


def test_conv_channel_mismatch_names_dimension():
    spec = gc.ConvSpec(2, 1)
    with pytest.raises(ShapeError, match="channels"):
        gc.conv2d_forward(np.zeros((3, 4, 4)), spec, np.zeros(spec.weight_shape))
    with pytest.raises(ShapeError, match="weights"):
        gc.conv2d_forward(np.zeros((2, 4, 4)), spec, np.zeros((1, 2, 2, 2)))


def test_conv_spec_validation():
    with pytest.raises(InvalidArgument):
        gc.ConvSpec(1, 1, dilation=0)
    with pytest.raises(InvalidArgument):
        gc.ConvSpec(1, 1, kernel_size=5)
    with pytest.raises(InvalidArgument):
        gc.ConvSpec(1, 1, padding_mode="reflect")


def test_conv_backward_zero_grad():
    spec = gc.ConvSpec(2, 2)
    rng = np.random.default_rng(3)
    gi, gw, gb = gc.conv2d_backward(np.zeros((2, 4, 4)), rng.normal(size=(2, 4, 4)), spec,
                                    rng.normal(size=spec.weight_shape))
    assert not gi.any() and not gw.any() and not gb.any()


def test_conv_backward_bias_is_channel_sum():
    spec = gc.ConvSpec(2, 3)
    rng = np.random.default_rng(4)
    go = rng.normal(size=(3, 4, 5))
    _, _, gb = gc.conv2d_backward(go, rng.normal(size=(2, 4, 5)), spec,
                                  rng.normal(size=spec.weight_shape))
    np.testing.assert_allclose(gb, go.sum(axis=(1, 2)), rtol=0, atol=1e-12)


def test_conv_backward_without_bias():
    spec = gc.ConvSpec(1, 1, has_bias=False)
    _, _, gb = gc.conv2d_backward(np.ones((1, 3, 3)), np.ones((1, 3, 3)), spec,
                                  np.ones(spec.weight_shape))
    assert gb is None


def test_conv_weight_grad_of_sum_on_3x3():
    spec = gc.ConvSpec(1, 1)
    rng = np.random.default_rng(5)
    x = rng.normal(size=(1, 3, 3))
    w = rng.normal(size=spec.weight_shape)
    _, gw, _ = gc.conv2d_backward(np.ones((1, 3, 3)), x, spec, w)
    num = central_difference(lambda: gc.conv2d_forward(x, spec, w).sum(), w)
    assert rel_err(gw, num) < 1e-6


@pytest.mark.parametrize("mode", gc.PADDING_MODES)
@pytest.mark.parametrize("seed", SEEDS)
def test_conv_backward_matches_finite_differences(seed, mode):
    rng = np.random.default_rng(seed)
    dilation = [1, 2, 4][seed % 3]
    spec = gc.ConvSpec(2, 2, dilation=dilation, padding_mode=mode)
    x = rng.normal(size=(2, 5, 4))
    w = rng.normal(size=spec.weight_shape)
    b = rng.normal(size=2)
    probe = rng.normal(size=(2, 5, 4))

    def f():
        return float((gc.conv2d_forward(x, spec, w, b) * probe).sum())

    gi, gw, gb = gc.conv2d_backward(probe, x, spec, w)
    assert rel_err(gi, central_difference(f, x)) < 1e-6
    assert rel_err(gw, central_difference(f, w)) < 1e-6
    assert rel_err(gb, central_difference(f, b)) < 1e-6


# ---- linear

def test_linear_identity_and_hand_product():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(gc.linear(x, np.eye(2)), x)
    a = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    w = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    np.testing.assert_array_equal(gc.linear(a, w), [[4.0, 5.0], [10.0, 11.0]])


def test_linear_matches_triple_loop():
    rng = np.random.default_rng(6)
    a, w = rng.normal(size=(4, 5)), rng.normal(size=(5, 2))
    assert np.max(np.abs(gc.linear(a, w) - matmul_loops(a, w))) < 1e-12


def test_linear_inner_dimension_error():
    with pytest.raises(ShapeError, match="inner dimension"):
        gc.linear(np.zeros((2, 3)), np.zeros((4, 2)))


@pytest.mark.parametrize("seed", SEEDS)
def test_linear_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x, w, probe = rng.normal(size=(4, 3)), rng.normal(size=(3, 2)), rng.normal(size=(4, 2))

    def f():
        return float((gc.linear(x, w) * probe).sum())

    gx, gw = gc.linear_backward(probe, x, w)
    assert rel_err(gx, central_difference(f, x)) < 1e-6
    assert rel_err(gw, central_difference(f, w)) < 1e-6


# ---- relu / sigmoid

def test_relu_examples():
    np.testing.assert_array_equal(gc.relu(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])
    np.testing.assert_array_equal(gc.relu_backward(np.ones(3), np.array([-1.0, 0.0, 2.0])),
                                  [0.0, 0.0, 1.0])


def test_sigmoid_examples():
    assert gc.sigmoid(np.array(0.0)) == 0.5
    assert gc.sigmoid_backward(np.array(3.0), gc.sigmoid(np.array(0.0))) == 0.75


def test_sigmoid_is_stable_for_large_inputs():
    s = gc.sigmoid(np.array([-1000.0, 1000.0]))
    assert np.all(np.isfinite(s)) and s[0] == 0.0 and s[1] == 1.0


@pytest.mark.parametrize("seed", SEEDS)
def test_elementwise_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 4))
    x[np.abs(x) < 1e-3] = 0.5  # keep away from the relu kink
    probe = rng.normal(size=(3, 4))
    assert rel_err(gc.relu_backward(probe, x),
                   central_difference(lambda: float((gc.relu(x) * probe).sum()), x)) < 1e-6
    assert rel_err(gc.sigmoid_backward(probe, gc.sigmoid(x)),
                   central_difference(lambda: float((gc.sigmoid(x) * probe).sum()), x)) < 1e-6


# ---- adaptive pooling

def test_pool_constant_and_mean():
    pooled = gc.adaptive_avg_pool(np.full((2, 5, 7), 3.5), (2, 3))
    assert np.all(pooled == 3.5)
    assert gc.adaptive_avg_pool(np.array([[[1.0, 2.0], [3.0, 4.0]]]), (1, 1))[0, 0] == 2.5


def test_pool_ramp_matches_cell_means():
    x = np.arange(16, dtype=float).reshape(1, 4, 4)
    np.testing.assert_array_equal(gc.adaptive_avg_pool(x, (2, 2)), cell_means(x, 2, 2))


def test_pool_grid_larger_than_image():
    with pytest.raises(InvalidArgument):
        gc.adaptive_avg_pool(np.zeros((1, 2, 2)), (3, 1))


@given(h=st.integers(1, 9), w=st.integers(1, 9), kr=st.integers(1, 9), kc=st.integers(1, 9),
       seed=st.integers(0, 2**16))
def test_pool_matches_oracle_on_uneven_grids(h, w, kr, kc, seed):
    kr, kc = min(kr, h), min(kc, w)
    x = np.random.default_rng(seed).normal(size=(2, h, w))
    np.testing.assert_allclose(gc.adaptive_avg_pool(x, (kr, kc)), cell_means(x, kr, kc),
                               atol=1e-12)


@pytest.mark.parametrize("seed", SEEDS)
def test_pool_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 5, 7))
    grid = (1 + seed % 3, 1 + seed % 4)
    probe = rng.normal(size=(grid[0] * grid[1], 2))
    g = gc.adaptive_avg_pool_backward(probe, x.shape, grid)
    num = central_difference(lambda: float((gc.adaptive_avg_pool(x, grid) * probe).sum()), x)
    assert rel_err(g, num) < 1e-6


# ---- purity

@given(seed=st.integers(0, 2**16), dilation=st.sampled_from([1, 2, 4]))
def test_forward_ops_are_pure(seed, dilation):
    rng = np.random.default_rng(seed)
    spec = gc.ConvSpec(2, 2, dilation=dilation)
    x, w = rng.normal(size=(2, 6, 5)), rng.normal(size=spec.weight_shape)
    x_copy = x.copy()
    a = gc.conv2d_forward(x, spec, w)
    b = gc.conv2d_forward(x, spec, w)
    assert np.array_equal(a, b) and np.array_equal(x, x_copy)
