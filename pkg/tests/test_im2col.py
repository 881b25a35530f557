import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import direct_conv2d, enumerate_windows
from pseudo3d.errors import ConfigurationError, DimensionError
from pseudo3d.im2col import ConvSpec, col2im, conv2d_direct, conv2d_gemm, im2col


def test_shape_4x4_k2():
    assert im2col(np.zeros((4, 4, 1)), ConvSpec(k=2)).shape == (4, 9)


def test_unit_window_flattens_input(rng):
    x = rng.standard_normal((5, 7, 1))
    cols = im2col(x, ConvSpec(k=1))
    assert cols.shape == (1, 35)
    assert np.array_equal(cols[0], x.ravel())


def test_first_column_matches_window_enumeration():
    x = np.arange(1.0, 10.0).reshape(3, 3)
    cols = im2col(x[:, :, None], ConvSpec(k=2))
    assert cols[:, 0].tolist() == [1.0, 2.0, 4.0, 5.0]
    for n, (_, _, window) in enumerate(enumerate_windows(x, 2, 1)):
        assert cols[:, n].tolist() == window


def test_channel_is_fastest_in_column(rng):
    x = rng.standard_normal((3, 3, 2))
    col = im2col(x, ConvSpec(k=2, C=2))[:, 0]
    expected = [x[a, b, c] for a in range(2) for b in range(2) for c in range(2)]
    assert col.tolist() == expected


def test_padding_contributes_zeros():
    x = np.ones((2, 2, 1))
    cols = im2col(x, ConvSpec(k=3, P=1))
    assert cols.shape == (9, 4)
    # top-left window covers 4 real pixels, 5 padded
    assert cols[:, 0].sum() == 4.0


def test_non_divisible_stride_reports_residue():
    with pytest.raises(ConfigurationError, match="= 1, must be 0"):
        im2col(np.zeros((6, 6, 1)), ConvSpec(k=3, s=2))


def test_window_larger_than_input():
    with pytest.raises(DimensionError):
        im2col(np.zeros((2, 2, 1)), ConvSpec(k=3))


def test_invalid_spec():
    with pytest.raises(ConfigurationError):
        ConvSpec(k=0)
    with pytest.raises(ConfigurationError):
        ConvSpec(k=3, P=-1)


@settings(max_examples=200, deadline=None)
@given(
    k=st.integers(1, 5), s=st.integers(1, 3), P=st.integers(0, 2), C=st.integers(1, 3),
    gh=st.integers(1, 6), gw=st.integers(1, 6),
)
def test_shape_law(k, s, P, C, gh, gw):
    H, W = (gh - 1) * s + k - 2 * P, (gw - 1) * s + k - 2 * P
    if H < 1 or W < 1:
        return
    cols = im2col(np.zeros((H, W, C)), ConvSpec(k=k, C=C, P=P, s=s))
    Wp = ((H + 2 * P - k) // s + 1) * ((W + 2 * P - k) // s + 1)
    assert cols.shape == (k * k * C, Wp)
    assert cols.size == Wp * k * k * C


def test_col2im_unit_window_inverts(rng):
    x = rng.standard_normal((4, 5, 2))
    spec = ConvSpec(k=1, C=2)
    assert np.array_equal(col2im(im2col(x, spec), 4, 5, spec), x)


def test_col2im_overlap_count():
    spec = ConvSpec(k=2)
    out = col2im(np.ones((4, 4)), 3, 3, spec)[:, :, 0]
    assert out[1, 1] == 4.0
    assert out.tolist() == [[1, 2, 1], [2, 4, 2], [1, 2, 1]]


def test_col2im_bad_shape():
    with pytest.raises(DimensionError):
        col2im(np.ones((4, 5)), 3, 3, ConvSpec(k=2))


@pytest.mark.parametrize("seed", range(10))
def test_adjointness(seed):
    rng = np.random.default_rng(seed)
    k, s, P, C = 3, int(rng.integers(1, 3)), int(rng.integers(0, 2)), 2
    H = W = 2 * s + k - 2 * P + s * int(rng.integers(0, 3))
    spec = ConvSpec(k=k, C=C, P=P, s=s)
    x = rng.standard_normal((H, W, C))
    cols = im2col(x, spec)
    y = rng.standard_normal(cols.shape)
    assert abs(np.sum(cols * y) - np.sum(x * col2im(y, H, W, spec))) <= 1e-12


def test_conv_hand_example():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])[:, :, None]
    w = np.array([[1.0, 0.0], [0.0, 1.0]]).reshape(1, 2, 2, 1)
    assert conv2d_gemm(x, w, ConvSpec(k=2)).tolist() == [[[5.0]]]


def test_conv_identity_kernel(rng):
    x = rng.standard_normal((6, 5, 1))
    assert np.array_equal(conv2d_gemm(x, np.ones((1, 1, 1, 1)), ConvSpec(k=1)), x)


def test_conv_matches_direct_8x8x3(rng):
    x = rng.standard_normal((8, 8, 3))
    w = rng.standard_normal((4, 3, 3, 3))
    spec = ConvSpec(k=3, C=3, M=4, P=1, s=1)
    ref = direct_conv2d(x, w, P=1, s=1)
    assert np.max(np.abs(conv2d_gemm(x, w, spec) - ref)) <= 1e-12
    assert np.max(np.abs(conv2d_direct(x, w, spec) - ref)) <= 1e-12


def test_conv_kernel_mismatch():
    with pytest.raises(DimensionError):
        conv2d_gemm(np.zeros((4, 4, 1)), np.zeros((2, 3, 3, 1)), ConvSpec(k=3, M=1))


def test_conv_threads_bit_identical(rng):
    x = rng.standard_normal((12, 12, 2))
    w = rng.standard_normal((3, 3, 3, 2))
    spec = ConvSpec(k=3, C=2, M=3, P=1)
    assert np.array_equal(conv2d_gemm(x, w, spec, threads=1), conv2d_gemm(x, w, spec, threads=4))
