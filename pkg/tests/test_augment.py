import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pseudo3d.augment import (
    Affine,
    AugmentSpec,
    Flip,
    Gamma,
    GaussianBlur,
    Noise,
    Swap,
    augment,
    augment_global,
    augment_local,
    random_crop_3d,
    random_crop_resize_2d,
    stream,
)
from pseudo3d.errors import ConfigurationError, DataError


@pytest.fixture
def vol(rng):
    return rng.random((12, 10, 8))


def test_identity_global_recipe(vol):
    spec = AugmentSpec(global_ops=(Flip((0.0, 0.0, 0.0)), Affine((0.0, 0.0, 0.0), 0.0, 0.0)), local_ops=())
    assert np.array_equal(augment_global(vol, spec, 3), vol)


def test_flip_twice_is_identity(vol):
    spec = AugmentSpec(global_ops=(Flip((0.0, 1.0, 0.0)),), local_ops=())
    once = augment_global(vol, spec, 0)
    assert np.array_equal(once, vol[:, ::-1, :])
    assert np.array_equal(augment_global(once, spec, 0), vol)


def test_global_deterministic(vol):
    spec = AugmentSpec(seed=9)
    a = augment_global(vol, spec, 17)
    b = augment_global(vol, spec, 17)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, augment_global(vol, spec, 18))


def test_affine_keeps_shape_and_range(vol):
    spec = AugmentSpec(global_ops=(Affine((30.0, 30.0, 30.0), 0.3, 0.2),), local_ops=())
    out = augment_global(vol, spec, 1)
    assert out.shape == vol.shape
    assert out.min() >= 0.0 and out.max() <= 1.0
    assert not np.array_equal(out, vol)


def test_gamma_one_is_identity(vol):
    spec = AugmentSpec(global_ops=(), local_ops=(Gamma((1.0, 1.0)),))
    assert np.array_equal(augment_local(vol, spec, 0), vol)


def test_blur_constant_volume():
    v = np.full((9, 9, 9), 0.4)
    spec = AugmentSpec(global_ops=(), local_ops=(GaussianBlur((0.5, 2.0)),))
    out = augment_local(v, spec, 5)
    np.testing.assert_allclose(out, 0.4, atol=1e-12)
    assert np.ptp(out) == 0.0


def test_swap_preserves_multiset(vol):
    spec = AugmentSpec(global_ops=(), local_ops=(Swap((3, 3, 2), 1),))
    out = augment_local(vol, spec, 2)
    assert np.array_equal(np.sort(out, axis=None), np.sort(vol, axis=None))
    assert not np.array_equal(out, vol)


def test_swap_extent_must_fit(vol):
    spec = AugmentSpec(global_ops=(), local_ops=(Swap((12, 3, 3), 1),))
    with pytest.raises(ConfigurationError):
        augment_local(vol, spec, 0)


def test_noise_changes_values_and_clamps(vol):
    spec = AugmentSpec(global_ops=(), local_ops=(Noise(0.5),))
    out = augment_local(vol, spec, 0)
    assert out.min() >= 0.0 and out.max() <= 1.0
    assert not np.array_equal(out, vol)


def test_local_deterministic(vol):
    spec = AugmentSpec(seed=4)
    assert augment_local(vol, spec, 3).tobytes() == augment_local(vol, spec, 3).tobytes()


def test_views_differ(vol):
    spec = AugmentSpec(seed=4)
    assert not np.array_equal(augment(vol, spec, 3, view=0), augment(vol, spec, 3, view=1))


@pytest.mark.parametrize(
    "bad",
    [
        lambda: Flip((1.5, 0.0, 0.0)),
        lambda: GaussianBlur((0.0, 1.0)),
        lambda: Gamma((0.1, 1.0)),
        lambda: Gamma((1.0, 5.0)),
        lambda: Affine(max_scale=-0.1),
        lambda: AugmentSpec(seed=-1),
        lambda: AugmentSpec(global_ops=(Noise(),)),
    ],
)
def test_spec_validation(bad):
    with pytest.raises(ConfigurationError):
        bad()


def test_spec_json_round_trip(tmp_path):
    spec = AugmentSpec(seed=2**63 + 5, crop_fraction=(0.7, 0.9))
    path = tmp_path / "aug.json"
    path.write_text(spec.to_json())
    assert AugmentSpec.load(path) == spec
    with pytest.raises(ConfigurationError):
        AugmentSpec.from_dict({"local_ops": [{"op": "elastic"}]})


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32), item=st.integers(0, 10**6))
def test_full_pipeline_range_and_shape(seed, item):
    v = np.random.default_rng(seed).random((10, 10, 6))
    spec = AugmentSpec(seed=seed, local_ops=(Noise(0.1), GaussianBlur((0.5, 1.0)), Swap((2, 2, 2), 3), Gamma()))
    out = augment(v, spec, item)
    assert out.shape == v.shape
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_crop_3d_exact_size_is_identity(rng):
    v = rng.random((64, 64, 32))
    out = random_crop_3d(v, stream(0, 0), [(64, 64, 32)])
    assert np.array_equal(out, v)


def test_crop_3d_constant(rng):
    out = random_crop_3d(np.full((130, 100, 70), 0.25), stream(1, 2))
    assert out.shape == (64, 64, 32)
    assert np.all(out == 0.25)


def test_crop_3d_deterministic(rng):
    v = rng.random((128, 128, 64))
    a = random_crop_3d(v, stream(5, 1))
    b = random_crop_3d(v, stream(5, 1))
    assert a.tobytes() == b.tobytes()


def test_crop_3d_small_volume_is_padded(rng):
    v = rng.random((40, 70, 20))
    out = random_crop_3d(v, stream(0, 0))
    assert out.shape == (64, 64, 32)
    assert out.min() >= v.min() and out.max() <= v.max()


def test_crop_2d_identity_when_fraction_is_one(rng):
    img = rng.random((224, 224))
    out = random_crop_resize_2d(img, stream(0, 0), fraction=(1.0, 1.0))
    np.testing.assert_allclose(out, img, atol=1e-6)


def test_crop_2d_constant_and_deterministic(rng):
    out = random_crop_resize_2d(np.full((300, 250), 0.6), stream(3, 3))
    assert out.shape == (224, 224) and np.all(out == 0.6)
    img = rng.random((256, 256))
    assert random_crop_resize_2d(img, stream(3, 3)).tobytes() == random_crop_resize_2d(img, stream(3, 3)).tobytes()


def test_crop_2d_undersized():
    with pytest.raises(DataError):
        random_crop_resize_2d(np.zeros((63, 100)), stream(0, 0))
