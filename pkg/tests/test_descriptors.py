import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.exceptions import NotFittedError

from objdiscovery.descriptors import (DESCRIPTOR_DIM, HOGDescriptor, appearance_matrix,
                                      appearance_similarity, center_cells,
                                      extract_global_descriptor, extract_patch_descriptor,
                                      extract_patch_descriptors, resample_patches, to_grayscale)

from oracles import hog_per_pixel


def _cells(v):
    return v.reshape(8, 8, 9)


def test_step_edge_lands_in_bin_zero():
    img = np.zeros((64, 64))
    img[:, 32:] = 1.0
    cells = _cells(extract_patch_descriptor(img, (0, 0, 64, 64)))
    nonzero = np.argwhere(cells > 0)
    assert set(nonzero[:, 1]) == {3, 4}
    assert set(nonzero[:, 2]) == {0}
    assert np.linalg.norm(cells) == pytest.approx(1.0)


def test_identity_resample():
    rng = np.random.default_rng(1)
    img = rng.random((64, 64))
    patch = resample_patches(img, np.array([[0, 0, 64, 64]], float), 64)[0]
    assert np.allclose(patch, img, atol=1e-12)


def test_resample_halves_pixel_pairs():
    img = np.arange(16, dtype=float).reshape(4, 4)
    # a 4x4 box to a 2x2 patch samples at the midpoints between pixel pairs
    patch = resample_patches(img, np.array([[0, 0, 4, 4]], float), 2)[0]
    assert np.allclose(patch, [[2.5, 4.5], [10.5, 12.5]])


@pytest.mark.parametrize("seed", range(5))
def test_matches_per_pixel_oracle(seed):
    rng = np.random.default_rng(seed)
    img = rng.random((64, 64))
    fast = extract_patch_descriptor(img, (0, 0, 64, 64))
    assert np.allclose(fast, hog_per_pixel(img), atol=1e-12)


def test_mirror_maps_orientation_bins():
    rng = np.random.default_rng(3)
    img = rng.random((64, 64))
    a = _cells(extract_patch_descriptor(img, (0, 0, 64, 64)))
    b = _cells(extract_patch_descriptor(img[:, ::-1].copy(), (0, 0, 64, 64)))
    perm = [(9 - j) % 9 for j in range(9)]
    assert np.allclose(b[:, ::-1, :][:, :, perm], a, atol=1e-12)


def test_rot180_is_exact():
    rng = np.random.default_rng(4)
    img = rng.random((64, 64))
    a = _cells(extract_patch_descriptor(img, (0, 0, 64, 64)))
    b = _cells(extract_patch_descriptor(img[::-1, ::-1].copy(), (0, 0, 64, 64)))
    assert np.allclose(b[::-1, ::-1, :], a, atol=1e-12)


def test_rot90_stripes_move_to_vertical_bins():
    xs = np.arange(64)
    img = np.tile(np.sin(xs / 3.0), (64, 1))  # vertical stripes, horizontal gradients
    a = _cells(extract_patch_descriptor(img, (0, 0, 64, 64)))
    b = _cells(extract_patch_descriptor(np.rot90(img).copy(), (0, 0, 64, 64)))
    assert np.all(a[..., 1:] < 1e-9)
    # 90 degrees sits halfway between bins 4 and 5
    assert np.allclose(b[..., 4], b[..., 5], atol=1e-9)
    assert np.all(np.delete(b, [4, 5], axis=-1) < 1e-9)
    # per-cell normalization keeps the L2 mass of the split pair
    assert np.allclose(np.rot90(a[..., 0]), np.hypot(b[..., 4], b[..., 5]), atol=1e-9)


def test_flat_patch_is_zero():
    d = extract_patch_descriptor(np.full((32, 32), 0.3), (4, 4, 20, 20))
    assert d.shape == (DESCRIPTOR_DIM,)
    assert not d.any()


def test_descriptor_rejects_boxes_outside():
    with pytest.raises(ValueError):
        extract_patch_descriptor(np.zeros((20, 20)), (0, 0, 30, 10))
    with pytest.raises(ValueError):
        extract_patch_descriptors(np.zeros((20, 20)), np.array([[5, 5, 5, 10]]))


def test_grayscale_conversion():
    rgb = np.zeros((4, 4, 3), np.uint8)
    rgb[..., 1] = 255
    assert np.allclose(to_grayscale(rgb), 0.587)
    assert to_grayscale(np.full((2, 2), 255, np.uint8)).max() == 1.0
    with pytest.raises(ValueError):
        to_grayscale(np.zeros((0, 5)))


def test_batch_matches_single_and_chunking():
    rng = np.random.default_rng(5)
    img = rng.random((50, 70))
    boxes = np.array([[0, 0, 70, 50], [3.5, 2.25, 40, 33], [10, 10, 26, 18]])
    batch = extract_patch_descriptors(img, boxes, chunk=2)
    for box, row in zip(boxes, batch):
        assert np.allclose(extract_patch_descriptor(img, box), row, atol=1e-12)
    assert np.allclose(extract_global_descriptor(img), batch[0])


descriptor = arrays(np.float64, 27, elements=st.floats(0, 1))


@given(descriptor, descriptor)
def test_similarity_range_and_symmetry(f, g):
    for centered in (False, True):
        for power in (1.0, 2.0):
            s = appearance_similarity(f, g, centered, power)
            assert 0.0 <= s <= 1.0
            assert s == pytest.approx(appearance_similarity(g, f, centered, power), abs=1e-12)


@given(descriptor)
def test_centered_self_similarity(f):
    c = center_cells(f)
    assert np.allclose(c.reshape(-1, 9).sum(axis=1), 0.0, atol=1e-12)
    norm = np.linalg.norm(c)
    assert norm == 0.0 or norm == pytest.approx(1.0)
    if norm > 0:
        assert appearance_similarity(f, f, centered=True, power=2.0) == pytest.approx(1.0)


def test_similarity_power_and_dims():
    f = np.array([0.6, 0.8] + [0.0] * 7)
    g = np.array([0.8, 0.6] + [0.0] * 7)
    assert appearance_similarity(f, g) == pytest.approx(0.96)
    assert appearance_similarity(f, g, power=2.0) == pytest.approx(0.96 ** 2)
    with pytest.raises(ValueError):
        appearance_similarity(f, g[:5])
    with pytest.raises(ValueError):
        center_cells(np.ones((2, 10)))
    m = appearance_matrix(np.stack([f, g]), np.stack([g]))
    assert m.shape == (2, 1)


def test_centering_removes_unrelated_floor():
    rng = np.random.default_rng(6)
    a = extract_patch_descriptor(rng.random((64, 64)), (0, 0, 64, 64))
    b = extract_patch_descriptor(rng.random((64, 64)), (0, 0, 64, 64))
    assert appearance_similarity(a, b) > 0.3
    assert appearance_similarity(a, b, centered=True) < 0.5 * appearance_similarity(a, b)
    assert appearance_similarity(a, b, centered=True, power=2.0) < 0.05


@settings(deadline=None, max_examples=20)
@given(st.integers(0, 2 ** 31 - 1))
def test_brightness_contrast_invariance(seed):
    rng = np.random.default_rng(seed)
    img = rng.random((40, 40))
    a = extract_patch_descriptor(img, (2, 3, 30, 35))
    b = extract_patch_descriptor(0.5 * img + 0.2, (2, 3, 30, 35))
    assert np.allclose(a, b, atol=1e-4)


def test_transformer_api():
    imgs = [np.random.default_rng(i).random((30, 30)) for i in range(3)]
    hog = HOGDescriptor()
    with pytest.raises(NotFittedError):
        hog.transform(imgs)
    out = hog.fit_transform(imgs)
    assert out.shape == (3, DESCRIPTOR_DIM)
    assert np.allclose(out[1], extract_global_descriptor(imgs[1]))


@settings(deadline=None, max_examples=25)
@given(st.integers(0, 10 ** 6))
def test_descriptor_invariants(seed):
    rng = np.random.default_rng(seed)
    img = rng.random((int(rng.integers(10, 80)), int(rng.integers(10, 80))))
    h, w = img.shape
    boxes = np.array([[0, 0, w, h], [0, 0, w / 2, h / 3], [w / 4, h / 4, w, h]])
    d = extract_patch_descriptors(img, boxes)
    assert np.all(d >= 0)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    assert np.array_equal(d, extract_patch_descriptors(img.copy(), boxes))
    assert appearance_similarity(d[1], d[1]) == pytest.approx(1.0)


def test_similarity_trivial_cases():
    f = np.zeros(18)
    f[:9] = 1 / 3
    g = np.zeros(18)
    g[9:] = 1 / 3
    assert appearance_similarity(f, g) == 0.0
    assert appearance_similarity(f, np.zeros(18)) == 0.0
    assert appearance_similarity(f, np.zeros(18), centered=True) == 0.0


def test_global_descriptor_of_mirrored_image():
    rng = np.random.default_rng(7)
    img = rng.random((48, 72))
    a = _cells(extract_global_descriptor(img))
    b = _cells(extract_global_descriptor(img[:, ::-1].copy()))
    perm = [(9 - j) % 9 for j in range(9)]
    assert np.allclose(b[:, ::-1, :][:, :, perm], a, atol=1e-12)
    assert not extract_global_descriptor(np.full((30, 40), 0.5)).any()
