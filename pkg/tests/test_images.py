import numpy as np
import pytest
from PIL import Image

from pvelseg import images


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.random((20, 30))
    path = tmp_path / "img.png"
    images.save_png(img, path)
    back = images.load_grayscale(path)
    assert back.shape == (20, 30)
    # save_png quantizes unit scale to 8 bits; load returns raw [0, 255].
    assert np.array_equal(back, np.rint(img * 255))


def test_load_grayscale_rejects_high_depth(tmp_path):
    path = tmp_path / "deep.png"
    Image.fromarray(np.zeros((4, 4), dtype=np.uint16)).save(path)
    with pytest.raises(images.ImageFormatError):
        images.load_grayscale(path)


def test_mask_png_roundtrip(tmp_path):
    mask = np.zeros((9, 7), dtype=bool)
    mask[2:5, 1:4] = True
    path = tmp_path / "mask.png"
    images.save_mask_png(mask, path)
    assert np.array_equal(images.load_mask_png(path), mask)


def test_resize_identity_and_constant():
    rng = np.random.default_rng(1)
    img = rng.random((13, 17))
    assert np.array_equal(images.resize(img, 17, 13), img)
    const = np.full((5, 6), 0.37)
    out = images.resize(const, 11, 9)
    assert out.shape == (9, 11)
    assert np.allclose(out, 0.37)


def test_resize_interpolates_between_neighbors():
    img = np.array([[0.0, 1.0]])
    out = images.resize(img, 3, 1)
    assert out[0, 0] == 0.0 and out[0, 2] == 1.0
    assert 0.0 < out[0, 1] < 1.0


def test_normalize_contrast():
    img = np.array([[10.0, 60.0], [110.0, 210.0]])
    out = images.normalize_contrast(img)
    assert out.min() == 0.0 and np.isclose(out.max(), 255.0)
    const = np.full((3, 3), 7.0)
    assert np.array_equal(images.normalize_contrast(const), const)


def test_rescale_unit_clamps_and_warns(caplog):
    img = np.array([[-3.0, 0.0], [255.0, 300.0]])
    with caplog.at_level("WARNING"):
        out = images.rescale_unit(img)
    assert out.min() == 0.0 and out.max() == 1.0
    assert any("clamp" in rec.message for rec in caplog.records)


def test_augment_produces_four_orientations():
    img = np.arange(6, dtype=np.float64).reshape(2, 3)
    outs = images.augment(img)
    assert len(outs) == 4
    assert np.array_equal(outs[0], img)
    assert np.array_equal(outs[1], np.fliplr(img))
    assert np.array_equal(outs[2], np.flipud(img))
    assert np.array_equal(outs[3], np.flipud(np.fliplr(img)))


def test_split_dataset_sizes_and_partition():
    data = [np.full((2, 2), i, dtype=np.float64) for i in range(10)]
    split = images.split_dataset(data, 0.75, seed=3)
    # floor(0.75 * 10 + 0.5) = 8
    assert len(split.train) == 8 and len(split.validation) == 2
    seen = sorted(list(split.train_indices) + list(split.validation_indices))
    assert seen == list(range(10))
    again = images.split_dataset(data, 0.75, seed=3)
    assert list(again.train_indices) == list(split.train_indices)


def test_split_dataset_validates():
    with pytest.raises(ValueError):
        images.split_dataset([], 0.5, seed=0)
    with pytest.raises(ValueError):
        images.split_dataset([np.zeros((2, 2))], 1.5, seed=0)


def test_manifest_roundtrip(tmp_path):
    paths = ["a.png", "b/c.png"]
    man = tmp_path / "manifest.txt"
    images.write_manifest(paths, man)
    assert images.read_manifest(man) == paths


def test_preprocess_enforces_minimum_size():
    rng = np.random.default_rng(2)
    img = rng.random((64, 64)) * 255
    out = images.preprocess(img, 32, 16)
    assert out.shape == (16, 32)
    assert 0.0 <= out.min() and out.max() <= 1.0
    with pytest.raises(ValueError):
        images.preprocess(img, 4, 32)


def test_require_image_and_mask_reject_bad_input():
    with pytest.raises(ValueError):
        images.require_image(np.zeros((2, 2, 3)))
    with pytest.raises(ValueError):
        images.require_mask(np.zeros((2, 2), dtype=np.float64))
