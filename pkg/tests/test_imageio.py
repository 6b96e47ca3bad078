import numpy as np
import pytest
from PIL import Image

from pathattr.errors import ArtifactIOError, InvalidParameterError
from pathattr.imageio import heatmap_pixels, read_mask, read_png, render_heatmap, write_png


def test_png_round_trip_within_quantization(tmp_path):
    x = np.random.default_rng(0).random((8, 8, 3))
    write_png(x, tmp_path / "a.png")
    y = read_png(tmp_path / "a.png")
    assert y.shape == (8, 8, 3)
    assert np.abs(y - x).max() <= 1 / 255


def test_png_round_trip_idempotent_after_first_quantization(tmp_path):
    x = np.random.default_rng(1).random((5, 7, 3))
    write_png(x, tmp_path / "a.png")
    y = read_png(tmp_path / "a.png")
    write_png(y, tmp_path / "b.png")
    np.testing.assert_array_equal(read_png(tmp_path / "b.png"), y)


def test_grayscale_png_has_one_channel(tmp_path):
    Image.fromarray(np.arange(16, dtype=np.uint8).reshape(4, 4), mode="L").save(tmp_path / "g.png")
    x = read_png(tmp_path / "g.png")
    assert x.shape == (4, 4, 1)
    assert x[0, 1, 0] == pytest.approx(1 / 255)


def test_truncated_png_is_io_error(tmp_path):
    write_png(np.random.default_rng(2).random((16, 16, 3)), tmp_path / "a.png")
    data = (tmp_path / "a.png").read_bytes()
    (tmp_path / "t.png").write_bytes(data[: len(data) // 2])
    with pytest.raises(ArtifactIOError):
        read_png(tmp_path / "t.png")


def test_missing_and_non_png_files(tmp_path):
    with pytest.raises(ArtifactIOError):
        read_png(tmp_path / "nope.png")
    Image.new("RGB", (4, 4)).save(tmp_path / "x.bmp")
    with pytest.raises(ArtifactIOError):
        read_png(tmp_path / "x.bmp")


def test_sixteen_bit_png_is_rejected(tmp_path):
    Image.fromarray(np.full((4, 4), 40000, dtype=np.uint16)).save(tmp_path / "d.png")
    with pytest.raises(ArtifactIOError):
        read_png(tmp_path / "d.png")


def test_read_mask_nonzero_is_positive(tmp_path):
    m = np.zeros((4, 4), dtype=np.uint8)
    m[1, 2] = 1
    m[3, 0] = 255
    Image.fromarray(m, mode="L").save(tmp_path / "m.png")
    mask = read_mask(tmp_path / "m.png")
    assert mask.dtype == bool
    assert mask.sum() == 2 and mask[1, 2] and mask[3, 0]


def test_heatmap_all_zero_is_mid_gray(tmp_path):
    render_heatmap(np.zeros((5, 6, 3)), tmp_path / "h.png")
    pix = np.asarray(Image.open(tmp_path / "h.png"))
    assert pix.shape == (5, 6)
    assert np.all(pix == 128)


def test_heatmap_single_max_pixel_is_white():
    a = np.zeros((4, 4, 1))
    a[2, 1] = 3.0
    pix = heatmap_pixels(a)
    assert pix[2, 1] == 255
    assert pix.sum() == 255


def test_heatmap_preserves_magnitude_order():
    a = np.random.default_rng(5).normal(size=(6, 6, 1))
    pix = heatmap_pixels(a).astype(float).ravel()
    mag = np.abs(a).ravel()
    order = np.argsort(mag)
    assert np.all(np.diff(pix[order]) >= 0)


def test_heatmap_empty_is_invalid():
    with pytest.raises(InvalidParameterError):
        heatmap_pixels(np.zeros((0, 3)))
