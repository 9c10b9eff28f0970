import numpy as np
import pytest
from PIL import Image

from perceptiq.image_io import (
    GrayImage,
    crop_border,
    list_images,
    load_gray,
    mse_loss,
    rmse,
    save_pgm,
    save_png,
)


def test_solid_red_png_maps_to_luma(tmp_path):
    path = tmp_path / "red.png"
    Image.new("RGB", (5, 4), (255, 0, 0)).save(path)
    img = load_gray(path)
    assert img.shape == (4, 5)
    assert np.allclose(img.data, 0.299 * 255.0, rtol=0, atol=1e-9)


def test_rgb_weights_sum_to_luma(tmp_path):
    path = tmp_path / "mix.png"
    Image.new("RGB", (3, 3), (10, 200, 31)).save(path)
    expected = 0.299 * 10 + 0.587 * 200 + 0.114 * 31
    assert np.allclose(load_gray(path).data, expected, rtol=0, atol=1e-9)


def test_gray_png_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    vals = rng.integers(0, 256, (16, 16))
    path = tmp_path / "noise.png"
    save_png(GrayImage(vals.astype(float)), path)
    back = load_gray(path)
    assert np.array_equal(back.data, vals.astype(float))


def test_pgm_round_trip_exact(tmp_path):
    rng = np.random.default_rng(1)
    vals = rng.integers(0, 256, (7, 11)).astype(float)
    path = tmp_path / "x.pgm"
    save_pgm(GrayImage(vals), path)
    assert np.array_equal(load_gray(path).data, vals)


def test_pgm_rounds_to_nearest(tmp_path):
    img = GrayImage(np.array([[0.4, 254.6], [127.5, 10.0]]))
    path = tmp_path / "r.pgm"
    save_pgm(img, path)
    back = load_gray(path)
    assert back.data[0, 0] == 0.0
    assert back.data[0, 1] == 255.0


def test_palette_png_loads(tmp_path):
    path = tmp_path / "pal.png"
    Image.new("RGB", (8, 8), (40, 90, 200)).convert("P").save(path)
    img = load_gray(path)
    assert img.shape == (8, 8)
    assert np.all((img.data >= 0) & (img.data <= 255))


def test_jpeg_loads(tmp_path):
    path = tmp_path / "j.jpg"
    Image.new("L", (12, 9), 77).save(path)
    img = load_gray(path)
    assert img.shape == (9, 12)


def test_rejects_rgba(tmp_path):
    path = tmp_path / "a.png"
    Image.new("RGBA", (4, 4), (1, 2, 3, 4)).save(path)
    with pytest.raises(ValueError):
        load_gray(path)


def test_rejects_sixteen_bit(tmp_path):
    path = tmp_path / "deep.png"
    Image.fromarray(np.full((4, 4), 1000, dtype=np.uint16)).save(path)
    with pytest.raises(ValueError):
        load_gray(path)


def test_rejects_unknown_format(tmp_path):
    path = tmp_path / "b.bmp"
    Image.new("L", (4, 4), 5).save(path)
    with pytest.raises(ValueError):
        load_gray(path)


def test_rejects_non_image_bytes(tmp_path):
    path = tmp_path / "fake.png"
    path.write_text("not an image\n")
    with pytest.raises(ValueError):
        load_gray(path)


def test_missing_file_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_gray(tmp_path / "absent.png")


def test_list_images_sorted(tmp_path):
    for name in ("b.png", "a.png", "c.pgm", "notes.txt"):
        (tmp_path / name).write_bytes(b"x")
    names = [p.name for p in list_images(tmp_path)]
    assert names == ["a.png", "b.png", "c.pgm"]


def test_list_images_empty_dir_raises(tmp_path):
    with pytest.raises(ValueError):
        list_images(tmp_path)


def test_list_images_missing_dir_raises(tmp_path):
    with pytest.raises(ValueError):
        list_images(tmp_path / "nope")


def test_gray_image_validation():
    with pytest.raises(ValueError):
        GrayImage(np.zeros(9))  # 1-d
    with pytest.raises(ValueError):
        GrayImage(np.zeros((0, 4)))
    with pytest.raises(ValueError):
        GrayImage(np.full((2, 2), 256.0))
    with pytest.raises(ValueError):
        GrayImage(np.full((2, 2), -0.5))
    bad = np.zeros((2, 2))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        GrayImage(bad)


def test_crop_border():
    img = GrayImage(np.arange(30, dtype=float).reshape(5, 6))
    out = crop_border(img, 1)
    assert out.shape == (3, 4)
    assert np.array_equal(out.data, img.data[1:-1, 1:-1])
    assert crop_border(img, 0) is img
    with pytest.raises(ValueError):
        crop_border(img, 3)  # nothing left


def test_mse_of_constant_shift():
    a = GrayImage(np.full((6, 6), 100.0))
    b = GrayImage(np.full((6, 6), 102.0))
    assert mse_loss(a, b) == 4.0


def test_rmse_identical_is_zero():
    img = GrayImage(np.random.default_rng(2).uniform(0, 255, (8, 8)))
    assert rmse(img, img) == 0.0


def test_rmse_single_pixel():
    a = np.full((4, 4), 50.0)
    b = a.copy()
    b[2, 1] += 16.0
    # sqrt(16^2 / 16) = 4
    assert rmse(GrayImage(a), GrayImage(b)) == 4.0


def test_rmse_squares_to_mse():
    rng = np.random.default_rng(3)
    a = GrayImage(rng.uniform(0, 255, (8, 8)))
    b = GrayImage(rng.uniform(0, 255, (8, 8)))
    assert abs(rmse(a, b) ** 2 - mse_loss(a, b)) < 1e-10
    assert rmse(a, b) == rmse(b, a)


def test_mismatched_shapes_raise():
    a = GrayImage(np.zeros((4, 4)))
    b = GrayImage(np.zeros((4, 5)))
    with pytest.raises(ValueError):
        mse_loss(a, b)
    with pytest.raises(ValueError):
        rmse(a, b)
