import numpy as np
import pytest

from iidtools import image


class TestSrgbConversion:
    def test_black_white_fixed_points(self):
        assert image.srgb_to_linear(np.uint8(0)) == 0.0
        assert image.srgb_to_linear(np.uint8(255)) == 1.0
        assert image.linear_to_srgb(np.array(0.0)) == 0
        assert image.linear_to_srgb(np.array(1.0)) == 255

    def test_mid_gray(self):
        # ((128/255 + 0.055) / 1.055) ** 2.4
        v = image.srgb_to_linear(np.uint8(128))
        assert v == pytest.approx(0.21586, abs=1e-5)
        assert image.linear_to_srgb(np.array(0.21586)) == 128

    def test_roundtrip_all_codes(self):
        codes = np.arange(256, dtype=np.uint8)
        assert np.array_equal(image.linear_to_srgb(image.srgb_to_linear(codes)), codes)

    def test_strictly_monotone(self):
        linear = image.srgb_to_linear(np.arange(256, dtype=np.uint8))
        assert np.all(np.diff(linear) > 0)

    def test_roundtrip_within_quantization(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(0.0, 1.0, size=1000)
        back = image.srgb_to_linear(image.linear_to_srgb(x))
        # worst case: half a code step through the steepest EOTF slope (2.4/1.055)
        assert np.max(np.abs(back - x)) <= (2.4 / 1.055) * 0.5 / 255.0
        low = x <= 0.8
        assert np.max(np.abs(back[low] - x[low])) < 1.0 / 255.0

    def test_export_clamps(self):
        out = image.linear_to_srgb(np.array([-0.5, 1.5]))
        assert list(out) == [0, 255]


class TestResize:
    def test_constant_maps_to_constant(self):
        img = np.full((5, 7, 3), 0.5)
        out = image.resize_bilinear(img, 13, 3)
        assert out.shape == (3, 13, 3)
        np.testing.assert_allclose(out, 0.5)

    def test_single_pixel_broadcast(self):
        img = np.array([[[0.1, 0.2, 0.3]]])
        out = image.resize_bilinear(img, 4, 5)
        np.testing.assert_allclose(out, np.broadcast_to(img[0, 0], (5, 4, 3)))

    def test_upsample_2x1_half_pixel_centers(self):
        # source centers at x=0,1; target samples at -0.25, 0.25, 0.75, 1.25
        out = image.resize_bilinear(np.array([[0.0, 1.0]]), 4, 1)
        np.testing.assert_allclose(out, [[0.0, 0.25, 0.75, 1.0]])

    def test_no_overshoot(self):
        rng = np.random.default_rng(1)
        img = rng.uniform(size=(9, 11, 3))
        out = image.resize_bilinear(img, 30, 17)
        assert out.min() >= img.min() - 1e-12
        assert out.max() <= img.max() + 1e-12

    def test_zero_target_rejected(self):
        with pytest.raises(ValueError):
            image.resize_bilinear(np.zeros((2, 2, 3)), 0, 4)

    def test_2d_array_supported(self):
        out = image.resize_bilinear(np.array([[0.0, 1.0]]), 4, 2)
        assert out.shape == (2, 4)


class TestMeanIntensity:
    def test_examples(self):
        img = np.array([[[0.2, 0.4, 0.6], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]])
        np.testing.assert_allclose(image.mean_intensity(img), [[0.4, 0.0, 1.0]])

    def test_bounded_by_channels(self):
        rng = np.random.default_rng(2)
        img = rng.uniform(size=(6, 6, 3))
        mean = image.mean_intensity(img)
        assert np.all(mean >= img.min(axis=2) - 1e-12)
        assert np.all(mean <= img.max(axis=2) + 1e-12)


class TestPngIO:
    def test_roundtrip_rgb(self, tmp_path):
        rng = np.random.default_rng(3)
        raster = rng.integers(0, 256, size=(8, 6, 3), dtype=np.uint8)
        linear = image.srgb_to_linear(raster)
        path = tmp_path / "img.png"
        image.save_png_linear(linear, path)
        assert np.array_equal(image.load_png(path), raster)

    def test_gray_export(self, tmp_path):
        intensity = np.linspace(0.0, 1.0, 16).reshape(4, 4)
        path = tmp_path / "gray.png"
        image.save_png_gray(intensity, path)
        back = image.load_png(path)
        # grayscale expands to three equal channels
        assert np.array_equal(back[..., 0], back[..., 1])
        assert np.array_equal(back[..., 0], back[..., 2])

    def test_alpha_ignored(self, tmp_path):
        from PIL import Image as PILImage

        rgba = np.zeros((2, 2, 4), dtype=np.uint8)
        rgba[..., 0] = 200
        rgba[..., 3] = 10
        path = tmp_path / "rgba.png"
        PILImage.fromarray(rgba, mode="RGBA").save(path)
        back = image.load_png(path)
        assert back.shape == (2, 2, 3)
        assert np.all(back[..., 0] == 200)

    def test_missing_file_error_carries_path(self, tmp_path):
        with pytest.raises(OSError, match="nope.png"):
            image.load_png(tmp_path / "nope.png")


class TestLab:
    def test_white_point(self):
        lab = image.linear_rgb_to_lab(np.ones((1, 1, 3)))
        np.testing.assert_allclose(lab[0, 0], [100.0, 0.0, 0.0], atol=0.05)

    def test_black(self):
        lab = image.linear_rgb_to_lab(np.zeros((1, 1, 3)))
        np.testing.assert_allclose(lab[0, 0], [0.0, 0.0, 0.0], atol=1e-9)

    def test_gray_axis_has_no_chroma(self):
        img = np.full((1, 4, 3), 0.3)
        lab = image.linear_rgb_to_lab(img)
        np.testing.assert_allclose(lab[..., 1:], 0.0, atol=0.05)


class TestHsv:
    def test_primary_corners(self):
        rgb = image.hsv_to_srgb8(np.array(0.0), np.array(1.0), np.array(1.0))
        assert list(rgb) == [255, 0, 0]
        rgb = image.hsv_to_srgb8(np.array(1.0 / 3.0), np.array(1.0), np.array(1.0))
        assert list(rgb) == [0, 255, 0]
        rgb = image.hsv_to_srgb8(np.array(2.0 / 3.0), np.array(1.0), np.array(1.0))
        assert list(rgb) == [0, 0, 255]

    def test_zero_saturation_is_gray(self):
        h = np.linspace(0.0, 0.99, 16)
        rgb = image.hsv_to_srgb8(h, np.zeros(16), np.full(16, 0.5))
        assert np.all(rgb == rgb[0])
