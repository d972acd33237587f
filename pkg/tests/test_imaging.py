import numpy as np
import pytest

from resgan.errors import ConfigError, FormatError, ShapeError
from resgan.imaging import grid_from_images, quantize, read_pnm, write_image_grid, write_pnm


class TestQuantize:
    def test_full_scale(self):
        assert quantize(np.array([1.0]))[0] == 255

    def test_round_half_up(self):
        assert quantize(np.array([0.5]))[0] == 128  # 127.5 rounds up

    def test_zero(self):
        assert quantize(np.array([0.0]))[0] == 0

    def test_clip(self):
        np.testing.assert_array_equal(quantize(np.array([-0.2, 1.4])), [0, 255])


class TestGridGeometry:
    def test_two_by_two_of_28px(self):
        tiles = np.random.default_rng(0).uniform(0, 1, (4, 1, 28, 28))
        canvas = grid_from_images(tiles, 2, 2)
        assert canvas.shape == (2 * 28 + 1, 2 * 28 + 1, 1)

    def test_separators_are_white(self):
        tiles = np.zeros((4, 1, 4, 4))
        canvas = grid_from_images(tiles, 2, 2)
        assert (canvas[4, :, 0] == 255).all() and (canvas[:, 4, 0] == 255).all()

    def test_tiles_land_at_offsets(self):
        rng = np.random.default_rng(1)
        tiles = rng.uniform(0, 1, (4, 1, 4, 4))
        canvas = grid_from_images(tiles, 2, 2)
        np.testing.assert_array_equal(canvas[0:4, 0:4, 0], quantize(tiles[0, 0]))
        np.testing.assert_array_equal(canvas[5:9, 5:9, 0], quantize(tiles[3, 0]))

    def test_class_grouped_rows(self):
        # row r of the grid holds tiles of class r
        tiles = np.stack([np.full((1, 2, 2), v) for v in (0.1, 0.9, 0.4, 0.6)])
        labels = np.eye(2)[[1, 0, 1, 0]]
        canvas = grid_from_images(tiles, 2, 2, labels=labels)
        np.testing.assert_array_equal(canvas[0:2, 0:2, 0], quantize(np.full((2, 2), 0.9)))
        np.testing.assert_array_equal(canvas[3:5, 0:2, 0], quantize(np.full((2, 2), 0.1)))

    def test_rejects_bad_channels(self):
        with pytest.raises(ConfigError):
            grid_from_images(np.zeros((1, 2, 4, 4)), 1, 1)

    def test_rejects_bad_rank(self):
        with pytest.raises(ShapeError):
            grid_from_images(np.zeros((4, 4)), 1, 1)


class TestPnmRoundTrip:
    def test_gray_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(2)
        tiles = rng.uniform(0, 1, (6, 1, 5, 5))
        path = tmp_path / "grid.pgm"
        write_image_grid(tiles, 2, 3, path)
        back = read_pnm(path)
        np.testing.assert_array_equal(back, grid_from_images(tiles, 2, 3))

    def test_color_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        tiles = rng.uniform(0, 1, (4, 3, 6, 6))
        path = tmp_path / "grid.ppm"
        write_image_grid(tiles, 2, 2, path)
        back = read_pnm(path)
        assert back.shape[2] == 3
        np.testing.assert_array_equal(back, grid_from_images(tiles, 2, 2))

    def test_header_contents(self, tmp_path):
        path = tmp_path / "one.pgm"
        write_pnm(np.zeros((3, 7, 1), dtype=np.uint8), path)
        assert path.read_bytes().startswith(b"P5\n7 3\n255\n")

    def test_reader_rejects_junk(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P4\n2 2\n255\n\x00\x00\x00\x00")
        with pytest.raises(FormatError):
            read_pnm(path)

    def test_reader_rejects_truncation(self, tmp_path):
        path = tmp_path / "short.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x00")
        with pytest.raises(FormatError):
            read_pnm(path)

    def test_write_twice_byte_identical(self, tmp_path):
        tiles = np.random.default_rng(4).uniform(0, 1, (4, 1, 3, 3))
        a, b = tmp_path / "a.pgm", tmp_path / "b.pgm"
        write_image_grid(tiles, 2, 2, a)
        write_image_grid(tiles, 2, 2, b)
        assert a.read_bytes() == b.read_bytes()
