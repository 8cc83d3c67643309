import numpy as np
import pytest

from beamloc import (
    BoxBoundsError,
    DimensionError,
    FeatureMap,
    GridBox,
    PixelRect,
    backproject,
    compose_rect,
    read_fmap1,
    truncate_and_resize,
    write_fmap1,
)


def rng(seed=0):
    return np.random.default_rng(seed)


class TestGridBox:
    def test_valid_box(self):
        box = GridBox(1, 2, 3, 4)
        assert box.as_tuple() == (1, 2, 3, 4)
        box.validate_within(6)

    @pytest.mark.parametrize("xywh", [(0, 0, 0, 1), (0, 0, 1, 0), (-1, 0, 1, 1), (0, -1, 1, 1)])
    def test_degenerate_rejected(self, xywh):
        with pytest.raises(BoxBoundsError):
            GridBox(*xywh)

    @pytest.mark.parametrize("xywh", [(0, 0, 7, 6), (1, 0, 6, 6), (5, 5, 2, 1)])
    def test_out_of_grid_rejected(self, xywh):
        with pytest.raises(BoxBoundsError):
            GridBox(*xywh).validate_within(6)


class TestTruncateAndResize:
    def test_full_grid_box_is_identity_bit_for_bit(self):
        values = rng(1).normal(size=(6, 6, 3))
        fmap = FeatureMap(values)
        out = truncate_and_resize(fmap, GridBox(0, 0, 6, 6))
        assert out is fmap
        assert out.values.tobytes() == fmap.values.tobytes()

    def test_constant_channel_stays_constant(self):
        values = np.full((5, 5, 2), 3.25)
        values[:, :, 1] = -1.5
        out = truncate_and_resize(FeatureMap(values), GridBox(1, 2, 3, 2))
        assert np.all(out.values[:, :, 0] == 3.25)
        assert np.all(out.values[:, :, 1] == -1.5)

    def test_two_by_two_block_hand_values(self):
        # Sub-block [[0, 2], [4, 6]] lies on the plane 4*row + 2*col, which
        # corner-aligned bilinear reproduces exactly: out[j, i] = (2i + 4j) / 3.
        values = np.zeros((4, 4, 1))
        values[0:2, 0:2, 0] = [[0.0, 2.0], [4.0, 6.0]]
        out = truncate_and_resize(FeatureMap(values), GridBox(0, 0, 2, 2))
        expected = np.array([[(2 * i + 4 * j) / 3 for i in range(4)] for j in range(4)])
        np.testing.assert_allclose(out.values[:, :, 0], expected, atol=1e-12)

    def test_exact_on_affine_fields(self):
        g = rng(2)
        for trial in range(25):
            L = int(g.integers(2, 8))
            T = int(g.integers(1, 4))
            a = g.normal(size=T)
            b = g.normal(size=T)
            c = g.normal(size=T)
            cols, rows = np.meshgrid(np.arange(L), np.arange(L))
            values = (
                a[None, None, :] * cols[:, :, None]
                + b[None, None, :] * rows[:, :, None]
                + c[None, None, :]
            )
            w = int(g.integers(1, L + 1))
            h = int(g.integers(1, L + 1))
            box = GridBox(int(g.integers(0, L - w + 1)), int(g.integers(0, L - h + 1)), w, h)
            out = truncate_and_resize(FeatureMap(values), box)
            # target (j, i) samples source (box.y + j*(h-1)/(L-1), box.x + i*(w-1)/(L-1))
            sx = box.x + np.arange(L) * ((w - 1) / (L - 1))
            sy = box.y + np.arange(L) * ((h - 1) / (L - 1))
            expected = (
                a[None, None, :] * sx[None, :, None]
                + b[None, None, :] * sy[:, None, None]
                + c[None, None, :]
            )
            np.testing.assert_allclose(out.values, expected, atol=1e-9)

    def test_output_within_source_range(self):
        g = rng(3)
        for trial in range(50):
            L = int(g.integers(2, 9))
            values = g.normal(size=(L, L, 2)) * 10
            w = int(g.integers(1, L + 1))
            h = int(g.integers(1, L + 1))
            box = GridBox(int(g.integers(0, L - w + 1)), int(g.integers(0, L - h + 1)), w, h)
            sub = values[box.y : box.y + h, box.x : box.x + w, :]
            out = truncate_and_resize(FeatureMap(values), box)
            for t in range(2):
                assert out.values[:, :, t].min() >= sub[:, :, t].min() - 1e-12
                assert out.values[:, :, t].max() <= sub[:, :, t].max() + 1e-12

    def test_single_row_or_column_extends_constant(self):
        values = rng(4).normal(size=(5, 5, 1))
        out = truncate_and_resize(FeatureMap(values), GridBox(2, 0, 1, 5))
        # width-1 source: every output column equals the resampled source column
        for i in range(1, 5):
            np.testing.assert_array_equal(out.values[:, i, :], out.values[:, 0, :])

    def test_invalid_box_rejected_not_clamped(self):
        fmap = FeatureMap(np.zeros((4, 4, 1)))
        with pytest.raises(BoxBoundsError):
            truncate_and_resize(fmap, GridBox(2, 0, 3, 4))

    def test_grid_smaller_than_two_rejected(self):
        with pytest.raises(DimensionError):
            FeatureMap(np.zeros((1, 1, 3)))

    def test_non_finite_rejected(self):
        values = np.zeros((3, 3, 1))
        values[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            FeatureMap(values)


class TestBackproject:
    def test_full_grid_maps_to_full_image(self):
        rect = backproject(GridBox(0, 0, 6, 6), 6, 600, 360)
        assert rect.as_tuple() == (0, 0, 600, 360)

    def test_divisible_case(self):
        rect = backproject(GridBox(1, 1, 5, 5), 6, 600, 360)
        assert rect.as_tuple() == (100, 60, 500, 300)

    def test_floor_round_clamp_case(self):
        # x = floor(2*601/6) = 200, w = round(4*601/6) = round(400.67) = 401
        rect = backproject(GridBox(2, 0, 4, 6), 6, 601, 360)
        assert rect.as_tuple() == (200, 0, 401, 360)

    def test_round_half_up(self):
        # 1*3/6 = 0.5 rounds up to 1
        rect = backproject(GridBox(0, 0, 1, 6), 6, 3, 6)
        assert rect.w == 1

    def test_tiny_image_extent_clamped_to_one(self):
        rect = backproject(GridBox(2, 2, 1, 1), 6, 2, 2)
        assert rect.w >= 1 and rect.h >= 1
        assert rect.x + rect.w <= 2 and rect.y + rect.h <= 2

    def test_random_boxes_stay_inside_image(self):
        g = rng(5)
        for trial in range(300):
            L = int(g.integers(2, 9))
            w = int(g.integers(1, L + 1))
            h = int(g.integers(1, L + 1))
            box = GridBox(int(g.integers(0, L - w + 1)), int(g.integers(0, L - h + 1)), w, h)
            iw = int(g.integers(1, 400))
            ih = int(g.integers(1, 400))
            rect = backproject(box, L, iw, ih)
            assert rect.x >= 0 and rect.y >= 0
            assert rect.x + rect.w <= iw and rect.y + rect.h <= ih

    def test_nested_composition_stays_inside_parent(self):
        g = rng(6)
        for trial in range(200):
            L = int(g.integers(2, 8))
            iw = int(g.integers(L, 500))
            ih = int(g.integers(L, 500))
            w = int(g.integers(1, L + 1))
            h = int(g.integers(1, L + 1))
            outer_box = GridBox(int(g.integers(0, L - w + 1)), int(g.integers(0, L - h + 1)), w, h)
            parent = backproject(outer_box, L, iw, ih)
            w2 = int(g.integers(1, L + 1))
            h2 = int(g.integers(1, L + 1))
            inner_box = GridBox(
                int(g.integers(0, L - w2 + 1)), int(g.integers(0, L - h2 + 1)), w2, h2
            )
            child = compose_rect(parent, backproject(inner_box, L, parent.w, parent.h))
            assert parent.contains_rect(child)


class TestFmap1:
    def test_round_trip_preserves_bytes(self):
        values = rng(7).normal(size=(7, 7, 5)).astype(np.float32).astype(np.float64)
        blob = write_fmap1(FeatureMap(values))
        assert blob[:4] == b"FMAP"
        assert len(blob) == 16 + 7 * 7 * 5 * 4
        again = write_fmap1(read_fmap1(blob))
        assert again == blob

    def test_header_fields(self):
        blob = write_fmap1(FeatureMap(np.zeros((6, 6, 256))))
        version = int.from_bytes(blob[4:8], "little")
        L = int.from_bytes(blob[8:12], "little")
        T = int.from_bytes(blob[12:16], "little")
        assert (version, L, T) == (1, 6, 256)

    def test_value_order_row_col_channel(self):
        values = np.arange(2 * 2 * 2, dtype=np.float64).reshape(2, 2, 2)
        blob = write_fmap1(FeatureMap(values))
        decoded = np.frombuffer(blob[16:], dtype="<f4")
        np.testing.assert_array_equal(decoded, np.arange(8, dtype=np.float32))

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda b: b"XMAP" + b[4:],
            lambda b: b[:4] + (9).to_bytes(4, "little") + b[8:],
            lambda b: b[:-4],
            lambda b: b[:10],
        ],
    )
    def test_corrupt_blobs_rejected(self, mutate):
        blob = write_fmap1(FeatureMap(np.zeros((3, 3, 2))))
        with pytest.raises(DimensionError):
            read_fmap1(mutate(blob))


class TestPixelRect:
    def test_degenerate_rejected(self):
        with pytest.raises(BoxBoundsError):
            PixelRect(0, 0, 0, 5)

    def test_contains_rect(self):
        outer = PixelRect(10, 10, 20, 20)
        assert outer.contains_rect(PixelRect(10, 10, 20, 20))
        assert outer.contains_rect(PixelRect(15, 15, 5, 5))
        assert not outer.contains_rect(PixelRect(5, 10, 20, 20))
