import numpy as np
import pytest

from itofflow.warp import FlowField, masked_fraction, warp


def const_flow(shape, u, v):
    return FlowField(np.full(shape, float(u)), np.full(shape, float(v)))


class TestWarp:
    def test_zero_flow_identity(self):
        rng = np.random.default_rng(0)
        m = rng.uniform(-1, 1, (6, 8))
        res = warp(m, const_flow(m.shape, 0, 0))
        np.testing.assert_array_equal(res.warped, m)
        assert res.mask.all()
        cot = rng.uniform(-1, 1, m.shape)
        np.testing.assert_allclose(res.d_image(cot), cot)

    def test_unit_shift_masks_last_column(self):
        m = np.arange(30, dtype=float).reshape(5, 6)
        res = warp(m, const_flow(m.shape, 1, 0))
        np.testing.assert_array_equal(res.warped[:, :-1], m[:, 1:])
        assert not res.mask[:, -1].any()
        assert res.mask[:, :-1].all()
        np.testing.assert_array_equal(res.warped[:, -1], 0.0)

    def test_half_pixel_ramp(self):
        # hand bilinear evaluation on an even ramp: midpoints are odd values
        m = np.tile(np.arange(0, 12, 2, dtype=float), (3, 1))
        res = warp(m, const_flow(m.shape, 0.5, 0))
        expected = np.tile(np.arange(1, 11, 2, dtype=float), (3, 1))
        np.testing.assert_allclose(res.warped[:, :-1], expected)
        assert res.mask[:, :-1].all() and not res.mask[:, -1].any()

    def test_integer_flow_equals_index_shift(self):
        rng = np.random.default_rng(1)
        m = rng.uniform(-2, 2, (7, 9))
        u = rng.integers(-3, 4, m.shape).astype(float)
        v = rng.integers(-3, 4, m.shape).astype(float)
        res = warp(m, FlowField(u, v))
        cols, rows = np.meshgrid(np.arange(9), np.arange(7))
        sx = (cols + u).astype(int)
        sy = (rows + v).astype(int)
        inside = (sx >= 0) & (sx <= 8) & (sy >= 0) & (sy <= 6)
        np.testing.assert_array_equal(res.mask, inside)
        np.testing.assert_array_equal(
            res.warped[inside], m[sy[inside], sx[inside]]
        )

    def test_mask_monotone_under_flow_scaling(self):
        rng = np.random.default_rng(2)
        base = FlowField(rng.uniform(-3, 3, (10, 12)), rng.uniform(-3, 3, (10, 12)))
        m = rng.uniform(size=(10, 12))
        prev = warp(m, base).mask
        for s in (1.5, 2.0, 4.0):
            cur = warp(m, FlowField(s * base.u, s * base.v)).mask
            assert not np.any(cur & ~prev)
            prev = cur

    def test_boundary_sample_exactly_on_edge_is_valid(self):
        m = np.arange(12, dtype=float).reshape(3, 4)
        flow = FlowField(np.zeros((3, 4)), np.zeros((3, 4)))
        flow.u[0, 0] = 3.0  # sample at x = 3 = W - 1 exactly
        res = warp(m, flow)
        assert res.mask[0, 0]
        assert res.warped[0, 0] == m[0, 3]

    def test_gradient_zero_where_masked(self):
        m = np.random.default_rng(3).uniform(size=(5, 5))
        res = warp(m, const_flow(m.shape, 10, 0))
        assert not res.mask.any()
        cot = np.ones(m.shape)
        np.testing.assert_array_equal(res.d_image(cot), 0.0)
        gu, gv = res.d_flow(cot)
        np.testing.assert_array_equal(gu, 0.0)
        np.testing.assert_array_equal(gv, 0.0)

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            warp(np.zeros((4, 4)), const_flow((4, 5), 0, 0))
        with pytest.raises(ValueError):
            warp(np.zeros((1, 4)), const_flow((1, 4), 0, 0))

    def test_flow_field_validation(self):
        with pytest.raises(ValueError):
            FlowField(np.zeros((2, 2)), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            FlowField(np.full((2, 2), np.nan), np.zeros((2, 2)))


class TestMaskedFraction:
    def test_all_valid(self):
        assert masked_fraction([np.ones((4, 4), bool)] * 3) == 0.0

    def test_single_pixel(self):
        mask = np.ones((10, 10), bool)
        mask[3, 7] = False
        assert masked_fraction([mask]) == pytest.approx(0.01)

    def test_unit_shift_on_512(self):
        m = np.zeros((4, 512))
        res = warp(m, const_flow(m.shape, 1, 0))
        assert masked_fraction([res.mask]) == pytest.approx(1 / 512)

    def test_union_semantics(self):
        a = np.ones((2, 2), bool)
        a[0, 0] = False
        b = np.ones((2, 2), bool)
        b[1, 1] = False
        assert masked_fraction([a, b]) == pytest.approx(0.5)

    def test_empty_list(self):
        with pytest.raises(ValueError):
            masked_fraction([])
