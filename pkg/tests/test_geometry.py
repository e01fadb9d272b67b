import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pillarlens.geometry import (
    AsphericLens,
    GridTooSmallError,
    LensDomainError,
    grid_coords,
    height_error_percent,
    height_map,
    k4_from_height_error,
    lens_height,
    sag,
    scale_lens,
)

# high-precision reference values (mpmath, 30 digits)
SAG_R12_K4_075_X1 = 1.28667504192892
H_R12_K4_075 = 2.7552
H_R57 = 9.658500375


class TestSag:
    def test_apex_is_zero(self):
        assert sag(AsphericLens(R=1.2), 0.0) == 0.0

    def test_hemisphere_rim_equals_radius(self):
        assert sag(AsphericLens(R=1.2), 1.2) == pytest.approx(1.2, abs=1e-12)

    def test_quartic_term(self):
        lens = AsphericLens(R=1.2, k4=0.75)
        assert sag(lens, 1.0) == pytest.approx(SAG_R12_K4_075_X1, rel=1e-12)

    def test_vectorised_matches_scalar(self):
        lens = AsphericLens(R=2.0, k=-0.5, k4=0.1)
        xs = np.linspace(0, 2, 7)
        np.testing.assert_allclose(sag(lens, xs), [sag(lens, x) for x in xs])

    def test_outside_rim_raises(self):
        with pytest.raises(LensDomainError):
            sag(AsphericLens(R=1.0), 1.01)

    @given(
        R=st.floats(0.5, 10),
        k=st.floats(-3, 0),
        k4=st.floats(0, 1),
        a=st.floats(0, 1),
        b=st.floats(0, 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_radius(self, R, k, k4, a, b):
        lens = AsphericLens(R=R, k=k, k4=k4)
        lo, hi = sorted((a * R, b * R))
        assert sag(lens, lo) <= sag(lens, hi) + 1e-12


class TestValidation:
    @pytest.mark.parametrize("kw", [
        dict(R=0.0), dict(R=-1.0), dict(R=1.0, k=0.1),
        dict(R=1.0, k4=-0.1), dict(R=1.0, n_lens=1.0),
    ])
    def test_rejected(self, kw):
        with pytest.raises(ValueError):
            AsphericLens(**kw)

    def test_large_offset_warns(self):
        with pytest.warns(UserWarning):
            AsphericLens(R=1.0, offset_x=1.5)


class TestLensHeight:
    @pytest.mark.parametrize("R,k4,H", [
        (1.0, 0.0, 1.0),
        (5.7, 3.75e-3, H_R57),
        (2.0, 0.14, 4.24),
        (1.2, 0.75, H_R12_K4_075),
    ])
    def test_values(self, R, k4, H):
        assert lens_height(AsphericLens(R=R, k4=k4)) == pytest.approx(H, rel=1e-12)


class TestHeightMap:
    def test_hemisphere_axis_and_rim(self):
        hm = height_map(AsphericLens(R=1.0), pitch=0.05, n_samples=64)
        c = hm.coords
        i0 = int(np.argmin(np.abs(c)))
        assert hm.h[i0, i0] == pytest.approx(1.0)
        i_rim = int(np.argmin(np.abs(c - 1.0)))
        assert hm.h[i0, i_rim] == pytest.approx(0.0, abs=1e-12)

    def test_interior_sample(self):
        hm = height_map(AsphericLens(R=1.2, k4=0.75), pitch=0.1, n_samples=64)
        c = hm.coords
        i0 = int(np.argmin(np.abs(c)))
        i1 = int(np.argmin(np.abs(c - 1.0)))
        assert hm.h[i0, i1] == pytest.approx(H_R12_K4_075 - SAG_R12_K4_075_X1, rel=1e-9)

    def test_zero_outside_and_nonnegative(self):
        hm = height_map(AsphericLens(R=1.0, k4=0.2), pitch=0.05, n_samples=64)
        xx, yy = np.meshgrid(hm.coords, hm.coords)
        assert np.all(hm.h[np.hypot(xx, yy) > 1.0] == 0)
        assert hm.h.min() >= 0 and hm.h.max() == pytest.approx(hm.H)

    def test_read_only(self):
        hm = height_map(AsphericLens(R=1.0), pitch=0.05, n_samples=64)
        with pytest.raises(ValueError):
            hm.h[0, 0] = 1.0

    def test_grid_too_small(self):
        with pytest.raises(GridTooSmallError):
            height_map(AsphericLens(R=5.0), pitch=0.1, n_samples=64)

    def test_offset_moves_apex(self):
        hm = height_map(AsphericLens(R=1.0, offset_x=0.5), pitch=0.05, n_samples=128)
        iy, ix = np.unravel_index(np.argmax(hm.h), hm.h.shape)
        assert hm.coords[ix] == pytest.approx(0.5)
        assert hm.coords[iy] == pytest.approx(0.0)

    def test_grid_coords_include_axis(self):
        c = grid_coords(64, 0.1)
        assert c[32] == 0.0 and c[0] == pytest.approx(-3.2)


class TestScaling:
    def test_identity(self):
        lens = AsphericLens(R=2.0, k4=0.14)
        assert scale_lens(lens, 1.0) == lens

    @pytest.mark.parametrize("R,k4,S,R2,k42", [
        (2.0, 0.14, 2.85, 5.7, 6.04774478517e-3),
        (2.0, 0.149, 0.6, 1.2, 0.689814814815),
    ])
    def test_examples(self, R, k4, S, R2, k42):
        out = scale_lens(AsphericLens(R=R, k4=k4), S)
        assert out.R == pytest.approx(R2) and out.k4 == pytest.approx(k42, rel=1e-9)

    @given(R=st.floats(0.5, 5), k4=st.floats(0, 1), S=st.floats(0.2, 5), u=st.floats(0, 1))
    @settings(max_examples=60, deadline=None)
    def test_sag_scales_linearly(self, R, k4, S, u):
        lens = AsphericLens(R=R, k4=k4)
        big = scale_lens(lens, S)
        assert sag(big, S * u * R) == pytest.approx(S * sag(lens, u * R), rel=1e-9, abs=1e-12)


class TestHeightError:
    lens = AsphericLens(R=5.7, k4=3.75e-3)

    def test_zero_is_identity(self):
        assert k4_from_height_error(self.lens, 0.0) == self.lens

    def test_plus_one_micron(self):
        assert k4_from_height_error(self.lens, 1.0).k4 == pytest.approx(4.69732844379e-3, rel=1e-9)

    def test_full_removal_gives_hemisphere(self):
        out = k4_from_height_error(self.lens, -3.958500375)
        assert out.k4 == 0.0

    def test_beyond_removal_raises(self):
        with pytest.raises(LensDomainError):
            k4_from_height_error(self.lens, -4.0)

    def test_percent_axis(self):
        assert height_error_percent(self.lens, 0.966) == pytest.approx(10.0, abs=0.01)

    @given(dH=st.floats(-3.9, 5.0))
    @settings(max_examples=50, deadline=None)
    def test_height_changes_by_dH(self, dH):
        out = k4_from_height_error(self.lens, dH)
        assert lens_height(out) - lens_height(self.lens) == pytest.approx(dH, abs=1e-9)

    def test_requires_k_zero(self):
        with pytest.raises(ValueError):
            k4_from_height_error(AsphericLens(R=1.0, k=-0.5), 0.1)
