import numpy as np
import pytest

import reference
from csn import degrade
from csn.degrade import (degrade_bd, degrade_td, degrade_td_complex, dft2,
                         idft2, zero_fill_recover)


def img(h, w, seed=0):
    return np.random.default_rng(seed).random((h, w))


class TestDft:
    def test_round_trip(self):
        x = img(12, 10)
        back = idft2(dft2(x))
        assert np.max(np.abs(back - x)) < 1e-10

    def test_constant_is_single_dc_bin(self):
        v = 0.7
        spec = dft2(np.full((8, 6), v))
        want = np.zeros((8, 6), dtype=complex)
        want[4, 3] = v * 8 * 6
        assert np.max(np.abs(spec - want)) < 1e-9

    def test_matches_direct_summation(self):
        x = img(8, 8, seed=1)
        assert np.max(np.abs(dft2(x) - reference.dft2_naive(x))) < 1e-9

    def test_inverse_matches_direct_summation(self):
        spec = dft2(img(8, 8, seed=2))
        assert np.max(np.abs(idft2(spec) - reference.idft2_naive(spec))) < 1e-9

    def test_rejects_non_2d(self):
        with pytest.raises(ValueError, match="2-D"):
            dft2(np.zeros((2, 3, 4)))


class TestBd:
    def test_identity_at_r1(self):
        x = img(8, 8, seed=3)
        assert np.array_equal(degrade_bd(x, 1), x)

    def test_constant_invariance(self):
        out = degrade_bd(np.full((12, 12), 0.42), 3)
        assert np.max(np.abs(out - 0.42)) < 1e-9

    def test_ramp_matches_scalar_oracle(self):
        yy, xx = np.meshgrid(np.arange(240), np.arange(240), indexing="ij")
        ramp = (yy + xx) / (2 * 239.0)
        got = degrade_bd(ramp, 2)
        want = reference.resize_naive(ramp, 120, 120)
        assert np.max(np.abs(got - want)) < 1e-6

    def test_indivisible_rejected(self):
        with pytest.raises(ValueError, match="divisible"):
            degrade_bd(img(9, 8), 2)


class TestTd:
    def test_identity_at_r1(self):
        x = img(10, 12, seed=4)
        assert np.max(np.abs(degrade_td(x, 1) - x)) < 1e-10

    def test_constant_invariance(self):
        out = degrade_td(np.full((12, 12), 0.31), 2)
        assert np.max(np.abs(out - 0.31)) < 1e-9

    def test_cosine_inside_kept_block_is_resampled(self):
        h = w = 16
        r = 2
        y = np.arange(h)[:, None]
        x = np.ones((h, w)) * np.cos(2 * np.pi * 3 * y / h)  # |f|=3 < 4 = kept Nyquist
        got = degrade_td_complex(x, r)
        # brute force: truncate the direct-summation spectrum, invert directly
        spec = reference.dft2_naive(x)
        kept = spec[h // 2 - 4:h // 2 + 4, w // 2 - 4:w // 2 + 4]
        want = reference.idft2_naive(kept) / (r * r)
        assert np.max(np.abs(got - want)) < 1e-9
        # the surviving cosine is the same frequency on the coarser grid
        y2 = np.arange(h // r)[:, None]
        expect = np.ones((h // r, w // r)) * np.cos(2 * np.pi * 3 * y2 / (h // r))
        assert np.max(np.abs(got.real - expect)) < 1e-9

    def test_cosine_outside_kept_block_vanishes(self):
        h = w = 16
        y = np.arange(h)[:, None]
        x = np.ones((h, w)) * np.cos(2 * np.pi * 6 * y / h)  # |f|=6 >= 4, discarded
        assert np.max(np.abs(degrade_td(x, 2))) < 1e-9

    def test_linear_before_magnitude(self):
        a, b = img(12, 12, seed=5), img(12, 12, seed=6)
        lhs = degrade_td_complex(2.0 * a + 3.0 * b, 2)
        rhs = 2.0 * degrade_td_complex(a, 2) + 3.0 * degrade_td_complex(b, 2)
        assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_truncation_energy_bounded(self):
        x = img(16, 16, seed=7)
        spec = dft2(x)
        kept = spec[4:12, 4:12]
        assert np.sum(np.abs(kept) ** 2) <= np.sum(np.abs(spec) ** 2)

    def test_band_limited_image_keeps_all_energy(self):
        # build an image whose spectrum lives entirely in the kept block
        spec = np.zeros((16, 16), dtype=complex)
        rng = np.random.default_rng(8)
        spec[6:10, 6:10] = rng.random((4, 4))
        x = idft2(spec)
        full = np.sum(np.abs(dft2(x)) ** 2)
        kept = np.sum(np.abs(dft2(x)[4:12, 4:12]) ** 2)
        assert abs(full - kept) < 1e-9 * max(full, 1.0)

    def test_deterministic(self):
        x = img(12, 12, seed=9)
        assert np.array_equal(degrade_td(x, 2), degrade_td(x, 2))


class TestZeroFill:
    def test_r1_round_trip(self):
        x = img(10, 10, seed=10)
        assert np.max(np.abs(zero_fill_recover(degrade_td(x, 1), 1) - x)) < 1e-10

    def test_constant_round_trip(self):
        out = zero_fill_recover(degrade_td(np.full((12, 12), 0.55), 2), 2)
        assert np.max(np.abs(out - 0.55)) < 1e-9

    def test_step_edge_rings_and_matches_brute_force(self):
        h = w = 8
        r = 4
        step = np.zeros((h, w))
        step[:, w // 2:] = 1.0
        lr = degrade_td(step, r)
        got = zero_fill_recover(lr, r)
        # recompute the zero-filled recovery of the same LR image with the
        # direct-summation transforms
        big = np.zeros((h * r, w * r), dtype=complex)
        small = reference.dft2_naive(lr)
        big[h * r // 2 - h // 2:h * r // 2 + h // 2,
            w * r // 2 - w // 2:w * r // 2 + w // 2] = small
        want = np.abs(reference.idft2_naive(big) * (r * r))
        assert np.max(np.abs(got - want)) < 1e-9
        assert got.max() > 1.0 + 1e-3  # overshoot above the step top


class TestBdVsTd:
    def test_differ_on_step_edge(self):
        step = np.zeros((16, 16))
        step[:, 8:] = 1.0
        bd = degrade_bd(step, 2)
        td = degrade_td(step, 2)
        assert np.max(np.abs(bd - td)) > 0.0
