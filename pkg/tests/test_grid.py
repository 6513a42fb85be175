import numpy as np
import pytest

from stochnls.grid import (
    SpatialGrid,
    WaveField,
    intersection_norm,
    inverse_transform,
    laplacian_symbol,
    lebesgue_norm,
    lorentz_norm,
    sum_norm,
    transform,
    v_norm,
)


def random_field(grid, seed):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size)
    return WaveField(grid, vals)


class TestSpatialGrid:
    def test_spacing_exact(self):
        g = SpatialGrid(1, 256, 2.0)
        assert g.spacing * g.points_per_axis == g.box_length

    def test_power_of_two_required(self):
        with pytest.raises(ValueError):
            SpatialGrid(1, 48, 1.0)

    def test_field_length_checked(self):
        g = SpatialGrid(2, 8, 1.0)
        with pytest.raises(ValueError):
            WaveField(g, np.zeros(10))

    def test_nonfinite_rejected(self):
        g = SpatialGrid(1, 4, 1.0)
        with pytest.raises(ValueError):
            WaveField(g, np.array([0.0, np.nan, 0.0, 0.0]))

    def test_reflect_involution(self):
        g = SpatialGrid(2, 8, 3.0)
        f = random_field(g, 0)
        twice = g.reflect(g.reflect(f.values))
        assert np.array_equal(twice, f.values)


class TestLaplacianSymbol:
    def test_zero_mode(self):
        g = SpatialGrid(2, 8, 5.0)
        assert laplacian_symbol(g)[0] == 0.0

    def test_d1_n4_enumerated(self):
        # signed frequencies for n=4, L=2*pi are {0, 1, -2, -1}
        g = SpatialGrid(1, 4, 2.0 * np.pi)
        np.testing.assert_allclose(laplacian_symbol(g), [0.0, 1.0, 4.0, 1.0], atol=1e-14)

    def test_box_scaling(self):
        g1 = SpatialGrid(1, 16, 1.0)
        g2 = SpatialGrid(1, 16, 2.0)
        np.testing.assert_allclose(laplacian_symbol(g1), 4.0 * laplacian_symbol(g2))

    def test_layout_matches_transform(self):
        # exp(i k x) must be an exact eigenvector of the symbol's layout
        g = SpatialGrid(1, 32, 4.0)
        x = g.axis_coordinates()
        k = g.axis_frequencies()[5]
        f = WaveField(g, np.exp(1j * k * x))
        spec = np.abs(transform(f))
        assert np.argmax(spec) == 5
        assert laplacian_symbol(g)[5] == pytest.approx(k**2)


class TestTransform:
    def test_constant_concentrates_in_zero_mode(self):
        g = SpatialGrid(2, 16, 1.0)
        spec = transform(WaveField(g, np.full(g.size, 3.0 + 0j)))
        assert abs(spec[0]) == pytest.approx(3.0 * np.sqrt(g.size))
        assert np.max(np.abs(spec[1:])) < 1e-12

    def test_round_trip(self):
        g = SpatialGrid(2, 16, 2.5)
        f = random_field(g, 1)
        back = inverse_transform(g, transform(f))
        assert np.max(np.abs(back.values - f.values)) < 1e-12 * np.max(np.abs(f.values))

    def test_parseval(self):
        g = SpatialGrid(1, 64, 3.0)
        f = random_field(g, 2)
        l2_phys = np.linalg.norm(f.values)
        l2_spec = np.linalg.norm(transform(f))
        assert abs(l2_phys - l2_spec) < 1e-12 * l2_phys

    def test_length_mismatch(self):
        g = SpatialGrid(1, 8, 1.0)
        with pytest.raises(ValueError):
            inverse_transform(g, np.zeros(7, dtype=complex))


class TestLebesgueNorm:
    def test_zero_field(self):
        g = SpatialGrid(1, 8, 1.0)
        assert lebesgue_norm(WaveField(g, np.zeros(8)), 2) == 0.0

    def test_single_cell_l1(self):
        g = SpatialGrid(2, 8, 2.0)
        vals = np.zeros(g.size)
        vals[11] = 1.0
        assert lebesgue_norm(WaveField(g, vals), 1) == pytest.approx(g.cell_volume)

    def test_l2_definition(self):
        g = SpatialGrid(1, 32, 1.5)
        f = random_field(g, 3)
        expected = np.sqrt(g.cell_volume * np.sum(np.abs(f.values) ** 2))
        assert lebesgue_norm(f, 2) == pytest.approx(expected, rel=1e-14)

    def test_invalid_p(self):
        g = SpatialGrid(1, 8, 1.0)
        with pytest.raises(ValueError):
            lebesgue_norm(random_field(g, 0), 0.5)


class TestLorentzNorm:
    def test_diagonal_matches_lebesgue(self):
        g = SpatialGrid(1, 64, 2.0)
        for seed in range(10):
            f = random_field(g, seed)
            for p in (1.5, 2.0, 3.0, 6.0):
                assert lorentz_norm(f, p, p) == pytest.approx(
                    lebesgue_norm(f, p), rel=1e-10
                )

    def test_indicator_closed_form(self):
        # indicator of measure m: norm = (p/q)^{1/q} m^{1/p}
        g = SpatialGrid(1, 64, 4.0)
        vals = np.zeros(g.size)
        vals[10:22] = 1.0
        m = 12 * g.cell_volume
        f = WaveField(g, vals)
        for p, q in [(2.0, 1.0), (6.0, 2.0), (1.5, 3.0)]:
            assert lorentz_norm(f, p, q) == pytest.approx(
                (p / q) ** (1.0 / q) * m ** (1.0 / p), rel=1e-12
            )

    def test_weak_norm_indicator(self):
        g = SpatialGrid(1, 32, 8.0)
        vals = np.zeros(g.size)
        vals[:4] = 2.0
        m = 4 * g.cell_volume
        assert lorentz_norm(WaveField(g, vals), 2.0, np.inf) == pytest.approx(
            2.0 * np.sqrt(m)
        )

    def test_homogeneity(self):
        g = SpatialGrid(1, 32, 1.0)
        f = random_field(g, 4)
        scaled = WaveField(g, 3.7 * f.values)
        assert lorentz_norm(scaled, 2.5, 1.5) == pytest.approx(
            3.7 * lorentz_norm(f, 2.5, 1.5), rel=1e-12
        )

    def test_exponent_validation(self):
        g = SpatialGrid(1, 8, 1.0)
        f = random_field(g, 0)
        with pytest.raises(ValueError):
            lorentz_norm(f, 0.8, 2.0)
        with pytest.raises(ValueError):
            lorentz_norm(f, 2.0, 0.5)
        # quasi-norm range is allowed for q = inf only
        assert lorentz_norm(f, 0.5, np.inf) > 0.0


class TestSumNorm:
    def test_zero(self):
        g = SpatialGrid(1, 8, 1.0)
        assert sum_norm(WaveField(g, np.zeros(8))) == 0.0

    def test_upper_bound(self):
        g = SpatialGrid(1, 64, 5.0)
        for seed in range(20):
            f = random_field(g, seed)
            assert sum_norm(f) <= min(lebesgue_norm(f, 2), lebesgue_norm(f, np.inf)) + 1e-14

    def test_single_spike(self):
        for L in (0.5, 2.0, 64.0):
            g = SpatialGrid(1, 16, L)
            vals = np.zeros(g.size)
            vals[3] = 1.0
            expected = min(np.sqrt(g.cell_volume), 1.0)
            assert sum_norm(WaveField(g, vals)) == pytest.approx(expected)

    def test_lower_bound_against_enumerated_splittings(self):
        # Oracle: the best splitting over clip thresholds and random splits.
        g = SpatialGrid(1, 16, 2.0)
        rng = np.random.default_rng(7)
        for seed in range(10):
            f = random_field(g, 100 + seed)
            mags = np.abs(f.values)
            best = min(lebesgue_norm(f, 2), lebesgue_norm(f, np.inf))
            for lam in np.concatenate(([0.0], mags)):
                clipped = np.clip(mags, None, lam) * np.exp(1j * np.angle(f.values))
                rest = f.values - clipped
                best = min(
                    best,
                    lebesgue_norm(WaveField(g, rest), 2)
                    + lebesgue_norm(WaveField(g, clipped), np.inf),
                )
            for _ in range(50):
                b = rng.standard_normal(g.size) + 1j * rng.standard_normal(g.size)
                a = f.values - b
                best = min(
                    best,
                    lebesgue_norm(WaveField(g, a), 2)
                    + lebesgue_norm(WaveField(g, b), np.inf),
                )
            assert sum_norm(f) >= 0.5 * best


class TestIntersectionNorm:
    def test_values(self):
        g = SpatialGrid(1, 16, 4.0)
        assert intersection_norm(WaveField(g, np.zeros(16))) == 0.0
        vals = np.zeros(16)
        vals[0] = 1.0
        f = WaveField(g, vals)
        h = g.cell_volume
        assert intersection_norm(f) == pytest.approx(max(h, np.sqrt(h)))
        scaled = WaveField(g, 2.5 * vals)
        assert intersection_norm(scaled) == pytest.approx(2.5 * intersection_norm(f))


class TestVNorm:
    def test_zero_family(self):
        g = SpatialGrid(1, 16, 1.0)
        assert v_norm([WaveField(g, np.zeros(16))], d=1) == 0.0

    def test_single_shell_indicator(self):
        # constant 1 on a set of measure m sits in the shell [1, 2)
        g = SpatialGrid(1, 32, 8.0)
        vals = np.zeros(g.size)
        vals[4:12] = 1.0
        m = 8 * g.cell_volume
        for d in (1, 2, 3):
            assert v_norm([WaveField(g, vals)], d=d) == pytest.approx(m ** (1.0 / d))

    def test_duplicate_state_invariance(self):
        g = SpatialGrid(1, 32, 2.0)
        rng = np.random.default_rng(11)
        a = WaveField(g, rng.standard_normal(g.size))
        b = WaveField(g, rng.standard_normal(g.size))
        assert v_norm([a, b], d=2) == pytest.approx(v_norm([a, b, b.copy()], d=2))
