import numpy as np
import pytest

from stochhyp import (BrownianPath, CameronMartinPath, cm_action, girsanov_shift, likelihood_ratio, polygonalize,
                      sample_brownian)


class TestBrownian:
    def test_starts_at_zero_and_grid(self):
        w = sample_brownian(64, 2.0, 1, 0)
        assert w.values[0] == 0.0 and w.steps == 64 and w.dt == pytest.approx(2.0 / 64)
        np.testing.assert_allclose(w.times, np.linspace(0, 2.0, 65))

    def test_reproducible_and_distinct(self):
        a, b, c = sample_brownian(32, 1.0, 7, 3), sample_brownian(32, 1.0, 7, 3), sample_brownian(32, 1.0, 7, 4)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)
        assert a.fingerprint() == b.fingerprint() != c.fingerprint()

    def test_single_increment_moments(self):
        T = 2.0
        x = np.array([sample_brownian(1, T, 99, i).values[-1] for i in range(100_000)])
        sd = np.sqrt(T)
        assert abs(x.mean()) < 4 * sd / np.sqrt(x.size)
        # variance of the sample variance of a Gaussian is 2 sigma^4 / n
        assert abs(x.var() - T) < 4 * T * np.sqrt(2 / x.size)

    def test_quadratic_variation(self):
        w = sample_brownian(10_000, 1.0, 5, 0)
        assert np.sum(w.increments ** 2) == pytest.approx(1.0, rel=0.05)

    def test_increment_statistics(self):
        dw = np.concatenate([sample_brownian(1000, 1.0, 11, i).increments for i in range(20)])
        sd = np.sqrt(1.0 / 1000)
        assert abs(dw.mean()) < 4 * sd / np.sqrt(dw.size)
        assert abs(dw.var() / sd ** 2 - 1) < 4 * np.sqrt(2 / dw.size)

    def test_validation(self):
        with pytest.raises(ValueError):
            BrownianPath(1.0, [0.0])
        with pytest.raises(ValueError):
            BrownianPath(1.0, [0.1, 0.2])
        with pytest.raises(ValueError):
            BrownianPath(0.0, [0.0, 1.0])

    def test_immutable(self):
        w = sample_brownian(8, 1.0, 0, 0)
        with pytest.raises(ValueError):
            w.values[1] = 3.0

    def test_coarsen(self):
        w = sample_brownian(64, 1.0, 0, 0)
        np.testing.assert_array_equal(w.coarsen(8).values, w.values[::8])


class TestPolygonal:
    def test_breakpoints_and_slopes(self):
        w = sample_brownian(64, 1.0, 2, 0)
        p = polygonalize(w, 8)
        np.testing.assert_array_equal(p.on_grid(8), w.values[::8])
        np.testing.assert_allclose(p.slopes, np.diff(w.values[::8]) * 8, rtol=1e-14)

    def test_full_and_single(self):
        w = sample_brownian(64, 1.0, 2, 0)
        np.testing.assert_allclose(polygonalize(w, 64).on_grid(64), w.values, atol=1e-15)
        np.testing.assert_allclose(polygonalize(w, 1).slopes, [w.values[-1]])

    def test_interpolant(self):
        w = sample_brownian(4, 1.0, 2, 0)
        p = polygonalize(w, 4)
        assert p(0.125) == pytest.approx(0.5 * (w.values[0] + w.values[1]))

    def test_energy_formula(self):
        w = sample_brownian(64, 1.0, 2, 0)
        p = polygonalize(w, 16)
        dw = np.diff(w.values[::4])
        assert p.energy() == pytest.approx(np.sum(dw ** 2) / (1 / 16), rel=1e-13)

    def test_energy_nondecreasing_under_refinement(self):
        w = sample_brownian(256, 1.0, 2, 0)
        e = [polygonalize(w, n).energy() for n in (1, 2, 4, 8, 16, 32, 64, 128, 256)]
        assert np.all(np.diff(e) >= -1e-12)

    def test_must_divide(self):
        with pytest.raises(ValueError):
            polygonalize(sample_brownian(64, 1.0, 0, 0), 5)


class TestCameronMartin:
    def test_actions(self):
        assert cm_action(CameronMartinPath.zero(1.0, 10)) == 0.0
        assert cm_action(CameronMartinPath.from_function(lambda t: t, 1.0, 10)) == pytest.approx(0.5)

    def test_polygonal_action(self):
        vals = np.array([0.0, 0.3, -0.1, 0.4])
        h = CameronMartinPath.from_values(1.0, vals)
        assert cm_action(h) == pytest.approx(0.5 * np.sum(np.diff(vals) ** 2) / (1 / 3), rel=1e-13)

    def test_values_round_trip(self):
        h = CameronMartinPath.from_function(lambda t: np.sin(t), 2.0, 100)
        np.testing.assert_allclose(h.values, np.sin(np.linspace(0, 2, 101)), atol=1e-14)

    def test_starts_at_zero(self):
        with pytest.raises(ValueError):
            CameronMartinPath.from_values(1.0, [1.0, 2.0])

    def test_grid_transfer(self):
        h = CameronMartinPath.from_function(lambda t: t ** 2, 1.0, 8)
        assert h.on_grid(16).size == 17 and h.on_grid(4).size == 5
        np.testing.assert_allclose(h.hdot_on_grid(16), np.repeat(h.hdot, 2))
        with pytest.raises(ValueError):
            h.on_grid(12)

    def test_polygonal_breakpoints(self):
        h = CameronMartinPath.from_function(lambda t: np.sin(3 * t), 1.0, 64)
        hp = h.polygonal(8)
        np.testing.assert_allclose(hp.values[::8], h.values[::8], atol=1e-14)

    def test_linear_structure(self):
        a = CameronMartinPath.from_function(lambda t: t, 1.0, 4)
        b = CameronMartinPath.from_function(lambda t: t ** 2, 1.0, 4)
        np.testing.assert_allclose((a + 2.0 * b).values, a.values + 2 * b.values, atol=1e-14)


class TestGirsanov:
    def test_zero_shift(self):
        w = sample_brownian(32, 1.0, 0, 0)
        assert np.array_equal(girsanov_shift(w, CameronMartinPath.zero(1.0, 32), 0.5).values, w.values)

    def test_unit_slope(self):
        w = sample_brownian(32, 1.0, 0, 0)
        h = CameronMartinPath.from_function(lambda t: t, 1.0, 32)
        np.testing.assert_allclose(girsanov_shift(w, h, 1.0).values, w.values + w.times, atol=1e-14)

    def test_shift_unshift(self):
        w = sample_brownian(32, 1.0, 0, 0)
        h = CameronMartinPath.from_function(lambda t: np.sin(t), 1.0, 32)
        back = girsanov_shift(girsanov_shift(w, h, 0.3), -1.0 * h, 0.3)
        np.testing.assert_allclose(back.values, w.values, atol=1e-12)

    def test_rejects_bad_eps_and_horizon(self):
        w = sample_brownian(32, 1.0, 0, 0)
        with pytest.raises(ValueError):
            girsanov_shift(w, CameronMartinPath.zero(1.0, 32), 0.0)
        with pytest.raises(ValueError):
            girsanov_shift(w, CameronMartinPath.zero(2.0, 32), 1.0)

    def test_likelihood_ratio_unit_mean(self):
        h = CameronMartinPath.from_function(lambda t: 0.7 * t, 1.0, 16)
        r = np.array([likelihood_ratio(sample_brownian(16, 1.0, 3, i), h, 0.5) for i in range(4000)])
        assert abs(r.mean() - 1.0) < 3 * r.std(ddof=1) / np.sqrt(r.size)

    def test_likelihood_ratio_closed_form(self):
        # constant slope c: exp(-c w(T)/sqrt(eps) - c^2 T/(2 eps))
        w = sample_brownian(16, 1.0, 3, 0)
        h = CameronMartinPath.from_function(lambda t: 0.7 * t, 1.0, 16)
        ref = np.exp(-0.7 * w.values[-1] / np.sqrt(0.5) - 0.49 / (2 * 0.5))
        assert likelihood_ratio(w, h, 0.5) == pytest.approx(ref, rel=1e-12)
