import numpy as np
import pytest

from stochhyp import (Field, Grid1D, SeparableSymbol, TimeSymbolFamily, adjoint_symbol, apply_adjoint, apply_pdo,
                      estimate_conditions, make_symmetrized_transport, make_transport, sobolev_inner, sobolev_norm)
from stochhyp.symbols import multiplier, operator_norm

from conftest import const, random_field


def alpha(g):
    return 1.0 + 0.5 * np.sin(2 * np.pi * g.nodes / g.length)


def inner0(u, v):
    return sobolev_inner(u, v, 0.0)


class TestApply:
    def test_identity(self, grid, rng):
        u = random_field(grid, rng)
        np.testing.assert_allclose(apply_pdo(SeparableSymbol(grid, [(1.0, "1")]), u).values, u.values, atol=1e-14)

    def test_derivative_on_mode(self):
        g = Grid1D(32, 3.0)
        u = Field(g, np.exp(2j * np.pi * g.nodes / 3.0))
        out = apply_pdo(SeparableSymbol(g, [(1.0, "i*xi")]), u)
        np.testing.assert_allclose(out.values, 1j * 2 * np.pi / 3.0 * u.values, atol=1e-12)

    def test_variable_coefficient_vs_finite_difference(self):
        g = Grid1D(512)
        x = g.nodes
        u = np.exp(np.sin(x)) * np.cos(2 * x)
        out = apply_pdo(make_transport(g, alpha(g)), Field(g, u)).values[0]
        # 8th-order central difference
        c = [4 / 5, -1 / 5, 4 / 105, -1 / 280]
        du = sum(ck * (np.roll(u, -k - 1) - np.roll(u, k + 1)) for k, ck in enumerate(c)) / g.dx
        ref = alpha(g) * du
        assert np.linalg.norm(out - ref) / np.linalg.norm(ref) < 1e-6

    def test_linearity(self, grid, rng):
        sym = make_symmetrized_transport(grid, alpha(grid), 0.3 + 0.1j)
        u, v = random_field(grid, rng), random_field(grid, rng)
        lhs = apply_pdo(sym, u * 2.5 + v).values
        rhs = 2.5 * apply_pdo(sym, u).values + apply_pdo(sym, v).values
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_system_matrix_action(self, grid, rng):
        c = np.zeros((2, 2, grid.N), dtype=complex)
        c[0, 1] = 1.0
        c[1, 0] = np.cos(grid.nodes)
        u = random_field(grid, rng, components=2)
        out = apply_pdo(SeparableSymbol(grid, [(c, "1")], components=2), u).values
        np.testing.assert_allclose(out[0], u.values[1], atol=1e-14)
        np.testing.assert_allclose(out[1], np.cos(grid.nodes) * u.values[0], atol=1e-14)

    def test_component_mismatch(self, grid, rng):
        with pytest.raises(ValueError):
            apply_pdo(SeparableSymbol(grid, [(1.0, "1")]), random_field(grid, rng, components=2))

    def test_grid_mismatch(self, rng):
        with pytest.raises(ValueError):
            apply_pdo(SeparableSymbol(Grid1D(16), [(1.0, "1")]), random_field(Grid1D(32), rng))

    def test_empty_and_unknown(self, grid):
        with pytest.raises(ValueError):
            SeparableSymbol(grid, [])
        with pytest.raises(ValueError):
            multiplier(grid, "xi^2")

    def test_dealias_removes_upper_third(self, grid, rng):
        u = random_field(grid, rng)
        out = apply_pdo(SeparableSymbol(grid, [(1.0, "1")]), u, dealias=True)
        k = np.abs(grid.wavenumbers)
        assert np.all(np.abs(np.fft.fft(out.values[0])[k > grid.N // 3]) < 1e-12)

    def test_order_and_bound(self, grid):
        sym = make_transport(grid, 2.0)
        assert sym.order == 1.0
        xi = np.abs(grid.frequencies)
        assert np.all(np.abs(sym.terms[0].mult) <= sym.bound * (1 + xi) + 1e-12)


class TestAdjoint:
    def test_constant_coefficient_conjugates_multiplier(self, grid, rng):
        m = np.exp(0.3j * grid.frequencies) * (1 + grid.frequencies ** 2) ** 0.25
        adj = adjoint_symbol(SeparableSymbol(grid, [(1.0, m)]))
        u = random_field(grid, rng)
        np.testing.assert_allclose(apply_pdo(adj, u).values[0], np.fft.ifft(np.conj(m) * np.fft.fft(u.values[0])),
                                   atol=1e-13)

    def test_duality_many_pairs(self, grid, rng):
        c = np.zeros((2, 2, grid.N), dtype=complex)
        c[0, 1] = np.exp(1j * grid.nodes)
        c[1, 1] = np.sin(grid.nodes)
        sym = SeparableSymbol(grid, [(c, "i*xi"), (c.conj(), "abs(xi)", "right"), (np.repeat(np.eye(2)[..., None], grid.N, -1) * 0.5j, "1")],
                              components=2)
        worst = 0.0
        for _ in range(100):
            u, v = random_field(grid, rng, 2), random_field(grid, rng, 2)
            a = inner0(apply_pdo(sym, u), v)
            b = inner0(u, apply_adjoint(sym, v))
            worst = max(worst, abs(a - b) / (abs(a) + 1e-300))
        assert worst < 1e-10

    def test_double_adjoint(self, grid, rng):
        sym = make_transport(grid, alpha(grid), np.cos(grid.nodes) * 1j)
        u = random_field(grid, rng)
        np.testing.assert_allclose(apply_pdo(adjoint_symbol(adjoint_symbol(sym)), u).values, apply_pdo(sym, u).values,
                                   atol=1e-12)

    def test_dealiased_pair_stays_dual(self, grid, rng):
        sym = make_transport(grid, alpha(grid))
        u, v = random_field(grid, rng), random_field(grid, rng)
        a = inner0(apply_pdo(sym, u, dealias=True), v)
        b = inner0(u, apply_adjoint(sym, v, dealias=True))
        assert a == pytest.approx(b, rel=1e-12)


class TestSymmetrizedTransport:
    def test_unit_speed_is_derivative(self, grid, rng):
        u = random_field(grid, rng)
        a = apply_pdo(make_symmetrized_transport(grid, 1.0), u).values
        b = apply_pdo(SeparableSymbol(grid, [(1.0, "i*xi")]), u).values
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_skew_on_real_fields(self, grid, rng):
        sym = make_symmetrized_transport(grid, alpha(grid))
        for _ in range(10):
            u = random_field(grid, rng, real=True)
            au = apply_pdo(sym, u)
            assert abs(inner0(au, u) + inner0(u, au)) < 1e-10 * sobolev_norm(u, 1) ** 2

    def test_rejects_complex_alpha(self, grid):
        with pytest.raises(ValueError):
            make_symmetrized_transport(grid, 1.0 + 0.1j * np.ones(grid.N))

    def test_matrix_alpha_must_be_symmetric(self, grid):
        a = np.zeros((2, 2, grid.N))
        a[0, 1] = 1.0
        with pytest.raises(ValueError):
            make_symmetrized_transport(grid, a)


class TestConditions:
    def test_skew_transport(self, grid):
        d = estimate_conditions(const(make_symmetrized_transport(grid, alpha(grid))), None, 1.0)
        assert max(d.norm_A, d.norm_L, d.norm_M) < 1e-8
        assert d.verdict(1e-8)

    def test_imaginary_a0(self, grid):
        d = estimate_conditions(const(make_symmetrized_transport(grid, alpha(grid), 0.4j)), None, 0.0)
        assert d.norm_A < 1e-8

    def test_real_a0_norm_is_sup(self, grid):
        beta = 0.3 + 0.2 * np.cos(grid.nodes)
        d = estimate_conditions(const(make_symmetrized_transport(grid, 1.0, beta)), None, 0.0)
        assert d.norm_A == pytest.approx(np.max(np.abs(2 * beta)), rel=1e-3)

    def test_nonsymmetric_bounded_under_refinement(self):
        # on the dealiased modes A = -alpha', whose norm is max|alpha'| = 0.5
        vals = []
        for n in (32, 64, 128, 256):
            g = Grid1D(n)
            vals.append(estimate_conditions(const(make_transport(g, alpha(g))), None, 0.0, dealias=True).norm_A)
        np.testing.assert_allclose(vals, 0.5, rtol=2e-2)

    def test_nonsymmetric_aliasing_growth(self):
        # without dealiasing the Nyquist aliasing of alpha * u' grows with N
        vals = [estimate_conditions(const(make_transport(g, alpha(g))), None, 0.0).norm_A
                for g in (Grid1D(32), Grid1D(64))]
        assert vals[1] > 1.5 * vals[0] > 0

    def test_b_only(self, grid):
        d = estimate_conditions(None, const(make_transport(grid, alpha(grid))), 0.0)
        assert d.norm_A == d.norm_L == d.norm_M == 0.0
        assert 0 < d.norm_B < np.inf

    def test_power_iteration_on_known_operator(self, grid):
        w = 1.0 + np.abs(np.sin(grid.nodes))

        def op(v):
            return w * v
        est = operator_norm(op, op, grid, 1, s=0.0, iterations=400, tol=1e-12, rng=np.random.default_rng(0))
        assert est == pytest.approx(np.max(w), rel=1e-3)


class TestFamilies:
    def test_table_lookup(self, grid):
        s0, s1 = make_transport(grid, 1.0), make_transport(grid, 2.0)
        fam = TimeSymbolFamily.from_table([0.0, 0.5], [s0, s1])
        assert fam.at(0.25) is s0 and fam.at(0.5) is s1 and fam.at(0.9) is s1

    def test_table_validation(self, grid):
        with pytest.raises(ValueError):
            TimeSymbolFamily.from_table([0.0, 0.0], [make_transport(grid, 1.0)] * 2)

    def test_continuity_check(self, grid):
        ts = np.linspace(0, 1, 65)
        fam = TimeSymbolFamily.from_table(ts, [make_transport(grid, 1.0 + 0.1 * t) for t in ts])
        dev = fam.max_adjacent_deviation()
        mult = np.abs(make_transport(grid, 1.0).terms[0].mult)
        assert dev == pytest.approx(0.1 / 64 * np.max(mult / (1 + np.abs(grid.frequencies))), rel=1e-10)
        assert fam.check_continuity(0.1 / 64)
        jump = TimeSymbolFamily.from_table([0, 0.5], [make_transport(grid, 1.0), make_transport(grid, 3.0)])
        assert not jump.check_continuity(0.1 / 64)
