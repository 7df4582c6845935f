"""Invariants checked on generated inputs."""
import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stochhyp import (BrownianPath, CameronMartinPath, EvolveConfig, Field, Grid1D, Mollifier, SeparableSymbol,
                      SpdeProblem, TimeSymbolFamily, apply_adjoint, apply_pdo, cm_action, dft, girsanov_shift, idft,
                      integrate_spde, make_symmetrized_transport, mollify, polygonalize, sobolev_inner, sobolev_norm)
from stochhyp.characteristics import flow_invert, flow_solve
from stochhyp.config import evaluate_expression
from stochhyp.grid import evaluate
from stochhyp.io import read_manifest, write_manifest
from stochhyp.microlocal import TrigCoefficient

G = Grid1D(16)
SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
reals = arrays(np.float64, 16, elements=finite)
small = arrays(np.float64, 16, elements=st.floats(-1, 1))


def field(re, im=None):
    return Field(G, re if im is None else re + 1j * im)


@SETTINGS
@given(reals, reals)
def test_dft_round_trip_and_parseval(re, im):
    u = field(re, im)
    np.testing.assert_allclose(idft(dft(u)), u.values, atol=1e-12)
    assert np.isclose(sobolev_norm(u, 0.0), np.sqrt(np.mean(np.abs(u.values) ** 2)), rtol=1e-12, atol=1e-12)


@SETTINGS
@given(reals, st.floats(-3, 3), st.floats(0, 3))
def test_norm_monotone_in_index(re, s, ds):
    u = field(re)
    assert sobolev_norm(u, s) <= sobolev_norm(u, s + ds) * (1 + 1e-12) + 1e-300


@SETTINGS
@given(reals, reals, reals, st.floats(-2, 2))
def test_inner_product_is_hermitian(a, b, c, s):
    u, v = field(a, b), field(c)
    assert np.isclose(sobolev_inner(u, v, s), np.conj(sobolev_inner(v, u, s)), atol=1e-9)
    assert abs(sobolev_inner(u, v, s)) <= sobolev_norm(u, s) * sobolev_norm(v, s) * (1 + 1e-12) + 1e-12


@SETTINGS
@given(reals, st.floats(0.01, 2.0), st.floats(-2, 2))
def test_mollifier_contracts(re, eps, s):
    u = field(re)
    assert sobolev_norm(mollify(u, Mollifier(eps, G)), s) <= sobolev_norm(u, s) * (1 + 1e-12) + 1e-12


@SETTINGS
@given(reals, st.floats(0.01, 2.0), st.integers(0, 15))
def test_mollifier_commutes_with_translation(re, eps, k):
    u = field(re)
    shift = lambda f: Field(G, np.roll(f.values, k, axis=-1))
    np.testing.assert_allclose(mollify(shift(u), Mollifier(eps, G)).values,
                               shift(mollify(u, Mollifier(eps, G))).values, atol=1e-10)


@SETTINGS
@given(small, small, small, reals, reals, reals, reals)
def test_adjoint_duality(c1, c2, c3, a, b, c, d):
    sym = SeparableSymbol(G, [(c1 + 1j * c2, "i*xi"), (c3, "abs(xi)", "right"), (c2, "1")])
    u, v = field(a, b), field(c, d)
    lhs = sobolev_inner(apply_pdo(sym, u), v, 0.0)
    rhs = sobolev_inner(u, apply_adjoint(sym, v), 0.0)
    assert np.isclose(lhs, rhs, rtol=1e-10, atol=1e-8)


@SETTINGS
@given(small, reals, reals, st.floats(-1, 1))
def test_symmetrized_transport_is_skew(alpha, a, b, im0):
    sym = make_symmetrized_transport(G, alpha, 1j * im0)
    u = field(a, b)
    assert abs(np.real(sobolev_inner(apply_pdo(sym, u), u, 0.0))) <= 1e-9 * max(1.0, sobolev_norm(u, 0.0) ** 2)


@SETTINGS
@given(st.integers(0, 2 ** 31), st.integers(1, 5))
def test_polygon_energy_grows_under_refinement(seed, levels):
    w = BrownianPath(1.0, np.concatenate([[0.0], np.cumsum(np.random.default_rng(seed).normal(0, 0.125, 64))]))
    e = [polygonalize(w, 2 ** k).energy() for k in range(levels + 1)]
    assert np.all(np.diff(e) >= -1e-10)


@SETTINGS
@given(arrays(np.float64, 8, elements=st.floats(-3, 3)), st.floats(-4, 4))
def test_action_is_quadratic(vals, lam):
    h = CameronMartinPath.from_values(1.0, np.concatenate([[0.0], vals]))
    assert cm_action(h) >= 0
    assert np.isclose(cm_action(lam * h), lam ** 2 * cm_action(h), rtol=1e-10, atol=1e-12)


@SETTINGS
@given(st.integers(0, 2 ** 31), arrays(np.float64, 16, elements=st.floats(-3, 3)), st.floats(0.01, 4))
def test_shift_unshift(seed, vals, eps):
    w = BrownianPath(1.0, np.concatenate([[0.0], np.cumsum(np.random.default_rng(seed).normal(0, 0.25, 16))]))
    h = CameronMartinPath.from_values(1.0, np.concatenate([[0.0], vals]))
    back = girsanov_shift(girsanov_shift(w, h, eps), -1.0 * h, eps)
    np.testing.assert_allclose(back.values, w.values, atol=1e-9)


@SETTINGS
@given(reals, reals, st.floats(-3, 3), st.integers(0, 2 ** 20))
def test_solution_map_is_linear(a, b, lam, idx):
    p = SpdeProblem(field(a), TimeSymbolFamily.constant(make_symmetrized_transport(G, 1 + 0.3 * np.sin(G.nodes))))
    w = BrownianPath(1.0, np.concatenate([[0.0], np.cumsum(np.random.default_rng(idx).normal(0, 0.125, 64))]))
    cfg = EvolveConfig(steps=64, energy=False)
    solve = lambda u: integrate_spde(p.with_initial(u), w, cfg).final.values
    lhs = solve(field(a) * lam + field(b))
    scale = 1 + np.max(np.abs(a)) * abs(lam) + np.max(np.abs(b))
    np.testing.assert_allclose(lhs, lam * solve(field(a)) + solve(field(b)), atol=1e-11 * scale)


@SETTINGS
@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.integers(0, 2 ** 20))
def test_flow_inverse_round_trip(c1, c2, idx):
    g = Grid1D(64)
    alpha = 1.0 + c1 * np.sin(g.nodes) + c2 * np.cos(2 * g.nodes)
    w = BrownianPath(1.0, np.concatenate([[0.0], np.cumsum(np.random.default_rng(idx).normal(0, 1 / 16, 256))]))
    fl = flow_solve(alpha, None, w, grid=g)
    assert fl.monotone
    assert np.max(np.abs(flow_invert(fl, 1.0, fl.at(1.0)) - g.nodes)) <= g.dx ** 2


@SETTINGS
@given(arrays(np.float64, 7, elements=st.floats(-2, 2)), st.lists(st.floats(-20, 20), min_size=1, max_size=5))
def test_trig_interpolants_are_exact(coef, xs):
    x = np.asarray(xs)
    k = np.arange(1, 4)
    f = lambda y: coef[0] + np.cos(np.multiply.outer(y, k)) @ coef[1:4] + np.sin(np.multiply.outer(y, k)) @ coef[4:]
    tc = TrigCoefficient(G, f(G.nodes))
    np.testing.assert_allclose(tc(x), f(x), atol=1e-10)
    np.testing.assert_allclose(evaluate(Field(G, f(G.nodes)), x)[0], f(x), atol=1e-10)


@SETTINGS
@given(arrays(np.float64, 4, elements=st.floats(-5, 5)), st.floats(-3, 3))
def test_expression_polynomials(c, x):
    c0, c1, c2, c3 = (repr(float(v)) for v in c)
    expr = f"{c0} + ({c1})*x + ({c2})*x**2 - ({c3})*sin(x)"
    ref = c[0] + c[1] * x + c[2] * x ** 2 - c[3] * np.sin(x)
    assert np.isclose(evaluate_expression(expr, x=x), ref, rtol=1e-12, atol=1e-12)


keys = st.text("abcdefgh_", min_size=1, max_size=6)
leaves = st.one_of(st.none(), st.booleans(), st.integers(-10 ** 6, 10 ** 6), finite, st.text(max_size=10),
                   st.lists(finite, max_size=3))


@SETTINGS
@given(st.dictionaries(keys, st.one_of(leaves, st.dictionaries(keys, leaves, min_size=1, max_size=3)),
                       max_size=6))
def test_manifest_round_trip(tmp_path_factory, entries):
    f = tmp_path_factory.mktemp("m") / "manifest.txt"
    write_manifest(entries, f)
    flat = {}
    for k, v in entries.items():
        if isinstance(v, dict):
            flat.update({f"{k}.{kk}": vv for kk, vv in v.items()})
        else:
            flat[k] = v
    assert read_manifest(f) == flat
