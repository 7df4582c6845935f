"""Fast sanity suite: the exactly-known cases of every module.

Each check runs on a small grid in well under a second and compares a
computed quantity with a value that holds by construction (a single
Fourier mode, a zero input, an identity evolution and so on).
"""
from __future__ import annotations

import numpy as np

from .characteristics import flow_invert, flow_solve, representation_lower_order, transport_solution
from .evolve import (EvolveConfig, SpdeProblem, backward_solve, evolution_apply, integrate_spde, skeleton_solve,
                     wong_zakai_solve)
from .grid import Field, Grid1D, Mollifier, dft, mollifier_gap, mollify, sobolev_inner, sobolev_norm
from .microlocal import WavefrontSet, bichar_flow, detect_singularities, propagate_wavefront
from .noise import (BrownianPath, CameronMartinPath, cm_action, girsanov_shift, polygonalize,
                    sample_brownian)
from .stats import malliavin_directional, malliavin_pointwise, nondegeneracy_check
from .symbols import (SeparableSymbol, TimeSymbolFamily, adjoint_symbol, apply_pdo, estimate_conditions,
                      make_symmetrized_transport, make_transport)

__all__ = ["CHECKS", "run_selftest"]

_G = Grid1D(32)
_M = 64
_CFG = EvolveConfig(steps=_M, energy=False)


def _mode(k=1, grid=_G):
    return Field(grid, np.exp(2j * np.pi * k * grid.nodes / grid.length))


def _bump(grid=_G):
    return Field(grid, np.exp(np.cos(grid.nodes - np.pi) - 1.0))


def _path(M=_M, idx=0):
    return sample_brownian(M, 1.0, 12345, idx)


def _fam(sym):
    return TimeSymbolFamily.constant(sym, 1.0)


def _close(a, b, tol):
    err = float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) if np.size(a) else 0.0
    return err <= tol, f"max deviation {err:.2e} (tol {tol:.0e})"


# -- grid -------------------------------------------------------------------

def dft_constant():
    uh = dft(Field(_G, np.full(_G.N, 2.5)))[0]
    return _close(uh, np.r_[2.5, np.zeros(_G.N - 1)], 1e-14)


def dft_mode():
    uh = dft(_mode())[0]
    return _close(uh, np.eye(_G.N)[1], 1e-14)


def norm_constant():
    return _close([sobolev_norm(Field(_G, np.ones(_G.N)), s) for s in (-2, 0, 1.5)], 1.0, 1e-14)


def norm_mode():
    return _close(sobolev_norm(_mode(), 1.0), np.sqrt(1 + (2 * np.pi / _G.L) ** 2), 1e-13)


def inner_orthogonal():
    return _close(sobolev_inner(_mode(1), _mode(2), 0.7), 0.0, 1e-14)


def mollify_constant():
    u = Field(_G, np.full(_G.N, 3.0))
    return _close(mollify(u, Mollifier(0.3, _G)).values, 3.0, 1e-14)


def mollifier_limit():
    return _close(Mollifier(1e-12, _G).multiplier_profile, 1.0, 1e-14)


def mollifier_gap_equal():
    return _close(mollifier_gap(0.2, 0.2, _G), 0.0, 0.0)


# -- symbols ----------------------------------------------------------------

def symbol_identity():
    sym = SeparableSymbol(_G, [(1.0, "1")])
    u = _bump()
    return _close(apply_pdo(sym, u).values, u.values, 1e-14)


def symbol_derivative_mode():
    sym = SeparableSymbol(_G, [(1.0, "i*xi")])
    return _close(apply_pdo(sym, _mode()).values, 1j * (2 * np.pi / _G.L) * _mode().values, 1e-13)


def adjoint_constant():
    m = np.exp(1j * _G.frequencies)
    adj = adjoint_symbol(SeparableSymbol(_G, [(1.0, m)]))
    u = _bump()
    ref = np.fft.ifft(np.conj(m) * np.fft.fft(u.values[0]))
    return _close(apply_pdo(adj, u).values[0], ref, 1e-13)


def skew_transport():
    d = estimate_conditions(_fam(make_symmetrized_transport(_G, 1.0)), None, 0.0, trials=2)
    return _close([d.norm_A, d.norm_L, d.norm_M], 0.0, 1e-8)


def imaginary_a0():
    d = estimate_conditions(_fam(make_symmetrized_transport(_G, 1.0, 0.7j)), None, 0.0, trials=2)
    return _close(d.norm_A, 0.0, 1e-8)


def b_only_conditions():
    d = estimate_conditions(None, _fam(make_transport(_G, 1.0)), 0.0, trials=2)
    ok, det = _close([d.norm_A, d.norm_L, d.norm_M], 0.0, 1e-12)
    return ok and np.isfinite(d.norm_B), det


# -- noise ------------------------------------------------------------------

def brownian_reproducible():
    a, b = _path(), _path()
    return bool(np.array_equal(a.values, b.values)), "identical draws"


def polygon_full():
    p = _path()
    return _close(polygonalize(p, _M).on_grid(_M), p.values, 1e-14)


def polygon_single():
    p = _path()
    return _close(polygonalize(p, 1).slopes, [p.values[-1] / p.T], 1e-14)


def action_values():
    z = CameronMartinPath.zero(1.0, 64)
    lin = CameronMartinPath.from_function(lambda t: t, 1.0, 64)
    return _close([cm_action(z), cm_action(lin)], [0.0, 0.5], 1e-13)


def shift_values():
    p = _path()
    ok0, _ = _close(girsanov_shift(p, CameronMartinPath.zero(1.0, _M), 0.3).values, p.values, 0.0)
    lin = CameronMartinPath.from_function(lambda t: t, 1.0, _M)
    ok1, det = _close(girsanov_shift(p, lin, 1.0).values, p.values + p.times, 1e-14)
    return ok0 and ok1, det


# -- evolve -----------------------------------------------------------------

def drift_transport():
    p = SpdeProblem(_bump(), None, _fam(make_transport(_G, 1.0)), T=1.0)
    u = integrate_spde(p, _path(512), EvolveConfig(steps=512, energy=False)).final
    ref = np.exp(np.cos(_G.nodes + 1.0 - np.pi) - 1.0)
    return _close(u.values[0], ref, 1e-6)


def zero_datum():
    p = SpdeProblem(Field.zeros(_G), _fam(make_symmetrized_transport(_G, 1.0)), T=1.0)
    return _close(integrate_spde(p, _path(), _CFG).fields, 0.0, 0.0)


def flat_polygon():
    fam_b = _fam(make_transport(_G, 1.0))
    p = SpdeProblem(_bump(), _fam(make_symmetrized_transport(_G, 1.0)), fam_b, T=1.0)
    v = np.linspace(0, 1, _M + 1) * 0.0
    flat = polygonalize(BrownianPath(1.0, v), 1)
    u = wong_zakai_solve(p, flat, _CFG).final
    ref = wong_zakai_solve(SpdeProblem(_bump(), None, fam_b, T=1.0), flat, _CFG).final
    return _close(u.values, ref.values, 1e-13)


def zero_skeleton():
    fam_b = _fam(make_transport(_G, 1.0))
    p = SpdeProblem(_bump(), _fam(make_symmetrized_transport(_G, 1.0)), fam_b, T=1.0)
    u = skeleton_solve(p, CameronMartinPath.zero(1.0, _M), _CFG).final
    ref = skeleton_solve(SpdeProblem(_bump(), None, fam_b, T=1.0), CameronMartinPath.zero(1.0, _M), _CFG).final
    return _close(u.values, ref.values, 1e-13)


def backward_trivial():
    p = SpdeProblem(_bump(), _fam(make_symmetrized_transport(_G, 1.0)), T=1.0)
    tr = backward_solve(p, _path(), 0.0, _bump(), _CFG)
    return _close(tr.final.values, _bump().values, 1e-15)


def evolution_identity_and_linearity():
    p = SpdeProblem(_bump(), _fam(make_symmetrized_transport(_G, 1.0 + 0.3 * np.sin(_G.nodes))), T=1.0)
    path = _path()
    phi, psi = _bump(), _mode(2)
    ok0, _ = _close(evolution_apply(p, path, 0.5, 0.5, phi, _CFG).values, phi.values, 0.0)
    lhs = evolution_apply(p, path, 0.25, 0.75, phi * 2.0 + psi, _CFG).values
    rhs = 2.0 * evolution_apply(p, path, 0.25, 0.75, phi, _CFG).values + evolution_apply(
        p, path, 0.25, 0.75, psi, _CFG).values
    ok1, det = _close(lhs, rhs, 1e-10)
    return ok0 and ok1, det


def energy_skew():
    p = SpdeProblem(_bump(), _fam(make_symmetrized_transport(_G, 1.0 + 0.3 * np.sin(_G.nodes))), T=1.0)
    n = integrate_spde(p, _path(4096), EvolveConfig(steps=4096, energy=False)).norms(0.0)
    return _close(n / n[0], 1.0, 1e-4)


# -- characteristics --------------------------------------------------------

def flow_additive():
    path = _path()
    fl = flow_solve(1.0, None, path, grid=_G)
    return _close(fl.positions - _G.nodes[None, :], path.values[:, None], 1e-12)


def flow_drift():
    fl = flow_solve(None, 0.7, _path(), grid=_G)
    return _close(fl.positions - _G.nodes[None, :], 0.7 * fl.times[:, None], 1e-12)


def flow_inverse():
    path = _path()
    fl = flow_solve(1.0, None, path, grid=_G)
    inv = flow_invert(fl, 1.0)
    ok0, _ = _close(flow_invert(fl, 0.0), _G.nodes, 1e-12)
    ok1, det = _close(np.mod(inv - _G.nodes + path.values[-1] + _G.L / 2, _G.L) - _G.L / 2, 0.0, 1e-10)
    return ok0 and ok1, det


def transport_constant():
    fl = flow_solve(1.0 + 0.3 * np.sin(_G.nodes), None, _path(), grid=_G)
    u = transport_solution(Field(_G, np.full(_G.N, 1.5)), fl, 1.0)
    return _close(u.values, 1.5, 1e-12)


def lower_order_reduces():
    path = _path()
    al = 1.0 + 0.3 * np.sin(_G.nodes)
    fl = flow_solve(-al, None, path, grid=_G)
    a = transport_solution(_bump(), fl, 1.0).values
    b = representation_lower_order(_bump(), np.zeros(_G.N), al, path, 1.0).values
    return _close(a, b, 1e-10)


# -- microlocal -------------------------------------------------------------

def bichar_additive():
    path = _path()
    tr = bichar_flow(1.0, None, WavefrontSet.from_kinks([1.0]), path, grid=_G)
    ok0, _ = _close(tr.x - 1.0, np.repeat(path.values[:, None], 2, axis=1), 1e-12)
    ok1, det = _close(np.abs(tr.xi), 1.0, 1e-14)
    return ok0 and ok1, det


def bichar_drift():
    tr = bichar_flow(None, 1.0, WavefrontSet.from_kinks([1.0]), _path(), grid=_G)
    return _close(tr.x[-1] - 1.0, 1.0, 1e-12)


def wavefront_empty():
    wf, _ = propagate_wavefront(WavefrontSet(()), 1.0, None, _path(), grid=_G)
    return len(wf) == 0, f"{len(wf)} points"


def wavefront_single():
    path = _path()
    wf, _ = propagate_wavefront(WavefrontSet.from_kinks([2.0]), 1.0, None, path, grid=_G, sign=1.0)
    return _close(wf.x, 2.0 + path.values[-1], 1e-12)


def detector_smooth():
    det = detect_singularities(_bump(Grid1D(128)))
    return det == [], f"{len(det)} detections"


# -- stats ------------------------------------------------------------------

def _malliavin_problem(u0=None):
    return SpdeProblem(_bump() if u0 is None else u0, _fam(make_symmetrized_transport(_G, 1.0)), T=1.0)


def malliavin_future():
    d = malliavin_pointwise(_malliavin_problem(), _path(), 0.75, 0.5, _CFG)
    return _close(d.data.values, 0.0, 0.0)


def malliavin_boundary():
    p = _malliavin_problem()
    path = _path()
    d = malliavin_pointwise(p, path, 0.5, 0.5, _CFG)
    u = integrate_spde(p, path, _CFG).at(0.5)
    ref = apply_pdo(make_symmetrized_transport(_G, 1.0), u)
    return _close(d.data.values, ref.values, 1e-12)


def malliavin_zero_h():
    d = malliavin_directional(_malliavin_problem(), _path(), CameronMartinPath.zero(1.0, _M), 1.0, _CFG)
    return _close(d.data.values, 0.0, 0.0)


def malliavin_linear():
    p, path = _malliavin_problem(), _path()
    h1 = CameronMartinPath.from_function(lambda t: np.sin(3 * t), 1.0, _M)
    h2 = CameronMartinPath.from_function(lambda t: t ** 2, 1.0, _M)
    d = [malliavin_directional(p, path, h, 1.0, _CFG).data.values for h in (h1, h2, h1 + h2)]
    return _close(d[2], d[0] + d[1], 1e-12)


def nondegeneracy_constant():
    p = _malliavin_problem(Field(_G, np.full(_G.N, 2.0)))
    value, verdict = nondegeneracy_check(p, _path(), 1.0, 1.0, _CFG)
    return (not verdict) and value < 1e-20, f"value {value:.1e}"


CHECKS = [
    ("dft of a constant", dft_constant),
    ("dft of a single mode", dft_mode),
    ("norm of the constant 1", norm_constant),
    ("H^1 norm of a single mode", norm_mode),
    ("orthogonal modes", inner_orthogonal),
    ("mollified constant", mollify_constant),
    ("mollifier multiplier as eps -> 0", mollifier_limit),
    ("mollifier gap at eps = eps'", mollifier_gap_equal),
    ("identity symbol", symbol_identity),
    ("derivative on a mode", symbol_derivative_mode),
    ("adjoint of a constant symbol", adjoint_constant),
    ("symmetrised transport is skew", skew_transport),
    ("imaginary zeroth order", imaginary_a0),
    ("b-only conditions", b_only_conditions),
    ("Brownian reproducibility", brownian_reproducible),
    ("polygon with n = M", polygon_full),
    ("polygon with n = 1", polygon_single),
    ("action of 0 and t", action_values),
    ("Girsanov shift", shift_values),
    ("drift-only transport", drift_transport),
    ("zero datum stays zero", zero_datum),
    ("flat polygonal driver", flat_polygon),
    ("zero skeleton", zero_skeleton),
    ("backward solve at t = 0", backward_trivial),
    ("evolution identity and linearity", evolution_identity_and_linearity),
    ("energy of skew evolution", energy_skew),
    ("additive flow", flow_additive),
    ("drift flow", flow_drift),
    ("inverse of a shift", flow_inverse),
    ("transported constant", transport_constant),
    ("lower-order form with a0 = 0", lower_order_reduces),
    ("bicharacteristics of xi", bichar_additive),
    ("bicharacteristics of a drift", bichar_drift),
    ("empty wavefront", wavefront_empty),
    ("single kink", wavefront_single),
    ("smooth field has no detections", detector_smooth),
    ("D_theta vanishes for theta > t", malliavin_future),
    ("D_theta at theta = t", malliavin_boundary),
    ("D_h with h = 0", malliavin_zero_h),
    ("D_h linear in h", malliavin_linear),
    ("constant datum is degenerate", nondegeneracy_constant),
]


def run_selftest(checks=None) -> list[tuple[str, bool, str]]:
    """Run the checks and return ``(name, passed, detail)`` rows."""
    out = []
    for name, fn in checks or CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
