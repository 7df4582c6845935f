"""Stochastic characteristic flows for scalar first-order equations.

The flow of the Stratonovich SDE

    dx = alpha(t, x) o dw + beta(t, x) dt

is integrated particle by particle with the stochastic Heun scheme.
Positions are kept unwrapped, so on a periodic grid the map
``x0 -> phi_t(x0)`` is an increasing lift with ``phi_t(x0 + L) = phi_t(x0) + L``.

The solution of ``du = (alpha u_x + a0 u) o dw + beta u_x dt`` is carried by
the flow with *negated* coefficients, ``dx = -alpha o dw - beta dt``;
:func:`solution_flow` builds that flow, and :func:`transport_solution`
reads ``u0`` at its inverse.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .grid import Field, Grid1D
from .noise import BrownianPath

__all__ = [
    "CharFlow",
    "FlowError",
    "flow_solve",
    "solution_flow",
    "flow_invert",
    "transport_solution",
    "representation_lower_order",
    "periodic_spline",
    "write_flow_csv",
]


class FlowError(ValueError):
    """The computed flow lost monotonicity in ``x0``."""


def periodic_spline(grid: Grid1D, samples) -> CubicSpline:
    """Periodic cubic spline through node samples (complex allowed)."""
    y = np.asarray(samples)
    if y.shape[0] != grid.num_points:
        raise ValueError("samples must have one row per node")
    xs = np.append(grid.nodes, grid.length)
    return CubicSpline(xs, np.concatenate([y, y[:1]]), bc_type="periodic", axis=0)


def _coefficient(grid: Grid1D | None, coef, real: bool = True) -> Callable[[float, np.ndarray], np.ndarray] | None:
    """Normalise a coefficient to a callable ``(t, x) -> values``."""
    if coef is None:
        return None
    if callable(coef):
        return coef
    c = np.asarray(coef)
    if real:
        if np.iscomplexobj(c) and np.any(c.imag != 0):
            raise ValueError("flow coefficients must be real")
        c = np.real(c).astype(float)
    if c.ndim == 0:
        val = c[()]
        return lambda t, x: np.full(np.shape(x), val)
    if grid is None:
        raise ValueError("node samples need a grid")
    spl = periodic_spline(grid, c)
    L = grid.length
    return lambda t, x: spl(np.mod(x, L))


@dataclass(frozen=True, eq=False)
class CharFlow:
    """Particle positions ``positions[i, j] = phi_{t0, times[i]}(x0[j])``."""

    times: np.ndarray
    x0: np.ndarray
    positions: np.ndarray = field(repr=False)
    period: float | None
    driver_fingerprint: str = ""
    monotone: bool = True

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not a recorded flow time")
        return i

    def at(self, t: float) -> np.ndarray:
        return self.positions[self.index_of(t)]

    def displacement(self, t: float) -> np.ndarray:
        return self.at(t) - self.x0


def _is_monotone(pos: np.ndarray, period: float | None) -> bool:
    if np.any(np.diff(pos) <= 0):
        return False
    if period is not None and pos[-1] >= pos[0] + period:
        return False
    return True


def flow_solve(a1, b1, path: BrownianPath, M: int | None = None, grid: Grid1D | None = None,
               x0=None, start: float = 0.0, check: bool = True) -> CharFlow:
    """Integrate ``dx = a1(t, x) o dw + b1(t, x) dt`` from every starting point.

    Parameters
    ----------
    a1, b1 : array, scalar, callable or None
        Node samples (interpolated by periodic cubic splines, so a
        ``grid`` is required), constants, or callables ``(t, x)``.
    path : BrownianPath
    M : int, optional
        Step count; the path is coarsened to it.  Defaults to the path's.
    grid : Grid1D, optional
        Supplies nodes (default starting points) and the period.
    x0 : array, optional
        Starting positions; defaults to the grid nodes.
    start : float
        Starting time on the step grid; the flow is ``phi_{start, t}``.
    check : bool
        Raise :class:`FlowError` if ``x0 -> phi_t(x0)`` stops being
        strictly increasing.
    """
    M = path.steps if M is None else int(M)
    drv = path if M == path.steps else path.coarsen(M)
    alpha = _coefficient(grid, a1)
    beta = _coefficient(grid, b1)
    if x0 is None:
        if grid is None:
            raise ValueError("need a grid or explicit starting points")
        x0 = grid.nodes
    x = np.array(x0, dtype=float)
    # callables are trusted to be L-periodic when a grid is supplied
    period = grid.length if grid is not None else None
    times = drv.times
    i0 = int(round(start / drv.dt))
    if abs(i0 * drv.dt - start) > 1e-9 or not 0 <= i0 <= M:
        raise ValueError("start must lie on the step grid")
    dws = drv.increments
    dt = drv.dt
    out = np.empty((M - i0 + 1, x.size))
    out[0] = x
    sorted_start = np.all(np.diff(x) > 0)
    for k, i in enumerate(range(i0, M), 1):
        t0, t1, dw = times[i], times[i + 1], dws[i]
        g0 = alpha(t0, x) if alpha is not None else 0.0
        d0 = beta(t0, x) if beta is not None else 0.0
        xp = x + g0 * dw + d0 * dt
        g1 = alpha(t1, xp) if alpha is not None else 0.0
        d1 = beta(t1, xp) if beta is not None else 0.0
        x = x + 0.5 * (g0 + g1) * dw + 0.5 * (d0 + d1) * dt
        out[k] = x
    if not np.all(np.isfinite(out)):
        raise FlowError("particle positions became non-finite")
    monotone = True
    if sorted_start:
        monotone = all(_is_monotone(row, period) for row in out)
        if check and not monotone:
            raise FlowError("flow is not monotone in x0; reduce the step or check the coefficients")
    return CharFlow(times[i0:], np.array(x0, dtype=float), out, period, drv.fingerprint(), monotone)


def solution_flow(grid: Grid1D, alpha, beta=None, path: BrownianPath | None = None, M: int | None = None,
                  sign: float = -1.0) -> CharFlow:
    """Flow of ``dx = sign * (alpha o dw + beta dt)``.

    With the default ``sign=-1`` this is the characteristic flow that
    carries solutions of ``du = alpha u_x o dw + beta u_x dt``.
    """
    def neg(c):
        if c is None:
            return None
        if callable(c):
            return lambda t, x: sign * np.asarray(c(t, x))
        return sign * np.asarray(c, dtype=float)
    return flow_solve(neg(alpha), neg(beta), path, M, grid=grid)


def flow_invert(flow: CharFlow, t: float, x=None) -> np.ndarray:
    """``phi_t^{-1}`` at the points ``x`` (default: the starting nodes).

    The inverse displacement ``y -> phi_t^{-1}(y) - y`` is periodic, so it
    is interpolated by a periodic cubic spline through the scattered
    graph points ``(phi_t(x0_j), x0_j - phi_t(x0_j))``.
    """
    i = flow.index_of(t)
    if flow.period is None:
        raise ValueError("inversion needs a periodic flow started from the grid nodes")
    if not _is_monotone(flow.positions[i], flow.period):
        raise FlowError(f"flow is not monotone at t={t}")
    L = flow.period
    x = flow.x0 if x is None else np.asarray(x, dtype=float)
    y = flow.positions[i]
    e = flow.x0 - y
    if np.allclose(e, e[0], rtol=0, atol=1e-15):
        return x + e[0]
    # reduce graph nodes to one period and close the loop
    ym = np.mod(y, L)
    order = np.argsort(ym)
    ys, es = ym[order], e[order]
    keep = np.concatenate([[True], np.diff(ys) > 1e-14])
    ys, es = ys[keep], es[keep]
    ys = np.append(ys, ys[0] + L)
    es = np.append(es, es[0])
    spl = CubicSpline(ys, es, bc_type="periodic")
    xr = ys[0] + np.mod(x - ys[0], L)
    return x + spl(xr)


def transport_solution(u0: Field, flow: CharFlow, t: float, u0_func=None) -> Field:
    """``u(t, x_j) = u0(phi_t^{-1}(x_j))`` by periodic cubic interpolation of ``u0``.

    When ``u0_func`` (an ``L``-periodic callable) is given it is evaluated
    exactly at the inverted points instead, which keeps isolated kinks of
    the datum sharp.
    """
    if u0.components != 1:
        raise ValueError("characteristics apply to scalar problems only")
    if flow.x0.size != u0.grid.num_points or not np.allclose(flow.x0, u0.grid.nodes):
        raise ValueError("flow must start from the grid nodes of u0")
    back = flow_invert(flow, t)
    if u0_func is not None:
        return u0.with_values(np.asarray(u0_func(back), dtype=complex)[None, :])
    spl = periodic_spline(u0.grid, u0.values[0])
    return u0.with_values(spl(np.mod(back, u0.grid.length))[None, :])


def representation_lower_order(u0: Field, a0, a1, path: BrownianPath, t: float, M: int | None = None,
                               sign: float = -1.0) -> Field:
    """Solution of ``du = (alpha u_x + a0 u) o dw`` through its characteristics.

    ``u(t, x) = u0(phi_t^{-1}(x)) exp(int_0^t a0(y(tau)) o dw(tau))`` where
    ``y(tau) = phi_tau(phi_t^{-1}(x))`` runs along the characteristic that
    ends at ``x``; the two-parameter flow is obtained by reading the
    stored one-parameter flow at the inverted starting points.  The
    Stratonovich integral uses the trapezoid (Heun) rule on the path
    increments.
    """
    grid = u0.grid
    flow = solution_flow(grid, a1, None, path, M, sign=sign)
    i_t = flow.index_of(t)
    y0 = flow_invert(flow, t)
    L = grid.length
    # phi_tau(y0) = y0 + d_tau(y0), d_tau periodic in the start point
    disp = flow.positions[: i_t + 1] - flow.x0[None, :]
    spl = CubicSpline(np.append(grid.nodes, L), np.concatenate([disp.T, disp.T[:1]]),
                      bc_type="periodic", axis=0)
    ys = y0[None, :] + spl(np.mod(y0, L)).T
    a0f = _coefficient(grid, a0, real=False)
    if a0f is None:
        expo = np.zeros(grid.num_points)
    else:
        taus = flow.times[: i_t + 1]
        vals = np.array([a0f(tau, y) for tau, y in zip(taus, ys)])
        dw = path.coarsen(flow.times.size - 1).increments[:i_t]
        expo = np.sum(0.5 * (vals[1:] + vals[:-1]) * dw[:, None], axis=0)
    base = periodic_spline(grid, u0.values[0])(np.mod(y0, L))
    return u0.with_values((base * np.exp(expo))[None, :])


def write_flow_csv(flow: CharFlow, fname, stride: int = 1):
    """Dump ``(t, x0, phi)`` rows."""
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x0", "phi"])
        for i in range(0, flow.times.size, stride):
            for x0, ph in zip(flow.x0, flow.positions[i]):
                w.writerow([repr(float(flow.times[i])), repr(float(x0)), repr(float(ph))])
