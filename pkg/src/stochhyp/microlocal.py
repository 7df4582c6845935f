"""Stochastic bicharacteristics, wavefront transport and a kink detector.

Principal symbols have the form ``a1(t, x, xi) = alpha(t, x) * xi`` (and
likewise ``b1``), so the Hamiltonian system reads

    dx  =  alpha(x) o dw + beta(x) dt
    dxi = -alpha'(x) xi o dw - beta'(x) xi dt.

Coefficients given as node samples are evaluated off-grid by their
trigonometric interpolant, whose derivative is exact for the interpolant.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .grid import Field, Grid1D
from .noise import BrownianPath
from .symbols import SeparableSymbol, TimeSymbolFamily, multiplier

__all__ = [
    "PhasePoint",
    "WavefrontSet",
    "BicharTrajectory",
    "Detection",
    "DegenerateDirectionError",
    "TrigCoefficient",
    "principal_coefficient",
    "bichar_flow",
    "propagate_wavefront",
    "detect_singularities",
    "write_wavefront_csv",
    "write_detections_csv",
]


class DegenerateDirectionError(ValueError):
    """The frequency coordinate reached zero."""


@dataclass(frozen=True)
class PhasePoint:
    x: float
    xi: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.xi)):
            raise ValueError("phase point coordinates must be finite")
        if self.xi == 0:
            raise ValueError("xi = 0 is not a wavefront direction")


@dataclass(frozen=True)
class WavefrontSet:
    """Phase points with a provenance label each."""

    points: tuple = ()
    labels: tuple = ()

    def __post_init__(self):
        pts = tuple(self.points)
        labels = tuple(self.labels) if self.labels else tuple(f"p{i}" for i in range(len(pts)))
        if len(labels) != len(pts):
            raise ValueError("one label per point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.points)

    @property
    def x(self) -> np.ndarray:
        return np.array([p.x for p in self.points])

    @property
    def xi(self) -> np.ndarray:
        return np.array([p.xi for p in self.points])

    @classmethod
    def from_kinks(cls, positions, labels=None) -> "WavefrontSet":
        """Both directions ``xi = +-1`` above each kink position."""
        pts, labs = [], []
        for i, x0 in enumerate(positions):
            name = labels[i] if labels else f"kink{i}"
            for sgn in (1.0, -1.0):
                pts.append(PhasePoint(float(x0), sgn))
                labs.append(f"{name}{'+' if sgn > 0 else '-'}")
        return cls(tuple(pts), tuple(labs))


class TrigCoefficient:
    """Trigonometric interpolant of real node samples, with its derivative."""

    def __init__(self, grid: Grid1D, samples):
        v = np.asarray(samples, dtype=float)
        if v.ndim == 0:
            v = np.full(grid.num_points, float(v))
        if v.shape != (grid.num_points,):
            raise ValueError("coefficient samples must have one value per node")
        self.grid = grid
        n = grid.num_points
        c = np.fft.fft(v) / n
        c[n // 2] = 0.5 * c[n // 2]
        # symmetric Nyquist split keeps the interpolant real
        self.k = np.concatenate([grid.frequencies, [-grid.frequencies[n // 2]]])
        self.c = np.concatenate([c, [c[n // 2]]])
        self.constant = bool(np.allclose(v, v[0], rtol=0, atol=0))
        self.value0 = float(v[0])

    def __call__(self, x):
        if self.constant:
            return np.full(np.shape(x), self.value0)
        e = np.exp(1j * np.multiply.outer(np.asarray(x, dtype=float), self.k))
        return np.real(e @ self.c)

    def derivative(self, x):
        if self.constant:
            return np.zeros(np.shape(x))
        e = np.exp(1j * np.multiply.outer(np.asarray(x, dtype=float), self.k))
        return np.real(e @ (1j * self.k * self.c))


def principal_coefficient(sym) -> np.ndarray:
    """Real ``alpha`` with principal symbol ``alpha(x) * i xi``.

    Sums the scalar coefficients of all ``i*xi`` terms, so both the plain
    and the symmetrised transport give back ``alpha``.
    """
    if isinstance(sym, TimeSymbolFamily):
        if not sym.is_constant:
            raise ValueError("only time-independent families are supported here")
        sym = sym.at(0.0)
    if not isinstance(sym, SeparableSymbol):
        return np.asarray(sym, dtype=float)
    if sym.components != 1:
        raise ValueError("bicharacteristics are implemented for scalar symbols")
    dx = multiplier(sym.grid, "i*xi")
    alpha = np.zeros(sym.grid.num_points, dtype=complex)
    for t in sym.terms:
        if np.array_equal(t.mult, dx):
            alpha += t.coef[0, 0]
    if np.any(np.abs(alpha.imag) > 1e-12):
        raise ValueError("principal coefficient must be real")
    return alpha.real


def _as_coef(grid, c):
    if c is None:
        return None
    if isinstance(c, TrigCoefficient):
        return c
    if isinstance(c, (SeparableSymbol, TimeSymbolFamily)):
        c = principal_coefficient(c)
    return TrigCoefficient(grid, c)


@dataclass(frozen=True, eq=False)
class BicharTrajectory:
    """``x[i, p]`` (unwrapped) and ``xi[i, p]`` at ``times[i]``."""

    times: np.ndarray
    x: np.ndarray = field(repr=False)
    xi: np.ndarray = field(repr=False)
    labels: tuple = ()
    period: float = 2 * np.pi

    def at(self, i: int = -1) -> WavefrontSet:
        pts = tuple(PhasePoint(float(np.mod(a, self.period)), float(b)) for a, b in zip(self.x[i], self.xi[i]))
        return WavefrontSet(pts, self.labels)


def bichar_flow(a1, b1, pts, path: BrownianPath, M: int | None = None, grid: Grid1D | None = None,
                sign: float = 1.0, record_every: int = 1) -> BicharTrajectory:
    """Stratonovich Heun for the bicharacteristic system.

    Parameters
    ----------
    a1, b1 : array, scalar, symbol or None
        ``alpha`` and ``beta`` (node samples or constants), or a scalar
        symbol/family whose principal coefficient is extracted.
    pts : WavefrontSet or sequence of PhasePoint
    sign : float
        Multiplies both Hamiltonians; ``-1`` gives the flow that carries
        singularities of ``du = alpha u_x o dw + beta u_x dt``.
    """
    if grid is None:
        for c in (a1, b1):
            if isinstance(c, (SeparableSymbol, TimeSymbolFamily)):
                grid = c.grid
        if grid is None:
            grid = Grid1D(8)
    wf = pts if isinstance(pts, WavefrontSet) else WavefrontSet(tuple(pts))
    M = path.steps if M is None else int(M)
    drv = path if M == path.steps else path.coarsen(M)
    al = _as_coef(grid, a1)
    be = _as_coef(grid, b1)
    x = wf.x.astype(float)
    xi = wf.xi.astype(float)
    s0 = np.sign(xi)

    def rhs(xv, xiv):
        gx = sign * al(xv) if al is not None else 0.0
        gxi = -sign * al.derivative(xv) * xiv if al is not None else 0.0
        fx = sign * be(xv) if be is not None else 0.0
        fxi = -sign * be.derivative(xv) * xiv if be is not None else 0.0
        return gx, gxi, fx, fxi

    times = drv.times
    dws, dt = drv.increments, drv.dt
    rec_t, rec_x, rec_xi = [0.0], [x.copy()], [xi.copy()]
    for i in range(M):
        dw = dws[i]
        gx, gxi, fx, fxi = rhs(x, xi)
        xp = x + gx * dw + fx * dt
        xip = xi + gxi * dw + fxi * dt
        gx1, gxi1, fx1, fxi1 = rhs(xp, xip)
        x = x + 0.5 * (gx + gx1) * dw + 0.5 * (fx + fx1) * dt
        xi = xi + 0.5 * (gxi + gxi1) * dw + 0.5 * (fxi + fxi1) * dt
        if len(xi) and np.any(np.sign(xi) != s0):
            raise DegenerateDirectionError(f"xi crossed zero near t={times[i + 1]:.4g}")
        if (i + 1) % record_every == 0 or i == M - 1:
            rec_t.append(times[i + 1])
            rec_x.append(x.copy())
            rec_xi.append(xi.copy())
    return BicharTrajectory(np.array(rec_t), np.array(rec_x), np.array(rec_xi), wf.labels, grid.length)


def propagate_wavefront(wf0: WavefrontSet, fam_a, fam_b, path: BrownianPath, M: int | None = None,
                        grid: Grid1D | None = None, sign: float = -1.0, record_every: int = 1):
    """``Phi_t(WF(u0))`` at ``t = T``; returns ``(WavefrontSet, BicharTrajectory)``.

    The default ``sign=-1`` follows the singularities of the solution of
    ``du = a u o dw + b u dt`` with ``a = alpha d/dx`` (see module doc).
    """
    if len(wf0) == 0:
        empty = BicharTrajectory(np.array([0.0, path.T]), np.zeros((2, 0)), np.zeros((2, 0)), (),
                                 grid.length if grid else 2 * np.pi)
        return WavefrontSet(), empty
    traj = bichar_flow(fam_a, fam_b, wf0, path, M, grid, sign, record_every)
    return traj.at(-1), traj


@dataclass(frozen=True)
class Detection:
    x: float
    score: float


def _window_scores(v: np.ndarray, grid: Grid1D, width: float, band_fraction: float) -> np.ndarray:
    n = grid.num_points
    x = grid.nodes
    L = grid.length
    d = np.mod(x[None, :] - x[:, None] + L / 2, L) - L / 2
    win = np.exp(-0.5 * (d / width) ** 2)
    spec = np.abs(np.fft.fft(win * v[None, :], axis=-1)) ** 2
    k = np.abs(grid.wavenumbers)
    top = k >= (1.0 - band_fraction) * (n / 2)
    # one common denominator: a per-window ratio would reward windows that
    # only catch the faint tail of a jump
    total = spec.sum(axis=-1).max()
    if total == 0:
        return np.zeros(n)
    return spec[:, top].sum(axis=-1) / total


def detect_singularities(u: Field, window_width: float | None = None, band_fraction: float = 1.0 / 3.0,
                         rel_threshold: float = 0.5, abs_floor: float = 1e-20) -> list[Detection]:
    """Locate non-smooth points of a scalar field.

    At every node a Gaussian window of standard deviation
    ``window_width`` (default ``8 dx``) localises the field; the score is
    the windowed spectral energy in the top ``band_fraction`` of
    wavenumbers, as a fraction of the largest windowed energy over all
    centres.  Local maxima scoring above both
    ``rel_threshold * max(score)`` and ``abs_floor`` are reported, with
    sub-grid positions from a parabola through the log-scores.
    """
    if u.components != 1:
        raise ValueError("the detector works on scalar fields")
    grid = u.grid
    width = 8 * grid.dx if window_width is None else window_width
    score = _window_scores(u.values[0], grid, width, band_fraction)
    smax = float(score.max())
    if smax <= abs_floor:
        return []
    cut = max(rel_threshold * smax, abs_floor)
    left, right = np.roll(score, 1), np.roll(score, -1)
    peaks = np.nonzero((score >= left) & (score > right) & (score > cut))[0]
    out = []
    for j in peaks:
        s0, sm, sp = (np.log(max(v, 1e-300)) for v in (score[j], left[j], right[j]))
        den = sm - 2 * s0 + sp
        off = 0.5 * (sm - sp) / den if den < 0 else 0.0
        off = float(np.clip(off, -0.5, 0.5))
        out.append(Detection(float(np.mod(grid.nodes[j] + off * grid.dx, grid.length)), float(score[j])))
    return out


def write_wavefront_csv(traj: BicharTrajectory, fname):
    """Rows ``(t, label, x, xi)`` with ``x`` reduced to ``[0, L)``."""
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "label", "x", "xi"])
        for i, t in enumerate(traj.times):
            for lab, a, b in zip(traj.labels, traj.x[i], traj.xi[i]):
                w.writerow([repr(float(t)), lab, repr(float(np.mod(a, traj.period))), repr(float(b))])


def write_detections_csv(rows, fname):
    """``rows`` is an iterable of ``(t, Detection)``."""
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x_detected", "score"])
        for t, d in rows:
            w.writerow([repr(float(t)), repr(d.x), repr(d.score)])
