"""Time integration of the Stratonovich equation and its relatives.

The equation is

    du = sigma (a_t(x,D) u + f) o dw + (b_t(x,D) u + g) dt,

with ``sigma`` the noise scale.  Four solvers share one operator layer:

* :func:`integrate_spde` -- stochastic Heun (predictor-corrector), which
  is consistent with the Stratonovich integral for a single noise;
* :func:`wong_zakai_solve` -- classical RK4 on the random PDE driven by a
  polygonal path;
* :func:`skeleton_solve` -- RK4 on the controlled equation driven by
  ``hdot``;
* :func:`backward_solve` -- the backward equation, by time reversal of
  the same stored increments.

The Ito drift ``a(a u + f)/2`` is never assembled; the Heun corrector
produces it implicitly.

Explicit Heun amplifies a Fourier mode with purely imaginary symbol
``i*lam`` by ``|R|^2 = 1 + (lam dw)^4 / 4`` per step.  On fine grids
roundoff in unresolved modes would therefore explode, so by default each
step is followed by a projection onto the modes whose accumulated
amplification over the given path stays below ``exp(stability_budget)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .grid import Field, Grid1D, gaussian_profile, sobolev_weight
from .noise import BrownianPath, CameronMartinPath, PolygonalPath
from .symbols import TimeSymbolFamily

__all__ = [
    "BlowUpError",
    "SpdeProblem",
    "EvolveConfig",
    "Trajectory",
    "integrate_spde",
    "wong_zakai_solve",
    "skeleton_solve",
    "backward_solve",
    "evolution_apply",
    "energy_report",
    "stability_mask",
    "apply_diffusion",
]

SCHEMES = ("heun", "midpoint", "euler")


class BlowUpError(RuntimeError):
    """Raised when ``|u|_s`` exceeds the blow-up threshold or turns non-finite."""


def _as_forcing(fval, grid: Grid1D, comps: int) -> Callable[[float], np.ndarray] | None:
    if fval is None:
        return None
    if isinstance(fval, Field):
        arr = fval.values
        return lambda t: arr
    if callable(fval):
        def fn(t, _f=fval):
            v = _f(t)
            return v.values if isinstance(v, Field) else np.broadcast_to(np.asarray(v, dtype=complex),
                                                                          (comps, grid.num_points))
        return fn
    arr = np.broadcast_to(np.asarray(fval, dtype=complex), (comps, grid.num_points))
    return lambda t: arr


def _hat_forcing(fval, grid: Grid1D, comps: int):
    fn = _as_forcing(fval, grid, comps)
    if fn is None:
        return None
    if not callable(fval) or isinstance(fval, Field):
        const = np.fft.fft(fn(0.0), axis=-1)
        return lambda t: const
    return lambda t: np.fft.fft(fn(t), axis=-1)


@dataclass(frozen=True)
class SpdeProblem:
    """Data of the equation.

    ``forcing_f`` and ``forcing_g`` may be ``None``, a :class:`Field`, an
    array, or a callable ``t -> Field | array``.
    """

    u0: Field
    fam_a: TimeSymbolFamily | None = None
    fam_b: TimeSymbolFamily | None = None
    forcing_f: object = None
    forcing_g: object = None
    s: float = 0.0
    T: float = 1.0
    noise_scale: float = 1.0

    def __post_init__(self):
        if not (self.T > 0 and np.isfinite(self.s) and self.noise_scale >= 0):
            raise ValueError("need T > 0, finite s and noise_scale >= 0")
        for fam in (self.fam_a, self.fam_b):
            if fam is not None and (fam.grid != self.u0.grid or fam.components != self.u0.components):
                raise ValueError("symbol family does not match the initial datum")
        for f in (self.forcing_f, self.forcing_g):
            if isinstance(f, Field):
                f.check_compatible(self.u0)

    @property
    def grid(self) -> Grid1D:
        return self.u0.grid

    @property
    def components(self) -> int:
        return self.u0.components

    @property
    def homogeneous(self) -> bool:
        return self.forcing_f is None and self.forcing_g is None

    def with_noise_scale(self, sigma: float) -> "SpdeProblem":
        return replace(self, noise_scale=float(sigma))

    def with_initial(self, u0: Field) -> "SpdeProblem":
        return replace(self, u0=u0)

    def without_forcing(self) -> "SpdeProblem":
        return replace(self, forcing_f=None, forcing_g=None)


@dataclass(frozen=True)
class EvolveConfig:
    """Solver settings.

    ``stability_budget`` (Heun) bounds the log-amplification tolerated per
    mode over the path; ``None`` switches the projection off.  ``cfl`` is
    the RK4 substep number used by the polygonal and skeleton solvers.
    """

    steps: int = 4096
    mollifier_eps: float | None = None
    scheme: str = "heun"
    substeps_per_segment: int = 1
    record_every: int = 1
    dealias: bool = False
    stability_budget: float | None = 1.0
    energy: bool = True
    cfl: float = 0.5
    blowup_factor: float = 1e6
    midpoint_tol: float = 1e-13
    midpoint_maxiter: int = 60

    def __post_init__(self):
        if self.steps < 1 or self.substeps_per_segment < 1 or self.record_every < 1:
            raise ValueError("steps, substeps and record_every must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.mollifier_eps is not None and not self.mollifier_eps > 0:
            raise ValueError("mollifier_eps must be positive")

    def replace(self, **kw) -> "EvolveConfig":
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded states ``fields[i]`` at ``times[i]`` plus energy diagnostics.

    ``energy_log`` maps ``norm_s``, ``quad_A``, ``quad_B``, ``quad_L`` to
    per-record arrays; ``record_dw`` and ``record_dt`` are the driver
    increments between consecutive records.
    """

    grid: Grid1D
    times: np.ndarray
    fields: np.ndarray = field(repr=False)
    s: float = 0.0
    energy_log: dict | None = field(default=None, repr=False)
    record_dw: np.ndarray | None = field(default=None, repr=False)
    record_dt: np.ndarray | None = field(default=None, repr=False)
    driver_fingerprint: str = ""

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def field(self, i: int) -> Field:
        return Field(self.grid, self.fields[i])

    @property
    def initial(self) -> Field:
        return self.field(0)

    @property
    def final(self) -> Field:
        return self.field(-1)

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not a recorded time")
        return i

    def at(self, t: float) -> Field:
        return self.field(self.index_of(t))

    def norms(self, s: float | None = None) -> np.ndarray:
        s = self.s if s is None else s
        w = sobolev_weight(self.grid, s)
        uh = np.fft.fft(self.fields, axis=-1) / self.grid.num_points
        return np.sqrt(np.sum(w * np.abs(uh) ** 2, axis=(-1, -2)))

    def sup_distance(self, other: "Trajectory", s: float) -> float:
        """``max_t |u(t) - v(t)|_s`` over the common recorded times."""
        common, i, j = np.intersect1d(np.round(self.times, 12), np.round(other.times, 12),
                                      return_indices=True)
        if common.size == 0:
            raise ValueError("trajectories share no recorded times")
        diff = self.fields[i] - other.fields[j]
        w = sobolev_weight(self.grid, s)
        dh = np.fft.fft(diff, axis=-1) / self.grid.num_points
        return float(np.max(np.sqrt(np.sum(w * np.abs(dh) ** 2, axis=(-1, -2)))))


class _Operators:
    """Evaluates ``sign*sigma*(a_t J u + f)`` and ``sign*(b_t J u + g)``.

    States are carried as unnormalised FFT coefficients ``U = fft(u)``, so
    mollifier, dealiasing and stability projections are plain products.
    """

    def __init__(self, p: SpdeProblem, cfg: EvolveConfig, sign: float = 1.0, sigma: float | None = None,
                 forcing: bool = True):
        self.grid = p.grid
        self.fam_a = p.fam_a
        self.fam_b = p.fam_b
        self.sigma = p.noise_scale if sigma is None else sigma
        self.sign = sign
        self.f = _hat_forcing(p.forcing_f, p.grid, p.components) if forcing else None
        self.g = _hat_forcing(p.forcing_g, p.grid, p.components) if forcing else None
        self.chi = None
        if cfg.mollifier_eps is not None:
            self.chi = gaussian_profile(cfg.mollifier_eps * p.grid.frequencies)
        self.dealias = None
        if cfg.dealias:
            self.dealias = (np.abs(p.grid.wavenumbers) < p.grid.num_points / 3).astype(float)
        pre = np.ones(p.grid.num_points)
        if self.chi is not None:
            pre = pre * self.chi
        if self.dealias is not None:
            pre = pre * self.dealias
        self.pre = None if self.chi is None and self.dealias is None else pre
        self.has_a = self.fam_a is not None and self.sigma != 0
        self.has_diff = self.has_a or (self.f is not None and self.sigma != 0)
        self.has_drift = self.fam_b is not None or self.g is not None

    def _pdo(self, fam, t, U):
        if self.pre is not None:
            U = self.pre * U
        out = fam.at(t).apply_hat(U)
        if self.dealias is not None:
            out = self.dealias * out
        return out

    def a(self, t, U):
        """Bare ``sigma * a_t J u`` (no forcing, no sign)."""
        if not self.has_a:
            return np.zeros_like(U)
        return self.sigma * self._pdo(self.fam_a, t, U)

    def b(self, t, U):
        if self.fam_b is None:
            return np.zeros_like(U)
        return self._pdo(self.fam_b, t, U)

    def diffusion(self, t, U):
        out = self.a(t, U) if self.has_a else np.zeros_like(U)
        if self.f is not None and self.sigma != 0:
            out = out + self.sigma * self.f(t)
        return self.sign * out

    def drift(self, t, U):
        out = self.b(t, U) if self.fam_b is not None else np.zeros_like(U)
        if self.g is not None:
            out = out + self.g(t)
        return self.sign * out

    def spectral_bounds(self, t0: float, t1: float):
        """Per-mode bounds on the symbols of the diffusion and drift operators."""
        n = self.grid.num_points
        lam_a = np.zeros(n)
        lam_b = np.zeros(n)
        mult = np.ones(n) if self.pre is None else self.pre
        if self.has_a:
            lam_a = self.sigma * _family_bound(self.fam_a, t0, t1) * mult
        if self.fam_b is not None:
            lam_b = _family_bound(self.fam_b, t0, t1) * mult
        return lam_a, lam_b


def _family_bound(fam: TimeSymbolFamily, t0: float, t1: float) -> np.ndarray:
    if fam.is_constant:
        return fam.at(t0).spectral_bound()
    lo, hi = min(t0, t1), max(t0, t1)
    times = [t for t in fam.time_grid if lo <= t <= hi] + [lo, hi]
    return fam.spectral_bound(times)


def stability_mask(lam_a: np.ndarray, lam_b: np.ndarray, dws: np.ndarray, dt: float,
                   budget: float | None, scheme: str = "heun") -> np.ndarray | None:
    """Modes kept by the Heun stability projection (``None`` = keep all).

    For Heun the log-amplification of a mode is bounded by
    ``sum_i (lam_a |dw_i| + lam_b dt)^4 / 8``; for the midpoint fixed point
    the per-step contraction ``(lam_a |dw_i| + lam_b dt) / 2 < 1`` is
    required instead.
    """
    if budget is None:
        return None
    absdw = np.abs(np.asarray(dws, dtype=float))
    if scheme == "midpoint":
        worst = lam_a * (absdw.max() if absdw.size else 0.0) + lam_b * dt
        keep = worst <= 1.0
    elif scheme == "euler":
        return None
    else:
        # sum_i (A|dw_i| + B dt)^4 expanded in powers of A so it is O(N + M)
        moments = [np.sum(absdw ** k) for k in range(5)]
        bdt = lam_b * dt
        total = sum(math.comb(4, k) * lam_a ** k * moments[k] * bdt ** (4 - k) for k in range(5))
        keep = total / 8.0 <= budget
    keep = keep.astype(float)
    return None if np.all(keep == 1.0) else keep


def _project(U, mask):
    return U if mask is None else mask * U


class _Recorder:
    def __init__(self, ops: _Operators, u0: np.ndarray, t0: float, s: float, energy: bool,
                 blowup_factor: float, sigma_for_dw: float = 1.0):
        self.ops = ops
        self.s = s
        self.weight = sobolev_weight(ops.grid, s)
        self.energy = energy
        self.times = []
        self.fields = []
        self.log = {"norm_s": [], "quad_A": [], "quad_B": [], "quad_L": []}
        self.dws = []
        self.dts = []
        self._pending_dw = 0.0
        self._pending_dt = 0.0
        self.norm0 = None
        self.blowup_factor = blowup_factor
        self.record(t0, np.fft.fft(u0, axis=-1), first=True)

    def _inner(self, U, V):
        n = U.shape[-1]
        return np.sum(self.weight * U * np.conj(V)) / (n * n)

    def accumulate(self, dw, dt):
        self._pending_dw += dw
        self._pending_dt += dt

    def record(self, t, u, first=False):
        norm = float(np.sqrt(np.real(self._inner(u, u))))
        if first:
            self.norm0 = norm
        else:
            self.check(norm)
            self.dws.append(self._pending_dw)
            self.dts.append(self._pending_dt)
            self._pending_dw = self._pending_dt = 0.0
        self.times.append(t)
        self.fields.append(np.fft.ifft(u, axis=-1))
        self.log["norm_s"].append(norm)
        if self.energy:
            ops = self.ops
            au = ops.a(t, u)
            bu = ops.b(t, u)
            aau = ops.a(t, au)
            self.log["quad_A"].append(2.0 * np.real(self._inner(au, u)))
            self.log["quad_B"].append(2.0 * np.real(self._inner(bu, u)))
            self.log["quad_L"].append(2.0 * np.real(self._inner(aau, u)) + 2.0 * np.real(self._inner(au, au)))

    def check(self, norm):
        # a zero datum (pure forcing) has no scale to compare against
        if not np.isfinite(norm) or self.norm0 > 0 and norm > self.blowup_factor * self.norm0:
            raise BlowUpError(
                f"|u|_s = {norm:.3e} exceeds {self.blowup_factor:g} x |u0|_s = {self.norm0:.3e}; "
                "the operator boundedness conditions (A, L bounded) are suspect or the step is too coarse")

    def trajectory(self, grid, fingerprint, reverse=False) -> Trajectory:
        times = np.array(self.times)
        fields = np.array(self.fields)
        log = {k: np.array(v) for k, v in self.log.items() if len(v)}
        dws = np.array(self.dws)
        dts = np.array(self.dts)
        if reverse:
            times = times[::-1]
            fields = fields[::-1]
            log = {k: v[::-1] for k, v in log.items()}
            dws = dws[::-1]
            dts = dts[::-1]
        return Trajectory(grid, times, fields, self.s, log or None, dws, dts, fingerprint)


def _heun_run(ops: _Operators, u: np.ndarray, tgrid: np.ndarray, dws: np.ndarray, dt: float,
              cfg: EvolveConfig, mask, recorder: _Recorder | None):
    """Advance coefficients ``u`` over ``len(dws)`` steps; ``tgrid`` gives symbol times per node."""
    K = len(dws)
    norm0 = recorder.norm0 if recorder is not None else None
    diffusion, drift = ops.diffusion, ops.drift
    has_diff, has_drift = ops.has_diff, ops.has_drift
    for i in range(K):
        t0, t1 = tgrid[i], tgrid[i + 1]
        dw = dws[i]
        if cfg.scheme == "midpoint":
            u = _midpoint_step(ops, u, t0, t1, dw, dt, cfg, mask)
        else:
            G0 = diffusion(t0, u) if has_diff else 0.0
            D0 = drift(t0, u) if has_drift else 0.0
            pred = u + G0 * dw + D0 * dt
            if cfg.scheme == "euler":
                u = pred
            else:
                G1 = diffusion(t1, pred) if has_diff else 0.0
                D1 = drift(t1, pred) if has_drift else 0.0
                u = u + 0.5 * (G0 + G1) * dw + 0.5 * (D0 + D1) * dt
        if mask is not None:
            u = _project(u, mask)
        if recorder is not None:
            recorder.accumulate(dw, dt)
            if (i + 1) % cfg.record_every == 0 or i == K - 1:
                recorder.record(tgrid[i + 1], u)
            elif (i + 1) % 256 == 0:
                recorder.check(_quick_norm(u, recorder))
        elif norm0 is None and (i + 1) % 256 == 0 and not np.all(np.isfinite(u)):
            raise BlowUpError("non-finite state")
    return u


def _quick_norm(u, recorder):
    return float(np.sqrt(np.real(recorder._inner(u, u))))


def _midpoint_step(ops, u, t0, t1, dw, dt, cfg, mask=None):
    tm = 0.5 * (t0 + t1)
    has_diff, has_drift = ops.has_diff, ops.has_drift
    G = ops.diffusion(t0, u) if has_diff else 0.0
    D = ops.drift(t0, u) if has_drift else 0.0
    # projecting inside the loop keeps variable coefficients from feeding
    # the non-contracting modes during the iteration
    new = _project(u + G * dw + D * dt, mask)
    scale = max(float(np.max(np.abs(u))), 1e-300)
    for _ in range(cfg.midpoint_maxiter):
        mid = 0.5 * (u + new)
        G = ops.diffusion(tm, mid) if has_diff else 0.0
        D = ops.drift(tm, mid) if has_drift else 0.0
        nxt = _project(u + G * dw + D * dt, mask)
        change = float(np.max(np.abs(nxt - new)))
        new = nxt
        if change <= cfg.midpoint_tol * scale:
            break
    return new


def _driver(path: BrownianPath, cfg: EvolveConfig) -> BrownianPath:
    if path.steps == cfg.steps:
        return path
    if path.steps % cfg.steps == 0:
        return path.coarsen(cfg.steps)
    raise ValueError(f"path resolution {path.steps} is not a multiple of cfg.steps={cfg.steps}")


def integrate_spde(p: SpdeProblem, path: BrownianPath, cfg: EvolveConfig = EvolveConfig()) -> Trajectory:
    """Solve the Stratonovich equation on ``[0, T]`` along ``path``.

    One predictor-corrector step per increment (``cfg.scheme="heun"``);
    ``"midpoint"`` uses the fixed-point midpoint rule and ``"euler"`` is the
    uncorrected Ito-Euler scheme kept for negative experiments.  With
    ``cfg.mollifier_eps`` every operator application is pre-composed with
    the mollifier.
    """
    if abs(path.horizon - p.T) > 1e-12 * p.T:
        raise ValueError("path horizon differs from the problem horizon")
    drv = _driver(path, cfg)
    ops = _Operators(p, cfg)
    tgrid = drv.times
    dws = drv.increments
    lam_a, lam_b = ops.spectral_bounds(0.0, p.T)
    mask = stability_mask(lam_a, lam_b, dws, drv.dt, cfg.stability_budget, cfg.scheme)
    u0 = p.u0.values
    rec = _Recorder(ops, u0, 0.0, p.s, cfg.energy, cfg.blowup_factor)
    _heun_run(ops, np.fft.fft(u0, axis=-1), tgrid, dws, drv.dt, cfg, mask, rec)
    return rec.trajectory(p.grid, drv.fingerprint())


def apply_diffusion(p: SpdeProblem, t: float, phi: Field, cfg: EvolveConfig = EvolveConfig(),
                    forcing: bool = True) -> Field:
    """``sigma * (a_t J phi + f(t))``: the coefficient of the noise at time ``t``."""
    ops = _Operators(p, cfg, forcing=forcing)
    if not ops.has_diff:
        return Field.zeros(p.grid, p.components)
    out = ops.diffusion(t, np.fft.fft(phi.values, axis=-1))
    return phi.with_values(np.fft.ifft(out, axis=-1))


def _steps_between(T: float, steps: int, s_from: float, t_to: float):
    dt = T / steps
    i0 = s_from / dt
    i1 = t_to / dt
    j0, j1 = int(round(i0)), int(round(i1))
    if abs(i0 - j0) > 1e-8 or abs(i1 - j1) > 1e-8:
        raise ValueError("times must lie on the step grid")
    if not 0 <= j0 <= j1 <= steps:
        raise ValueError("need 0 <= s_from <= t_to <= T")
    return j0, j1


def evolution_apply(p: SpdeProblem, path: BrownianPath, s_from: float, t_to: float, phi: Field,
                    cfg: EvolveConfig = EvolveConfig()) -> Field:
    """Forward evolution operator ``U(s_from, t_to) phi`` of the homogeneous equation."""
    drv = _driver(path, cfg)
    j0, j1 = _steps_between(p.T, drv.steps, s_from, t_to)
    if j0 == j1:
        return phi
    ops = _Operators(p, cfg, forcing=False)
    dws = drv.increments
    lam_a, lam_b = ops.spectral_bounds(0.0, p.T)
    mask = stability_mask(lam_a, lam_b, dws, drv.dt, cfg.stability_budget, cfg.scheme)
    u = _heun_run(ops, np.fft.fft(phi.values, axis=-1), drv.times[j0:j1 + 1], dws[j0:j1], drv.dt,
                  cfg, mask, None)
    return phi.with_values(np.fft.ifft(u, axis=-1))


def backward_solve(p: SpdeProblem, path: BrownianPath, t_end: float, phi: Field,
                   cfg: EvolveConfig = EvolveConfig()) -> Trajectory:
    """Backward equation ``u(s) = phi - int_s^t a u o d^w - int_s^t b u ds``.

    Integrated in reversed time with the reversed increments of the same
    path; the result is returned on ascending times ``s`` in ``[0, t_end]``
    with ``u(t_end) = phi``.
    """
    drv = _driver(path, cfg)
    _, j1 = _steps_between(p.T, drv.steps, 0.0, t_end)
    ops = _Operators(p, cfg, sign=-1.0, forcing=False)
    if j1 == 0:
        rec = _Recorder(ops, phi.values, 0.0, p.s, cfg.energy, cfg.blowup_factor)
        return rec.trajectory(p.grid, drv.fingerprint())
    dws = drv.increments[:j1][::-1]
    tgrid = drv.times[: j1 + 1][::-1]
    lam_a, lam_b = ops.spectral_bounds(0.0, t_end)
    mask = stability_mask(lam_a, lam_b, dws, drv.dt, cfg.stability_budget, cfg.scheme)
    rec = _Recorder(ops, phi.values, float(tgrid[0]), p.s, cfg.energy, cfg.blowup_factor)
    _heun_run(ops, np.fft.fft(phi.values, axis=-1), tgrid, dws, drv.dt, cfg, mask, rec)
    return rec.trajectory(p.grid, drv.fingerprint(), reverse=True)


def _rk4_run(ops: _Operators, u: np.ndarray, tgrid: np.ndarray, slopes: np.ndarray, cfg: EvolveConfig,
             min_substeps: np.ndarray, recorder: _Recorder) -> np.ndarray:
    """RK4 for ``u' = diffusion(t,u) * slope_i + drift(t,u)`` on each grid step."""
    lam_a, lam_b = ops.spectral_bounds(float(tgrid[0]), float(tgrid[-1]))
    rho_a, rho_b = float(np.max(lam_a)), float(np.max(lam_b))
    has_diff, has_drift = ops.has_diff, ops.has_drift

    def rhs(t, v, c):
        out = 0.0
        if has_diff and c != 0.0:
            out = ops.diffusion(t, v) * c
        if has_drift:
            out = out + ops.drift(t, v)
        if isinstance(out, float):
            return np.zeros_like(v)
        return out

    K = len(slopes)
    for i in range(K):
        t0, t1 = float(tgrid[i]), float(tgrid[i + 1])
        H = t1 - t0
        c = float(slopes[i])
        k = max(int(min_substeps[i]), int(math.ceil((abs(c) * rho_a + rho_b) * H / cfg.cfl)), 1)
        h = H / k
        t = t0
        for _ in range(k):
            k1 = rhs(t, u, c)
            k2 = rhs(t + 0.5 * h, u + 0.5 * h * k1, c)
            k3 = rhs(t + 0.5 * h, u + 0.5 * h * k2, c)
            k4 = rhs(t + h, u + h * k3, c)
            u = u + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
        recorder.accumulate(c * H, H)
        if (i + 1) % cfg.record_every == 0 or i == K - 1:
            recorder.record(t1, u)
    return u


def wong_zakai_solve(p: SpdeProblem, poly: PolygonalPath, cfg: EvolveConfig = EvolveConfig()) -> Trajectory:
    """Solve the random PDE driven by the polygonal path ``w^n``.

    States are produced on the ``cfg.steps`` grid (a multiple of ``n``).
    Each segment is split into at least ``cfg.substeps_per_segment`` RK4
    substeps, more if ``|slope| * rho_a * dt_seg / cfl`` demands it, where
    ``rho_a`` bounds the symbol of ``sigma a`` over the grid frequencies.
    """
    if abs(poly.horizon - p.T) > 1e-12 * p.T:
        raise ValueError("path horizon differs from the problem horizon")
    steps = cfg.steps
    if steps % poly.n:
        raise ValueError(f"cfg.steps={steps} must be a multiple of n={poly.n}")
    per = steps // poly.n
    slopes = np.repeat(poly.slopes, per)
    min_sub = np.full(steps, int(math.ceil(cfg.substeps_per_segment / per)))
    ops = _Operators(p, cfg)
    tgrid = np.linspace(0.0, p.T, steps + 1)
    rec = _Recorder(ops, p.u0.values, 0.0, p.s, cfg.energy, cfg.blowup_factor)
    _rk4_run(ops, np.fft.fft(p.u0.values, axis=-1), tgrid, slopes, cfg, min_sub, rec)
    fp = poly.as_path(steps).fingerprint()
    return rec.trajectory(p.grid, fp)


def skeleton_solve(p: SpdeProblem, h: CameronMartinPath, cfg: EvolveConfig = EvolveConfig()) -> Trajectory:
    """Controlled equation ``Psi' = a Psi hdot + b Psi`` (plus ``f hdot + g``).

    The noise scale of ``p`` is ignored: the control enters at unit scale.
    ``hdot`` is taken as constant on each of the ``cfg.steps`` steps.
    """
    if abs(h.horizon - p.T) > 1e-12 * p.T:
        raise ValueError("control horizon differs from the problem horizon")
    steps = cfg.steps
    if steps % h.steps and h.steps % steps:
        raise ValueError("hdot samples are not aligned with the time grid")
    slopes = h.hdot_on_grid(steps)
    ops = _Operators(p, cfg, sigma=1.0)
    tgrid = np.linspace(0.0, p.T, steps + 1)
    rec = _Recorder(ops, p.u0.values, 0.0, p.s, cfg.energy, cfg.blowup_factor)
    _rk4_run(ops, np.fft.fft(p.u0.values, axis=-1), tgrid, slopes, cfg, np.ones(steps, dtype=int), rec)
    return rec.trajectory(p.grid, "")


def energy_report(traj: Trajectory) -> dict:
    """Per-record energy table and the drift from the Ito energy identity.

    For the homogeneous equation ``|u|_s^2`` evolves as

        d|u|^2 = <A u, u> dw + (<B u, u> + <L u, u>/2) dt

    with the ``H^s`` pairings logged during integration.  The
    ``residual`` column is the cumulative difference between the observed
    ``|u|_s^2 - |u_0|_s^2`` and the left-point sums of the right-hand side.
    """
    if traj.energy_log is None or "quad_A" not in traj.energy_log:
        raise ValueError("trajectory carries no energy log")
    log = traj.energy_log
    norm_sq = log["norm_s"] ** 2
    qA, qB, qL = log["quad_A"], log["quad_B"], log["quad_L"]
    dw, dt = traj.record_dw, traj.record_dt
    predicted = qA[:-1] * dw + (qB[:-1] + 0.5 * qL[:-1]) * dt
    cum_pred = np.concatenate([[0.0], np.cumsum(predicted)])
    observed = norm_sq - norm_sq[0]
    return {
        "t": traj.times,
        "norm_s": log["norm_s"],
        "norm_sq": norm_sq,
        "quad_A": qA,
        "quad_B": qB,
        "quad_L": qL,
        "predicted_change": cum_pred,
        "observed_change": observed,
        "residual": observed - cum_pred,
    }
