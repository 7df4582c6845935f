"""Monte Carlo studies and Malliavin derivatives.

Every study draws its paths from ``sample_brownian(M, T, seed, index)``
with ``index = stream * 2**32 + i``, so results depend only on the seed
and the configuration, never on scheduling.  Per-path work can be spread
over threads; the reductions run in path order afterwards.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .evolve import (BlowUpError, EvolveConfig, SpdeProblem, Trajectory, apply_diffusion, evolution_apply,
                     integrate_spde, skeleton_solve, wong_zakai_solve)
from .grid import Field, evaluate
from .noise import (BrownianPath, CameronMartinPath, cm_action, girsanov_shift, likelihood_ratio,
                    polygonalize, sample_brownian)

__all__ = [
    "McConfig",
    "ConvergenceReport",
    "MalliavinDerivative",
    "LdpReport",
    "SupportReport",
    "fit_slope",
    "mc_paths",
    "wz_convergence_study",
    "small_noise_study",
    "ldp_probe",
    "support_probe",
    "malliavin_pointwise",
    "malliavin_directional",
    "nondegeneracy_check",
]

STREAM = 2 ** 32


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings; ``norm_index=None`` means ``s - 2``."""

    num_paths: int = 64
    seed: int = 12345
    norm_index: float | None = None
    confidence: float = 1.96
    threads: int = 1

    def __post_init__(self):
        if self.num_paths < 2:
            raise ValueError("num_paths must be >= 2 so that variances are estimable")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def index(self, p: SpdeProblem) -> float:
        return p.s - 2.0 if self.norm_index is None else float(self.norm_index)


def mc_paths(mc: McConfig, M: int, T: float, stream: int = 0) -> list[BrownianPath]:
    return [sample_brownian(M, T, mc.seed, stream * STREAM + i) for i in range(mc.num_paths)]


def _map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def fit_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x`` (positive entries only)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    """Mean squared sup-errors per abscissa, with standard errors.

    ``per_path[i, k]`` is the squared sup-error of path ``i`` at
    ``abscissae[k]`` (NaN for excluded paths).  ``extra`` holds the same
    statistics in other norms, keyed by Sobolev index.
    """

    abscissae: np.ndarray
    errors: np.ndarray
    stderr: np.ndarray
    fitted_slope: float
    norm_index: float
    per_path: np.ndarray = field(repr=False)
    excluded: int = 0
    extra: dict = field(default_factory=dict, repr=False)
    label: str = ""

    def __post_init__(self):
        a = np.asarray(self.abscissae, dtype=float)
        d = np.diff(a)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("abscissae must be strictly monotone")

    def rows(self):
        """``(abscissa, mean, stderr, [mean, stderr per extra index])`` rows."""
        out = []
        for k, a in enumerate(self.abscissae):
            row = [float(a), float(self.errors[k]), float(self.stderr[k])]
            for key in sorted(self.extra):
                row += [float(self.extra[key]["errors"][k]), float(self.extra[key]["stderr"][k])]
            out.append(row)
        return out

    def header(self):
        h = ["abscissa", f"mean_sq_sup_err_s{self.norm_index:g}", "stderr"]
        for key in sorted(self.extra):
            h += [f"mean_sq_sup_err_s{key:g}", f"stderr_s{key:g}"]
        return h


def _mean_se(a: np.ndarray):
    a = np.asarray(a, dtype=float)
    good = a[np.isfinite(a)]
    if good.size == 0:
        return float("nan"), float("nan")
    se = float(np.std(good, ddof=1) / np.sqrt(good.size)) if good.size > 1 else float("nan")
    return float(np.mean(good)), se


def _summarise(per_path: np.ndarray):
    stats = [_mean_se(per_path[:, k]) for k in range(per_path.shape[1])]
    return np.array([s[0] for s in stats]), np.array([s[1] for s in stats])


def wz_convergence_study(p: SpdeProblem, ns: Sequence[int], cfg: EvolveConfig, mc: McConfig,
                         extra_norms: Sequence[float] = ()) -> ConvergenceReport:
    """``E sup_t |u^n - u|^2`` for polygonal drivers on the same paths.

    The reference ``u`` is the Heun solve at ``cfg.steps``; each ``u^n``
    is produced on the same time grid, so the supremum runs over all
    ``cfg.steps + 1`` times (thinned by ``cfg.record_every``).
    """
    ns = [int(n) for n in ns]
    for n in ns:
        if cfg.steps % n:
            raise ValueError(f"n={n} does not divide cfg.steps={cfg.steps}")
    s_err = mc.index(p)
    idx = [s_err] + [float(e) for e in extra_norms]
    paths = mc_paths(mc, cfg.steps, p.T)

    def one(path):
        try:
            ref = integrate_spde(p, path, cfg)
            res = np.empty((len(idx), len(ns)))
            for k, n in enumerate(ns):
                un = wong_zakai_solve(p, polygonalize(path, n), cfg)
                for j, s in enumerate(idx):
                    res[j, k] = un.sup_distance(ref, s) ** 2
            return res
        except BlowUpError:
            return None

    results = _map(one, paths, mc.threads)
    return _report(np.array(ns, dtype=float), results, idx, "wong-zakai")


def _report(absc, results, idx, label) -> ConvergenceReport:
    excluded = sum(r is None for r in results)
    K = len(absc)
    cube = np.stack([r if r is not None else np.full((len(idx), K), np.nan) for r in results])
    errs, ses = _summarise(cube[:, 0, :])
    extra = {}
    for j, s in enumerate(idx[1:], 1):
        e, se = _summarise(cube[:, j, :])
        extra[s] = {"errors": e, "stderr": se, "fitted_slope": fit_slope(absc, e)}
    return ConvergenceReport(absc, errs, ses, fit_slope(absc, errs), idx[0], cube[:, 0, :], excluded, extra, label)


def small_noise_study(p: SpdeProblem, eps_list: Sequence[float], cfg: EvolveConfig, mc: McConfig,
                      extra_norms: Sequence[float] | None = None) -> ConvergenceReport:
    """``E sup_t |u^eps - u|^2`` against the noiseless solve, per ``eps``.

    The noise scale is set to ``sqrt(eps)`` and the same paths are reused
    for every ``eps``.  By default the ``s`` and ``s - 1`` norms are
    tabulated next to the primary index.
    """
    eps_list = [float(e) for e in eps_list]
    s_err = mc.index(p)
    if extra_norms is None:
        extra_norms = [e for e in (p.s - 1.0, p.s) if e != s_err]
    idx = [s_err] + [float(e) for e in extra_norms]
    paths = mc_paths(mc, cfg.steps, p.T)
    base = integrate_spde(p.with_noise_scale(0.0), paths[0], cfg)

    def one(path):
        try:
            res = np.empty((len(idx), len(eps_list)))
            for k, eps in enumerate(eps_list):
                if eps == 0.0:
                    res[:, k] = 0.0
                    continue
                ue = integrate_spde(p.with_noise_scale(math.sqrt(eps)), path, cfg)
                for j, s in enumerate(idx):
                    res[j, k] = ue.sup_distance(base, s) ** 2
            return res
        except BlowUpError:
            return None

    results = _map(one, paths, mc.threads)
    return _report(np.array(eps_list), results, idx, "small-noise")


@dataclass(frozen=True, eq=False)
class LdpReport:
    """One row per ``eps``; see :func:`ldp_probe`."""

    eps: np.ndarray
    naive: np.ndarray
    naive_se: np.ndarray
    naive_hits: np.ndarray
    naive_upper: np.ndarray
    tilted: np.ndarray
    tilted_se: np.ndarray
    ratio_mean: np.ndarray
    ratio_se: np.ndarray
    action: float
    eta: float
    num_paths: int

    @property
    def eps_log_naive(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return self.eps * np.log(np.where(self.naive > 0, self.naive, self.naive_upper))

    @property
    def eps_log_tilted(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return self.eps * np.log(self.tilted)

    def overlap(self, k: int, z: float = 1.96) -> bool:
        """Do the naive and tilted confidence intervals intersect at row ``k``?"""
        lo1, hi1 = self.naive[k] - z * self.naive_se[k], self.naive[k] + z * self.naive_se[k]
        lo2, hi2 = self.tilted[k] - z * self.tilted_se[k], self.tilted[k] + z * self.tilted_se[k]
        return bool(max(lo1, lo2) <= min(hi1, hi2))

    def header(self):
        return ["eps", "naive", "naive_se", "naive_hits", "naive_upper", "tilted", "tilted_se",
                "eps_log_naive", "eps_log_tilted", "ratio_mean", "ratio_se", "action"]

    def rows(self):
        en, et = self.eps_log_naive, self.eps_log_tilted
        return [[float(self.eps[k]), float(self.naive[k]), float(self.naive_se[k]), int(self.naive_hits[k]),
                 float(self.naive_upper[k]), float(self.tilted[k]), float(self.tilted_se[k]), float(en[k]),
                 float(et[k]), float(self.ratio_mean[k]), float(self.ratio_se[k]), self.action]
                for k in range(len(self.eps))]


def ldp_probe(p: SpdeProblem, h: CameronMartinPath, eta: float, eps_list: Sequence[float], cfg: EvolveConfig,
              mc: McConfig) -> LdpReport:
    """Tube probabilities ``P(sup_t |u^eps - Psi(h)| <= eta)``, naive and tilted.

    The naive estimator counts hits among ``P`` plain paths (stream 0).
    The tilted estimator (stream 1) drives the solver with
    ``w + h / sqrt(eps)`` and weights each hit by the exact discrete
    likelihood ratio of the unshifted sample.  Zero-hit naive cells get the
    one-sided 95% upper bound ``1 - 0.05**(1/P)`` instead of a point value.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    s_err = mc.index(p)
    skel = skeleton_solve(p, h, cfg)
    P = mc.num_paths
    naive_paths = mc_paths(mc, cfg.steps, p.T, stream=0)
    tilt_paths = mc_paths(mc, cfg.steps, p.T, stream=1)
    rows = []
    for eps in eps_list:
        eps = float(eps)
        pe = p.with_noise_scale(math.sqrt(eps))

        def hit(path):
            try:
                u = integrate_spde(pe, path, cfg)
            except BlowUpError:
                return 0.0
            return float(u.sup_distance(skel, s_err) <= eta)

        naive = np.array(_map(hit, naive_paths, mc.threads))

        def tilted_one(path):
            lr = likelihood_ratio(path, h, eps)
            return hit(girsanov_shift(path, h, eps)) * lr, lr

        tl = np.array(_map(tilted_one, tilt_paths, mc.threads))
        n_mean, n_se = _mean_se(naive)
        t_mean, t_se = _mean_se(tl[:, 0])
        r_mean, r_se = _mean_se(tl[:, 1])
        hits = int(naive.sum())
        upper = 1.0 - 0.05 ** (1.0 / P) if hits == 0 else n_mean
        rows.append((eps, n_mean, n_se, hits, upper, t_mean, t_se, r_mean, r_se))
    cols = list(zip(*rows))
    return LdpReport(*(np.array(c) for c in cols), action=cm_action(h), eta=float(eta), num_paths=P)


@dataclass(frozen=True, eq=False)
class SupportReport:
    """Both empirical directions of the support probe.

    ``distances[i, k]``: ``sup_t |u - Psi(w^n)|`` for path ``i`` and
    ``ns[k]``.  ``conditional[j][d]``: for skeleton ``j`` and threshold
    ``deltas[d]``, a dict with ``accepted``, ``frequency`` and
    ``inconclusive`` (fewer than 10 accepted paths).
    """

    ns: np.ndarray
    distances: np.ndarray = field(repr=False)
    median_distance: np.ndarray = None
    deltas: np.ndarray = None
    eta: float = 0.0
    conditional: list = field(default_factory=list, repr=False)
    unconditional: list = field(default_factory=list)

    @property
    def inconclusive(self) -> bool:
        return any(c["inconclusive"] for row in self.conditional for c in row)


def support_probe(p: SpdeProblem, skeleton_drivers: Sequence[CameronMartinPath], delta, cfg: EvolveConfig,
                  mc: McConfig, eta: float = 0.1, ns: Sequence[int] = (8, 32, 128)) -> SupportReport:
    """Empirical support probe.

    (a) distance from each sampled solution to the skeleton driven by
    its own polygonal path; (b) for each skeleton ``h``, the frequency of
    ``sup_t |u - Psi(h)| <= eta`` among paths with ``max |w - h| < delta``.
    """
    deltas = np.atleast_1d(np.asarray(delta, dtype=float))
    s_err = mc.index(p)
    ns = [int(n) for n in ns]
    paths = mc_paths(mc, cfg.steps, p.T)
    skels = [skeleton_solve(p, h, cfg) for h in skeleton_drivers]

    def one(path):
        try:
            u = integrate_spde(p, path, cfg)
        except BlowUpError:
            return None
        dist = []
        for n in ns:
            hn = polygonalize(path, n).as_cameron_martin(cfg.steps)
            dist.append(u.sup_distance(skeleton_solve(p, hn, cfg), s_err))
        near = [path.sup_distance(h) for h in skeleton_drivers]
        tube = [u.sup_distance(sk, s_err) <= eta for sk in skels]
        return dist, near, tube

    res = [r for r in _map(one, paths, mc.threads) if r is not None]
    dists = np.array([r[0] for r in res])
    cond, uncond = [], []
    for j in range(len(skeleton_drivers)):
        near = np.array([r[1][j] for r in res])
        tube = np.array([r[2][j] for r in res], dtype=float)
        row = []
        for d in deltas:
            acc = near < d
            k = int(acc.sum())
            row.append({"delta": float(d), "accepted": k,
                        "frequency": float(tube[acc].mean()) if k else float("nan"),
                        "inconclusive": k < 10})
        cond.append(row)
        uncond.append(float(tube.mean()))
    return SupportReport(np.array(ns), dists, np.median(dists, axis=0), deltas, float(eta), cond, uncond)


@dataclass(frozen=True, eq=False)
class MalliavinDerivative:
    """``pointwise_theta``: ``data`` is ``D_theta u(t)``; ``directional_h``: ``D_h u(t)``."""

    kind: str
    data: Field
    t: float
    theta: float | None = None
    h: CameronMartinPath | None = None

    def __post_init__(self):
        if self.kind not in ("pointwise_theta", "directional_h"):
            raise ValueError("kind must be 'pointwise_theta' or 'directional_h'")


def _solution_at(p: SpdeProblem, path: BrownianPath, theta: float, cfg: EvolveConfig) -> Field:
    if theta == 0.0:
        return p.u0
    if p.homogeneous:
        return evolution_apply(p, path, 0.0, theta, p.u0, cfg)
    return integrate_spde(p, path, cfg.replace(energy=False)).at(theta)


def malliavin_pointwise(p: SpdeProblem, path: BrownianPath, theta: float, t: float,
                        cfg: EvolveConfig = EvolveConfig()) -> MalliavinDerivative:
    """``D_theta u(t) = U(theta, t) sigma (a_theta u(theta) + f(theta))``, zero for ``theta > t``."""
    if not 0.0 <= t <= p.T or theta < 0.0:
        raise ValueError("need 0 <= theta and 0 <= t <= T")
    if theta > t:
        return MalliavinDerivative("pointwise_theta", Field.zeros(p.grid, p.components), t, theta)
    u_theta = _solution_at(p, path, theta, cfg)
    g = apply_diffusion(p, theta, u_theta, cfg)
    d = evolution_apply(p, path, theta, t, g, cfg)
    return MalliavinDerivative("pointwise_theta", d, t, theta)


def _theta_nodes(path_steps: int, T: float, t: float, stride: int) -> np.ndarray:
    dt = T / path_steps
    j = int(round(t / dt))
    idx = list(range(0, j + 1, stride))
    if idx[-1] != j:
        idx.append(j)
    return np.array(idx)


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    w = np.zeros_like(x, dtype=float)
    if x.size > 1:
        d = np.diff(x)
        w[:-1] += 0.5 * d
        w[1:] += 0.5 * d
    return w


def malliavin_directional(p: SpdeProblem, path: BrownianPath, h: CameronMartinPath, t: float,
                          cfg: EvolveConfig = EvolveConfig(), stride: int = 1) -> MalliavinDerivative:
    """``D_h u(t) = int_0^t D_tau u(t) hdot(tau) dtau`` by the trapezoid rule.

    Nodes are every ``stride``-th step (plus ``t``); ``hdot`` at a node is
    the average of the adjacent step slopes.  Because the evolution
    operators compose exactly, the sum is accumulated in a single forward
    sweep (Horner form) instead of one solve per node.
    """
    drv_steps = cfg.steps
    nodes = _theta_nodes(drv_steps, p.T, t, stride)
    taus = nodes * (p.T / drv_steps)
    hd = h.hdot_at_nodes(drv_steps)[nodes]
    wts = _trapezoid_weights(taus) * hd
    acc = Field.zeros(p.grid, p.components)
    traj = None if p.homogeneous else integrate_spde(p, path, cfg.replace(energy=False, record_every=1))
    u_tau = p.u0
    for k, tau in enumerate(taus):
        if k:
            acc = evolution_apply(p, path, taus[k - 1], tau, acc, cfg)
            if traj is None:
                u_tau = evolution_apply(p, path, taus[k - 1], tau, u_tau, cfg)
            else:
                u_tau = traj.at(tau)
        if wts[k] != 0.0:
            acc = acc + apply_diffusion(p, tau, u_tau, cfg) * wts[k]
    return MalliavinDerivative("directional_h", acc, t, None, h)


def nondegeneracy_check(p: SpdeProblem, path: BrownianPath, x_point: float, t: float,
                        cfg: EvolveConfig = EvolveConfig(), threshold: float = 1e-10,
                        stride: int | None = None) -> tuple[float, bool]:
    """``int_0^t |D_theta u(t)(x)|^2 dtheta`` (trapezoid) and the verdict ``value > threshold``.

    Pointwise values use the trigonometric interpolant; the default
    stride gives about 32 quadrature nodes.
    """
    if stride is None:
        stride = max(1, int(round(t / p.T * cfg.steps / 32)))
    nodes = _theta_nodes(cfg.steps, p.T, t, stride)
    taus = nodes * (p.T / cfg.steps)
    vals = np.empty(taus.size)
    for k, th in enumerate(taus):
        d = malliavin_pointwise(p, path, float(th), t, cfg).data
        vals[k] = float(np.sum(np.abs(evaluate(d, x_point)) ** 2))
    value = float(np.sum(_trapezoid_weights(taus) * vals))
    return value, bool(value > threshold)
