"""Brownian drivers, polygonal approximations and Cameron-Martin paths.

Random numbers come from counter-based Philox streams keyed by
``(seed, path_index)``: a path is a pure function of those two integers,
so Monte Carlo results do not depend on how paths are scheduled.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BrownianPath",
    "PolygonalPath",
    "CameronMartinPath",
    "path_generator",
    "sample_brownian",
    "polygonalize",
    "cm_action",
    "girsanov_shift",
    "likelihood_ratio",
]


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """Philox generator for substream ``path_index`` of ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2 ** 64 - 1), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.Philox(ss))


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Samples ``w(t_i)`` at ``t_i = i T / M`` with ``w(0) = 0``."""

    horizon: float
    values: np.ndarray = field(repr=False)
    seed: int | None = None
    path_index: int | None = None

    def __post_init__(self):
        v = _readonly(self.values)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("a path needs at least two samples")
        if v[0] != 0.0:
            raise ValueError("Brownian paths start at 0")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        object.__setattr__(self, "values", v)

    @property
    def steps(self) -> int:
        return self.values.size - 1

    @property
    def T(self) -> float:
        return self.horizon

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def fingerprint(self) -> str:
        h = hashlib.sha256(np.float64(self.horizon).tobytes())
        h.update(np.ascontiguousarray(self.values).tobytes())
        return h.hexdigest()[:16]

    def coarsen(self, steps: int) -> "BrownianPath":
        """Subsample onto ``steps`` intervals (``steps`` must divide ``M``)."""
        if self.steps % steps:
            raise ValueError(f"{steps} does not divide {self.steps}")
        return BrownianPath(self.horizon, self.values[:: self.steps // steps], self.seed, self.path_index)

    def scaled(self, factor: float) -> "BrownianPath":
        return BrownianPath(self.horizon, factor * self.values, self.seed, self.path_index)

    def sup_distance(self, h: "CameronMartinPath") -> float:
        """``max_i |w(t_i) - h(t_i)|`` on the common grid."""
        return float(np.max(np.abs(self.values - h.on_grid(self.steps))))


def sample_brownian(M: int, T: float, seed: int, path_index: int = 0) -> BrownianPath:
    """Reproducible Brownian path with ``M`` independent ``N(0, T/M)`` increments."""
    if M < 1 or not T > 0:
        raise ValueError("need M >= 1 and T > 0")
    z = path_generator(seed, path_index).standard_normal(M)
    w = np.concatenate([[0.0], np.cumsum(z * np.sqrt(T / M))])
    return BrownianPath(float(T), w, int(seed), int(path_index))


@dataclass(frozen=True, eq=False)
class PolygonalPath:
    """Piecewise-linear interpolant of a path through ``n + 1`` breakpoints."""

    horizon: float
    breakpoints: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", _readonly(self.breakpoints))

    @property
    def n(self) -> int:
        return self.breakpoints.size - 1

    @property
    def segment_length(self) -> float:
        return self.horizon / self.n

    @property
    def slopes(self) -> np.ndarray:
        """Constant slope of ``w^n`` on each segment."""
        return np.diff(self.breakpoints) / self.segment_length

    def __call__(self, t):
        tb = np.linspace(0.0, self.horizon, self.n + 1)
        return np.interp(t, tb, self.breakpoints)

    def on_grid(self, steps: int) -> np.ndarray:
        """Values at ``i T / steps``; ``n`` must divide ``steps``."""
        if steps % self.n:
            raise ValueError(f"segment count {self.n} does not divide {steps}")
        return self(np.linspace(0.0, self.horizon, steps + 1))

    def energy(self) -> float:
        """``int_0^T |dw^n/dt|^2 dt`` evaluated exactly segment by segment."""
        return float(np.sum(np.diff(self.breakpoints) ** 2) / self.segment_length)

    def as_path(self, steps: int) -> BrownianPath:
        return BrownianPath(self.horizon, self.on_grid(steps))

    def as_cameron_martin(self, steps: int) -> "CameronMartinPath":
        return CameronMartinPath.from_values(self.horizon, self.on_grid(steps))


def polygonalize(path: BrownianPath, n: int) -> PolygonalPath:
    """Polygonal approximation ``w^n`` with breakpoints at ``i T / n``."""
    if n < 1 or path.steps % n:
        raise ValueError(f"n={n} must divide the path resolution {path.steps}")
    return PolygonalPath(path.horizon, path.values[:: path.steps // n])


@dataclass(frozen=True, eq=False)
class CameronMartinPath:
    """A driver ``h`` with ``h(0) = 0`` and square-integrable derivative.

    ``hdot`` holds one slope per time step, constant on ``[t_i, t_{i+1})``,
    so ``h`` itself is recovered exactly by cumulative summation.
    """

    horizon: float
    hdot: np.ndarray = field(repr=False)

    def __post_init__(self):
        hd = _readonly(self.hdot)
        if hd.ndim != 1 or hd.size < 1 or not np.all(np.isfinite(hd)):
            raise ValueError("hdot must be a finite 1-D array")
        object.__setattr__(self, "hdot", hd)

    @classmethod
    def zero(cls, T: float, steps: int) -> "CameronMartinPath":
        return cls(T, np.zeros(steps))

    @classmethod
    def from_values(cls, T: float, values) -> "CameronMartinPath":
        values = np.asarray(values, dtype=float)
        if abs(values[0]) > 0:
            raise ValueError("Cameron-Martin paths start at 0")
        return cls(T, np.diff(values) / (T / (values.size - 1)))

    @classmethod
    def from_function(cls, h, T: float, steps: int) -> "CameronMartinPath":
        """Exact step averages of ``h'`` from a callable ``h`` with ``h(0) = 0``."""
        t = np.linspace(0.0, T, steps + 1)
        v = np.asarray(h(t), dtype=float)
        return cls.from_values(T, v - v[0])

    @property
    def steps(self) -> int:
        return self.hdot.size

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.hdot) * self.dt])

    def on_grid(self, steps: int) -> np.ndarray:
        if steps % self.steps == 0:
            t = np.linspace(0.0, self.horizon, steps + 1)
            return np.interp(t, np.linspace(0.0, self.horizon, self.steps + 1), self.values)
        if self.steps % steps == 0:
            return self.values[:: self.steps // steps]
        raise ValueError(f"incompatible grids: {self.steps} vs {steps}")

    def hdot_on_grid(self, steps: int) -> np.ndarray:
        """Per-step slopes on a grid of ``steps`` intervals."""
        if steps % self.steps == 0:
            return np.repeat(self.hdot, steps // self.steps)
        return np.diff(self.on_grid(steps)) / (self.horizon / steps)

    def hdot_at_nodes(self, steps: int | None = None) -> np.ndarray:
        """Slopes at grid nodes: average of the neighbouring steps."""
        hd = self.hdot if steps is None else self.hdot_on_grid(steps)
        return np.concatenate([[hd[0]], 0.5 * (hd[1:] + hd[:-1]), [hd[-1]]])

    def polygonal(self, n: int) -> "CameronMartinPath":
        """Polygonal approximation ``h_n``, kept on the same step grid."""
        poly = PolygonalPath(self.horizon, self.on_grid(n))
        return poly.as_cameron_martin(self.steps)

    def __add__(self, other: "CameronMartinPath") -> "CameronMartinPath":
        return CameronMartinPath(self.horizon, self.hdot + other.hdot)

    def __mul__(self, c: float) -> "CameronMartinPath":
        return CameronMartinPath(self.horizon, c * self.hdot)

    __rmul__ = __mul__


def cm_action(h: CameronMartinPath) -> float:
    """Action ``(1/2) int_0^T |h'(t)|^2 dt``, exact for piecewise-constant slopes."""
    return float(0.5 * np.sum(h.hdot ** 2) * h.dt)


def girsanov_shift(path: BrownianPath, h: CameronMartinPath, eps: float) -> BrownianPath:
    """Shifted path ``w(t_i) + h(t_i)/sqrt(eps)``.

    Under the law of the shifted path, ``sqrt(eps) w_shifted`` is
    ``sqrt(eps) w + h``; use :func:`likelihood_ratio` to reweight.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if abs(h.horizon - path.horizon) > 1e-12 * path.horizon:
        raise ValueError("horizons differ")
    return BrownianPath(path.horizon, path.values + h.on_grid(path.steps) / np.sqrt(eps),
                        path.seed, path.path_index)


def likelihood_ratio(path: BrownianPath, h: CameronMartinPath, eps: float) -> float:
    """Discrete density of the original law w.r.t. the shifted one.

    ``path`` is the *unshifted* sample; the ratio is
    ``exp(-sum hdot dw / sqrt(eps) - sum hdot^2 dt / (2 eps))`` and has
    unit mean over unshifted samples.
    """
    hd = h.hdot_on_grid(path.steps)
    return float(np.exp(-np.sum(hd * path.increments) / np.sqrt(eps)
                        - 0.5 * np.sum(hd ** 2) * path.dt / eps))
