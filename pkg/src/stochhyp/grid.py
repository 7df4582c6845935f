"""Periodic 1-D grids, fields and spectral Sobolev machinery.

The whole line is replaced by a torus of length ``L`` sampled at ``N``
equispaced nodes.  Fourier coefficients use the normalised-forward
convention

.. math::

    \\hat u_k = \\frac{1}{N} \\sum_j u_j e^{-i \\xi_k x_j},

so that the coefficient of a constant field is that constant, and the
Sobolev norm

.. math::

    |u|_s^2 = \\sum_k (1 + |\\xi_k|^2)^s |\\hat u_k|^2

is exactly computable.  Frequencies are kept in native FFT ordering.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid1D",
    "Field",
    "Mollifier",
    "dft",
    "idft",
    "sobolev_norm",
    "sobolev_inner",
    "sobolev_weight",
    "mollify",
    "mollifier_gap",
    "gaussian_profile",
    "evaluate",
]


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid on ``[0, L)``.

    Parameters
    ----------
    num_points : int
        Number of nodes ``N``; a power of two, at least 8.
    length : float
        Period ``L`` (default ``2*pi``).
    """

    num_points: int
    length: float = 2 * np.pi

    def __post_init__(self):
        n = int(self.num_points)
        if n != self.num_points or n < 8 or n & (n - 1):
            raise ValueError(f"num_points must be a power of two >= 8, got {self.num_points}")
        if not (np.isfinite(self.length) and self.length > 0):
            raise ValueError(f"length must be positive and finite, got {self.length}")
        object.__setattr__(self, "num_points", n)
        object.__setattr__(self, "length", float(self.length))

    @property
    def N(self) -> int:
        return self.num_points

    @property
    def L(self) -> float:
        return self.length

    @property
    def dx(self) -> float:
        return self.length / self.num_points

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.num_points) * self.dx

    @property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers ``k`` in native FFT order (``-N/2`` included)."""
        return np.fft.fftfreq(self.num_points, d=1.0 / self.num_points)

    @property
    def frequencies(self) -> np.ndarray:
        """Angular frequencies ``xi_k = 2*pi*k/L``."""
        return 2 * np.pi * self.wavenumbers / self.length

    @property
    def xi_max(self) -> float:
        return np.pi * self.num_points / self.length

    def periodic(self, x):
        """Reduce positions modulo ``L`` into ``[0, L)``."""
        return np.mod(x, self.length)


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples of a ``d'``-component field on a grid.

    ``values`` has shape ``(components, N)``.  One-dimensional input is
    promoted to a single component.  The stored array is read-only.
    """

    grid: Grid1D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[1] != self.grid.num_points:
            raise ValueError(
                f"field values must have shape (components, {self.grid.num_points}), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid1D, *funcs) -> "Field":
        """Sample one callable per component at the grid nodes."""
        x = grid.nodes
        return cls(grid, np.array([np.broadcast_to(f(x), x.shape) for f in funcs], dtype=complex))

    @classmethod
    def zeros(cls, grid: Grid1D, components: int = 1) -> "Field":
        return cls(grid, np.zeros((components, grid.num_points), dtype=complex))

    @property
    def components(self) -> int:
        return self.values.shape[0]

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def check_compatible(self, other: "Field"):
        if self.grid != other.grid:
            raise ValueError("fields live on different grids")
        if self.components != other.components:
            raise ValueError("fields have different component counts")

    def __add__(self, other: "Field") -> "Field":
        self.check_compatible(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        self.check_compatible(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar) -> "Field":
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return self.with_values(-self.values)


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, Field) else np.asarray(u)


def dft(u) -> np.ndarray:
    """Normalised forward DFT along the node axis (``fft / N``)."""
    v = _values(u)
    if not np.all(np.isfinite(v)):
        raise ValueError("dft input must be finite")
    return np.fft.fft(v, axis=-1) / v.shape[-1]


def idft(uhat) -> np.ndarray:
    """Inverse of :func:`dft`."""
    uhat = np.asarray(uhat)
    return np.fft.ifft(uhat, axis=-1) * uhat.shape[-1]


def sobolev_weight(grid: Grid1D, s: float) -> np.ndarray:
    """Per-mode weights ``(1 + xi_k^2)^s``."""
    if not np.isfinite(s):
        raise ValueError("Sobolev index must be finite")
    return (1.0 + grid.frequencies ** 2) ** s


def sobolev_inner(u: Field, v: Field, s: float) -> complex:
    """``<u, v>_s = sum_k (1+xi_k^2)^s uhat_k conj(vhat_k)`` summed over components."""
    u.check_compatible(v)
    w = sobolev_weight(u.grid, s)
    return complex(np.sum(w * dft(u) * np.conj(dft(v))))


def sobolev_norm(u: Field, s: float) -> float:
    """Spectral ``H^s`` norm of a field."""
    w = sobolev_weight(u.grid, s)
    return float(np.sqrt(np.sum(w * np.abs(dft(u)) ** 2)))


def norm_from_hat(uhat: np.ndarray, weight: np.ndarray) -> float:
    # shared by the integrators, which keep coefficients around
    return float(np.sqrt(np.sum(weight * (uhat.real ** 2 + uhat.imag ** 2))))


def evaluate(u: Field, x) -> np.ndarray:
    """Trigonometric interpolant of ``u`` at arbitrary points.

    Returns shape ``(components,) + shape(x)``; the Nyquist mode is split
    symmetrically so real fields interpolate to real values.
    """
    grid = u.grid
    n = grid.num_points
    c = dft(u)
    xi = grid.frequencies
    x = np.asarray(x, dtype=float)
    e = np.exp(1j * np.multiply.outer(x, xi))
    ny = n // 2
    # replace c_ny e^{i xi_ny x} by c_ny cos(xi_ny x)
    e[..., ny] = np.cos(xi[ny] * x)
    return np.tensordot(c, e, axes=([1], [-1]))


def gaussian_profile(z):
    """Fourier profile ``exp(-z^2/2)`` of the Gaussian mollifier kernel."""
    return np.exp(-0.5 * np.asarray(z, dtype=float) ** 2)


@dataclass(frozen=True, eq=False)
class Mollifier:
    """Friedrichs mollifier ``J_eps`` realised as a spectral multiplier.

    The kernel is a unit-mass Gaussian, so the multiplier is
    ``exp(-(eps*xi)^2/2)``: equal to 1 at ``xi = 0``, positive and
    nonincreasing in ``|xi|``.
    """

    epsilon: float
    grid: Grid1D

    def __post_init__(self):
        if not (self.epsilon > 0 and np.isfinite(self.epsilon)):
            raise ValueError("mollifier epsilon must be positive")

    @property
    def multiplier_profile(self) -> np.ndarray:
        return gaussian_profile(self.epsilon * self.grid.frequencies)


def mollify(u: Field, moll: Mollifier) -> Field:
    if moll.grid != u.grid:
        raise ValueError("mollifier and field grids differ")
    return u.with_values(idft(moll.multiplier_profile * dft(u)))


def mollifier_gap(eps: float, eps2: float, grid: Grid1D) -> float:
    """Smallest ``k`` with ``|(J_eps - J_eps2) v|_s <= k |v|_{s+1}`` on the grid.

    The bound is attained, mode by mode, by a single Fourier mode at the
    maximising frequency, so the constant is sharp for every ``s``.
    """
    if eps <= 0 or eps2 <= 0:
        raise ValueError("mollifier parameters must be positive")
    xi = grid.frequencies
    gap = np.abs(gaussian_profile(eps * xi) - gaussian_profile(eps2 * xi))
    return float(np.max(gap / np.sqrt(1.0 + xi ** 2)))
