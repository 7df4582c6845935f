"""Separable pseudodifferential symbols and their quantisation.

A symbol is a finite sum ``a(x, xi) = sum_k c_k(x) m_k(xi)`` with
``d' x d'`` matrix coefficients sampled at the nodes and scalar
multipliers sampled at the grid frequencies.  Each term is quantised on
one side:

* ``"left"``  (Kohn-Nirenberg):  ``u -> c_k(x) * idft(m_k * dft(u))``
* ``"right"``:                   ``u -> idft(m_k * dft(c_k(x) u))``

The adjoint of a left term is a right term with conjugated multiplier and
conjugate-transposed coefficient, so adjoints are exact at the discrete
level.  Right terms are what make ``(alpha d/dx + d/dx alpha)/2`` exactly
skew-adjoint.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .grid import Field, Grid1D, sobolev_weight

__all__ = [
    "SymbolTerm",
    "SeparableSymbol",
    "TimeSymbolFamily",
    "OperatorDiagnostics",
    "multiplier",
    "apply_pdo",
    "apply_adjoint",
    "adjoint_symbol",
    "make_transport",
    "make_symmetrized_transport",
    "estimate_conditions",
    "operator_norm",
]


def multiplier(grid: Grid1D, name: str) -> np.ndarray:
    """Named frequency multipliers: ``"1"``, ``"i*xi"``, ``"abs(xi)"``.

    The derivative multiplier is zeroed at the Nyquist mode so that real
    fields stay real; it remains purely imaginary, hence skew.
    """
    xi = grid.frequencies
    key = name.replace(" ", "")
    if key == "1":
        return np.ones_like(xi, dtype=complex)
    if key in ("i*xi", "ixi", "1j*xi"):
        m = 1j * xi
        m[grid.num_points // 2] = 0.0
        return m
    if key == "abs(xi)":
        return np.abs(xi).astype(complex)
    raise ValueError(f"unknown multiplier {name!r}")


def _as_coef(coef, components: int, n: int) -> np.ndarray:
    c = np.asarray(coef, dtype=complex)
    if c.ndim == 0:
        c = np.full(n, c)
    if c.ndim == 1:
        if c.shape[0] != n:
            raise ValueError(f"coefficient samples must have length {n}")
        c = np.einsum("ij,n->ijn", np.eye(components), c)
    if c.shape != (components, components, n):
        raise ValueError(f"coefficient must have shape ({components}, {components}, {n}), got {c.shape}")
    return c


@dataclass(frozen=True, eq=False)
class SymbolTerm:
    coef: np.ndarray  # (d', d', N) node samples
    mult: np.ndarray  # (N,) frequency samples
    side: str = "left"

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        if not (np.all(np.isfinite(self.coef)) and np.all(np.isfinite(self.mult))):
            raise ValueError("symbol samples must be finite")

    @property
    def is_scalar(self) -> bool:
        # coefficient acts as (function) x identity
        c = self.coef
        d = c.shape[0]
        if d == 1:
            return True
        diag = c[np.arange(d), np.arange(d)]
        off = c.copy()
        off[np.arange(d), np.arange(d)] = 0
        return bool(np.all(off == 0) and np.all(diag == diag[0]))


class SeparableSymbol:
    """A finite tensor-sum symbol on a fixed grid.

    Parameters
    ----------
    grid : Grid1D
    terms : sequence of (coef, mult) or (coef, mult, side)
        ``coef`` is a scalar, ``(N,)`` node samples, or ``(d', d', N)``
        matrix samples; ``mult`` is ``(N,)`` frequency samples or a name
        accepted by :func:`multiplier`.
    components : int
        System size ``d'``.
    order : float, optional
        Symbol order ``m``; inferred from the multipliers when omitted.
    """

    def __init__(self, grid: Grid1D, terms: Sequence, components: int = 1, order: float | None = None):
        if len(terms) == 0:
            raise ValueError("a symbol needs at least one term")
        n = grid.num_points
        built = []
        for t in terms:
            if isinstance(t, SymbolTerm):
                built.append(t)
                continue
            coef, mult, *rest = t
            side = rest[0] if rest else "left"
            m = multiplier(grid, mult) if isinstance(mult, str) else np.asarray(mult, dtype=complex)
            if m.shape != (n,):
                raise ValueError(f"multiplier must have shape ({n},)")
            built.append(SymbolTerm(_as_coef(coef, components, n), m, side))
        self.grid = grid
        self.components = components
        self.terms = tuple(built)
        growth = np.max([np.abs(t.mult) for t in self.terms], axis=0)
        xi = np.abs(grid.frequencies)
        if order is None:
            order = 0.0 if np.all(growth[xi > 0] <= growth[0] + 1e-12) else 1.0
        self.order = float(order)
        self.bound = float(np.max(growth / (1.0 + xi) ** self.order))

    def __repr__(self):
        return f"SeparableSymbol(order={self.order}, terms={len(self.terms)}, components={self.components})"

    def __add__(self, other: "SeparableSymbol") -> "SeparableSymbol":
        if other.grid != self.grid or other.components != self.components:
            raise ValueError("cannot add symbols on different grids/systems")
        return SeparableSymbol(self.grid, self.terms + other.terms, self.components,
                               max(self.order, other.order))

    def scaled(self, factor: complex) -> "SeparableSymbol":
        terms = [SymbolTerm(t.coef * factor, t.mult, t.side) for t in self.terms]
        return SeparableSymbol(self.grid, terms, self.components, self.order)

    def spectral_bound(self) -> np.ndarray:
        """Per-frequency bound ``sum_k max_x |c_k(x)| |m_k(xi)|`` on the action of the symbol."""
        out = np.zeros(self.grid.num_points)
        for t in self.terms:
            cmax = np.max(np.linalg.norm(np.moveaxis(t.coef, -1, 0), ord=2, axis=(1, 2)))
            out += cmax * np.abs(t.mult)
        return out

    def _layout(self):
        lay = getattr(self, "_lay", None)
        if lay is None:
            left = [t for t in self.terms if t.side == "left"]
            right = [t for t in self.terms if t.side == "right"]
            lm = np.array([t.mult for t in left])[:, None, :] if left else None
            rm = np.array([t.mult for t in right])[:, None, :] if right else None
            lay = self._lay = (left, right, lm, rm)
        return lay

    def apply_hat(self, uhat: np.ndarray) -> np.ndarray:
        """Spectral action: ``fft(a u)`` from ``uhat = fft(u)``.

        Uses one batched inverse and one batched forward transform
        whatever the number of terms.
        """
        left, right, lm, rm = self._layout()
        rows = []
        if left:
            rows.append(lm * uhat)
        if right:
            rows.append(uhat[None])
        phys = np.fft.ifft(rows[0] if len(rows) == 1 else np.concatenate(rows), axis=-1)
        back = []
        if left:
            acc = _contract(left[0], phys[0])
            for k, t in enumerate(left[1:], 1):
                acc = acc + _contract(t, phys[k])
            back.append(acc)
        if right:
            u = phys[-1]
            back.extend(_contract(t, u) for t in right)
        hats = np.fft.fft(np.stack(back), axis=-1)
        if left:
            out = hats[0]
            if right:
                out = out + np.sum(rm * hats[1:], axis=0)
        else:
            out = np.sum(rm * hats, axis=0)
        return out

    def apply(self, u: np.ndarray, uhat: np.ndarray | None = None) -> np.ndarray:
        """Apply to raw ``(d', N)`` samples; ``uhat = fft(u)`` may be passed in."""
        if uhat is None:
            uhat = np.fft.fft(u, axis=-1)
        return np.fft.ifft(self.apply_hat(uhat), axis=-1)


def _contract(term: SymbolTerm, v: np.ndarray) -> np.ndarray:
    if term.is_scalar:
        return term.coef[0, 0] * v
    return np.einsum("ijn,jn->in", term.coef, v)


def adjoint_symbol(sym: SeparableSymbol) -> SeparableSymbol:
    """Exact discrete ``L^2`` adjoint; left and right terms swap sides."""
    terms = []
    for t in sym.terms:
        coef_h = np.conj(np.transpose(t.coef, (1, 0, 2)))
        terms.append(SymbolTerm(coef_h, np.conj(t.mult), "right" if t.side == "left" else "left"))
    return SeparableSymbol(sym.grid, terms, sym.components, sym.order)


def _dealias_mask(grid: Grid1D) -> np.ndarray:
    return (np.abs(grid.wavenumbers) < grid.num_points / 3).astype(float)


def _check(sym: SeparableSymbol, u: Field):
    if u.grid != sym.grid:
        raise ValueError("field and symbol grids differ")
    if u.components != sym.components:
        raise ValueError(f"symbol acts on {sym.components} components, field has {u.components}")


def apply_pdo(sym: SeparableSymbol, u: Field, dealias: bool = False) -> Field:
    """Quantised action ``a(x, D) u``.

    With ``dealias`` the operator is sandwiched between 2/3-rule spectral
    projections, ``P a P``, which keeps exact adjointness.
    """
    _check(sym, u)
    v = u.values
    if dealias:
        mask = _dealias_mask(sym.grid)
        v = np.fft.ifft(mask * np.fft.fft(v, axis=-1), axis=-1)
        out = sym.apply(v)
        out = np.fft.ifft(mask * np.fft.fft(out, axis=-1), axis=-1)
    else:
        out = sym.apply(v)
    return u.with_values(out)


def apply_adjoint(sym: SeparableSymbol, u: Field, dealias: bool = False) -> Field:
    return apply_pdo(adjoint_symbol(sym), u, dealias)


def _real_samples(grid: Grid1D, values, name: str) -> np.ndarray:
    v = np.asarray(values)
    if np.iscomplexobj(v):
        if np.any(np.abs(v.imag) > 0):
            raise ValueError(f"{name} must be real-valued")
        v = v.real
    v = np.broadcast_to(np.asarray(v, dtype=float), v.shape if v.ndim else (grid.num_points,))
    return np.array(v)


def make_transport(grid: Grid1D, alpha, a0=None) -> SeparableSymbol:
    """Plain first-order operator ``alpha(x) u' + a0(x) u`` (left quantised)."""
    terms = [(_real_samples(grid, alpha, "alpha"), "i*xi", "left")]
    if a0 is not None:
        terms.append((np.broadcast_to(np.asarray(a0, dtype=complex), (grid.num_points,)), "1", "left"))
    return SeparableSymbol(grid, terms, order=1.0)


def make_symmetrized_transport(grid: Grid1D, alpha, a0=None, components: int = 1) -> SeparableSymbol:
    """``a u = (alpha u' + (alpha u)')/2 + a0 u``.

    ``alpha`` holds real node samples (or real symmetric ``(d', d', N)``
    matrices for systems).  With ``a0`` absent the discrete operator is
    exactly skew-adjoint in ``<., .>_0``.
    """
    alpha = _real_samples(grid, alpha, "alpha")
    if alpha.ndim == 3:
        if not np.allclose(alpha, np.transpose(alpha, (1, 0, 2))):
            raise ValueError("matrix alpha must be symmetric")
        components = alpha.shape[0]
    half = 0.5 * alpha
    terms = [(half, "i*xi", "left"), (half, "i*xi", "right")]
    if a0 is not None:
        a0 = np.asarray(a0, dtype=complex)
        if a0.ndim == 0:
            a0 = np.full(grid.num_points, a0)
        terms.append((a0, "1", "left"))
    return SeparableSymbol(grid, terms, components=components, order=1.0)


class TimeSymbolFamily:
    """A time-dependent symbol ``t -> a_t``.

    Build with :meth:`constant`, :meth:`from_callable` or
    :meth:`from_table` (piecewise constant: the sample at the last table
    time not exceeding ``t``).
    """

    def __init__(self, evaluator: Callable[[float], SeparableSymbol], time_grid, constant: bool = False):
        self._evaluator = evaluator
        self.time_grid = np.asarray(time_grid, dtype=float)
        self.is_constant = constant
        self._cache: dict[float, SeparableSymbol] = {}
        first = self.at(float(self.time_grid[0]))
        self.grid = first.grid
        self.components = first.components

    @classmethod
    def constant(cls, sym: SeparableSymbol, T: float = 1.0) -> "TimeSymbolFamily":
        return cls(lambda t: sym, [0.0, T], constant=True)

    @classmethod
    def from_callable(cls, fn: Callable[[float], SeparableSymbol], time_grid) -> "TimeSymbolFamily":
        return cls(fn, time_grid)

    @classmethod
    def from_table(cls, times, symbols: Sequence[SeparableSymbol]) -> "TimeSymbolFamily":
        times = np.asarray(times, dtype=float)
        if len(times) != len(symbols) or np.any(np.diff(times) <= 0):
            raise ValueError("table times must be strictly increasing, one per symbol")
        syms = list(symbols)

        def lookup(t):
            i = int(np.searchsorted(times, t, side="right")) - 1
            return syms[min(max(i, 0), len(syms) - 1)]
        return cls(lookup, times)

    def at(self, t: float) -> SeparableSymbol:
        if self.is_constant:
            if not self._cache:
                self._cache[0.0] = self._evaluator(t)
            return self._cache[0.0]
        t = float(t)
        sym = self._cache.get(t)
        if sym is None:
            if len(self._cache) > 8192:
                self._cache.clear()
            sym = self._cache[t] = self._evaluator(t)
        return sym

    def max_adjacent_deviation(self) -> float:
        """Largest sup-norm change of coefficients between adjacent sample times."""
        dev = 0.0
        prev = self.at(self.time_grid[0])
        for t in self.time_grid[1:]:
            cur = self.at(t)
            if len(cur.terms) != len(prev.terms):
                return np.inf
            weight = (1.0 + np.abs(self.grid.frequencies)) ** max(cur.order, prev.order)
            for p, c in zip(prev.terms, cur.terms):
                # sup over (x, xi) of the order-normalised symbol difference
                diff = (np.einsum("ijn,k->ijnk", c.coef, c.mult / weight)
                        - np.einsum("ijn,k->ijnk", p.coef, p.mult / weight))
                dev = max(dev, float(np.max(np.abs(diff))))
            prev = cur
        return float(dev)

    def check_continuity(self, expected_modulus: float) -> bool:
        """Continuity in time: adjacent deviations below ``10 * expected_modulus``."""
        return self.max_adjacent_deviation() <= 10.0 * expected_modulus

    def spectral_bound(self, times=None) -> np.ndarray:
        times = self.time_grid if times is None else times
        return np.max([self.at(t).spectral_bound() for t in times], axis=0)


@dataclass(frozen=True)
class OperatorDiagnostics:
    """Estimated ``H^s -> H^s`` norms of ``A``, ``B``, ``L`` and ``M``."""

    norm_A: float
    norm_B: float
    norm_L: float
    norm_M: float
    s: float
    trials: int
    iterations: int

    def verdict(self, threshold: float) -> bool:
        return max(self.norm_A, self.norm_B, self.norm_L, self.norm_M) <= threshold

    def as_dict(self) -> dict:
        return dict(norm_A=self.norm_A, norm_B=self.norm_B, norm_L=self.norm_L,
                    norm_M=self.norm_M, s=self.s, trials=self.trials, iterations=self.iterations)


def operator_norm(op: Callable[[np.ndarray], np.ndarray], op_adj: Callable[[np.ndarray], np.ndarray],
                  grid: Grid1D, components: int, s: float = 0.0, trials: int = 8,
                  iterations: int = 64, tol: float = 1e-6, rng=None) -> float:
    """Randomised power iteration for ``||T||_{H^s -> H^s}``.

    Works with ``G = Lambda^s T Lambda^-s`` in ``L^2`` and iterates
    ``G* G``; returns the square root of the best Rayleigh quotient over
    ``trials`` restarts, or ``inf`` if the iteration diverges.
    """
    rng = np.random.default_rng(rng)
    lam = sobolev_weight(grid, s / 2.0)

    def G(v):
        return np.fft.ifft(lam * np.fft.fft(op(np.fft.ifft(np.fft.fft(v, axis=-1) / lam, axis=-1)), axis=-1), axis=-1)

    def Gh(v):
        return np.fft.ifft(np.fft.fft(op_adj(np.fft.ifft(lam * np.fft.fft(v, axis=-1), axis=-1)), axis=-1) / lam, axis=-1)

    best = 0.0
    shape = (components, grid.num_points)
    for _ in range(trials):
        v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        v /= np.linalg.norm(v)
        rq_old = 0.0
        for _ in range(iterations):
            w = Gh(G(v))
            rq = float(np.real(np.vdot(v, w)))
            nw = np.linalg.norm(w)
            if not np.isfinite(nw):
                return np.inf
            if nw == 0.0:
                rq = 0.0
                break
            v = w / nw
            if abs(rq - rq_old) <= tol * abs(rq):
                break
            rq_old = rq
        best = max(best, rq)
    return float(np.sqrt(max(best, 0.0)))


class _Sandwiched:
    """``P a P`` for a spectral projection ``P``."""

    def __init__(self, sym: SeparableSymbol, mask: np.ndarray):
        self.sym, self.mask = sym, mask

    def apply(self, v):
        v = np.fft.ifft(self.mask * np.fft.fft(v, axis=-1), axis=-1)
        return np.fft.ifft(self.mask * np.fft.fft(self.sym.apply(v), axis=-1), axis=-1)


def estimate_conditions(fam_a: TimeSymbolFamily | None, fam_b: TimeSymbolFamily | None, s: float = 0.0,
                        trials: int = 8, iterations: int = 64, tol: float = 1e-6,
                        times=None, seed: int = 0, dealias: bool = False) -> OperatorDiagnostics:
    """Estimate the boundedness constants of ``A``, ``B``, ``L`` and ``M``.

    ``A = a + a*``, ``B = b + b*``, ``L = A a + a* A`` and
    ``M = L a + a* L`` (all self-adjoint), maximised over sample times.

    With ``dealias`` every symbol is replaced by ``P a P`` (2/3 rule).
    Without it, products that alias into the Nyquist mode make the
    commutator of a non-symmetrised transport grow like ``N``, although
    on the resolved modes it is the bounded multiplication by ``-alpha'``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if fam_a is None and fam_b is None:
        raise ValueError("need at least one symbol family")
    ref = fam_a if fam_a is not None else fam_b
    grid, comps = ref.grid, ref.components
    if times is None:
        const = all(f is None or f.is_constant for f in (fam_a, fam_b))
        times = [0.0] if const else ref.time_grid
    rng = np.random.default_rng(seed)
    norms = {"A": 0.0, "B": 0.0, "L": 0.0, "M": 0.0}
    mask = _dealias_mask(grid) if dealias else None

    def action(sym):
        if mask is None:
            return sym
        return _Sandwiched(sym, mask)

    for t in times:
        ops = {}
        if fam_a is not None:
            a = action(fam_a.at(t))
            a_adj = action(adjoint_symbol(fam_a.at(t)))

            def A(v):
                return a.apply(v) + a_adj.apply(v)

            def L(v):
                return A(a.apply(v)) + a_adj.apply(A(v))

            def M(v):
                return L(a.apply(v)) + a_adj.apply(L(v))

            ops = {"A": A, "L": L, "M": M}
        if fam_b is not None:
            b = action(fam_b.at(t))
            b_adj = action(adjoint_symbol(fam_b.at(t)))
            ops["B"] = lambda v: b.apply(v) + b_adj.apply(v)
        for key, op in ops.items():
            # all four operators are self-adjoint
            est = operator_norm(op, op, grid, comps, s, trials, iterations, tol, rng)
            norms[key] = max(norms[key], est)
    return OperatorDiagnostics(norms["A"], norms["B"], norms["L"], norms["M"], float(s), trials, iterations)
