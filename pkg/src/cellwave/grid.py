"""Sampled functions on uniform dyadic grids.

A :class:`GridFunction` stores midpoint samples of a real function on an
axis-aligned box with spacing ``h = 2**-J``.  Samples are read as cell
values, so dyadic rescaling maps cells onto cells without interpolation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    GRID_TOO_COARSE,
    NON_DYADIC,
    NON_FINITE,
    USE_SUP_NORM,
    CellwaveError,
)

HOELDER_SEED = 0x5EED
FULL_SCAN_LIMIT = 2**12
RANDOM_PAIRS = 2**16


# ---------------------------------------------------------------------------
# small value types


@dataclass(frozen=True)
class DyadicCube:
    """Cube of side ``2**-nu``.

    With ``anchor="center"`` the cube is centred at ``2**-nu * m``; with
    ``anchor="corner"`` it is ``2**-nu * (m + [0, 1]^n)``, the usual dyadic
    tiling cell used by Whitney decompositions and Haar systems.
    """

    nu: int
    m: tuple[int, ...]
    anchor: str = "center"

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(int(v) for v in self.m))
        if self.anchor not in ("center", "corner"):
            raise CellwaveError(f"unknown cube anchor {self.anchor!r}")

    @property
    def n(self) -> int:
        return len(self.m)

    @property
    def side(self) -> float:
        return 2.0 ** (-self.nu)

    @property
    def center(self) -> np.ndarray:
        m = np.asarray(self.m, dtype=float)
        if self.anchor == "corner":
            m = m + 0.5
        return m * self.side

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.side / 2

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.side / 2

    @property
    def diam(self) -> float:
        return math.sqrt(self.n) * self.side

    def contains(self, points: np.ndarray, d: float = 1.0, tol: float = 1e-12) -> np.ndarray:
        """Membership of ``points`` (shape ``(..., n)``) in the closed cube ``d*Q``."""
        half = d * self.side / 2 + tol
        return np.all(np.abs(np.asarray(points) - self.center) <= half, axis=-1)


def _as_number(x):
    if isinstance(x, (Fraction, int)):
        return x
    if isinstance(x, str):
        return Fraction(x)
    return float(x)


@dataclass(frozen=True)
class SpaceParams:
    """Smoothness ``s``, integrability ``p``, fine index ``q`` and dimension ``n``.

    Fractions are kept exact so that criticality decisions downstream do not
    depend on floating-point noise.
    """

    s: float | Fraction
    p: float | Fraction
    q: float | Fraction
    n: int

    def __post_init__(self):
        for name in ("s", "p", "q"):
            object.__setattr__(self, name, _as_number(getattr(self, name)))
        if int(self.n) != self.n or self.n < 1:
            raise CellwaveError("dimension n must be a positive integer")
        object.__setattr__(self, "n", int(self.n))
        if not float(self.p) >= 1:
            raise CellwaveError("p must satisfy p >= 1")
        if not float(self.q) > 0:
            raise CellwaveError("q must be positive")

    @property
    def sigma_p(self) -> float:
        return self.n * max(1.0 / float(self.p) - 1.0, 0.0)

    @property
    def sigma_pq(self) -> float:
        return self.n * max(1.0 / min(float(self.p), float(self.q)) - 1.0, 0.0)

    def with_s(self, s) -> "SpaceParams":
        return SpaceParams(s, self.p, self.q, self.n)

    def as_floats(self) -> tuple[float, float, float]:
        return float(self.s), float(self.p), float(self.q)


# ---------------------------------------------------------------------------
# grid functions


class GridFunction:
    """Midpoint samples on the box ``[lower, upper]`` at spacing ``2**-J``."""

    __slots__ = ("lower", "upper", "J", "values")

    def __init__(self, lower: Sequence[float], upper: Sequence[float], J: int,
                 values, check_finite: bool = True):
        self.lower = tuple(float(v) for v in lower)
        self.upper = tuple(float(v) for v in upper)
        if len(self.lower) != len(self.upper):
            raise CellwaveError("bbox corners differ in dimension")
        self.J = int(J)
        dims = grid_dims(self.lower, self.upper, self.J)
        arr = np.array(values, dtype=float)
        if arr.size != int(np.prod(dims, dtype=np.int64)):
            raise CellwaveError(
                f"sample count {arr.size} does not match grid dims {list(dims)}")
        arr = arr.reshape(dims)
        if check_finite and not np.all(np.isfinite(arr)):
            raise CellwaveError("non-finite sample")
        arr.setflags(write=False)
        self.values = arr

    # geometry -----------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.lower)

    @property
    def h(self) -> float:
        return 2.0 ** (-self.J)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    def axis(self, i: int) -> np.ndarray:
        return self.lower[i] + (np.arange(self.dims[i]) + 0.5) * self.h

    def axes(self) -> list[np.ndarray]:
        return [self.axis(i) for i in range(self.n)]

    def mesh(self) -> list[np.ndarray]:
        if self.n == 0:
            return []
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self) -> np.ndarray:
        """All midpoints as an array of shape ``(N, n)`` in row-major order."""
        return np.stack([c.ravel() for c in self.mesh()], axis=-1) if self.n else np.zeros((1, 0))

    def same_grid(self, other: "GridFunction") -> bool:
        return (self.lower == other.lower and self.upper == other.upper
                and self.J == other.J)

    # constructors -------------------------------------------------------
    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.lower, self.upper, self.J, values)

    @classmethod
    def zeros(cls, lower, upper, J) -> "GridFunction":
        return cls(lower, upper, J, np.zeros(grid_dims(lower, upper, J)))

    @classmethod
    def from_function(cls, fn: Callable[..., np.ndarray], lower, upper, J) -> "GridFunction":
        """Sample ``fn(x_1, ..., x_n)`` (broadcast over mesh arrays) at midpoints."""
        shell = cls.zeros(lower, upper, J)
        vals = np.broadcast_to(np.asarray(fn(*shell.mesh()), dtype=float), shell.dims)
        return shell.with_values(vals)

    # arithmetic ---------------------------------------------------------
    def _check(self, other):
        if isinstance(other, GridFunction):
            if not self.same_grid(other):
                raise CellwaveError("grid mismatch")
            return other.values
        return other

    def __add__(self, other):
        return self.with_values(self.values + self._check(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._check(other))

    def __neg__(self):
        return self.with_values(-self.values)

    def __mul__(self, other):
        return self.with_values(self.values * self._check(other))

    __rmul__ = __mul__

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def __repr__(self) -> str:
        return f"GridFunction(n={self.n}, J={self.J}, bbox={self.lower}..{self.upper}, dims={self.dims})"


def grid_dims(lower, upper, J) -> tuple[int, ...]:
    h = 2.0 ** (-int(J))
    dims = []
    for lo, hi in zip(lower, upper):
        cells = (float(hi) - float(lo)) / h
        k = int(round(cells))
        if k < 1 or abs(cells - k) > 1e-9 * max(1.0, cells):
            raise CellwaveError(f"box side {hi - lo} is not a multiple of 2^-{J}")
        dims.append(k)
    return tuple(dims)


def coarsen(f: GridFunction, levels: int = 1) -> GridFunction:
    """Cell averages on the grid ``levels`` steps coarser."""
    vals = f.values
    for _ in range(levels):
        for ax in range(f.n):
            if vals.shape[ax] % 2:
                raise CellwaveError("cannot coarsen an odd number of cells")
            shape = vals.shape[:ax] + (vals.shape[ax] // 2, 2) + vals.shape[ax + 1:]
            vals = vals.reshape(shape).mean(axis=ax + 1)
    return GridFunction(f.lower, f.upper, f.J - levels, vals)


def rescale(f: GridFunction, k: int) -> GridFunction:
    """The function ``x -> f(2**-k x)``, i.e. the same samples on the box scaled by ``2**k``."""
    factor = 2.0 ** k
    return GridFunction([v * factor for v in f.lower], [v * factor for v in f.upper],
                        f.J - k, f.values)


# ---------------------------------------------------------------------------
# quadrature


def _weight_array(f: GridFunction, weight) -> np.ndarray | None:
    if weight is None:
        return None
    if isinstance(weight, GridFunction):
        return f._check(weight)
    if callable(weight):
        return np.broadcast_to(np.asarray(weight(*f.mesh()), dtype=float), f.dims)
    return np.broadcast_to(np.asarray(weight, dtype=float), f.dims)


def integrate_lp(f: GridFunction, p: float, weight=None) -> float:
    """Midpoint rule for ``(sum w |f|^p h^n)^(1/p)``; ``p = inf`` gives the max."""
    p = float(p)
    if not p >= 1:
        raise CellwaveError("p must satisfy p >= 1")
    vals = f.values
    w = _weight_array(f, weight)
    if not np.all(np.isfinite(vals)) or (w is not None and not np.all(np.isfinite(w))):
        raise CellwaveError(NON_FINITE)
    a = np.abs(vals)
    if math.isinf(p):
        if w is not None:
            a = a * w
        return float(a.max()) if a.size else 0.0
    integrand = a ** p
    if w is not None:
        integrand = integrand * w
    total = float(np.sum(integrand)) * f.cell_volume
    return total ** (1.0 / p)


# ---------------------------------------------------------------------------
# finite differences


def _d1(v: np.ndarray, axis: int, h: float) -> np.ndarray:
    v = np.moveaxis(v, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
    out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    return np.moveaxis(out, 0, axis)


def _d2(v: np.ndarray, axis: int, h: float) -> np.ndarray:
    v = np.moveaxis(v, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
    if v.shape[0] >= 4:
        out[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h**2
        out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h**2
    else:
        out[0] = out[1]
        out[-1] = out[1]
    return np.moveaxis(out, 0, axis)


def finite_diff(f: GridFunction, alpha: Sequence[int]) -> GridFunction:
    """``D^alpha f`` by second-order differences, one-sided at the box edges."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != f.n or any(a < 0 for a in alpha) or sum(alpha) < 1:
        raise CellwaveError("alpha must be a nonzero multi-index of length n")
    vals = f.values.astype(float)
    for ax, order in enumerate(alpha):
        if order == 0:
            continue
        if f.dims[ax] < 3:
            raise CellwaveError(GRID_TOO_COARSE)
        for _ in range(order // 2):
            vals = _d2(vals, ax, f.h)
        if order % 2:
            vals = _d1(vals, ax, f.h)
    return f.with_values(vals)


def multi_indices(n: int, order: int, axes: Iterable[int] | None = None) -> list[tuple[int, ...]]:
    """All multi-indices of exact total ``order`` supported on ``axes``."""
    axes = list(range(n)) if axes is None else list(axes)
    out = []
    for combo in itertools.combinations_with_replacement(axes, order):
        a = [0] * n
        for ax in combo:
            a[ax] += 1
        out.append(tuple(a))
    return sorted(set(out), reverse=True)


# ---------------------------------------------------------------------------
# Hoelder norms


def _pair_lipschitz(vals: np.ndarray, pts: np.ndarray, exponent: float, cutoff: float,
                    h: float, seed: int) -> float:
    """Discrete ``sup |g(x)-g(y)| / |x-y|^exponent`` over pairs within ``cutoff``."""
    g = vals.ravel()
    npts = g.size
    best = 0.0
    if npts < 2:
        return 0.0
    if npts < FULL_SCAN_LIMIT:
        chunk = max(1, 2**20 // npts)
        for start in range(0, npts, chunk):
            p0 = pts[start:start + chunk]
            dist = np.sqrt(((p0[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
            mask = (dist > 0) & (dist <= cutoff)
            if not mask.any():
                continue
            diff = np.abs(g[start:start + chunk, None] - g[None, :])
            ratio = np.where(mask, diff / np.where(mask, dist, 1.0) ** exponent, 0.0)
            best = max(best, float(ratio.max()))
        return best

    # large grids: every axis-neighbour pair plus seeded random pairs
    shape = vals.shape
    for ax in range(vals.ndim):
        if shape[ax] > 1:
            d = np.abs(np.diff(vals, axis=ax))
            best = max(best, float(d.max()) / h**exponent)
    rng = np.random.default_rng(seed)
    radius = max(1, int(cutoff / h))
    first = rng.integers(0, npts, size=RANDOM_PAIRS)
    offs = rng.integers(-radius, radius + 1, size=(RANDOM_PAIRS, vals.ndim))
    idx = np.array(np.unravel_index(first, shape)).T + offs
    ok = np.all((idx >= 0) & (idx < np.array(shape)), axis=1)
    dist = np.sqrt((offs.astype(float) ** 2).sum(1)) * h
    ok &= (dist > 0) & (dist <= cutoff)
    if ok.any():
        second = np.ravel_multi_index(idx[ok].T, shape)
        ratio = np.abs(g[first[ok]] - g[second]) / dist[ok] ** exponent
        best = max(best, float(ratio.max()))
    return best


def hoelder_norm(f: GridFunction, sigma: float, cutoff: float | None = None,
                 seed: int = HOELDER_SEED) -> float:
    """Discrete ``C^sigma`` norm with ``sigma = floor + frac`` and ``frac`` in (0, 1]."""
    sigma = float(sigma)
    if not sigma > 0:
        raise CellwaveError(USE_SUP_NORM)
    order = math.ceil(sigma) - 1
    frac = sigma - order
    if cutoff is None:
        cutoff = 0.25 * math.dist(f.lower, f.upper)
    pts = f.points()
    total = 0.0
    for k in range(order + 1):
        for alpha in multi_indices(f.n, k):
            g = f if k == 0 else finite_diff(f, alpha)
            total += g.sup()
            if k == order:
                total += _pair_lipschitz(g.values, pts, frac, cutoff, f.h, seed)
    return total


# ---------------------------------------------------------------------------
# dyadic dilation


def _dyadic_exponent(lam: float) -> int:
    lam = float(lam)
    if not lam > 0:
        raise CellwaveError(NON_DYADIC)
    mant, exp = math.frexp(lam)
    if mant != 0.5:
        raise CellwaveError(NON_DYADIC)
    return exp - 1


def _axis_operator(n_cells: int, lam: float, shift: float) -> np.ndarray:
    """Matrix taking source cell values to target cell values along one axis.

    Target cell ``i`` maps to the source interval starting at ``shift + lam*i``
    (in cell units) of length ``lam``.
    """
    op = np.zeros((n_cells, n_cells))
    if lam <= 1:
        if abs(shift / lam - round(shift / lam)) > 1e-9:
            raise CellwaveError(NON_DYADIC)
        src = np.floor(shift + lam * np.arange(n_cells) + 1e-9).astype(int)
        ok = (src >= 0) & (src < n_cells)
        op[np.arange(n_cells)[ok], src[ok]] = 1.0
    else:
        if abs(shift - round(shift)) > 1e-9:
            raise CellwaveError(NON_DYADIC)
        width = int(round(lam))
        start = int(round(shift))
        for i in range(n_cells):
            lo = start + width * i
            cols = np.arange(lo, lo + width)
            cols = cols[(cols >= 0) & (cols < n_cells)]
            op[i, cols] = 1.0 / width
    return op


def dilate(f: GridFunction, lam: float, center: Sequence[float] | None = None) -> GridFunction:
    """Samples of ``x -> f(lam*(x - center) + center)`` for dyadic ``lam``.

    Expansion copies cell values, compression averages the covered cells;
    ``f`` is taken as zero outside its box.
    """
    _dyadic_exponent(lam)
    lam = float(lam)
    center = np.zeros(f.n) if center is None else np.asarray(center, dtype=float)
    vals = f.values
    for ax in range(f.n):
        lo = f.lower[ax]
        shift = (lam * (lo - center[ax]) + center[ax] - lo) / f.h
        op = _axis_operator(f.dims[ax], lam, shift)
        vals = np.moveaxis(np.tensordot(op, np.moveaxis(vals, ax, 0), axes=(1, 0)), 0, ax)
    return f.with_values(vals)
