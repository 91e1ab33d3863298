"""Weighted L_p functionals near planes and cube faces.

Everything here integrates ``|f|^p`` against a power of the distance ``d``
to a boundary piece.  Whether such an integral is finite is a qualitative
question; on a grid we answer it by watching the values over several
refinement levels and classifying the growth.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .boundary import FaceDescriptor, plane_face, trace
from .errors import HYPOTHESIS_VIOLATED, CellwaveError
from .grid import GridFunction, SpaceParams, coarsen, finite_diff, grid_dims, multi_indices
from .wavelets import wavelet_norm
from .whitney import DomainDescriptor

BOUNDED_RATIO = 1.1
# increments shrinking by less than this factor per level read as log growth
LOG_INCREMENT_RATIO = 0.8
# increments growing by more than this factor per level read as power growth
POWER_INCREMENT_RATIO = 1.25
EPS_DEFAULT = 0.25
EPS_REPORTED = (0.125, 0.25)
MAX_COUNTEREXAMPLE_CELLS = 2**22

KAPPAS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "one": lambda t: np.ones_like(t),
    "log": lambda t: np.log(1.0 / t),
    "power": lambda t: t ** -0.1,
}
MODES = ("critical", "subcritical", "plain")


# ---------------------------------------------------------------------------
# distance and growth


def face_distance(face: FaceDescriptor, points: np.ndarray) -> np.ndarray:
    """Euclidean distance to the closed face (cube kind) or to the plane ``R^l x {0}``."""
    x = np.asarray(points, dtype=float)
    d2 = np.zeros(x.shape[:-1])
    for ax, c in face.fixed:
        d2 += (x[..., ax] - c) ** 2
    if face.kind == "cube":
        for ax in face.free:
            d2 += np.maximum(0.0, np.maximum(-x[..., ax], x[..., ax] - 1.0)) ** 2
    return np.sqrt(d2)


def _mesh_points(f: GridFunction) -> np.ndarray:
    return np.stack(f.mesh(), axis=-1)


def classify_growth(values: Sequence[float]) -> tuple[str, float]:
    """Return ``(class, rate)`` for a sequence of values over consecutive levels.

    ``rate`` is the fitted increment per level for log growth and the fitted
    exponent ``gamma`` in ``2^(gamma J)`` for power growth.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 2 or v.max() <= 0:
        return "bounded", 0.0
    inc = np.diff(v)
    ratios = v[1:] / np.maximum(v[:-1], 1e-300)
    inc_ratio = inc[-1] / inc[-2] if inc.size >= 2 and inc[-2] > 0 else 0.0
    slow_log = (inc.size >= 2 and inc[-1] > 1e-3 * v[-1] and inc_ratio >= LOG_INCREMENT_RATIO
                and inc_ratio <= POWER_INCREMENT_RATIO)
    if ratios.max() <= BOUNDED_RATIO and not slow_log:
        return "bounded", 0.0
    if inc.size >= 2 and inc_ratio > POWER_INCREMENT_RATIO:
        return "power-growth", float(np.mean(np.log2(ratios)))
    return "log-growth", float(np.mean(inc))


# ---------------------------------------------------------------------------
# weighted functionals


@dataclass
class WeightedFunctionalReport:
    levels: list[int]
    values: list[float]
    growth: str
    rate: float
    l: int
    p: float
    s: float
    kappa: str
    eps: float | None
    mode: str
    extra: dict = field(default_factory=dict)

    @property
    def bounded(self) -> bool:
        return self.growth == "bounded"

    def to_json(self) -> dict:
        return asdict(self)


def _resample(f, levels: Sequence[int] | None, bbox=None) -> list[GridFunction]:
    if callable(f) and not isinstance(f, GridFunction):
        if bbox is None or levels is None:
            raise CellwaveError("sampling a callable needs bbox and levels")
        return [GridFunction.from_function(f, bbox[0], bbox[1], J) for J in levels]
    if levels is None:
        levels = [f.J]
    out = []
    for J in levels:
        if J > f.J:
            raise CellwaveError(f"function is not resolved at level {J} (finest {f.J})")
        out.append(f if J == f.J else coarsen(f, f.J - J))
    return out


def _weighted_integral(g: GridFunction, face: FaceDescriptor, weight: Callable[[np.ndarray], np.ndarray],
                       p: float, eps: float | None) -> float:
    d = face_distance(face, _mesh_points(g))
    # cells cut by the boundary piece are dropped; midpoints at the box edge sit h/2 away
    mask = d >= g.h / 2 * (1 - 1e-9)
    if eps is not None:
        mask &= d < eps
    if not mask.any():
        return 0.0
    dm = d[mask]
    integrand = np.abs(g.values[mask]) ** p * weight(dm)
    return float(np.sum(integrand)) * g.cell_volume


def _check_eps(eps: float | None) -> None:
    if eps is not None and not 0 < eps < 1:
        raise CellwaveError("eps must lie in (0, 1)")


def weighted_lp(f, boundary: FaceDescriptor | int, mode: str, params: SpaceParams, kappa: str = "one",
                eps: float = EPS_DEFAULT, levels: Sequence[int] | None = None, bbox=None) -> WeightedFunctionalReport:
    """Integrals of ``|f|^p`` against a boundary weight over ``0 < d < eps``, one per level.

    ``critical``: ``|kappa(d) f / log d|^p d^-(n-l)``; ``subcritical``:
    ``|kappa(d) f|^p d^-sp``; ``plain``: ``|f|^p d^-sp``.  An integer
    ``boundary`` means the plane of that dimension.  Values are the
    integrals themselves (no p-th root).
    """
    if mode not in MODES:
        raise CellwaveError(f"unknown mode {mode!r}")
    if kappa not in KAPPAS:
        raise CellwaveError(f"unknown weight {kappa!r}; choose from {sorted(KAPPAS)}")
    _check_eps(eps)
    face = plane_face(params.n, boundary) if isinstance(boundary, int) else boundary
    s, p, _ = params.as_floats()
    codim = face.n - face.l
    kap = KAPPAS[kappa]
    if mode == "critical":
        if p <= 1:
            raise CellwaveError("the critical functional needs p > 1")
        weight = lambda d: np.abs(kap(d) / np.log(d)) ** p * d ** (-codim)
    elif mode == "subcritical":
        weight = lambda d: np.abs(kap(d)) ** p * d ** (-s * p)
    else:
        weight = lambda d: d ** (-s * p)
    grids = _resample(f, levels, bbox)
    values = [_weighted_integral(g, face, weight, p, eps) for g in grids]
    growth, rate = classify_growth(values)
    return WeightedFunctionalReport([g.J for g in grids], values, growth, rate, face.l, p, s,
                                    kappa, eps, mode)


def corner_compatibility(g1: GridFunction, g2: GridFunction, upper: float = 0.5, p: float = 2.0) -> float:
    """Midpoint sum for ``int_0^upper |g1 - g2|^p / t dt`` on 1-D samples over ``[0, 1]``."""
    if not g1.same_grid(g2) or g1.n != 1:
        raise CellwaveError("corner compatibility needs two 1-D functions on one grid")
    t = g1.axis(0) - g1.lower[0]
    mask = t < upper
    diff = np.abs(g1.values - g2.values)[mask] ** p
    return float(np.sum(diff / t[mask])) * g1.h


# ---------------------------------------------------------------------------
# the counterexample family


def _bump_profile(t: np.ndarray, plateau: float = 0.75) -> np.ndarray:
    """Radial C-infinity profile: 1 for ``t <= plateau``, 0 for ``t >= 1``."""
    def g(x):
        return np.where(x > 0, np.exp(-1.0 / np.maximum(x, 1e-300)), 0.0)
    a = (1.0 - t) / (1.0 - plateau)
    return g(a) / (g(a) + g(1.0 - a))


def counterexample_centres(n: int, l: int, j: int, variant: str) -> np.ndarray:
    """Bump centres of level ``j``: one perpendicular offset ``2^-(j+1)``, tangential lattice in the unit ball."""
    step = 2.0 ** -j * (1 if variant == "overlapping" else 4)
    offset = np.zeros(n)
    offset[l] = 2.0 ** -(j + 1)
    if l == 0:
        return offset[None, :]
    if variant == "overlapping":
        # half-step offsets keep a centre within step/2 of every tangential point of (-1, 1)
        k = int(round(1 / step))
        ticks = (np.arange(-k, k) + 0.5) * step
    else:
        k = int(math.floor(1 / step))
        ticks = np.arange(-k, k + 1) * step
    grids = np.meshgrid(*([ticks] * l), indexing="ij")
    tang = np.stack([g.ravel() for g in grids], axis=-1)
    tang = tang[np.sum(tang**2, axis=-1) < 1.0]
    out = np.tile(offset, (len(tang), 1))
    out[:, :l] = tang
    return out


def counterexample_fJ(n: int, l: int, p: float, J: int, variant: str = "overlapping",
                      resolution: int | None = None) -> GridFunction:
    """``J^(-1/p) sum_{j<=J} sum_k psi(2^(j-1)(x - x_jk))`` on ``[-2, 2]^n``."""
    if not 0 <= l < n:
        raise CellwaveError("plane dimension must satisfy 0 <= l < n")
    if not 1 <= J <= 8:
        raise CellwaveError("J must lie in 1..8")
    if not p > 1:
        raise CellwaveError("the counterexample family needs p > 1")
    if variant not in ("overlapping", "disjoint"):
        raise CellwaveError(f"unknown variant {variant!r}")
    res = J + 3 if resolution is None else int(resolution)
    if res < J + 2:
        raise CellwaveError("resolution must resolve the finest bump (at least J + 2)")
    lower, upper = (-2.0,) * n, (2.0,) * n
    if np.prod(grid_dims(lower, upper, res), dtype=np.int64) > MAX_COUNTEREXAMPLE_CELLS:
        raise CellwaveError("counterexample grid too large; lower the resolution or the dimension")
    out = GridFunction.zeros(lower, upper, res)
    mesh = out.mesh()
    total = np.zeros(out.dims)
    for j in range(1, J + 1):
        scale = 2.0 ** (j - 1)
        reach = 1.0 / scale  # support radius of the level-j bump
        for c in counterexample_centres(n, l, j, variant):
            # only touch the window around the support
            sl = []
            for ax in range(n):
                lo = max(0, int(math.floor((c[ax] - reach + 2.0) / out.h)))
                hi = min(out.dims[ax], int(math.ceil((c[ax] + reach + 2.0) / out.h)) + 1)
                sl.append(slice(lo, hi))
            sl = tuple(sl)
            r2 = sum((mesh[ax][sl] - c[ax]) ** 2 for ax in range(n))
            total[sl] += _bump_profile(scale * np.sqrt(r2))
    return out.with_values(total * J ** (-1.0 / p))


def shell_mask(f: GridFunction, l: int, J: int) -> np.ndarray:
    """Cells of ``S_J = {|x'| < 1, |x''| < 2^-J}``."""
    pts = _mesh_points(f)
    tang = np.sum(pts[..., :l] ** 2, axis=-1)
    perp = np.sqrt(np.sum(pts[..., l:] ** 2, axis=-1))
    return (tang < 1.0) & (perp < 2.0 ** -J)


# ---------------------------------------------------------------------------
# reinforce property and Hardy-type inequality


def _level_window(f: GridFunction, count: int) -> list[int]:
    if f.J - count + 1 < 4:
        raise CellwaveError(f"need {count} refinement levels with J >= 4")
    return list(range(f.J - count + 1, f.J + 1))


def check_reinforce(f: GridFunction, face: FaceDescriptor, r: int, p: float, eps: float = EPS_DEFAULT,
                    levels: Sequence[int] | None = None) -> dict:
    """Integrals of ``d^-(n-l) |D^alpha f|^p`` near ``face`` for perpendicular ``|alpha| = r``."""
    _check_eps(eps)
    levels = list(levels) if levels is not None else _level_window(f, 3)
    if len(levels) < 3:
        raise CellwaveError("the reinforce check needs at least three refinement levels")
    codim = face.n - face.l
    alphas = [(0,) * f.n] if r == 0 else multi_indices(f.n, r, face.perp_axes)
    grids = _resample(f, levels)
    entries = []
    for alpha in alphas:
        derived = grids if r == 0 else [finite_diff(g, alpha) for g in grids]
        values = [_weighted_integral(g, face, lambda d: d ** (-codim), p, eps) for g in derived]
        growth, rate = classify_growth(values)
        ratios = [b / a if a > 0 else (1.0 if b == 0 else math.inf) for a, b in zip(values, values[1:])]
        entries.append({"alpha": list(alpha), "values": values, "ratios": ratios,
                        "growth": growth, "rate": rate})
    verdict = all(e["growth"] == "bounded" for e in entries)
    return {"face": face.to_json(), "r": r, "p": float(p), "eps": eps, "levels": levels,
            "entries": entries, "verdict": "pass" if verdict else "fail"}


def trace_tolerance(g: GridFunction) -> float:
    return 5 * g.h * max(1.0, g.sup())


def hardy_trace_inequality_report(f: GridFunction, face: FaceDescriptor | int, r: int, s: float, p: float,
                                  levels: Sequence[int] | None = None) -> dict:
    """Compare ``||d^-s f||_p`` with ``sum ||d^(r-s) D^alpha f||_p`` over perpendicular ``|alpha| = r``."""
    face = plane_face(f.n, face) if isinstance(face, int) else face
    if r < 1:
        raise CellwaveError("the trace inequality needs r >= 1")
    for alpha in face.perp_indices(r - 1):
        d = f if sum(alpha) == 0 else finite_diff(f, alpha)
        tr = trace(d, face, 0).data[(0,) * f.n]
        if tr.sup() > trace_tolerance(d):
            raise CellwaveError(f"{HYPOTHESIS_VIOLATED}: trace of D^{alpha} f does not vanish")
    levels = list(levels) if levels is not None else _level_window(f, 3)
    grids = _resample(f, levels)
    left, right = [], []
    for g in grids:
        lv = _weighted_integral(g, face, lambda d: d ** (-s * p), p, None) ** (1 / p)
        rv = sum(_weighted_integral(finite_diff(g, a), face, lambda d: d ** ((r - s) * p), p, None) ** (1 / p)
                 for a in multi_indices(f.n, r, face.perp_axes))
        left.append(lv)
        right.append(rv)
    ratios = [a / b if b > 0 else (0.0 if a == 0 else math.inf) for a, b in zip(left, right)]
    return {"face": face.to_json(), "r": r, "s": float(s), "p": float(p), "levels": levels,
            "left": left, "right": right, "ratios": ratios}


def rloc_norm(f: GridFunction, domain: DomainDescriptor, params: SpaceParams, sys_=None) -> float:
    """Wavelet norm plus ``||min(d, 1)^-s f||_p`` over the domain."""
    s, p, _ = params.as_floats()
    if not s > params.sigma_pq:
        raise CellwaveError("the refined-localization norm needs s > sigma_pq")
    d = domain.boundary_distance(_mesh_points(f))
    mask = d >= f.h / 2 * (1 - 1e-9)
    delta = np.minimum(d[mask], 1.0)
    weighted = (float(np.sum(np.abs(f.values[mask]) ** p * delta ** (-s * p))) * f.cell_volume) ** (1 / p)
    return wavelet_norm(f, params, sys_) + weighted
