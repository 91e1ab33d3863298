"""Whitney decompositions by greedy dyadic selection, and the point lattices they induce.

All cubes are corner-anchored: level ``nu`` and integer corner ``m`` give
``2**-nu * (m + [0,1]^n)``.  Distances to the boundary are computed in
integer units of ``2**-nu`` so the selection predicate is exact.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import CellwaveError

# a cube Q is selected iff LOWER*diam(Q) <= dist(Q, boundary) <= UPPER*diam(Q)
LOWER, UPPER = 1, 4


@dataclass(frozen=True)
class DomainDescriptor:
    """Domain kinds: ``cube`` = (0,1)^n, ``plane`` = R^n minus R^l, ``box`` = boundary-free box."""

    kind: str
    n: int
    l: int = 0
    bbox: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self):
        if self.kind in ("polyhedron", "polyhedron-face-complement"):
            raise CellwaveError("domain kind polyhedron-face-complement is not supported")
        if self.kind not in ("cube", "plane", "box"):
            raise CellwaveError(f"unknown domain kind {self.kind!r}")
        if self.n < 1:
            raise CellwaveError("dimension must be positive")
        if self.kind == "plane" and not 0 <= self.l < self.n:
            raise CellwaveError("plane dimension must satisfy 0 <= l < n")
        if self.bbox is None:
            lo = -1.0 if self.kind == "plane" else 0.0
            box = ((lo,) * self.n, (1.0,) * self.n)
        else:
            box = (tuple(float(v) for v in self.bbox[0]), tuple(float(v) for v in self.bbox[1]))
        if self.kind == "cube" and box != ((0.0,) * self.n, (1.0,) * self.n):
            raise CellwaveError("the unit cube domain has bbox [0,1]^n")
        for lo, hi in zip(*box):
            if lo != int(lo) or hi != int(hi) or hi <= lo:
                raise CellwaveError("bbox corners must be integers with lower < upper")
        object.__setattr__(self, "bbox", box)

    @classmethod
    def parse(cls, spec: str, n: int, bbox=None) -> "DomainDescriptor":
        """Parse the CLI forms ``cube``, ``box`` and ``plane:L``."""
        if spec.startswith("plane:"):
            return cls("plane", n, int(spec.split(":", 1)[1]), bbox)
        return cls(spec, n, 0, bbox)

    @property
    def has_boundary(self) -> bool:
        return self.kind != "box"

    def boundary_distance(self, points: np.ndarray) -> np.ndarray:
        """Euclidean distance of points (shape ``(..., n)``) to the boundary."""
        x = np.asarray(points, dtype=float)
        if self.kind == "cube":
            return np.min(np.minimum(x, 1 - x), axis=-1)
        if self.kind == "plane":
            return np.sqrt(np.sum(x[..., self.l:] ** 2, axis=-1))
        return np.full(x.shape[:-1], np.inf)

    def box_distance(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Distance from axis boxes ``[lo, hi]`` to the boundary; negative when a box leaves the cube."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if self.kind == "cube":
            return np.min(np.minimum(lo, 1 - hi), axis=-1)
        if self.kind == "plane":
            a, b = lo[..., self.l:], hi[..., self.l:]
            gap = np.where((a <= 0) & (b >= 0), 0.0, np.minimum(np.abs(a), np.abs(b)))
            return np.sqrt(np.sum(gap**2, axis=-1))
        return np.full(lo.shape[:-1], np.inf)

    def inside(self, points: np.ndarray) -> np.ndarray:
        x = np.asarray(points, dtype=float)
        lo, hi = np.array(self.bbox[0]), np.array(self.bbox[1])
        ok = np.all((x > lo) & (x < hi), axis=-1) if self.kind == "cube" else np.all((x >= lo) & (x <= hi), axis=-1)
        if self.kind == "plane":
            ok &= self.boundary_distance(x) > 0
        return ok


def cube_dist2_units(domain: DomainDescriptor, nu: int, m: np.ndarray) -> np.ndarray:
    """Squared distance of cubes ``(nu, m)`` to the boundary, in units of ``4**-nu``."""
    m = np.asarray(m, dtype=np.int64)
    if domain.kind == "cube":
        top = 2**nu - 1
        gap = np.minimum(m, top - m).min(axis=-1)
        return gap.astype(np.int64) ** 2
    if domain.kind == "plane":
        perp = m[..., domain.l:]
        gap = np.where(perp >= 0, perp, -(perp + 1))
        return np.sum(gap.astype(np.int64) ** 2, axis=-1)
    return np.full(m.shape[:-1], np.iinfo(np.int64).max)


@dataclass
class WhitneyDecomposition:
    domain: DomainDescriptor
    max_level: int
    nu: np.ndarray            # (K,) levels
    m: np.ndarray             # (K, n) integer corners
    dist: np.ndarray          # (K,) distance of the closed cube to the boundary
    flags: list[tuple[str, ...]]
    # near-boundary candidates that would need levels beyond max_level
    leftover_nu: int = 0
    leftover_m: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.int64))

    @property
    def n(self) -> int:
        return self.domain.n

    def __len__(self) -> int:
        return len(self.nu)

    @property
    def truncated(self) -> bool:
        return len(self.leftover_m) > 0

    @property
    def degenerate(self) -> bool:
        return self.domain.kind == "box"

    def levels(self) -> list[int]:
        return sorted(set(int(v) for v in self.nu))

    def side(self) -> np.ndarray:
        return 2.0 ** (-self.nu.astype(float))

    def diam(self) -> np.ndarray:
        return math.sqrt(self.n) * self.side()

    def lower(self) -> np.ndarray:
        return self.m * self.side()[:, None]

    def upper(self) -> np.ndarray:
        return (self.m + 1) * self.side()[:, None]

    def doubles(self) -> tuple[np.ndarray, np.ndarray]:
        """Corners of the concentric doubled cubes ``Q1``."""
        half = self.side()[:, None] / 2
        return self.lower() - half, self.upper() + half

    def level_map(self, J: int) -> np.ndarray:
        """Level of the covering cube for every cell at resolution ``J``; -1 where uncovered."""
        lo, hi = self.domain.bbox
        dims = [int(round((b - a) * 2**J)) for a, b in zip(lo, hi)]
        out = -np.ones(dims, dtype=int)
        origin = np.array([int(round(a * 2**J)) for a in lo])
        for nu, m in zip(self.nu, self.m):
            if nu > J:
                raise CellwaveError("resolution below finest Whitney level")
            k = 2 ** (J - int(nu))
            start = m * k - origin
            out[tuple(slice(s, s + k) for s in start)] = nu
        return out

    def to_json(self) -> list[dict]:
        return [{"nu": int(v), "m": [int(a) for a in mm], "dist": float(d), "flags": list(fl)}
                for v, mm, d, fl in zip(self.nu, self.m, self.dist, self.flags)]


def _root_cubes(domain: DomainDescriptor) -> np.ndarray:
    lo, hi = domain.bbox
    ranges = [range(int(a), int(b)) for a, b in zip(lo, hi)]
    return np.array(list(itertools.product(*ranges)), dtype=np.int64).reshape(-1, domain.n)


def _children(m: np.ndarray, n: int) -> np.ndarray:
    offs = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64)
    return (2 * m[:, None, :] + offs[None, :, :]).reshape(-1, n)


def whitney_decompose(domain: DomainDescriptor, max_level: int) -> WhitneyDecomposition:
    """Greedy selection from coarse to fine; only unselected cubes are refined."""
    n = domain.n
    roots = _root_cubes(domain)
    if not domain.has_boundary:
        return WhitneyDecomposition(domain, max_level, np.zeros(len(roots), dtype=int), roots,
                                    np.full(len(roots), np.inf), [("degenerate",)] * len(roots),
                                    0, np.zeros((0, n), dtype=np.int64))
    if max_level < 1:
        raise CellwaveError("max_level must be at least 1")
    lo, hi = domain.bbox
    sel_nu, sel_m, sel_d, sel_flags = [], [], [], []
    cand = roots
    nu = 0
    while True:
        d2 = cube_dist2_units(domain, nu, cand)
        pick = (d2 >= LOWER**2 * n) & (d2 <= UPPER**2 * n)
        # at the root level cubes can be too far for any descendant; keep them, flagged
        coarse = (d2 > UPPER**2 * n) if nu == 0 else np.zeros(len(cand), dtype=bool)
        take = pick | coarse
        if take.any():
            chosen = cand[take]
            sel_nu.append(np.full(len(chosen), nu))
            sel_m.append(chosen)
            sel_d.append(np.sqrt(d2[take].astype(float)) * 2.0**-nu)
            blo = np.array([int(a) for a in lo]) * 2**nu
            bhi = np.array([int(b) for b in hi]) * 2**nu - 1
            rim = np.any((chosen == blo) | (chosen == bhi), axis=1)
            for is_rim, is_coarse in zip(rim, coarse[take]):
                fl = []
                if domain.kind == "plane" and is_rim:
                    fl.append("truncated")
                if is_coarse:
                    fl.append("coarse")
                sel_flags.append(tuple(fl))
        close = cand[d2 < LOWER**2 * n]
        if nu == max_level or len(close) == 0:
            leftover = close
            break
        cand = _children(close, n)
        nu += 1
    if not sel_nu:
        empty = np.zeros((0, n), dtype=np.int64)
        return WhitneyDecomposition(domain, max_level, np.zeros(0, dtype=int), empty,
                                    np.zeros(0), [], nu, leftover)
    return WhitneyDecomposition(domain, max_level, np.concatenate(sel_nu), np.concatenate(sel_m),
                                np.concatenate(sel_d), sel_flags, nu, leftover)


# ---------------------------------------------------------------------------
# lattices


@dataclass
class PointLattice:
    kind: str                 # "interior" or "closure"
    j: np.ndarray             # (P,) levels
    r: np.ndarray             # (P, n) location index; coordinates are r * 2**-(j+1)
    c1: float
    c2: float
    c3: float

    @property
    def x(self) -> np.ndarray:
        return self.r * 2.0 ** (-(self.j[:, None] + 1.0))

    def __len__(self) -> int:
        return len(self.j)

    def keys(self) -> set[tuple]:
        return {(int(a), tuple(int(v) for v in b)) for a, b in zip(self.j, self.r)}


def _min_separation(j: np.ndarray, x: np.ndarray) -> float:
    best = math.inf
    for level in np.unique(j):
        pts = x[j == level]
        if len(pts) < 2:
            continue
        dist, _ = cKDTree(pts).query(pts, k=2)
        best = min(best, float(dist[:, 1].min()) * 2.0**level)
    return best


def _interior_points(dec: WhitneyDecomposition, Jmax: int) -> tuple[np.ndarray, np.ndarray]:
    n = dec.n
    js, rs = [], []
    for level in dec.levels():
        corners = dec.m[dec.nu == level]
        for j in range(level, Jmax + 1):
            k = 2 ** (j - level)
            offs = np.array(list(itertools.product(range(k), repeat=n)), dtype=np.int64)
            sub = (corners[:, None, :] * k + offs[None, :, :]).reshape(-1, n)
            js.append(np.full(len(sub), j))
            rs.append(2 * sub + 1)
    if not js:
        return np.zeros(0, dtype=int), np.zeros((0, n), dtype=np.int64)
    return np.concatenate(js), np.concatenate(rs)


def interior_lattice(dec: WhitneyDecomposition, Jmax: int, c2: float = 0.5) -> PointLattice:
    """Centres of the level-``j`` subcubes of every Whitney cube, ``j`` from its level to ``Jmax``."""
    if len(dec) and Jmax < int(dec.nu.max()):
        raise CellwaveError("Jmax below the finest Whitney level")
    j, r = _interior_points(dec, Jmax)
    x = r * 2.0 ** (-(j[:, None] + 1.0))
    scale = 2.0 ** j
    if dec.domain.has_boundary and len(j):
        c3 = float(np.min((dec.domain.boundary_distance(x) - c2 / scale) * scale))
    else:
        c3 = math.inf
    return PointLattice("interior", j, r, _min_separation(j, x), c2, c3)


def face_points(n: int, j: int) -> np.ndarray:
    """Boundary lattice of the unit cube at level ``j`` in half-step units ``2**-(j+1)``."""
    top = 2 ** (j + 1)
    pts = []
    for fixed in range(1, n + 1):
        for perp in itertools.combinations(range(n), fixed):
            tang = [a for a in range(n) if a not in perp]
            inner = [range(2, top, 2)] * len(tang)
            for side in itertools.product((0, top), repeat=fixed):
                for t in itertools.product(*inner):
                    p = [0] * n
                    for a, v in zip(perp, side):
                        p[a] = v
                    for a, v in zip(tang, t):
                        p[a] = v
                    pts.append(p)
    return np.array(pts, dtype=np.int64).reshape(-1, n)


def closure_lattice(domain: DomainDescriptor, Jmax: int) -> PointLattice:
    """Interior lattice of the cube plus the ``2**-j`` lattices of all its faces."""
    if domain.kind != "cube":
        raise CellwaveError(f"closure lattice is only available for the unit cube, not {domain.kind!r}")
    dec = whitney_decompose(domain, max(Jmax, 1))
    keep = dec.nu <= Jmax
    dec = WhitneyDecomposition(domain, Jmax, dec.nu[keep], dec.m[keep], dec.dist[keep],
                               [f for f, k in zip(dec.flags, keep) if k])
    inner = interior_lattice(dec, Jmax)
    js, rs = [inner.j], [inner.r]
    for j in range(Jmax + 1):
        b = face_points(domain.n, j)
        js.append(np.full(len(b), j))
        rs.append(b)
    j = np.concatenate(js)
    r = np.concatenate(rs)
    x = r * 2.0 ** (-(j[:, None] + 1.0))
    return PointLattice("closure", j, r, _min_separation(j, x), inner.c2, inner.c3)


def geometry_violations(dec: WhitneyDecomposition, J: int | None = None) -> dict[str, int]:
    """Count failures of disjointness, coverage, neighbour levels and the distance sandwich.

    Cubes are painted onto the resolution-``J`` grid (default ``max_level``);
    since every cube is a union of such cells the overlap and neighbour
    checks are exact.
    """
    n = dec.n
    J = dec.max_level if J is None else J
    lo, hi = dec.domain.bbox
    dims = [int(round((b - a) * 2**J)) for a, b in zip(lo, hi)]
    origin = np.array([int(round(a * 2**J)) for a in lo])
    count = np.zeros(dims, dtype=np.int32)
    level = -np.ones(dims, dtype=int)
    for nu, m in zip(dec.nu, dec.m):
        k = 2 ** (J - int(nu))
        sl = tuple(slice(s, s + k) for s in m * k - origin)
        count[sl] += 1
        level[sl] = nu
    overlap = int(np.sum(count > 1))

    # coverage of interior-safe midpoints, ignoring cubes on a truncated rim
    axes = [a + (np.arange(d) + 0.5) * 2.0**-J for a, d in zip(lo, dims)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    safe = dec.domain.inside(mesh) & (dec.domain.boundary_distance(mesh) > 2.0 ** (-dec.max_level + 2) * math.sqrt(n))
    if dec.domain.kind == "plane":
        margin = 2.0 ** (-dec.max_level + 2) * math.sqrt(n)
        safe &= np.all((mesh > np.array(lo) + margin) & (mesh < np.array(hi) - margin), axis=-1)
    uncovered = int(np.sum(safe & (count == 0)))

    jumps = 0
    for off in itertools.product((-1, 0, 1), repeat=n):
        if not any(off) or next(v for v in off if v) < 0:
            continue
        a = tuple(slice(max(0, -o), d - max(0, o)) for o, d in zip(off, dims))
        b = tuple(slice(max(0, o), d - max(0, -o)) for o, d in zip(off, dims))
        la, lb = level[a], level[b]
        both = (la >= 0) & (lb >= 0)
        jumps += int(np.sum(both & (np.abs(la - lb) > 1)))

    ratio = dec.dist / dec.diam()
    proper = np.array(["coarse" not in f and "degenerate" not in f for f in dec.flags], dtype=bool)
    sandwich = int(np.sum(proper & ((ratio < LOWER - 1e-12) | (ratio > UPPER + 1e-12))))
    return {"overlap": overlap, "uncovered": uncovered, "level_jumps": jumps, "sandwich": sandwich}
