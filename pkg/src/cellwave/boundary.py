"""Traces on cube faces and planes, the moment-corrected cutoff, and wavelet-friendly extensions."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import TRACE_UNDEFINED, CellwaveError
from .gfn import read_gfn, write_gfn
from .grid import GridFunction, SpaceParams, finite_diff, multi_indices
from .wavelets import build_box_system, build_domain_system
from .whitney import DomainDescriptor, whitney_decompose

# one-sided quadratic extrapolation from the three cell layers next to a box edge
EDGE_WEIGHTS = np.array([15.0, -10.0, 3.0]) / 8
# cubic interpolation to a cell boundary in the interior of the box
MID_WEIGHTS = np.array([-1.0, 9.0, 9.0, -1.0]) / 16

CHI_VARIANTS = {"cube": (1 / 8, 1 / 4), "plane": (1.0, 2.0)}


# ---------------------------------------------------------------------------
# faces


@dataclass(frozen=True)
class FaceDescriptor:
    """An open face of ``[0,1]^n`` (``kind="cube"``) or the plane ``R^l x {0}`` (``kind="plane"``).

    ``fixed`` maps each perpendicular axis to its coordinate on the face;
    ``free`` lists the tangential axes in increasing order.
    """

    n: int
    l: int
    index: int
    free: tuple[int, ...]
    fixed: tuple[tuple[int, float], ...]
    kind: str = "cube"

    @property
    def perp_axes(self) -> tuple[int, ...]:
        return tuple(ax for ax, _ in self.fixed)

    @property
    def name(self) -> str:
        return f"{self.l},{self.index}"

    def embedding(self) -> tuple[np.ndarray, np.ndarray]:
        """Affine map ``y -> origin + A y`` from ``[0,1]^l`` into the face."""
        origin = np.zeros(self.n)
        for ax, val in self.fixed:
            origin[ax] = val
        A = np.zeros((self.n, self.l))
        for col, ax in enumerate(self.free):
            A[ax, col] = 1.0
        return origin, A

    def perp_indices(self, r: int) -> list[tuple[int, ...]]:
        """Multi-indices of order ``<= r`` supported on the perpendicular axes."""
        out = []
        for k in range(r + 1):
            out.extend(multi_indices(self.n, k, self.perp_axes) if k else [(0,) * self.n])
        return out

    def closure_contains(self, other: "FaceDescriptor") -> bool:
        mine = dict(self.fixed)
        theirs = dict(other.fixed)
        return all(ax in theirs and theirs[ax] == val for ax, val in mine.items())

    def to_json(self) -> dict:
        return {"n": self.n, "l": self.l, "index": self.index, "kind": self.kind,
                "free": list(self.free), "fixed": [[ax, val] for ax, val in self.fixed]}

    @classmethod
    def from_json(cls, d: dict) -> "FaceDescriptor":
        return cls(int(d["n"]), int(d["l"]), int(d["index"]), tuple(d["free"]),
                   tuple((int(a), float(v)) for a, v in d["fixed"]), d.get("kind", "cube"))


def cube_faces(n: int, l: int) -> list[FaceDescriptor]:
    """All open ``l``-dimensional faces of ``[0,1]^n``: ``C(n,l) 2^(n-l)`` of them."""
    if not 0 <= l < n:
        raise CellwaveError("face dimension must satisfy 0 <= l < n")
    faces = []
    for free in itertools.combinations(range(n), l):
        perp = [ax for ax in range(n) if ax not in free]
        for vals in itertools.product((0.0, 1.0), repeat=len(perp)):
            faces.append(FaceDescriptor(n, l, len(faces), tuple(free), tuple(zip(perp, vals))))
    return faces


def cube_face(n: int, l: int, index: int) -> FaceDescriptor:
    faces = cube_faces(n, l)
    if not 0 <= index < len(faces):
        raise CellwaveError(f"face index {index} out of range for l={l}, n={n}")
    return faces[index]


def plane_face(n: int, l: int) -> FaceDescriptor:
    return FaceDescriptor(n, l, 0, tuple(range(l)), tuple((ax, 0.0) for ax in range(l, n)), "plane")


# ---------------------------------------------------------------------------
# traces


@dataclass
class TraceBundle:
    face: FaceDescriptor
    r: int
    data: dict = field(default_factory=dict)

    def __post_init__(self):
        allowed = set(self.face.perp_indices(self.r))
        for alpha in self.data:
            if tuple(alpha) not in allowed:
                raise CellwaveError(f"trace index {alpha} is not perpendicular to face {self.face.name} "
                                    f"or exceeds order {self.r}")

    def sup(self) -> float:
        return max((float(np.max(np.abs(g.values))) for g in self.data.values()), default=0.0)

    def minus(self, other: "TraceBundle") -> "TraceBundle":
        data = {a: g - other.data[a] if a in other.data else g for a, g in self.data.items()}
        return TraceBundle(self.face, self.r, data)


def face_grid(face: FaceDescriptor, lower, upper, J: int, values=None) -> GridFunction:
    lo = [lower[ax] for ax in face.free]
    hi = [upper[ax] for ax in face.free]
    if values is None:
        return GridFunction.zeros(lo, hi, J)
    return GridFunction(lo, hi, J, values)


def _restrict(values: np.ndarray, f: GridFunction, face: FaceDescriptor) -> np.ndarray:
    """Values on the face lattice by extrapolation (box edge) or interpolation (interior)."""
    out = values
    # highest axis first so earlier axis numbers stay valid
    for ax, c in sorted(face.fixed, reverse=True):
        t = (c - f.lower[ax]) / f.h
        k = int(round(t))
        if abs(t - k) > 1e-9:
            raise CellwaveError("face is not aligned with the grid cell boundaries")
        size = out.shape[ax]
        if k == 0:
            idx, w = [0, 1, 2], EDGE_WEIGHTS
        elif k == size:
            idx, w = [size - 1, size - 2, size - 3], EDGE_WEIGHTS
        elif 2 <= k <= size - 2:
            idx, w = [k - 2, k - 1, k, k + 1], MID_WEIGHTS
        else:
            raise CellwaveError("face too close to the box edge for interpolation")
        if size < 3:
            raise CellwaveError("grid too coarse for a trace")
        out = np.tensordot(w, np.take(out, idx, axis=ax), axes=([0], [ax]))
    return out


def trace_window_ok(params: SpaceParams, face: FaceDescriptor, r: int) -> bool:
    s, p, _ = params.as_floats()
    return s > r + (face.n - face.l) / p


def trace(f: GridFunction, face: FaceDescriptor, r: int, params: SpaceParams | None = None) -> TraceBundle:
    """Traces of ``D^alpha f`` on ``face`` for perpendicular ``alpha`` with ``|alpha| <= r``."""
    if params is not None and not trace_window_ok(params, face, r):
        raise CellwaveError(TRACE_UNDEFINED)
    if f.n != face.n:
        raise CellwaveError("face dimension does not match the function")
    if f.J < 4:
        raise CellwaveError("resolution too coarse for a trace (need J >= 4)")
    data = {}
    for alpha in face.perp_indices(r):
        d = f if sum(alpha) == 0 else finite_diff(f, alpha)
        data[alpha] = face_grid(face, f.lower, f.upper, f.J, _restrict(d.values, f, face))
    return TraceBundle(face, r, data)


# ---------------------------------------------------------------------------
# cutoff


def _smooth_step(u: int):
    """Polynomial ``S`` on [0,1], ``S(0)=1``, ``S(1)=0``, derivatives up to order ``u`` vanishing at both ends."""
    P = np.polynomial.Polynomial
    dens = (P([0, 1]) ** u) * (P([1, -1]) ** u)
    integral = dens.integ()
    total = integral(1.0)
    return P([1.0]) - integral / total


def _quad_nodes(a: float, b: float, count: int = 40) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(count)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


@dataclass
class CutoffChi:
    """Tensor cutoff ``chi(z) = prod chi*(z_i)`` on ``R^m`` with vanishing moments of order ``1..L``."""

    m: int
    L: int
    u: int
    plateau: float
    radius: float
    coefficients: np.ndarray
    centers: np.ndarray
    width: float
    condition: float
    profile: GridFunction | None = None

    def star(self, z) -> np.ndarray:
        a = np.abs(np.asarray(z, dtype=float))
        step = _smooth_step(self.u)
        t = np.clip((a - self.plateau) / (self.radius - self.plateau), 0.0, 1.0)
        out = np.where(a <= self.plateau, 1.0, np.where(a < self.radius, step(t), 0.0))
        for c, center in zip(self.coefficients, self.centers):
            out = out + c * self._bump(a, center)
        return out

    def _bump(self, a: np.ndarray, center: float) -> np.ndarray:
        t = (a - center) / self.width
        return np.where(np.abs(t) < 1, (1 - t**2) ** (self.u + 1), 0.0)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        """``chi`` at points ``z`` of shape ``(..., m)``."""
        z = np.asarray(z, dtype=float)
        out = np.ones(z.shape[:-1])
        for i in range(self.m):
            out = out * self.star(z[..., i])
        return out

    def moment(self, k: int) -> float:
        """``int chi*(z) z^k dz`` by Gauss quadrature on the polynomial pieces (exact)."""
        if k % 2:
            return 0.0
        breaks = {0.0, self.plateau, self.radius}
        for c in self.centers:
            breaks.update({c - self.width, c + self.width})
        pts = sorted(b for b in breaks if 0 <= b <= self.radius)
        total = 0.0
        for a, b in zip(pts, pts[1:]):
            x, w = _quad_nodes(a, b)
            total += float(np.sum(w * self.star(x) * x**k))
        return 2 * total


def build_cutoff_chi(m: int, L: int, u: int, J: int | None = None, variant: str = "cube") -> CutoffChi:
    """Plateau bump plus symmetric corrections in the annulus that cancel moments ``1..L``."""
    if not 0 <= L <= 4 or not 0 <= u <= 3:
        raise CellwaveError("need 0 <= L <= 4 and 0 <= u <= 3")
    if m < 1:
        raise CellwaveError("codimension must be positive")
    plateau, radius = CHI_VARIANTS[variant]
    even = [k for k in range(1, L + 1) if k % 2 == 0]
    count = len(even)
    width = (radius - plateau) / (2 * max(count, 1))
    centers = plateau + width * (2 * np.arange(count) + 1)
    chi = CutoffChi(m, L, u, plateau, radius, np.zeros(count), centers, width, 1.0)
    if count:
        system = np.empty((count, count))
        for row, k in enumerate(even):
            for col, c in enumerate(centers):
                probe = CutoffChi(m, L, u, plateau, radius, np.array([1.0]), np.array([c]), width, 1.0)
                base = CutoffChi(m, L, u, plateau, radius, np.zeros(0), np.zeros(0), width, 1.0)
                system[row, col] = probe.moment(k) - base.moment(k)
        rhs = -np.array([chi.moment(k) for k in even])
        cond = float(np.linalg.cond(system))
        if not np.isfinite(cond) or cond > 1e12:
            raise CellwaveError(f"singular moment system (condition number {cond:.3e})")
        chi.coefficients = np.linalg.solve(system, rhs)
        chi.condition = cond
    worst = max((abs(chi.moment(k)) for k in range(1, L + 1)), default=0.0)
    if worst > 1e-10:
        raise CellwaveError(f"cutoff moments not cancelled: {worst:.3e}")
    if J is not None:
        h = 2.0**-J
        chi.profile = GridFunction.from_function(chi.star, [-radius - h / 2], [radius + h / 2], J)
    return chi


# ---------------------------------------------------------------------------
# extension


def extension_window_ok(params: SpaceParams, face: FaceDescriptor, r: int, u: int) -> bool:
    s = float(params.s)
    return u > s and trace_window_ok(params, face, r)


def default_face_system(face: FaceDescriptor, J: int):
    """Interior Whitney-Haar system on the open face, or a periodic Haar box system on a plane.

    Haar levels stop five levels above ``J`` so the cutoff plateau at the finest level
    still covers the three cell layers used by the trace.
    """
    if face.l == 0:
        return None
    Jmax = max(1, J - 5)
    if face.kind == "plane":
        return None if Jmax < 1 else _PlaneSystem(face, Jmax, J)
    dec = whitney_decompose(DomainDescriptor("cube", face.l), max(2, J - 7))
    Jmax = max(Jmax, 2)
    return build_domain_system(dec, 0, Jmax, J)


class _PlaneSystem:
    """Haar box system on the plane's bounding box; built lazily once the box is known."""

    def __init__(self, face, Jmax, J):
        self.face, self.Jmax, self.J = face, Jmax, J
        self._sys = {}

    def for_grid(self, g: GridFunction):
        key = (g.lower, g.upper)
        if key not in self._sys:
            self._sys[key] = build_box_system(len(g.lower), 0, self.Jmax, key, self.J)
        return self._sys[key]


def _level_pieces(g: GridFunction, system) -> tuple[list[tuple[int, np.ndarray]], np.ndarray, int]:
    """Split ``g`` into per-level syntheses plus the residue not spanned by ``system``."""
    if system is None:
        return [(0, np.asarray(g.values))], np.zeros_like(g.values), 0
    if isinstance(system, _PlaneSystem):
        system = system.for_grid(g)
    field = system.analyze(g)
    pieces = []
    total = np.zeros(g.dims)
    for j in np.unique(field.j):
        part = field.subset(field.j == j)
        if not np.any(part.lam):
            continue
        vals = system.synthesize(part).values
        pieces.append((int(j), vals))
        total = total + vals
    return pieces, np.asarray(g.values) - total, int(system.Jmax)


def _face_coordinates(face: FaceDescriptor, out: GridFunction) -> tuple[np.ndarray, list[np.ndarray]]:
    """Signed perpendicular offsets ``z`` (shape dims + (m,)) and per-axis z arrays."""
    mesh = out.mesh()
    z = np.stack([mesh[ax] - c for ax, c in face.fixed], axis=-1)
    return z, mesh


def _broadcast_face(values: np.ndarray, face: FaceDescriptor, out: GridFunction) -> np.ndarray:
    shape = [1] * out.n
    for ax in face.free:
        shape[ax] = out.dims[ax]
    return np.reshape(values, shape)


def _default_box(face: FaceDescriptor, bundle: TraceBundle, chi: CutoffChi):
    if face.kind == "cube":
        return [0.0] * face.n, [1.0] * face.n
    g = next(iter(bundle.data.values()))
    lo = [0.0] * face.n
    hi = [0.0] * face.n
    for col, ax in enumerate(face.free):
        lo[ax], hi[ax] = g.lower[col], g.upper[col]
    for ax, c in face.fixed:
        lo[ax], hi[ax] = c - chi.radius, c + chi.radius
    return lo, hi


@dataclass
class ExtensionReport:
    residue_sup: float = 0.0
    levels: list = field(default_factory=list)
    residues: dict = field(default_factory=dict)


def extend(bundle: TraceBundle, params: SpaceParams, u: int, face_system=None, chi: CutoffChi | None = None,
           bbox=None, report: ExtensionReport | None = None) -> GridFunction:
    """``sum_alpha sum_j (1/alpha!) z^alpha chi(2^j z) G_{alpha,j}(y)`` with ``G_{alpha,j}`` the level-j part of ``g_alpha``.

    Data not spanned by the face system (the rim next to lower-dimensional faces and
    details finer than the system) is carried at the finest level and recorded in
    ``report.residues``.
    """
    face = bundle.face
    if not extension_window_ok(params, face, bundle.r, u):
        raise CellwaveError("extension needs u > s > r + (n-l)/p")
    if not bundle.data:
        raise CellwaveError("empty bundle")
    g0 = next(iter(bundle.data.values()))
    J = g0.J
    if chi is None:
        chi = build_cutoff_chi(face.n - face.l, u, u, variant=face.kind)
    if face_system is None:
        face_system = default_face_system(face, J)
    lo, hi = bbox if bbox is not None else _default_box(face, bundle, chi)
    out = GridFunction.zeros(lo, hi, J)
    z, _ = _face_coordinates(face, out)
    acc = np.zeros(out.dims)
    cache: dict[int, np.ndarray] = {}
    rep = report if report is not None else ExtensionReport()
    for alpha, g in bundle.data.items():
        if g.J != J:
            raise CellwaveError("bundle entries must share one resolution")
        if not np.any(g.values):
            continue
        pieces, residue, finest = _level_pieces(g, face_system)
        if np.any(residue):
            pieces.append((finest, residue))
            rep.residues[alpha] = residue
            rep.residue_sup = max(rep.residue_sup, float(np.max(np.abs(residue))))
        mono = np.ones(out.dims)
        for col, (ax, _) in enumerate(face.fixed):
            if alpha[ax]:
                mono = mono * z[..., col] ** alpha[ax]
        factorial = math.prod(math.factorial(a) for a in alpha)
        for j, vals in pieces:
            if j not in cache:
                cache[j] = chi(z * 2.0**j)
            acc += mono * cache[j] * _broadcast_face(vals, face, out) / factorial
            rep.levels.append(j)
    return out.with_values(acc)


def extend_all(bundles: dict, params: SpaceParams, u: int, orders: dict | None = None,
               chi_L: int | None = None) -> GridFunction:
    """All-dimensional extension on ``[0,1]^n``: lowest face dimension first, each later
    dimension extending what earlier extensions failed to produce on its faces.

    ``bundles`` maps ``(l, face index)`` to a TraceBundle; ``orders`` maps ``l`` to ``r^l``.
    """
    if not bundles:
        raise CellwaveError("no bundles given")
    first = next(iter(bundles.values()))
    n = first.face.n
    by_dim: dict[int, list[TraceBundle]] = {}
    for key, b in bundles.items():
        if b.face.kind != "cube" or b.face.n != n:
            raise CellwaveError("extend_all works on the faces of one cube")
        if orders is not None and orders.get(b.face.l, b.r) != b.r:
            raise CellwaveError(f"inconsistent order on face {b.face.name}: {b.r} != {orders[b.face.l]}")
        by_dim.setdefault(b.face.l, []).append(b)
    for l, group in by_dim.items():
        if len({b.r for b in group}) > 1:
            raise CellwaveError(f"inconsistent face orders in dimension {l}")
    J = first.data[next(iter(first.data))].J
    total = GridFunction.zeros([0.0] * n, [1.0] * n, J)
    systems: dict[int, object] = {}
    chis: dict[int, CutoffChi] = {}
    for l in sorted(by_dim):
        if l not in systems:
            systems[l] = default_face_system(cube_faces(n, l)[0], J)
            chis[l] = build_cutoff_chi(n - l, u if chi_L is None else chi_L, u)
        layer = np.zeros(total.dims)
        for b in by_dim[l]:
            already = trace(total, b.face, b.r)
            corrected = b.minus(already)
            if corrected.sup() == 0:
                continue
            layer += extend(corrected, params, u, systems[l], chis[l]).values
        total = total.with_values(total.values + layer)
    return total


def zero_bundle(face: FaceDescriptor, r: int, J: int) -> TraceBundle:
    lo, hi = [0.0] * face.n, [1.0] * face.n
    return TraceBundle(face, r, {a: face_grid(face, lo, hi, J) for a in face.perp_indices(r)})


# ---------------------------------------------------------------------------
# serialization


def _alpha_name(alpha) -> str:
    return "a" + "_".join(str(v) for v in alpha)


def write_bundle(bundle: TraceBundle, path: str | Path) -> Path:
    path = Path(path)
    entries = []
    for alpha, g in bundle.data.items():
        gpath = path.with_name(f"{path.stem}.{_alpha_name(alpha)}.json")
        write_gfn(g, gpath)
        entries.append({"alpha": list(alpha), "grid": gpath.name})
    path.write_text(json.dumps({"face": bundle.face.to_json(), "r": bundle.r, "entries": entries},
                               indent=1), encoding="utf-8")
    return path


def read_bundle(path: str | Path) -> TraceBundle:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        face = FaceDescriptor.from_json(doc["face"])
        data = {tuple(int(v) for v in e["alpha"]): read_gfn(path.parent / e["grid"]) for e in doc["entries"]}
        return TraceBundle(face, int(doc["r"]), data)
    except (KeyError, TypeError, ValueError) as exc:
        raise CellwaveError(f"malformed trace bundle: {exc}") from exc
