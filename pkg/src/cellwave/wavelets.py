"""Tensor wavelet systems on boxes and Whitney-adapted systems on domains.

One-dimensional generators are tabulated on a dyadic grid by exact
refinement: integer values from the eigenvector of the refinement matrix,
then one refinement sweep per extra binary digit.  A block at level ``j`` is
sampled at cell midpoints, which always land on the table grid, so no
interpolation is involved.  Per-level 1-D sample matrices are applied along
each axis for analysis (``lambda = 2^{jn/2} (f, Phi)``) and synthesis
(``f = sum lambda 2^{-jn/2} Phi``).
"""

from __future__ import annotations

import functools
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pywt
import scipy.sparse as sp

from .errors import ORDER_TOO_LOW, CellwaveError
from .grid import GridFunction, SpaceParams
from .seqspace import CoefficientField, f_norm
from .whitney import DomainDescriptor, WhitneyDecomposition, whitney_decompose

MIN_TABLE_DEPTH = 8


# ---------------------------------------------------------------------------
# generator tables


@functools.lru_cache(maxsize=None)
def generator_table(u: int, depth: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Scaling function and mother wavelet on ``i / 2**depth``, ``0 <= i <= S 2**depth``.

    ``u = 0`` is Haar; ``u >= 1`` is the Daubechies filter with ``u + 1``
    vanishing moments.  Returns ``(phi, psi, S)`` with ``S`` the support length.
    """
    if u == 0:
        size = 2**depth
        phi = np.zeros(size + 1)
        phi[:size] = 1.0
        psi = np.zeros(size + 1)
        psi[: size // 2] = 1.0
        psi[size // 2: size] = -1.0
        return phi, psi, 1
    wav = pywt.Wavelet(f"db{u + 1}")
    h = np.asarray(wav.rec_lo)
    g = np.asarray(wav.rec_hi)
    S = len(h) - 1
    # phi at the integers 0..S: fixed point of phi(i) = sqrt2 sum_k h_k phi(2i - k)
    A = np.zeros((S + 1, S + 1))
    for i in range(S + 1):
        for k in range(S + 1):
            if 0 <= 2 * i - k <= S:
                A[i, 2 * i - k] += math.sqrt(2) * h[k]
    w, v = np.linalg.eig(A)
    vec = np.real(v[:, np.argmin(np.abs(w - 1))])
    vec = vec / vec.sum()
    phi = vec
    for d in range(depth):
        fine = np.zeros(S * 2 ** (d + 1) + 1)
        idx = np.arange(fine.size)
        for k, hk in enumerate(h):
            # 2x - k at x = i / 2^(d+1) is index i - k 2^d on the coarser grid
            src = idx - k * 2**d
            ok = (src >= 0) & (src < phi.size)
            fine[ok] += math.sqrt(2) * hk * phi[src[ok]]
        phi = fine
    # psi(x) = sqrt2 sum_k g_k phi(2x - k); 2x - k on the depth grid is index 2i - k 2^depth
    psi = np.zeros_like(phi)
    idx = np.arange(phi.size)
    for k, gk in enumerate(g):
        src = 2 * idx - k * 2**depth
        ok = (src >= 0) & (src < phi.size)
        psi[ok] += math.sqrt(2) * gk * phi[src[ok]]
    return phi, psi, S


def _level_matrix(u: int, j: int, J: int, n_cells: int, cells_per_unit: int,
                  wavelet: bool, periodic: bool, k_range: range) -> sp.csr_matrix:
    """Rows ``2^{j/2} g(2^j x - k)`` sampled at the midpoints of one axis.

    ``x`` is measured from the axis origin in units where the axis spans
    ``n_cells / cells_per_unit``.
    """
    step = J - j
    if step < 1:
        raise CellwaveError("render resolution must exceed the finest wavelet level")
    depth = max(MIN_TABLE_DEPTH, step + 1)
    phi, psi, S = generator_table(u, depth)
    table = psi if wavelet else phi
    c = np.arange(S * 2**step)
    vals = table[(2 * c + 1) * 2 ** (depth - step - 1)] * 2 ** (j / 2)
    keep = vals != 0
    c, vals = c[keep], vals[keep]
    ks = np.array(list(k_range), dtype=np.int64)
    cols = ks[:, None] * 2**step + c[None, :]
    rows = np.broadcast_to(np.arange(len(ks))[:, None], cols.shape)
    data = np.broadcast_to(vals[None, :], cols.shape)
    if periodic:
        cols = cols % n_cells
        ok = np.ones(cols.shape, dtype=bool)
    else:
        ok = (cols >= 0) & (cols < n_cells)
    mat = sp.coo_matrix((data[ok], (rows[ok], cols[ok])), shape=(len(ks), n_cells))
    return mat.tocsr()


def _apply(data: np.ndarray, mats: list, first_axis: int, transpose: bool = False) -> np.ndarray:
    """Contract ``mats[i]`` with axis ``first_axis + i`` of ``data``."""
    out = data
    for i, M in enumerate(mats):
        ax = first_axis + i
        moved = np.moveaxis(out, ax, 0)
        shape = moved.shape
        flat = moved.reshape(shape[0], -1)
        res = (M.T @ flat) if transpose else (M @ flat)
        res = np.asarray(res).reshape((res.shape[0],) + shape[1:])
        out = np.moveaxis(res, 0, ax)
    return out


def _types(n: int, include_scaling: bool) -> list[tuple[int, ...]]:
    return [e for e in itertools.product((0, 1), repeat=n) if any(e) or include_scaling]


# ---------------------------------------------------------------------------
# systems


@dataclass
class WaveletSystem:
    """A wavelet system rendered at resolution ``J`` on a box or inside a domain."""

    kind: str                        # "box" or "domain"
    n: int
    u: int
    Jmax: int
    J: int
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    dec: WhitneyDecomposition | None = None
    jmin: int = 0
    c4: float = 1.0
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        self._cache: dict = {}

    # -- geometry ---------------------------------------------------------
    @property
    def h(self) -> float:
        return 2.0**-self.J

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(int(round((b - a) / self.h)) for a, b in zip(self.lower, self.upper))

    @property
    def support_length(self) -> int:
        return generator_table(self.u, MIN_TABLE_DEPTH)[2]

    def _axis_mats(self, j: int, ax: int):
        key = ("axis", j, ax)
        if key not in self._cache:
            ncell = self.dims[ax]
            span = self.upper[ax] - self.lower[ax]
            periodic = self.kind == "box"
            S = self.support_length
            if periodic:
                kr = range(int(round(span * 2**j)))
            else:
                kr = range(-(S - 1), int(round(span * 2**j)))
            self._cache[key] = (
                _level_matrix(self.u, j, self.J, ncell, 2**self.J, False, periodic, kr),
                _level_matrix(self.u, j, self.J, ncell, 2**self.J, True, periodic, kr),
                np.array(list(kr), dtype=np.int64),
            )
        return self._cache[key]

    def _check_grid(self, f: GridFunction) -> None:
        if f.J != self.J or f.lower != tuple(self.lower) or f.upper != tuple(self.upper):
            raise CellwaveError("resolution mismatch between function and wavelet system")

    # -- box and unperiodized tensor systems -------------------------------
    def _tensor_levels(self):
        for j in range(self.jmin, self.Jmax + 1):
            for e in _types(self.n, j == self.jmin):
                yield j, e

    def _block_mask(self, j: int, e: tuple[int, ...], ks: list[np.ndarray]) -> np.ndarray | None:
        """Interior condition for unperiodized domain blocks."""
        if self.kind == "box":
            return None
        S = self.support_length
        side = 2.0**-j
        grids = np.meshgrid(*ks, indexing="ij")
        lo = np.stack([self.lower[a] + g * side for a, g in enumerate(grids)], axis=-1)
        hi = lo + S * side
        return self.dec.domain.box_distance(lo, hi) >= self.c4 * side

    def _tensor_analyze(self, values: np.ndarray) -> CoefficientField:
        n = self.n
        parts = []
        for j in range(self.jmin, self.Jmax + 1):
            mats = [self._axis_mats(j, ax) for ax in range(n)]
            ks = [m[2] for m in mats]
            for e in _types(n, j == self.jmin):
                choice = [mats[ax][e[ax]] for ax in range(n)]
                coef = _apply(values, choice, 0) * self.h**n * 2 ** (j * n / 2)
                mask = self._block_mask(j, e, ks)
                grids = np.meshgrid(*ks, indexing="ij")
                kk = np.stack([g.ravel() for g in grids], axis=-1)
                cvals = coef.ravel()
                if mask is not None:
                    sel = mask.ravel()
                    kk, cvals = kk[sel], cvals[sel]
                parts.append((j, e, kk, cvals))
        return self._field_from_parts(parts)

    def _tensor_synthesize(self, field: CoefficientField) -> np.ndarray:
        n = self.n
        out = np.zeros(self.dims)
        lookup = _group_entries(field, n)
        for (j, e), (kk, vals) in lookup.items():
            if j < self.jmin or j > self.Jmax or (not any(e) and j != self.jmin):
                raise CellwaveError(f"coefficient key (j={j}, type={e}) not in system")
            mats = [self._axis_mats(j, ax) for ax in range(n)]
            ks = [m[2] for m in mats]
            shape = tuple(len(k) for k in ks)
            idx = tuple(kk[:, a] - ks[a][0] for a in range(n))
            if any(np.any((i < 0) | (i >= s)) for i, s in zip(idx, shape)):
                raise CellwaveError("coefficient location not in system")
            mask = self._block_mask(j, e, ks)
            if mask is not None and not np.all(mask[idx]):
                raise CellwaveError("coefficient location not in system")
            dense = np.zeros(shape)
            np.add.at(dense, idx, vals * 2 ** (-j * n / 2))
            choice = [mats[ax][e[ax]] for ax in range(n)]
            out += _apply(dense, choice, 0, transpose=True)
        return out

    # -- Whitney-Haar systems --------------------------------------------------
    def _whitney_groups(self):
        dec = self.dec
        for level in dec.levels():
            yield level, dec.m[dec.nu == level]

    def _relative(self, level: int) -> "WaveletSystem":
        key = ("rel", level)
        if key not in self._cache:
            self._cache[key] = WaveletSystem("box", self.n, 0, self.Jmax - level, self.J - level,
                                             (0.0,) * self.n, (1.0,) * self.n)
        return self._cache[key]

    def _cube_slices(self, level: int, corners: np.ndarray):
        size = 2 ** (self.J - level)
        origin = np.array([round(a * 2**self.J) for a in self.lower], dtype=np.int64)
        start = corners * size - origin
        return size, start

    def _haar_domain_analyze(self, values: np.ndarray) -> CoefficientField:
        n = self.n
        parts = []
        for level, corners in self._whitney_groups():
            size, start = self._cube_slices(level, corners)
            offs = np.arange(size)
            idx = tuple((start[:, a][:, None] + offs[None, :]).reshape((-1,) + (1,) * a + (size,) + (1,) * (n - 1 - a))
                        for a in range(n))
            blocks = values[idx]                       # (K, size, ..., size)
            rel = self._relative(level)
            for jr in range(0, rel.Jmax + 1):
                mats = [rel._axis_mats(jr, ax) for ax in range(n)]
                for e in _types(n, jr == 0):
                    choice = [mats[ax][e[ax]] for ax in range(n)]
                    coef = _apply(blocks, choice, 1) * rel.h**n * 2 ** (jr * n / 2)
                    width = 2**jr
                    sub = np.stack(np.meshgrid(*[np.arange(width)] * n, indexing="ij"), -1).reshape(-1, n)
                    kk = (corners[:, None, :] * width + sub[None, :, :]).reshape(-1, n)
                    parts.append((level + jr, e, kk, coef.reshape(len(corners), -1).ravel()))
        return self._field_from_parts(parts)

    def _haar_domain_synthesize(self, field: CoefficientField) -> np.ndarray:
        n = self.n
        out = np.zeros(self.dims)
        lookup = _group_entries(field, n)
        used = 0
        for level, corners in self._whitney_groups():
            size, start = self._cube_slices(level, corners)
            rel = self._relative(level)
            blocks = np.zeros((len(corners),) + (size,) * n)
            base = np.array([round(a * 2**level) for a in self.lower], dtype=np.int64)
            ldims = tuple(int(round((b - a) * 2**level)) for a, b in zip(self.lower, self.upper))
            owner_map = -np.ones(ldims, dtype=np.int64)
            owner_map[tuple((corners - base).T)] = np.arange(len(corners))
            for jr in range(0, rel.Jmax + 1):
                width = 2**jr
                mats = [rel._axis_mats(jr, ax) for ax in range(n)]
                for e in _types(n, jr == 0):
                    entry = lookup.get((level + jr, e))
                    if entry is None:
                        continue
                    kk, vals = entry
                    parent = kk // width
                    rel_parent = parent - base
                    inside = np.all((rel_parent >= 0) & (rel_parent < np.array(ldims)), axis=1)
                    owner = -np.ones(len(kk), dtype=np.int64)
                    owner[inside] = owner_map[tuple(rel_parent[inside].T)]
                    mine = owner >= 0
                    if not mine.any():
                        continue
                    used += int(mine.sum())
                    dense = np.zeros((len(corners),) + (width,) * n)
                    local = kk[mine] - parent[mine] * width
                    np.add.at(dense, (owner[mine],) + tuple(local.T), vals[mine] * 2 ** (-jr * n / 2))
                    choice = [mats[ax][e[ax]] for ax in range(n)]
                    blocks += _apply(dense, choice, 1, transpose=True)
            offs = np.arange(size)
            idx = tuple((start[:, a][:, None] + offs[None, :]).reshape((-1,) + (1,) * a + (size,) + (1,) * (n - 1 - a))
                        for a in range(n))
            out[idx] += blocks
        if used != len(field):
            raise CellwaveError("coefficient key not in system")
        return out

    # -- public ------------------------------------------------------------------
    @property
    def whitney_haar(self) -> bool:
        return self.kind == "domain" and self.u == 0

    def analyze(self, f: GridFunction) -> CoefficientField:
        self._check_grid(f)
        if self.whitney_haar:
            return self._haar_domain_analyze(np.asarray(f.values))
        return self._tensor_analyze(np.asarray(f.values))

    def synthesize(self, field: CoefficientField) -> GridFunction:
        if len(field) and field.r.shape[1] != 2 * self.n:
            raise CellwaveError("coefficient keys do not match system dimension")
        if self.whitney_haar:
            vals = self._haar_domain_synthesize(field)
        else:
            vals = self._tensor_synthesize(field)
        return GridFunction(self.lower, self.upper, self.J, vals)

    def _field_from_parts(self, parts) -> CoefficientField:
        n = self.n
        js, rs, lams = [], [], []
        for j, e, kk, vals in parts:
            js.append(np.full(len(kk), j))
            rs.append(np.concatenate([np.broadcast_to(np.array(e), (len(kk), n)), kk], axis=1))
            lams.append(vals)
        if not js:
            return CoefficientField(np.zeros(0, int), np.zeros((0, 2 * n)), np.zeros(0), np.zeros((0, n)), np.zeros(0))
        j = np.concatenate(js)
        r = np.concatenate(rs)
        side = 2.0 ** (-j.astype(float))
        # Whitney-Haar keys are absolute dyadic indices; tensor keys count from the lower corner
        origin = np.zeros(n) if self.whitney_haar else np.array(self.lower)
        centers = origin[None, :] + (r[:, n:] + 0.5) * side[:, None]
        return CoefficientField(j, r, np.concatenate(lams), centers, side / 2, "cube", False,
                                {"system": self.kind, "u": self.u})

    def block(self, j: int, r) -> GridFunction:
        """The L_2-normalized block ``Phi_r^j`` sampled on the system grid."""
        r = np.asarray(r, dtype=np.int64).reshape(1, -1)
        unit = CoefficientField(np.array([j]), r, np.array([2.0 ** (j * self.n / 2)]),
                                np.zeros((1, self.n)), np.ones(1))
        return self.synthesize(unit)

    def keys(self) -> CoefficientField:
        """All block keys, with zero values."""
        zero = GridFunction(self.lower, self.upper, self.J, np.zeros(self.dims))
        return self.analyze(zero)

    def manifest(self) -> dict:
        out = {"kind": self.kind, "n": self.n, "u": self.u, "Jmax": self.Jmax, "J": self.J,
               "bbox": [list(self.lower), list(self.upper)], "jmin": self.jmin, "c4": self.c4}
        if self.dec is not None:
            d = self.dec.domain
            out["domain"] = {"kind": d.kind, "n": d.n, "l": d.l, "bbox": [list(d.bbox[0]), list(d.bbox[1])],
                             "max_level": self.dec.max_level}
        return out


def _group_entries(field: CoefficientField, n: int) -> dict:
    out: dict = {}
    if not len(field):
        return out
    e_all = field.r[:, :n]
    for key in {(int(j), tuple(int(v) for v in e)) for j, e in zip(field.j, e_all)}:
        sel = (field.j == key[0]) & np.all(e_all == np.array(key[1]), axis=1)
        out[key] = (field.r[sel, n:], field.lam[sel])
    return out


def _check_u(u: int) -> None:
    if u not in (0, 1, 2, 3):
        raise CellwaveError(f"unsupported wavelet order u={u}; use 0, 1, 2 or 3")


def build_box_system(n: int, u: int, Jmax: int, bbox=None, J: int | None = None) -> WaveletSystem:
    """Periodized tensor system on ``bbox`` with levels ``0..Jmax`` rendered at ``J``."""
    _check_u(u)
    if Jmax < 0 or Jmax > 12:
        raise CellwaveError("Jmax must lie in 0..12")
    lower, upper = bbox if bbox is not None else ((0.0,) * n, (1.0,) * n)
    lower = tuple(float(v) for v in lower)
    upper = tuple(float(v) for v in upper)
    for a, b in zip(lower, upper):
        span = b - a
        if span < 1 or span != int(span):
            raise CellwaveError("box sides must be positive integers")
    J = Jmax + 1 if J is None else int(J)
    if J <= Jmax:
        raise CellwaveError("render resolution must exceed Jmax")
    sys_ = WaveletSystem("box", n, u, Jmax, J, lower, upper)
    sys_.constants = measure_constants(sys_)
    return sys_


def build_domain_system(dec: WhitneyDecomposition, u: int, Jmax: int, J: int | None = None,
                        c4: float = 1.0, jmin: int = 1) -> WaveletSystem:
    """Interior system: Whitney-Haar for ``u = 0``, filtered tensor blocks otherwise."""
    _check_u(u)
    if dec.degenerate:
        raise CellwaveError("degenerate Whitney decomposition has no interior system")
    if len(dec) and Jmax < int(dec.nu.max()):
        raise CellwaveError("Jmax below the finest Whitney level")
    J = Jmax + 1 if J is None else int(J)
    if J <= Jmax:
        raise CellwaveError("render resolution must exceed Jmax")
    lo, hi = dec.domain.bbox
    sys_ = WaveletSystem("domain", dec.n, u, Jmax, J, tuple(lo), tuple(hi), dec,
                         jmin=0 if u == 0 else jmin, c4=c4)
    sys_.constants = measure_constants(sys_)
    return sys_


def measure_constants(sys_: WaveletSystem) -> dict:
    """Support radius and derivative bounds of the generators, in block-scaled units."""
    phi, psi, S = generator_table(sys_.u, MIN_TABLE_DEPTH)
    step = 2.0**-MIN_TABLE_DEPTH
    radius = math.sqrt(sys_.n) * S / 2 if S > 1 else math.sqrt(sys_.n) / 2
    sup_by_order = []
    for order in range(0, sys_.u + 1):
        bound = 0.0
        for g in (phi, psi):
            d = g.copy()
            for _ in range(order):
                d = np.diff(d) / step
            bound = max(bound, float(np.max(np.abs(d))))
        sup_by_order.append(bound)
    c2 = 0.0
    for alpha in itertools.product(range(sys_.u + 1), repeat=sys_.n):
        if sum(alpha) <= sys_.u:
            c2 = max(c2, math.prod(sup_by_order[a] for a in alpha))
    return {"c1": radius, "c2": c2, "support_length": S}


# ---------------------------------------------------------------------------
# analysis, synthesis and norms


def analyze(f: GridFunction, sys_: WaveletSystem) -> CoefficientField:
    return sys_.analyze(f)


def synthesize(field: CoefficientField, sys_: WaveletSystem) -> GridFunction:
    return sys_.synthesize(field)


def validity_window(u: int, params: SpaceParams) -> bool:
    s, p, q = params.as_floats()
    if u == 0:
        return s < min(1 / p, 1 / q)
    return u > s


def default_order(params: SpaceParams) -> int:
    s, p, q = params.as_floats()
    if s < min(1 / p, 1 / q):
        return 0
    return min(3, int(math.floor(s)) + 1)


def default_levels(u: int, J: int) -> int:
    """Finest wavelet level for norm estimates: every level for Haar, three
    levels of oversampling for smooth generators."""
    return J - 1 if u == 0 else J - 3


def estimator_system(f: GridFunction, params: SpaceParams, u: int | None = None) -> WaveletSystem:
    u = default_order(params) if u is None else u
    return build_box_system(f.n, u, default_levels(u, f.J), (f.lower, f.upper), f.J)


def wavelet_norm(f: GridFunction, params: SpaceParams, sys_: WaveletSystem | None = None) -> float:
    """``f_norm`` of the wavelet coefficients, weighted by ``2^{js}``."""
    if sys_ is None:
        sys_ = estimator_system(f, params)
    if not validity_window(sys_.u, params):
        raise CellwaveError(ORDER_TOO_LOW)
    if not np.any(f.values):
        return 0.0
    field = sys_.analyze(f)
    s, p, q = params.as_floats()
    return f_norm(field, p, q, s)


def fubini_norm(f: GridFunction, params: SpaceParams, l: int, u: int | None = None) -> float:
    """Sum over ``l``-subsets of axes of the ``L_p`` norm (in the other axes) of slice norms."""
    n = f.n
    if not 1 <= l < n:
        raise CellwaveError("slice dimension must satisfy 1 <= l < n")
    s, p, q = params.as_floats()
    if not s > params.sigma_pq:
        raise CellwaveError("fubini cross-check needs s > sigma_pq")
    sub = SpaceParams(params.s, params.p, params.q, l)
    total = 0.0
    for axes in itertools.combinations(range(n), l):
        rest = [a for a in range(n) if a not in axes]
        order = list(axes) + rest
        vals = np.transpose(f.values, order)
        inner_shape = vals.shape[:l]
        outer = vals.reshape(inner_shape + (-1,))
        lo = [f.lower[a] for a in axes]
        hi = [f.upper[a] for a in axes]
        probe = GridFunction(lo, hi, f.J, np.zeros(inner_shape))
        sys_ = estimator_system(probe, sub, u)
        norms = np.zeros(outer.shape[-1])
        for i in range(outer.shape[-1]):
            sl = outer[..., i]
            if np.any(sl):
                norms[i] = wavelet_norm(GridFunction(lo, hi, f.J, sl), sub, sys_)
        total += (float(np.sum(norms**p)) * f.h ** (n - l)) ** (1 / p)
    return total


# ---------------------------------------------------------------------------
# files


def system_from_manifest(doc: dict) -> WaveletSystem:
    """Rebuild a system from ``WaveletSystem.manifest()``; blocks are regenerated."""
    try:
        kind, n, u, Jmax, J = doc["kind"], int(doc["n"]), int(doc["u"]), int(doc["Jmax"]), int(doc["J"])
        if kind == "box":
            return build_box_system(n, u, Jmax, doc["bbox"], J)
        if kind == "domain":
            d = doc["domain"]
            dom = DomainDescriptor(d["kind"], int(d["n"]), int(d["l"]), d["bbox"])
            dec = whitney_decompose(dom, int(d["max_level"]))
            return build_domain_system(dec, u, Jmax, J, float(doc.get("c4", 1.0)), int(doc.get("jmin", 1)))
    except (KeyError, TypeError, ValueError) as exc:
        raise CellwaveError(f"malformed system manifest: {exc}") from exc
    raise CellwaveError(f"unknown system kind {kind!r}")


def write_system_coefficients(field: CoefficientField, sys_: WaveletSystem, path: str | Path) -> Path:
    entries = [{"j": int(j), "r": [int(v) for v in r], "lambda": float(v)}
               for j, r, v in zip(field.j, field.r, field.lam)]
    path = Path(path)
    path.write_text(json.dumps({"system": sys_.manifest(), "entries": entries}, sort_keys=True), encoding="utf-8")
    return path


def read_system_coefficients(path: str | Path, sys_: WaveletSystem | None = None) -> tuple[WaveletSystem, CoefficientField]:
    """Coefficients keyed like ``sys_.keys()``; keys absent from the file are zero."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = doc["entries"]
        if sys_ is None:
            sys_ = system_from_manifest(doc["system"])
        keys = sys_.keys()
        lookup = {(int(j), tuple(int(v) for v in r)): i for i, (j, r) in enumerate(zip(keys.j, keys.r))}
        lam = np.zeros(len(keys))
        for e in entries:
            key = (int(e["j"]), tuple(int(v) for v in e["r"]))
            if key not in lookup:
                raise CellwaveError(f"coefficient {key} is not a block of this system")
            lam[lookup[key]] = float(e["lambda"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CellwaveError):
            raise
        raise CellwaveError(f"malformed coefficient file: {exc}") from exc
    return sys_, keys.with_values(lam)
