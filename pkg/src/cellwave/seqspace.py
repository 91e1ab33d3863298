"""Sequence-space norms for coefficient fields indexed by (level, location).

``b_norm`` is a plain mixed sum.  ``f_norm`` rasterizes the square function
``(sum_j,r 2^{jsq} |lambda chi|^q)^{1/q}`` onto a dyadic grid and integrates
it with the midpoint rule.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import RESOLUTION_BELOW, CellwaveError


@dataclass
class CoefficientField:
    """Coefficients with the support geometry of their characteristic functions.

    ``shape`` is ``"cube"`` (``radii`` are half-sides) or ``"ball"``.
    ``normalized`` switches to the L_p-normalized indicator ``2^{jn/p} chi``.
    """

    j: np.ndarray
    r: np.ndarray
    lam: np.ndarray
    centers: np.ndarray
    radii: np.ndarray
    shape: str = "cube"
    normalized: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.j = np.asarray(self.j, dtype=int).reshape(-1)
        k = len(self.j)
        self.lam = np.asarray(self.lam, dtype=float).reshape(k)
        centers = np.asarray(self.centers, dtype=float)
        r = np.asarray(self.r, dtype=np.int64)
        # an explicit column count keeps empty fields reshapeable
        self.centers = centers.reshape(k, centers.shape[-1] if k == 0 else -1)
        self.r = r.reshape(k, r.shape[-1] if k == 0 else -1)
        self.radii = np.broadcast_to(np.asarray(self.radii, dtype=float), (k,)).copy()
        if self.shape not in ("cube", "ball"):
            raise CellwaveError(f"unknown support shape {self.shape!r}")
        if not np.all(np.isfinite(self.lam)):
            raise CellwaveError("non-finite coefficient")

    @property
    def n(self) -> int:
        return self.centers.shape[1]

    def __len__(self) -> int:
        return len(self.j)

    @classmethod
    def dyadic(cls, j, m, lam, normalized: bool = False, anchor: str = "corner") -> "CoefficientField":
        """Entries on dyadic cubes: ``anchor="corner"`` means ``2^-j (m + [0,1]^n)``,
        ``anchor="center"`` means the cube of side ``2^-j`` centred at ``2^-j m``."""
        j = np.asarray(j, dtype=int).reshape(-1)
        m = np.asarray(m, dtype=np.int64).reshape(len(j), -1)
        side = 2.0 ** (-j.astype(float))
        shift = 0.5 if anchor == "corner" else 0.0
        centers = (m + shift) * side[:, None]
        return cls(j, m, lam, centers, side / 2, "cube", normalized, {"anchor": anchor})

    @classmethod
    def from_lattice(cls, lattice, lam, radius_constant: float | None = None) -> "CoefficientField":
        """Ball indicators around lattice points, radius ``c * 2^-j``."""
        if radius_constant is None:
            radius_constant = lattice.c3 if lattice.kind == "interior" and math.isfinite(lattice.c3) else lattice.c2
        radii = radius_constant * 2.0 ** (-lattice.j.astype(float))
        return cls(lattice.j, lattice.r, lam, lattice.x, radii, "ball", False, {"lattice": lattice.kind})

    def scaled(self, t: float) -> "CoefficientField":
        return CoefficientField(self.j, self.r, t * self.lam, self.centers, self.radii,
                                self.shape, self.normalized, dict(self.meta))

    def with_values(self, lam) -> "CoefficientField":
        return CoefficientField(self.j, self.r, lam, self.centers, self.radii,
                                self.shape, self.normalized, dict(self.meta))

    def subset(self, mask) -> "CoefficientField":
        mask = np.asarray(mask)
        return CoefficientField(self.j[mask], self.r[mask], self.lam[mask], self.centers[mask],
                                self.radii[mask], self.shape, self.normalized, dict(self.meta))

    @staticmethod
    def concat(fields: list["CoefficientField"]) -> "CoefficientField":
        first = fields[0]
        if any(f.shape != first.shape or f.normalized != first.normalized for f in fields):
            raise CellwaveError("cannot concatenate fields with different geometry conventions")
        return CoefficientField(np.concatenate([f.j for f in fields]),
                                np.concatenate([f.r for f in fields]),
                                np.concatenate([f.lam for f in fields]),
                                np.concatenate([f.centers for f in fields]),
                                np.concatenate([f.radii for f in fields]),
                                first.shape, first.normalized, dict(first.meta))

    def _is_dyadic_tiling(self) -> bool:
        if self.shape != "cube" or not len(self):
            return False
        side = 2.0 ** (-self.j.astype(float))
        if not np.allclose(self.radii, side / 2, rtol=0, atol=0):
            return False
        pos = self.centers / side[:, None] - 0.5
        return bool(np.all(pos == np.round(pos)))


# ---------------------------------------------------------------------------
# norms


def _lq_sum(values: np.ndarray, q: float) -> float:
    if math.isinf(q):
        return float(values.max()) if values.size else 0.0
    return float(np.sum(values**q)) ** (1.0 / q) if values.size else 0.0


def b_norm(field: CoefficientField, p: float, q: float, s: float | None = None) -> float:
    """``( sum_j [2^{js} (sum_r |lambda_j^r|^p)^{1/p}]^q )^{1/q}`` with sup at infinite indices."""
    p, q = float(p), float(q)
    if not (p > 0 and q > 0):
        raise CellwaveError("p and q must be positive")
    per_level = []
    for level in np.unique(field.j):
        a = np.abs(field.lam[field.j == level])
        inner = float(a.max()) if math.isinf(p) else float(np.sum(a**p)) ** (1.0 / p)
        weight = 2.0 ** (level * float(s)) if s is not None else 1.0
        per_level.append(weight * inner)
    return _lq_sum(np.array(per_level), q)


def _quadrature_box(field: CoefficientField, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Hull of all supports, rounded outward to multiples of ``step``."""
    lo = np.floor((field.centers - field.radii[:, None]).min(axis=0) / step) * step
    hi = np.ceil((field.centers + field.radii[:, None]).max(axis=0) / step) * step
    return lo, hi


def _dyadic_square_power(field: CoefficientField, weights: np.ndarray, q: float, J: int,
                         lo: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    """Sum (or max) of ``weights`` over aligned dyadic cubes, accumulated level by level."""
    n = field.n
    jmin = int(field.j.min())
    total = None
    for level in range(jmin, J + 1):
        ldims = tuple(d >> (J - level) for d in dims)
        if total is None:
            total = np.zeros(ldims)
        else:
            for ax in range(n):
                total = np.repeat(total, 2, axis=ax)
        sel = field.j == level
        if sel.any():
            side = 2.0**-level
            idx = np.round(field.centers[sel] / side - 0.5 - lo / side).astype(np.int64)
            flat = np.ravel_multi_index(idx.T, ldims)
            if math.isinf(q):
                acc = np.zeros(int(np.prod(ldims)))
                np.maximum.at(acc, flat, weights[sel])
                total = np.maximum(total, acc.reshape(ldims))
            else:
                total += np.bincount(flat, weights[sel], minlength=int(np.prod(ldims))).reshape(ldims)
    return total


def _generic_square_power(field: CoefficientField, weights: np.ndarray, q: float, J: int,
                          lo: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    n = field.n
    h = 2.0**-J
    size = int(np.prod(dims))
    acc = np.zeros(size)
    # cells whose midpoints lie in the support; supports are grouped by radius
    node = np.round((field.centers - lo) / h).astype(np.int64)
    off_node = (field.centers - lo) / h - node
    keys = np.concatenate([np.round(field.radii / h * 1e6)[:, None], np.round(off_node * 1e6)], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    for g in range(len(uniq)):
        sel = np.nonzero(inverse == g)[0]
        radius = field.radii[sel[0]] / h
        frac = off_node[sel[0]]
        reach = int(math.ceil(radius)) + 1
        rng = np.arange(-reach, reach + 1)
        offs = np.array(list(itertools.product(rng, repeat=n)), dtype=np.int64)
        rel = offs + 0.5 - frac
        if field.shape == "ball":
            inside = np.sqrt((rel**2).sum(1)) < radius - 1e-12
        else:
            inside = np.all(np.abs(rel) < radius - 1e-12, axis=1)
        offs = offs[inside]
        # merge duplicate supports first
        cells, inv = np.unique(node[sel], axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        w = np.zeros(len(cells))
        if math.isinf(q):
            np.maximum.at(w, inv, weights[sel])
        else:
            np.add.at(w, inv, weights[sel])
        idx = cells[:, None, :] + offs[None, :, :]
        ok = np.all((idx >= 0) & (idx < np.array(dims)), axis=2)
        flat = np.ravel_multi_index(tuple(np.moveaxis(idx[ok], -1, 0)), dims)
        vals = np.broadcast_to(w[:, None], ok.shape)[ok]
        if math.isinf(q):
            np.maximum.at(acc, flat, vals)
        else:
            acc += np.bincount(flat, vals, minlength=size)
    return acc.reshape(dims)


def square_function(field: CoefficientField, p: float, q: float, s: float | None = None,
                    J: int | None = None) -> tuple[np.ndarray, float, np.ndarray]:
    """Samples of the square function on the quadrature grid, with spacing and lower corner."""
    p, q = float(p), float(q)
    finest = int(field.j.max())
    if J is None:
        J = finest + 2
    if J < finest + 2:
        raise CellwaveError(RESOLUTION_BELOW)
    h = 2.0**-J
    tiling = field._is_dyadic_tiling()
    lo, hi = _quadrature_box(field, 2.0 ** -int(field.j.min()) if tiling else h)
    dims = tuple(int(round(v)) for v in (hi - lo) / h)
    mag = np.abs(field.lam)
    if s is not None:
        mag = mag * 2.0 ** (field.j * float(s))
    if field.normalized:
        mag = mag * 2.0 ** (field.j * field.n / p) if not math.isinf(p) else mag
    weights = mag if math.isinf(q) else mag**q
    if tiling:
        power = _dyadic_square_power(field, weights, q, J, lo, dims)
    else:
        power = _generic_square_power(field, weights, q, J, lo, dims)
    g = power if math.isinf(q) else power ** (1.0 / q)
    return g, h, lo


def f_norm(field: CoefficientField, p: float, q: float, s: float | None = None,
           J: int | None = None) -> float:
    """Midpoint-rule ``L_p`` norm of the ``l_q`` square function."""
    if not len(field) or not np.any(field.lam):
        return 0.0
    p = float(p)
    if not (p > 0 and float(q) > 0):
        raise CellwaveError("p and q must be positive")
    g, h, _ = square_function(field, p, q, s, J)
    if math.isinf(p):
        return float(g.max())
    return (float(np.sum(g**p)) * h ** field.n) ** (1.0 / p)


# ---------------------------------------------------------------------------
# coefficient files


def save_coefficients(field: CoefficientField, path: str | Path, geometry: dict | None = None) -> None:
    geometry = dict(geometry or {"kind": "dyadic", "n": field.n, "anchor": field.meta.get("anchor", "corner")})
    entries = [{"j": int(j), "r": [int(v) for v in r] if field.n > 1 else int(r[0]), "lambda": float(v)}
               for j, r, v in zip(field.j, field.r, field.lam)]
    Path(path).write_text(json.dumps({"geometry": geometry, "entries": entries}, sort_keys=True), encoding="utf-8")


def load_coefficients(path: str | Path) -> CoefficientField:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        geometry = doc.get("geometry", {"kind": "dyadic", "n": 1}) if isinstance(doc, dict) else {"kind": "dyadic", "n": 1}
        entries = doc["entries"] if isinstance(doc, dict) else doc
        j = [int(e["j"]) for e in entries]
        r = [e["r"] if isinstance(e["r"], list) else [e["r"]] for e in entries]
        lam = [float(e["lambda"]) for e in entries]
    except (KeyError, TypeError, ValueError) as exc:
        raise CellwaveError(f"malformed coefficient file: {exc}") from exc
    kind = geometry.get("kind", "dyadic")
    n = int(geometry.get("n", len(r[0]) if r else 1))
    if any(len(v) != n for v in r):
        raise CellwaveError("coefficient location does not match geometry dimension")
    if kind == "dyadic":
        return CoefficientField.dyadic(j, r, lam, bool(geometry.get("normalized", False)),
                                       geometry.get("anchor", "corner"))
    if kind == "lattice":
        from .whitney import DomainDescriptor, closure_lattice, interior_lattice, whitney_decompose

        dom = DomainDescriptor.parse(geometry.get("domain", "cube"), n)
        jmax = int(geometry["Jmax"])
        lat = (closure_lattice(dom, jmax) if geometry.get("lattice") == "closure"
               else interior_lattice(whitney_decompose(dom, jmax), jmax))
        lookup = {key: i for i, key in enumerate(zip(lat.j.tolist(), map(tuple, lat.r.tolist())))}
        idx = []
        for jj, rr in zip(j, r):
            key = (jj, tuple(rr))
            if key not in lookup:
                raise CellwaveError(f"entry (j={jj}, r={rr}) is not in the attached lattice")
            idx.append(lookup[key])
        idx = np.array(idx, dtype=int)
        sub = CoefficientField.from_lattice(lat, np.zeros(len(lat)))
        sub = sub.subset(idx)
        return sub.with_values(lam)
    raise CellwaveError(f"unknown geometry kind {kind!r}")
