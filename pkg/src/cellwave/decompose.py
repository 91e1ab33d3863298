"""Splitting a function on the unit cube into boundary data and an interior remainder.

The plan fixes, for every face dimension ``l``, how many normal derivatives
are peeled off.  ``decompose_cube`` takes the traces of ``f`` on all faces
of those dimensions, extends them back into the cube and keeps what is left
as the interior remainder, which is expanded in an interior wavelet system.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .boundary import (
    TraceBundle,
    cube_faces,
    default_face_system,
    extend,
    extend_all,
    read_bundle,
    trace,
    trace_window_ok,
    write_bundle,
)
from .errors import CellwaveError
from .gfn import read_gfn, write_gfn
from .grid import GridFunction, SpaceParams
from .hardy import check_reinforce
from .seqspace import CoefficientField, b_norm, f_norm
from .wavelets import build_box_system, build_domain_system, default_levels, estimator_system, wavelet_norm
from .whitney import DomainDescriptor, whitney_decompose

FLOAT_TOL = 1e-9
# functions vanishing this close to the boundary need no reflection
COLLAR = 1 / 16


# ---------------------------------------------------------------------------
# plan arithmetic


def _exact(x):
    return x if isinstance(x, (int, Fraction)) else float(x)


def _is_integer(x) -> bool:
    if isinstance(x, (int, Fraction)):
        return Fraction(x).denominator == 1
    return abs(x - round(x)) < FLOAT_TOL


def _ceil(x) -> int:
    if isinstance(x, (int, Fraction)):
        return math.ceil(Fraction(x))
    return int(round(x)) if _is_integer(x) else math.ceil(x)


def _floor(x) -> int:
    if isinstance(x, (int, Fraction)):
        return math.floor(Fraction(x))
    return int(round(x)) if _is_integer(x) else math.floor(x)


def _positive(x) -> bool:
    return x > 0 if isinstance(x, (int, Fraction)) else x > FLOAT_TOL


@dataclass
class DecompositionPlan:
    params: SpaceParams
    l0: int
    orders: dict[int, int]
    critical_set: list[int]

    def offset(self, l: int):
        """``s - (n - l)/p``, exact for rational inputs."""
        return _offset(self.params, l)

    def reinforce_order(self, l: int) -> int:
        return int(round(self.offset(l)))

    def to_json(self) -> dict:
        return {"s": str(self.params.s), "p": str(self.params.p), "q": str(self.params.q), "n": self.params.n,
                "l0": self.l0, "orders": {str(k): v for k, v in sorted(self.orders.items())},
                "critical_set": self.critical_set}


def _offset(params: SpaceParams, l: int):
    s, p = _exact(params.s), _exact(params.p)
    if isinstance(s, (int, Fraction)) and isinstance(p, (int, Fraction)):
        return Fraction(s) - Fraction(params.n - l) / Fraction(p)
    return float(s) - (params.n - l) / float(p)


def plan(params: SpaceParams) -> DecompositionPlan:
    """Starting face dimension, trace orders and critical dimensions for ``params``."""
    n = params.n
    if not float(params.s) > 0:
        raise CellwaveError("the decomposition needs s > 0")
    s, p = _exact(params.s), _exact(params.p)
    # l0 solves (n - l0) < s p <= (n - l0) + 1, clamped at 0
    sp = Fraction(s) * Fraction(p) if isinstance(s, (int, Fraction)) and isinstance(p, (int, Fraction)) \
        else float(s) * float(p)
    l0 = max(0, n - _ceil(sp) + 1)
    orders = {}
    for l in range(l0, n):
        v = _offset(params, l)
        orders[l] = int(round(v)) - 1 if _is_integer(v) else _floor(v)
    critical = [l for l in range(n) if _is_integer(_offset(params, l)) and not _positive(-_offset(params, l))]
    return DecompositionPlan(params, l0, orders, critical)


# ---------------------------------------------------------------------------
# the cube decomposition


@dataclass
class CubeDecomposition:
    plan: DecompositionPlan
    u: int
    f_rloc: GridFunction
    bundles: dict
    interior: CoefficientField
    interior_residue: GridFunction
    face_fields: dict = field(default_factory=dict)
    verification: dict = field(default_factory=dict)

    @property
    def J(self) -> int:
        return self.f_rloc.J


def _min_resolution(n: int) -> int:
    return 8 if n <= 2 else 5


def interior_system(n: int, u: int, J: int):
    """Interior tensor system (Whitney-Haar for ``u = 0``) used to expand the remainder."""
    Jmax = default_levels(u, J)
    if u == 0:
        dec = whitney_decompose(DomainDescriptor("cube", n), min(Jmax, J - 2))
    else:
        dec = whitney_decompose(DomainDescriptor("cube", n), min(Jmax, 3))
    return build_domain_system(dec, u, Jmax, J)


def _cube_bundles(f: GridFunction, pl: DecompositionPlan) -> dict:
    out = {}
    for l, r in sorted(pl.orders.items()):
        for face in cube_faces(f.n, l):
            out[(l, face.index)] = trace(f, face, r)
    return out


def _stepwise_extension(f: GridFunction, pl: DecompositionPlan, u: int) -> GridFunction:
    """Projection-by-projection variant: peel each dimension from the current remainder."""
    current = f
    for l, r in sorted(pl.orders.items()):
        layer = np.zeros(f.dims)
        for face in cube_faces(f.n, l):
            b = trace(current, face, r)
            if b.sup() == 0:
                continue
            layer += extend(b, pl.params, u).values
        current = current - layer
    return f - current


def _check_windows(pl: DecompositionPlan, n: int, u: int) -> None:
    if not u > float(pl.params.s):
        raise CellwaveError("the decomposition needs u > s")
    for l, r in pl.orders.items():
        if not trace_window_ok(pl.params, cube_faces(n, l)[0], r):
            raise CellwaveError(f"trace window violated at (l={l}, r={r})")


def _face_coefficients(bundle: TraceBundle, params: SpaceParams) -> CoefficientField:
    """Face data as n-dimensional entries: amplitudes scaled by ``2^-j|alpha|`` on cubes touching the face."""
    face = bundle.face
    n = face.n
    J = next(iter(bundle.data.values())).J
    sys_ = default_face_system(face, J)
    fields = []
    for alpha, g in bundle.data.items():
        if not np.any(g.values):
            continue
        parts = []
        if face.l == 0:
            parts.append((np.zeros(1, dtype=int), np.zeros((1, 0)), np.array([float(g.values.ravel()[0])]),
                          np.zeros((1, 0))))
        else:
            fld = sys_.analyze(g)
            parts.append((fld.j, fld.r, fld.lam, fld.centers))
            residue = g - sys_.synthesize(fld)
            if np.any(residue.values):
                fine = build_box_system(face.l, 0, J - 1, (g.lower, g.upper), J).analyze(residue)
                parts.append((fine.j, fine.r, fine.lam, fine.centers))
        for j, r, lam, centers in parts:
            k = len(j)
            side = 2.0 ** -j.astype(float)
            full = np.zeros((k, n))
            for col, ax in enumerate(face.free):
                full[:, ax] = centers[:, col]
            for ax, c in face.fixed:
                # push the cube inside Q so it touches the face from the inside
                full[:, ax] = c + (side / 2 if c == 0 else -side / 2)
            amp = lam * 2.0 ** (-j * sum(alpha))
            fields.append(CoefficientField(j, np.zeros((k, 1), dtype=np.int64), amp, full, side / 2))
    if not fields:
        return CoefficientField(np.zeros(0, int), np.zeros((0, 1)), np.zeros(0), np.zeros((0, n)), np.zeros(0))
    return CoefficientField.concat(fields)


def decompose_cube(f: GridFunction, params: SpaceParams, u: int, cross_check: bool = True,
                   reinforce: bool = True) -> CubeDecomposition:
    """``f = (f - Ext tr f) + Ext tr f`` with the remainder expanded in the interior system."""
    n = f.n
    if f.lower != (0.0,) * n or f.upper != (1.0,) * n:
        raise CellwaveError("decompose_cube works on [0,1]^n")
    if params.n != n:
        raise CellwaveError("parameter dimension does not match the function")
    if f.J < _min_resolution(n):
        raise CellwaveError(f"resolution too coarse: need J >= {_min_resolution(n)}")
    pl = plan(params)
    _check_windows(pl, n, u)
    bundles = _cube_bundles(f, pl)
    if bundles:
        ext = extend_all(bundles, params, u, orders=pl.orders)
    else:
        ext = GridFunction.zeros(f.lower, f.upper, f.J)
    f_rloc = f - ext
    sys_ = interior_system(n, u, f.J)
    interior = sys_.analyze(f_rloc)
    residue = f_rloc - sys_.synthesize(interior)
    scale = max(f.sup(), 1e-300)
    verification: dict = {"max_f": f.sup(), "interior_residue_sup": residue.sup()}
    traces = {}
    for (l, idx), b in bundles.items():
        back = trace(f_rloc, b.face, b.r)
        traces[f"{l},{idx}"] = back.sup()
    verification["remainder_traces"] = traces
    verification["remainder_trace_max_rel"] = max(traces.values(), default=0.0) / scale
    if cross_check and bundles:
        stepwise = _stepwise_extension(f, pl, u)
        verification["stepwise_difference_rel"] = float(np.max(np.abs(stepwise.values - ext.values))) / scale
    verification["reinforce_checked"] = bool(pl.critical_set) and reinforce
    verdicts = {}
    if reinforce:
        for l in pl.critical_set:
            r = pl.reinforce_order(l)
            for face in cube_faces(n, l):
                rep = check_reinforce(f, face, r, float(params.p))
                verdicts[face.name] = {"r": r, "verdict": rep["verdict"],
                                       "growth": [e["growth"] for e in rep["entries"]]}
    verification["reinforce"] = verdicts
    face_fields = {key: _face_coefficients(b, params) for key, b in bundles.items()}
    dec = CubeDecomposition(pl, u, f_rloc, bundles, interior, residue, face_fields, verification)
    back = reconstruct(dec)
    verification["reconstruction_error_rel"] = float(np.max(np.abs(back.values - f.values))) / scale
    return dec


def reconstruct(dec: CubeDecomposition) -> GridFunction:
    """Interior synthesis plus the extension of every bundle."""
    sys_ = interior_system(dec.f_rloc.n, dec.u, dec.J)
    out = sys_.synthesize(dec.interior) + dec.interior_residue
    if dec.bundles:
        out = out + extend_all(dec.bundles, dec.plan.params, dec.u, orders=dec.plan.orders)
    return out


def bundle_difference(a: CubeDecomposition, b: CubeDecomposition) -> float:
    """Largest pointwise difference between the bundles of two decompositions."""
    worst = 0.0
    for key, ba in a.bundles.items():
        bb = b.bundles[key]
        for alpha, g in ba.data.items():
            worst = max(worst, float(np.max(np.abs(g.values - bb.data[alpha].values))))
    return worst


# ---------------------------------------------------------------------------
# Riesz-type comparison


def reflect_even(f: GridFunction) -> GridFunction:
    """Even reflection of a function on ``[0,1]^n`` to ``[-1,1]^n``."""
    vals = f.values
    for ax in range(f.n):
        vals = np.concatenate([np.flip(vals, axis=ax), vals], axis=ax)
    return GridFunction([-1.0] * f.n, [1.0] * f.n, f.J, vals)


def sequence_norm(field: CoefficientField, params: SpaceParams) -> float:
    s, p, q = params.as_floats()
    if not len(field):
        return 0.0
    return b_norm(field, p, q, s - params.n / p) if p == q else f_norm(field, p, q, s)


def _flat(field: CoefficientField) -> CoefficientField:
    return CoefficientField(field.j, np.zeros((len(field), 1), dtype=np.int64), field.lam,
                            field.centers, field.radii)


def residue_field(dec: CubeDecomposition) -> CoefficientField:
    """Entries for the part of the remainder the interior system misses.

    The residue lives next to the boundary; its even reflection is expanded in
    the periodic estimator system and the blocks centred in the cube are kept.
    """
    res = dec.interior_residue
    if not np.any(res.values):
        return _flat(dec.interior.subset(np.zeros(len(dec.interior), bool)))
    refl = reflect_even(res)
    fld = estimator_system(refl, dec.plan.params).analyze(refl)
    inside = np.all((fld.centers > 0) & (fld.centers < 1), axis=1)
    return _flat(fld.subset(inside))


def coefficient_norm(dec: CubeDecomposition) -> float:
    """Sequence norm of the interior, near-boundary and face entries taken together."""
    parts = [_flat(dec.interior), residue_field(dec)]
    parts += [fld for fld in dec.face_fields.values() if len(fld)]
    return sequence_norm(CoefficientField.concat(parts), dec.plan.params)


def direct_norm(f: GridFunction, params: SpaceParams) -> float:
    """Wavelet estimate of ``f`` on the cube.

    Functions vanishing on a collar of width ``COLLAR`` are estimated with the
    periodic system on ``[0,1]^n`` directly; otherwise the even reflection is
    estimated and scaled back to one copy of the cube.
    """
    pts = np.stack(f.mesh(), axis=-1)
    collar = np.min(np.minimum(pts, 1 - pts), axis=-1) < COLLAR
    if not np.any(f.values[collar]):
        return wavelet_norm(f, params)
    return wavelet_norm(reflect_even(f), params) / 2.0 ** (f.n / float(params.p))


def riesz_report(corpus, params: SpaceParams, u: int) -> dict:
    """Coefficient norm against the direct estimate for every corpus member."""
    rows = []
    for i, f in enumerate(corpus):
        if not np.any(f.values):
            rows.append({"index": i, "skipped": True})
            continue
        dec = decompose_cube(f, params, u, cross_check=False, reinforce=False)
        c = coefficient_norm(dec)
        d = direct_norm(f, params)
        rows.append({"index": i, "coefficient_norm": c, "direct_norm": d, "ratio": c / d})
    ratios = [r["ratio"] for r in rows if not r.get("skipped")]
    out = {"rows": rows, "count": len(ratios)}
    if ratios:
        lo, hi = min(ratios), max(ratios)
        out.update({"min_ratio": lo, "max_ratio": hi, "band": hi / lo,
                    "C": max(hi, 1 / lo, math.sqrt(hi / lo))})
    return out


# ---------------------------------------------------------------------------
# files


def save_decomposition(dec: CubeDecomposition, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    (out / "bundles").mkdir(parents=True, exist_ok=True)
    (out / "plan.json").write_text(json.dumps(dec.plan.to_json(), sort_keys=True, indent=1), encoding="utf-8")
    for (l, idx), b in sorted(dec.bundles.items()):
        write_bundle(b, out / "bundles" / f"face_{l}_{idx}.json")
    sys_ = interior_system(dec.f_rloc.n, dec.u, dec.J)
    coeffs = {"system": sys_.manifest(), "u": dec.u,
              "entries": [{"j": int(j), "r": [int(v) for v in r], "lambda": float(v)}
                          for j, r, v in zip(dec.interior.j, dec.interior.r, dec.interior.lam)]}
    (out / "interior.coeffs.json").write_text(json.dumps(coeffs, sort_keys=True), encoding="utf-8")
    write_gfn(dec.f_rloc, out / "remainder.gfn")
    write_gfn(dec.interior_residue, out / "interior_residue.gfn")
    (out / "verify.json").write_text(json.dumps(dec.verification, sort_keys=True, indent=1), encoding="utf-8")
    return out


def load_decomposition(out_dir: str | Path) -> CubeDecomposition:
    out = Path(out_dir)
    try:
        pdoc = json.loads((out / "plan.json").read_text(encoding="utf-8"))
        params = SpaceParams(pdoc["s"], pdoc["p"], pdoc["q"], int(pdoc["n"]))
        cdoc = json.loads((out / "interior.coeffs.json").read_text(encoding="utf-8"))
        u = int(cdoc["u"])
        f_rloc = read_gfn(out / "remainder.gfn")
        residue = read_gfn(out / "interior_residue.gfn")
        bundles = {}
        for path in sorted((out / "bundles").glob("face_*_*.json")):
            parts = path.stem.split("_")
            if len(parts) != 3:
                continue
            bundles[(int(parts[1]), int(parts[2]))] = read_bundle(path)
        verification = json.loads((out / "verify.json").read_text(encoding="utf-8"))
    except (KeyError, OSError, ValueError) as exc:
        raise CellwaveError(f"malformed decomposition directory: {exc}") from exc
    sys_ = interior_system(f_rloc.n, u, f_rloc.J)
    keys = sys_.analyze(f_rloc.with_values(np.zeros(f_rloc.dims)))
    lookup = {(int(j), tuple(int(v) for v in r)): i for i, (j, r) in enumerate(zip(keys.j, keys.r))}
    lam = np.zeros(len(keys))
    for e in cdoc["entries"]:
        lam[lookup[(int(e["j"]), tuple(e["r"]))]] = float(e["lambda"])
    pl = plan(params)
    face_fields = {key: _face_coefficients(b, params) for key, b in bundles.items()}
    return CubeDecomposition(pl, u, f_rloc, bundles, keys.with_values(lam), residue, face_fields, verification)
