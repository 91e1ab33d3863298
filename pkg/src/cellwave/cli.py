"""Command-line front end.

Every command validates its inputs through the library, so library errors
surface as exit code 2.  Reports are deterministic JSON (sorted keys, schema
``cellwave/1``) with a CSV sidecar for tabular series and PNG figures next to
them.  ``--assert`` turns a numerical verdict into exit code 3.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import click
import numpy as np
from threadpoolctl import threadpool_limits

from . import plotting
from .atoms import check_atom, diffeo_apply, local_means_levels, local_means_norm, make_local_means, multiply
from .boundary import (
    TraceBundle,
    cube_face,
    cube_faces,
    extend,
    plane_face,
    read_bundle,
    trace,
    write_bundle,
)
from .decompose import decompose_cube, plan, reconstruct, save_decomposition
from .errors import CellwaveError
from .gfn import read_gfn, write_gfn
from .grid import DyadicCube, GridFunction, SpaceParams
from .hardy import EPS_DEFAULT, KAPPAS, check_reinforce, classify_growth, corner_compatibility, counterexample_fJ, weighted_lp
from .seqspace import b_norm, f_norm, load_coefficients
from .wavelets import (
    build_box_system,
    build_domain_system,
    default_levels,
    estimator_system,
    read_system_coefficients,
    system_from_manifest,
    wavelet_norm,
    write_system_coefficients,
)
from .whitney import DomainDescriptor, geometry_violations, whitney_decompose

SCHEMA = "cellwave/1"
DEFAULT_SEED = 0x5EED
METHODS = {"haar": 0, "db2": 1, "db3": 2, "db4": 3}


class VerdictFailed(Exception):
    """An ``--assert`` condition did not hold."""


class CommandFailed(click.ClickException):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.exit_code = code


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except VerdictFailed as exc:
            raise CommandFailed(str(exc), 3) from exc
        except (CellwaveError, OSError) as exc:
            raise CommandFailed(str(exc), 2) from exc


# ---------------------------------------------------------------------------
# parameter parsing


class _Number(click.ParamType):
    """Exact rationals from ``0.4``, ``3/2`` or ``1e-3``."""

    name = "number"

    def convert(self, value, param, ctx):
        if isinstance(value, (Fraction, int)):
            return Fraction(value)
        try:
            return Fraction(str(value).strip())
        except (ValueError, ZeroDivisionError):
            self.fail(f"{value!r} is not a number or fraction", param, ctx)


class _Levels(click.ParamType):
    """``a..b`` (inclusive) or a single level."""

    name = "range"

    def convert(self, value, param, ctx):
        if isinstance(value, list):
            return value
        text = str(value).strip()
        try:
            if ".." in text:
                a, b = (int(v) for v in text.split("..", 1))
            else:
                a = b = int(text)
        except ValueError:
            self.fail(f"{value!r} is not a level range a..b", param, ctx)
        if b < a:
            self.fail(f"empty level range {value!r}", param, ctx)
        return list(range(a, b + 1))


NUMBER = _Number()
LEVELS = _Levels()


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise CellwaveError(f"expected comma-separated integers, got {text!r}") from exc


def _bbox(text: str | None, n: int):
    if text is None:
        return None
    try:
        lo, hi = text.split(":")
        lower = [float(v) for v in lo.split(",")]
        upper = [float(v) for v in hi.split(",")]
    except ValueError as exc:
        raise CellwaveError(f"bbox must look like 'lo1,lo2:hi1,hi2', got {text!r}") from exc
    if len(lower) != n or len(upper) != n:
        raise CellwaveError("bbox dimension does not match --n")
    return lower, upper


def _face(text: str, n: int):
    """``l,j`` for the j-th l-dimensional cube face, ``plane:l`` for a plane."""
    if text.startswith("plane:"):
        return plane_face(n, int(text.split(":", 1)[1]))
    idx = _ints(text)
    if len(idx) != 2:
        raise CellwaveError(f"face must be 'l,j' or 'plane:l', got {text!r}")
    return cube_face(n, *idx)


def _params(s, p, q, n) -> SpaceParams:
    return SpaceParams(Fraction(s), Fraction(p), Fraction(q), n)


# ---------------------------------------------------------------------------
# report emission


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, tuples to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dumps(doc: dict) -> str:
    return json.dumps(_clean(doc), sort_keys=True, indent=1) + "\n"


def _report_path(out: str | Path) -> Path:
    out = Path(out)
    if out.suffix.lower() == ".json":
        out.parent.mkdir(parents=True, exist_ok=True)
        return out
    out.mkdir(parents=True, exist_ok=True)
    return out / "report.json"


def emit(out: str | Path | None, command: str, params: dict, result: dict,
         table: Sequence[dict] | None = None,
         figures: dict[str, Callable[[Path], object]] | None = None) -> Path | None:
    """Write ``report.json`` (+ ``.csv`` and ``_<figure>.png``), or print JSON when ``out`` is None."""
    doc = {"schema": SCHEMA, "command": command, "params": params, "result": result}
    if out is None:
        click.echo(dumps(doc), nl=False)
        return None
    path = _report_path(out)
    path.write_text(dumps(doc), encoding="utf-8")
    if table:
        columns = list(table[0])
        with path.with_suffix(".csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
            writer.writeheader()
            for row in table:
                writer.writerow({k: _clean(row.get(k)) for k in columns})
    for name, draw in (figures or {}).items():
        draw(path.with_name(f"{path.stem}_{name}.png"))
    return path


def _verdict(label: str, ok: bool, detail: str = "") -> None:
    line = f"assert {label}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
    click.echo(line, err=True)
    if not ok:
        raise VerdictFailed(line)


def _parse_assert(text: str) -> tuple[str, float | None]:
    kind, _, value = text.partition(":")
    try:
        return kind, float(value) if value else None
    except ValueError as exc:
        raise CellwaveError(f"cannot parse --assert {text!r}") from exc


# ---------------------------------------------------------------------------
# group


@click.group(cls=_Group, context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True, help="Seed for every random draw.")
@click.option("--threads", type=click.IntRange(min=1), envvar="CELLWAVE_THREADS", default=None,
              help="Cap on BLAS/OpenMP threads (also CELLWAVE_THREADS).")
@click.pass_context
def cli(ctx, seed, threads):
    """Wavelet analysis on the unit cube and plane complements, on sampled functions."""
    ctx.ensure_object(dict)
    ctx.obj["seed"] = seed
    ctx.obj["threads"] = threads
    if threads is not None:
        ctx.with_resource(threadpool_limits(limits=threads))


# ---------------------------------------------------------------------------
# geometry and sequence spaces


@cli.command("whitney")
@click.option("--domain", "domain_spec", default="cube", show_default=True, help="cube, box or plane:L")
@click.option("--n", type=int, required=True)
@click.option("--max-level", type=int, required=True)
@click.option("--bbox", default=None, help="lo1,lo2:hi1,hi2")
@click.option("--out", type=click.Path(), default=None)
def whitney_cmd(domain_spec, n, max_level, bbox, out):
    """Whitney decomposition with its geometry checks."""
    dom = DomainDescriptor.parse(domain_spec, n, _bbox(bbox, n))
    dec = whitney_decompose(dom, max_level)
    violations = {} if dec.degenerate else geometry_violations(dec)
    counts = {int(v): int(np.sum(dec.nu == v)) for v in dec.levels()}
    table = [{"level": v, "cubes": c} for v, c in sorted(counts.items())]
    figures = {}
    if n == 2 and not dec.degenerate:
        level_map = dec.level_map(max_level)

        def draw(path, lo=dom.bbox[0], hi=dom.bbox[1]):
            plotting.image_plot(path, np.ma.masked_less(level_map, 0), (lo[0], hi[0], lo[1], hi[1]), "Whitney level")
        figures["levels"] = draw
    result = {"count": len(dec), "levels": counts, "violations": violations,
              "flags": sorted({f for fl in dec.flags for f in fl}), "cubes": dec.to_json()}
    emit(out, "whitney", {"domain": domain_spec, "n": n, "max_level": max_level,
                          "bbox": [list(dom.bbox[0]), list(dom.bbox[1])]}, result, table, figures)


@cli.command("seqnorm")
@click.option("--coeffs", type=click.Path(), required=True)
@click.option("--p", type=NUMBER, required=True)
@click.option("--q", type=NUMBER, required=True)
@click.option("--s", type=NUMBER, default=None)
@click.option("--space", type=click.Choice(["f", "b"]), default="f", show_default=True)
@click.option("--out", type=click.Path(), default=None)
def seqnorm_cmd(coeffs, p, q, s, space, out):
    """Sequence-space norm of a coefficient file."""
    doc = json.loads(Path(coeffs).read_text(encoding="utf-8"))
    field = read_system_coefficients(coeffs)[1] if isinstance(doc, dict) and "system" in doc else load_coefficients(coeffs)
    s_val = None if s is None else float(s)
    fn = f_norm if space == "f" else b_norm
    value = fn(field, float(p), float(q), s_val)
    click.echo(f"{value:.17g}")
    if out is not None:
        emit(out, "seqnorm", {"coeffs": str(coeffs), "p": p, "q": q, "s": s, "space": space},
             {"norm": value, "entries": len(field)})


@cli.command("norm")
@click.option("--grid", type=click.Path(), required=True)
@click.option("--method", type=click.Choice(sorted(METHODS) + ["localmeans"]), default="haar", show_default=True)
@click.option("--s", type=NUMBER, required=True)
@click.option("--p", type=NUMBER, required=True)
@click.option("--q", type=NUMBER, required=True)
@click.option("--N", "N", type=int, default=None, help="Kernel moment order for local means.")
@click.option("--e", "e", type=float, default=1.0, show_default=True, help="Local-means support parameter.")
@click.option("--out", type=click.Path(), default=None)
def norm_cmd(grid, method, s, p, q, N, e, out):
    """F^s_pq norm estimate of a sampled function."""
    f = read_gfn(grid)
    params = _params(s, p, q, f.n)
    extra = {}
    if method == "localmeans":
        N = int(math.floor(s)) + 1 if N is None else N
        kern = make_local_means(N, e, f.J, f.n)
        levels = local_means_levels(f, kern)
        value = local_means_norm(f, params, kern, levels) if np.any(f.values) else 0.0
        extra = {"N": N, "e": e, "levels": levels}
    else:
        value = wavelet_norm(f, params, estimator_system(f, params, METHODS[method]))
    click.echo(f"{value:.17g}")
    if out is not None:
        emit(out, "norm", {"grid": str(grid), "method": method, "s": s, "p": p, "q": q, **extra},
             {"norm": value})


def _system_for(f: GridFunction, system: str | None, u: int, Jmax: int | None, domain: str | None):
    if system is not None:
        doc = json.loads(Path(system).read_text(encoding="utf-8"))
        return system_from_manifest(doc.get("system", doc))
    Jmax = default_levels(u, f.J) if Jmax is None else Jmax
    if domain is None:
        return build_box_system(f.n, u, Jmax, (f.lower, f.upper), f.J)
    dom = DomainDescriptor.parse(domain, f.n, (f.lower, f.upper))
    return build_domain_system(whitney_decompose(dom, Jmax), u, Jmax, f.J)


@cli.command("analyze")
@click.option("--grid", type=click.Path(), required=True)
@click.option("--system", type=click.Path(), default=None, help="System manifest or coefficient file.")
@click.option("--u", type=int, default=0, show_default=True)
@click.option("--Jmax", "Jmax", type=int, default=None)
@click.option("--domain", default=None, help="Whitney-adapted system on cube or plane:L.")
@click.option("--save-system", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), required=True)
def analyze_cmd(grid, system, u, Jmax, domain, save_system, out):
    """Wavelet coefficients of a sampled function."""
    f = read_gfn(grid)
    sys_ = _system_for(f, system, u, Jmax, domain)
    field = sys_.analyze(f)
    write_system_coefficients(field, sys_, out)
    if save_system is not None:
        Path(save_system).write_text(dumps(sys_.manifest()), encoding="utf-8")
    energy = {int(j): float(np.sum(field.lam[field.j == j] ** 2)) for j in np.unique(field.j)}
    click.echo(dumps({"schema": SCHEMA, "command": "analyze", "entries": len(field), "level_energy": energy}), nl=False)


@cli.command("synthesize")
@click.option("--coeffs", type=click.Path(), required=True)
@click.option("--system", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), required=True)
def synthesize_cmd(coeffs, system, out):
    """Function from a coefficient file."""
    sys_ = None
    if system is not None:
        doc = json.loads(Path(system).read_text(encoding="utf-8"))
        sys_ = system_from_manifest(doc.get("system", doc))
    sys_, field = read_system_coefficients(coeffs, sys_)
    write_gfn(sys_.synthesize(field), out)


# ---------------------------------------------------------------------------
# atoms and operators


@cli.group("atom", cls=_Group)
def atom_group():
    """Atom checks."""


@atom_group.command("check")
@click.option("--grid", type=click.Path(), required=True)
@click.option("--nu", type=int, required=True)
@click.option("--m", "m", required=True, help="comma-separated cube index")
@click.option("--s", type=NUMBER, required=True)
@click.option("--p", type=NUMBER, required=True)
@click.option("--q", type=NUMBER, default=Fraction(2), show_default=True)
@click.option("--K", "K", type=float, required=True)
@click.option("--L", "L", type=float, required=True)
@click.option("--d", "d", type=float, default=2.0, show_default=True)
@click.option("--C", "C", type=float, default=1.0, show_default=True)
@click.option("--assert", "assert_", is_flag=True, help="Exit 3 unless the atom passes.")
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
def atom_check_cmd(ctx, grid, nu, m, s, p, q, K, L, d, C, assert_, out):
    """Support, Hoelder and moment conditions of a sampled atom."""
    a = read_gfn(grid)
    rep = check_atom(a, DyadicCube(nu, _ints(m)), _params(s, p, q, a.n), K, L, d, C, seed=ctx.obj["seed"])
    emit(out, "atom check", {"grid": str(grid), "nu": nu, "m": list(_ints(m)), "s": s, "p": p, "q": q,
                             "K": K, "L": L, "d": d, "C": C}, rep.to_json())
    if assert_:
        _verdict("atom", rep.verdict, f"C_needed={rep.C_needed:.6g}")


@cli.group("op", cls=_Group)
def op_group():
    """Pointwise multipliers and diffeomorphisms."""


@op_group.command("multiply")
@click.option("--grid", type=click.Path(), required=True)
@click.option("--phi", type=click.Path(), required=True)
@click.option("--s", type=NUMBER, required=True)
@click.option("--p", type=NUMBER, required=True)
@click.option("--q", type=NUMBER, required=True)
@click.option("--rho", type=float, required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--report", type=click.Path(), default=None)
def multiply_cmd(grid, phi, s, p, q, rho, out, report):
    f = read_gfn(grid)
    prod, rep = multiply(f, read_gfn(phi), _params(s, p, q, f.n), rho)
    write_gfn(prod, out)
    emit(report, "op multiply", {"grid": str(grid), "phi": str(phi), "s": s, "p": p, "q": q, "rho": rho}, rep)


@op_group.command("diffeo")
@click.option("--grid", type=click.Path(), required=True)
@click.option("--map", "maps", required=True, help="comma-separated component grids")
@click.option("--s", type=NUMBER, required=True)
@click.option("--p", type=NUMBER, required=True)
@click.option("--q", type=NUMBER, required=True)
@click.option("--rho", type=float, required=True)
@click.option("--wrap", is_flag=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--report", type=click.Path(), default=None)
def diffeo_cmd(grid, maps, s, p, q, rho, wrap, out, report):
    f = read_gfn(grid)
    comps = [read_gfn(path) for path in maps.split(",")]
    g, rep = diffeo_apply(f, comps, _params(s, p, q, f.n), rho, wrap)
    write_gfn(g, out)
    emit(report, "op diffeo", {"grid": str(grid), "map": maps, "s": s, "p": p, "q": q, "rho": rho,
                               "wrap": wrap}, rep)


# ---------------------------------------------------------------------------
# Hardy functionals and reinforce checks


def hardy_series(mode: str, n: int, l: int, p: Fraction, s: Fraction, q: Fraction, kappa: str,
                 levels: Sequence[int], variant: str = "overlapping", eps: float = EPS_DEFAULT) -> dict:
    """Weighted functional over the counterexample family, normalised by the wavelet norm."""
    params = _params(s, p, q, n)
    rows = []
    for J in levels:
        f = counterexample_fJ(n, l, float(p), J, variant)
        norm = wavelet_norm(f, params)
        value = weighted_lp(f, l, mode, params, kappa, eps).values[0]
        rows.append({"J": J, "weighted": value, "norm": norm, "ratio": value / norm ** float(p)})
    ratios = [r["ratio"] for r in rows]
    norms = [r["norm"] for r in rows]
    growth, rate = classify_growth(ratios)
    return {"rows": rows, "growth": growth, "rate": rate, "growth_factor": ratios[-1] / ratios[0],
            "ratio_band": max(ratios) / min(ratios), "norm_band": max(norms) / min(norms)}


def _hardy_assert(spec: str, res: dict) -> None:
    kind, value = _parse_assert(spec)
    if kind == "grows":
        _verdict(spec, res["growth_factor"] >= value, f"factor={res['growth_factor']:.6g}")
    elif kind == "band":
        _verdict(spec, res["ratio_band"] <= value, f"band={res['ratio_band']:.6g}")
    elif kind == "normband":
        _verdict(spec, res["norm_band"] <= value, f"band={res['norm_band']:.6g}")
    elif kind == "bounded":
        _verdict(spec, res["growth"] == "bounded", res["growth"])
    else:
        raise CellwaveError(f"unknown assertion {kind!r}; use grows:X, band:X, normband:X or bounded")


@cli.command("hardy")
@click.option("--mode", type=click.Choice(["critical", "subcritical"]), required=True)
@click.option("--n", type=int, default=1, show_default=True)
@click.option("--l", "l", type=int, default=0, show_default=True)
@click.option("--p", type=NUMBER, default=Fraction(2), show_default=True)
@click.option("--s", type=NUMBER, default=None, help="Default (n-l)/p, halved in subcritical mode.")
@click.option("--q", type=NUMBER, default=Fraction(2), show_default=True)
@click.option("--kappa", type=click.Choice(sorted(KAPPAS)), default="one", show_default=True)
@click.option("--J", "levels", type=LEVELS, default="3..8", show_default=True)
@click.option("--variant", type=click.Choice(["overlapping", "disjoint"]), default="overlapping", show_default=True)
@click.option("--eps", type=float, default=EPS_DEFAULT, show_default=True)
@click.option("--assert", "assert_", default=None, help="grows:X, band:X, normband:X or bounded")
@click.option("--out", type=click.Path(), default=None)
def hardy_cmd(mode, n, l, p, s, q, kappa, levels, variant, eps, assert_, out):
    """Weighted functional of the counterexample family against its wavelet norm."""
    if s is None:
        s = Fraction(n - l) / p / (1 if mode == "critical" else 2)
    res = hardy_series(mode, n, l, p, s, q, kappa, levels, variant, eps)
    js = [r["J"] for r in res["rows"]]

    def draw(path):
        plotting.series_plot(path, js, {"ratio": [r["ratio"] for r in res["rows"]],
                                        "norm": [r["norm"] for r in res["rows"]]},
                             "J", "value", f"{mode}, kappa={kappa}", logy=True)
    emit(out, "hardy", {"mode": mode, "n": n, "l": l, "p": p, "s": s, "q": q, "kappa": kappa,
                        "J": js, "variant": variant, "eps": eps},
         {k: v for k, v in res.items() if k != "rows"} | {"series": res["rows"]},
         res["rows"], {"ratio": draw})
    if assert_:
        _hardy_assert(assert_, res)


@cli.command("reinforce")
@click.option("--grid", type=click.Path(), required=True)
@click.option("--face", "face_spec", required=True, help="l,j or plane:l")
@click.option("--r", "r", type=int, default=0, show_default=True)
@click.option("--p", type=NUMBER, default=Fraction(2), show_default=True)
@click.option("--eps", type=float, default=EPS_DEFAULT, show_default=True)
@click.option("--levels", type=LEVELS, default=None)
@click.option("--assert", "assert_", type=click.Choice(["pass", "fail"]), default=None)
@click.option("--out", type=click.Path(), default=None)
def reinforce_cmd(grid, face_spec, r, p, eps, levels, assert_, out):
    """Reinforce check: growth of the boundary-weighted derivative integrals."""
    f = read_gfn(grid)
    rep = check_reinforce(f, _face(face_spec, f.n), r, float(p), eps, levels)
    table = [{"alpha": ",".join(map(str, e["alpha"])), "J": J, "value": v}
             for e in rep["entries"] for J, v in zip(rep["levels"], e["values"])]

    def draw(path):
        series = {",".join(map(str, e["alpha"])): e["values"] for e in rep["entries"]}
        plotting.series_plot(path, rep["levels"], series, "J", "weighted integral", f"face {face_spec}")
    emit(out, "reinforce", {"grid": str(grid), "face": face_spec, "r": r, "p": p, "eps": eps}, rep,
         table, {"values": draw})
    if assert_:
        _verdict(f"reinforce {assert_}", rep["verdict"] == assert_, rep["verdict"])


# ---------------------------------------------------------------------------
# traces, extension and decomposition


@cli.command("trace")
@click.option("--grid", type=click.Path(), required=True)
@click.option("--face", "face_spec", required=True, help="l,j or plane:l")
@click.option("--r", "r", type=int, default=0, show_default=True)
@click.option("--s", type=NUMBER, default=None, help="With --p, enforce the trace window.")
@click.option("--p", type=NUMBER, default=None)
@click.option("--out", type=click.Path(), required=True)
def trace_cmd(grid, face_spec, r, s, p, out):
    """Perpendicular derivative traces on a face."""
    f = read_gfn(grid)
    params = None if s is None or p is None else _params(s, p, 2, f.n)
    write_bundle(trace(f, _face(face_spec, f.n), r, params), out)


@cli.command("extend")
@click.option("--bundle", "bundle_path", type=click.Path(), required=True)
@click.option("--u", type=int, required=True)
@click.option("--s", type=NUMBER, default=None, help="Default: midway between r + (n-l)/p and u.")
@click.option("--p", type=NUMBER, default=Fraction(2), show_default=True)
@click.option("--q", type=NUMBER, default=Fraction(2), show_default=True)
@click.option("--out", type=click.Path(), required=True)
def extend_cmd(bundle_path, u, s, p, q, out):
    """Wavelet-friendly extension of a trace bundle."""
    b: TraceBundle = read_bundle(bundle_path)
    face = b.face
    if s is None:
        s = (b.r + Fraction(face.n - face.l) / p + u) / 2
    g = extend(b, _params(s, p, q, face.n), u)
    write_gfn(g, out)


def _joined(value) -> str:
    return ";".join(value) if isinstance(value, (list, tuple)) else str(value)


def _decomposition_result(dec) -> tuple[dict, list[dict]]:
    v = dec.verification
    table = [{"face": name, "r": e["r"], "verdict": e["verdict"], "growth": _joined(e["growth"])}
             for name, e in sorted(v.get("reinforce", {}).items())]
    return {"plan": dec.plan.to_json(), "verification": v}, table


@cli.command("decompose")
@click.option("--grid", type=click.Path(), required=True)
@click.option("--s", type=NUMBER, required=True)
@click.option("--p", type=NUMBER, required=True)
@click.option("--q", type=NUMBER, required=True)
@click.option("--u", type=int, required=True)
@click.option("--no-cross-check", is_flag=True, help="Skip the stepwise extension cross-check.")
@click.option("--assert", "assert_", is_flag=True, help="Exit 3 unless reconstruction and traces verify.")
@click.option("--out", type=click.Path(), required=True)
def decompose_cmd(grid, s, p, q, u, no_cross_check, assert_, out):
    """Split a function on [0,1]^n into boundary extensions and an interior part."""
    f = read_gfn(grid)
    dec = decompose_cube(f, _params(s, p, q, f.n), u, cross_check=not no_cross_check)
    save_decomposition(dec, out)
    result, table = _decomposition_result(dec)
    figures = {"input": lambda path: plotting.field_plot(path, f, "f"),
               "remainder": lambda path: plotting.field_plot(path, dec.f_rloc, "interior part")}
    emit(out, "decompose", {"grid": str(grid), "s": s, "p": p, "q": q, "u": u}, result, table, figures)
    if assert_:
        _verdict("decompose", _decomposition_ok(dec), f"error={dec.verification['reconstruction_error_rel']:.3g}")


def _decomposition_ok(dec) -> bool:
    v = dec.verification
    return v["reconstruction_error_rel"] <= 1e-3 and v["remainder_trace_max_rel"] <= 5 * 2.0**-dec.J


# ---------------------------------------------------------------------------
# presets


def _w21_corpus(J: int, seed: int) -> dict[str, GridFunction]:
    rng = np.random.default_rng(seed)
    cx, cy = rng.uniform(0.2, 0.8, 2)
    unit = ([0.0, 0.0], [1.0, 1.0])
    gauss = lambda x, y: np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / 0.2)
    return {
        "constant": GridFunction.from_function(lambda x, y: np.ones_like(x + y), *unit, J),
        "corner-vanishing": GridFunction.from_function(
            lambda x, y: (x * (1 - x) + y * (1 - y)) * gauss(x, y), *unit, J),
        "two-corners": GridFunction.from_function(lambda x, y: x * gauss(x, y), *unit, J),
    }


def _corner_compatibility(f: GridFunction) -> dict:
    """Compatibility integral of the two edge traces meeting at each corner."""
    out = {}
    edges = cube_faces(2, 1)
    for corner in cube_faces(2, 0):
        c = dict(corner.fixed)
        pair = []
        for e in edges:
            (ax, val), = e.fixed
            if c[ax] == val:
                g = trace(f, e, 0).data[(0, 0)]
                # orient by distance from the corner along the free axis
                free = e.free[0]
                pair.append(g.with_values(g.values[::-1]) if c[free] == 1.0 else g)
        out[corner.name] = corner_compatibility(pair[0], pair[1])
    return out


def preset_w21_cube(J: int, seed: int, out: Path | None) -> tuple[dict, list[dict]]:
    params = SpaceParams(1, 2, 2, 2)
    pl = plan(params)
    rows, functions = [], {}
    for name, f in _w21_corpus(J, seed).items():
        dec = decompose_cube(f, params, 2)
        if out is not None:
            save_decomposition(dec, out / name)
        compat = _corner_compatibility(f)
        back = reconstruct(dec)
        functions[name] = {"verification": dec.verification, "corner_compatibility": compat,
                           "reconstruction_sup_error": float(np.max(np.abs(back.values - f.values)))}
        for face, e in sorted(dec.verification["reinforce"].items()):
            rows.append({"function": name, "face": face, "r": e["r"], "verdict": e["verdict"],
                         "growth": _joined(e["growth"]), "compatibility": compat.get(face)})
    return {"plan": pl.to_json(), "functions": functions}, rows


def preset_hardy_critical(levels: Sequence[int]) -> tuple[dict, list[dict]]:
    rows, result = [], {}
    for kappa in ("one", "log"):
        res = hardy_series("critical", 1, 0, Fraction(2), Fraction(1, 2), Fraction(2), kappa, levels)
        result[kappa] = {k: v for k, v in res.items() if k != "rows"}
        rows.extend({"kappa": kappa} | r for r in res["rows"])
    return result, rows


@cli.command("preset")
@click.argument("name", type=click.Choice(["w21-cube", "hardy-critical"]))
@click.option("--J", "J", type=LEVELS, default=None, help="Resolution (w21-cube, default 9) or range (default 3..8).")
@click.option("--out", type=click.Path(), required=True)
@click.option("--assert", "assert_", is_flag=True, help="Exit 3 if the preset's expected verdicts do not hold.")
@click.pass_context
def preset_cmd(ctx, name, J, out, assert_):
    """Canned experiments; equal inputs give byte-identical reports."""
    seed = ctx.obj["seed"]
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if name == "w21-cube":
        res_J = 9 if J is None else J[-1]
        result, rows = preset_w21_cube(res_J, seed, out_dir)

        def draw(path):
            corpus = _w21_corpus(res_J, seed)
            titles = {key: key + "\n" + " ".join(f"{r['face']}:{r['verdict']}" for r in rows if r["function"] == key)
                      for key in corpus}
            plotting.panel_plot(path, corpus, titles)
        emit(out_dir, "preset w21-cube", {"J": res_J, "seed": seed}, result, rows, {"corpus": draw})
        if assert_:
            fns = result["functions"]
            ok = (all(r["verdict"] == "fail" for r in rows if r["function"] == "constant")
                  and all(r["verdict"] == "pass" for r in rows if r["function"] == "corner-vanishing")
                  and all(v["verification"]["reconstruction_error_rel"] <= 1e-3 for v in fns.values()))
            _verdict("w21-cube", ok)
    else:
        levels = list(range(3, 9)) if J is None else J
        result, rows = preset_hardy_critical(levels)

        def draw(path):
            plotting.series_plot(path, levels, {k: [r["ratio"] for r in rows if r["kappa"] == k]
                                                for k in ("one", "log")}, "J", "ratio", logy=True)
        emit(out_dir, "preset hardy-critical", {"J": levels}, result, rows, {"ratio": draw})
        if assert_:
            _verdict("hardy-critical", result["one"]["ratio_band"] <= 4 and result["log"]["growth_factor"] >= 1.5)


def main(argv: Sequence[str] | None = None) -> int:
    """Console entry point; returns the exit code instead of raising SystemExit."""
    try:
        cli.main(args=list(argv) if argv is not None else None, prog_name="cellwave", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
