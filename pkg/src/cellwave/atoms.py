"""Atom verification, local-means kernels and norms, pointwise multipliers and diffeomorphisms."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve

from .errors import INSUFFICIENT_MOMENTS, RANGE_ESCAPE, CellwaveError
from .grid import (
    HOELDER_SEED,
    DyadicCube,
    GridFunction,
    SpaceParams,
    finite_diff,
    hoelder_norm,
    rescale,
)
from .wavelets import wavelet_norm

BATTERY_SIZE = 32


def paper_floor(x: float) -> int:
    """Integer part with the fractional part taken in (0, 1]: 1 -> 0, 1.5 -> 1."""
    return math.ceil(x) - 1


def kappa(params: SpaceParams, L: float) -> float:
    s, p, _ = params.as_floats()
    return s + L + params.n * (1 - 1 / p)


# ---------------------------------------------------------------------------
# atom checks


@dataclass
class AtomReport:
    support_ok: bool
    support_overshoot: float
    hoelder_value: float
    hoelder_bound: float
    moment_values: dict
    moment_bound: float
    battery_ratio: float
    Kap: float
    C_needed: float
    verdict: bool
    hoelder_C: float = 0.0
    moment_C: float = 0.0
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "support_ok": self.support_ok,
            "support_overshoot": self.support_overshoot,
            "hoelder_value": self.hoelder_value,
            "hoelder_bound": self.hoelder_bound,
            "moment_values": {",".join(map(str, k)): v for k, v in self.moment_values.items()},
            "moment_bound": self.moment_bound,
            "battery_ratio": self.battery_ratio,
            "Kap": self.Kap,
            "C_needed": self.C_needed,
            "hoelder_C": self.hoelder_C,
            "moment_C": self.moment_C,
            "verdict": self.verdict,
        }


def _test_function(rng: np.random.Generator, n: int, nu: int, center: np.ndarray):
    """Random smooth function: a few cosines at scales between 1 and ``2^nu``."""
    terms = []
    for _ in range(3):
        freq = rng.standard_normal(n)
        freq *= 2 * math.pi * 2.0 ** (nu * rng.random()) / max(np.linalg.norm(freq), 1e-12)
        terms.append((rng.standard_normal(), freq, rng.random() * 2 * math.pi))

    def fn(*coords):
        x = np.stack(coords, axis=-1) - center
        return sum(a * np.cos(x @ w + ph) for a, w, ph in terms)
    return fn


def _moment_indices(n: int, top: int) -> list[tuple[int, ...]]:
    out = []
    for total in range(top + 1):
        for combo in itertools.combinations_with_replacement(range(n), total):
            beta = [0] * n
            for ax in combo:
                beta[ax] += 1
            out.append(tuple(beta))
    return sorted(set(out), key=lambda b: (sum(b), [-v for v in b]))


def check_atom(a: GridFunction, cube: DyadicCube, params: SpaceParams, K: float, L: float,
               d: float, C: float, battery: int = BATTERY_SIZE, seed: int = HOELDER_SEED) -> AtomReport:
    """Check support, Hoelder size and (substitute) moment conditions of an atom at ``cube``."""
    if a.J < cube.nu + 4:
        raise CellwaveError("resolution too coarse for this atom level")
    if not d > 1 or not C > 0 or K < 0 or L < 0:
        raise CellwaveError("need d > 1, C > 0, K >= 0 and L >= 0")
    s, p, _ = params.as_floats()
    n = a.n
    nu = cube.nu
    pts = a.points()
    vals = a.values.ravel()
    center = cube.center
    half = d * cube.side / 2
    excess = np.max(np.abs(pts - center), axis=1) - half
    nonzero = vals != 0
    overshoot = float(max(0.0, excess[nonzero].max())) if nonzero.any() else 0.0
    support_ok = overshoot <= 1e-12

    scaled = rescale(a, nu)
    hval = hoelder_norm(scaled, K) if K > 0 else scaled.sup()
    hbound = C * 2.0 ** (-nu * (s - n / p))
    hoelder_C = hval / 2.0 ** (-nu * (s - n / p))
    ratios = []

    Kap = kappa(params, L)
    mbound = C * 2.0 ** (-nu * Kap)
    moments: dict = {}
    battery_ratio = 0.0
    if L > 0:
        inside = np.max(np.abs(pts - center), axis=1) <= half
        w = vals * inside * a.cell_volume
        shifted = pts - center
        for beta in _moment_indices(n, paper_floor(L)):
            mono = np.prod(shifted ** np.array(beta), axis=1)
            moments[beta] = float(abs(np.sum(mono * w)))
            ratios.append(moments[beta] / 2.0 ** (-nu * Kap))
        rng = np.random.default_rng(seed)
        for _ in range(battery):
            psi = GridFunction.from_function(_test_function(rng, n, nu, center), a.lower, a.upper, a.J)
            pairing = abs(float(np.sum(psi.values.ravel() * w)))
            norm = hoelder_norm(psi, L)
            battery_ratio = max(battery_ratio, pairing / (2.0 ** (-nu * Kap) * norm))
        ratios.append(battery_ratio)
    moment_C = float(max(ratios, default=0.0))
    C_needed = max(float(hoelder_C), moment_C)
    verdict = bool(support_ok and C_needed <= C)
    return AtomReport(support_ok, overshoot, float(hval), hbound, moments, mbound,
                      battery_ratio, Kap, C_needed, verdict, float(hoelder_C), moment_C)


def dilate_atom(a: GridFunction, cube: DyadicCube, j: int, params: SpaceParams) -> tuple[GridFunction, DyadicCube]:
    """``2^{j(s-n/p)} a(2^{-j} .)`` as an atom at ``Q_{nu-j, m}``; samples are relabelled, not resampled."""
    if j > cube.nu or j < 0:
        raise CellwaveError("dilation level must satisfy 0 <= j <= nu")
    s, p, _ = params.as_floats()
    moved = rescale(a, j)
    moved = moved.with_values(moved.values * 2.0 ** (j * (s - a.n / p)))
    return moved, DyadicCube(cube.nu - j, cube.m, cube.anchor)


# ---------------------------------------------------------------------------
# local means


@dataclass(frozen=True)
class LocalMeansKernels:
    """Bump ``k0`` and a moment-free ``k`` built from it by discrete differencing.

    ``step`` is the differencing step (a power of two); kernels can be sampled
    at any resolution that resolves it.  In one dimension ``k`` is the
    ``N``-th difference of the bump; in higher dimensions it is a power of the
    discrete Laplacian (order ``2 * ceil(N/2)``), which keeps the Fourier
    transform nonvanishing on a punctured neighbourhood of the origin.
    """

    N: int
    e: float
    n: int
    radius: float
    step: float
    k0: GridFunction
    k: GridFunction

    def sample(self, J: int) -> tuple[np.ndarray, np.ndarray]:
        return _kernel_arrays(self.N, self.e, self.n, J)


# int_{-1}^{1} (1 - t^2)^8 dt
_BUMP_MASS = 2.0**17 * math.factorial(8) ** 2 / math.factorial(17)


def _bump_1d(x: np.ndarray, radius: float) -> np.ndarray:
    """``(1 - (x/radius)^2)^8`` scaled to unit integral, so ``k0`` is a weighted mean."""
    t = x / radius
    return np.where(np.abs(t) < 1, (1 - t**2) ** 8, 0.0) / (radius * _BUMP_MASS)


def _kernel_geometry(N: int, e: float, n: int) -> tuple[float, float, int]:
    radius = e / 4
    passes = N if n == 1 else math.ceil(N / 2)
    if passes == 0:
        return radius, 0.0, 0
    reach = N / 2 if n == 1 else passes
    # step * reach <= e/4 keeps the differenced kernel inside e * Q_{0,0}
    step = 2.0 ** math.floor(math.log2(radius / reach))
    return radius, step, passes


@lru_cache(maxsize=64)
def _kernel_arrays(N: int, e: float, n: int, J: int) -> tuple[np.ndarray, np.ndarray]:
    """Kernel samples on the nodes ``i 2^-J`` of ``[-e/2, e/2]^n`` (odd-length arrays)."""
    h = 2.0**-J
    radius, step, passes = _kernel_geometry(N, e, n)
    half = int(round(e / 2 / h))
    if abs(half * h - e / 2) > 1e-12:
        raise CellwaveError("kernel box e/2 must be a multiple of the grid step")
    x = np.arange(-half, half + 1) * h
    b1 = _bump_1d(x, radius)
    k0 = b1
    for _ in range(n - 1):
        k0 = np.multiply.outer(k0, b1)
    if passes == 0:
        return k0, k0.copy()
    cells = step / h
    if cells < 1 or cells != int(cells):
        raise CellwaveError("grid too coarse for the local-means differencing step")
    cells = int(cells)
    if n == 1:
        # centred N-th difference; odd N shifts by half a step, so work on a half-step lattice
        k = np.zeros_like(b1)
        for i in range(N + 1):
            shift_units = 2 * i - N           # in half steps
            if (shift_units * cells) % 2:
                raise CellwaveError("grid too coarse for the local-means differencing step")
            shift = shift_units * cells // 2
            k += (-1) ** i * math.comb(N, i) * np.roll(b1, shift)
        return k0, k
    k = k0
    for _ in range(passes):
        lap = np.zeros_like(k)
        for ax in range(n):
            lap += np.roll(k, cells, axis=ax) - 2 * k + np.roll(k, -cells, axis=ax)
        k = lap
    return k0, k


def make_local_means(N: int, e: float, J: int, n: int = 1) -> LocalMeansKernels:
    """Local-means kernels supported in ``e * Q_{0,0}`` with vanishing moments of order ``< N``."""
    if not 0 <= N <= 6:
        raise CellwaveError("N must lie in 0..6")
    if not e >= 1:
        raise CellwaveError("support parameter e must be at least 1")
    k0, k = _kernel_arrays(N, float(e), n, J)
    h = 2.0**-J
    lower = [-e / 2 - h / 2] * n
    upper = [e / 2 + h / 2] * n
    # box shifted by half a cell so that midpoints are the nodes i * h
    g0 = GridFunction(lower, upper, J, k0)
    g = GridFunction(lower, upper, J, k)
    radius, step, _ = _kernel_geometry(N, float(e), n)
    kern = LocalMeansKernels(N, float(e), n, radius, step, g0, g)
    _verify_kernels(kern)
    return kern


def kernel_moments(kern: LocalMeansKernels, order: int) -> dict:
    x = kern.k.points()
    w = kern.k.values.ravel() * kern.k.cell_volume
    return {beta: float(np.sum(np.prod(x ** np.array(beta), axis=1) * w))
            for beta in _moment_indices(kern.n, order)}


def _verify_kernels(kern: LocalMeansKernels) -> None:
    if kern.N > 0:
        scale = float(np.sum(np.abs(kern.k.values))) * kern.k.cell_volume
        worst = max(abs(v) for v in kernel_moments(kern, kern.N - 1).values())
        if worst > 1e-10 * max(1.0, scale):
            raise CellwaveError(f"local-means construction failed: moment {worst:.3e}")
    if not np.sum(kern.k0.values) > 0:
        raise CellwaveError("local-means construction failed: k0 has zero mean")


def local_mean_atom(kernels: LocalMeansKernels, j: int, params: SpaceParams, J: int,
                    half_width: float | None = None) -> GridFunction:
    """``2^{-j(s+n(1-1/p))} k_j`` sampled on nodes of a box centred at the origin."""
    s, p, _ = params.as_floats()
    n = kernels.n
    _, k = _kernel_arrays(kernels.N, kernels.e, n, J - j)
    h = 2.0**-J
    if half_width is None:
        half_width = kernels.e * 2.0**-j
    half = int(round(half_width / h))
    reach = k.shape[0] // 2
    if half < reach:
        raise CellwaveError("box too small for the kernel support")
    arr = np.zeros((2 * half + 1,) * n)
    arr[tuple(slice(half - reach, half + reach + 1) for _ in range(n))] = k * 2.0 ** (j * (n / p - s))
    return GridFunction([-half * h - h / 2] * n, [half * h + h / 2] * n, J, arr)


def local_means_norm(f: GridFunction, params: SpaceParams, kernels: LocalMeansKernels,
                     Jmax: int, report: dict | None = None) -> float:
    """``||k0 * f||_p + ||(sum_{1<=j<=Jmax} 2^{jsq} |k_j * f|^q)^{1/q}||_p`` by FFT convolution."""
    s, p, q = params.as_floats()
    if not kernels.N > s:
        raise CellwaveError(INSUFFICIENT_MOMENTS)
    if kernels.n != f.n:
        raise CellwaveError("kernel dimension does not match the function")
    if not np.any(f.values):
        return 0.0
    vol = f.cell_volume
    k0, _ = _kernel_arrays(kernels.N, kernels.e, kernels.n, f.J)
    base = fftconvolve(f.values, k0, mode="same") * vol
    first = _lp(base, p, vol)
    agg = np.zeros(f.dims)
    for j in range(1, Jmax + 1):
        try:
            _, kj = _kernel_arrays(kernels.N, kernels.e, kernels.n, f.J - j)
        except CellwaveError as exc:
            raise CellwaveError(f"Jmax={Jmax} exceeds what the grid resolves: {exc}") from exc
        conv = fftconvolve(f.values, kj, mode="same") * vol * 2.0 ** (j * f.n)
        term = 2.0 ** (j * s) * np.abs(conv)
        agg = np.maximum(agg, term) if math.isinf(q) else agg + term**q
    if not math.isinf(q):
        agg = agg ** (1 / q)
    if report is not None:
        report.update({"Jmax": Jmax, "k0_part": first})
    return first + _lp(agg, p, vol)


def _lp(values: np.ndarray, p: float, vol: float) -> float:
    if math.isinf(p):
        return float(np.max(np.abs(values)))
    return (float(np.sum(np.abs(values) ** p)) * vol) ** (1 / p)


def local_means_levels(f: GridFunction, kernels: LocalMeansKernels) -> int:
    """Deepest level whose rescaled kernel is still resolved on ``f``'s grid."""
    j = 0
    while True:
        try:
            _kernel_arrays(kernels.N, kernels.e, kernels.n, f.J - (j + 1))
        except CellwaveError:
            return j
        if f.J - (j + 1) < 4:
            return j
        j += 1


# ---------------------------------------------------------------------------
# operators


def multiply(f: GridFunction, phi: GridFunction, params: SpaceParams, rho: float,
             system=None) -> tuple[GridFunction, dict]:
    """Pointwise product with a multiplier report."""
    s = float(params.s)
    if not rho > max(s, params.sigma_p - s):
        raise CellwaveError(f"multiplier smoothness rho={rho} must exceed max(s, sigma_p - s)")
    if not f.same_grid(phi):
        raise CellwaveError("grid mismatch")
    prod = f * phi
    h_phi = hoelder_norm(phi, rho)
    nf = wavelet_norm(f, params, system)
    npf = wavelet_norm(prod, params, system)
    ratio = npf / (h_phi * nf) if nf > 0 and h_phi > 0 else float("nan")
    return prod, {"hoelder_phi": h_phi, "norm_f": nf, "norm_product": npf, "ratio": ratio}


def _pair_ratios(maps: np.ndarray, pts: np.ndarray, h: float, seed: int) -> tuple[float, float]:
    """Min and max of ``|phi(x) - phi(y)| / |x - y|`` over neighbour and random pairs."""
    npts = len(pts)
    lo, hi = math.inf, 0.0
    if npts < 2**12:
        chunk = max(1, 2**20 // npts)
        for start in range(0, npts, chunk):
            dx = np.sqrt(((pts[start:start + chunk, None] - pts[None]) ** 2).sum(-1))
            dphi = np.sqrt(((maps[start:start + chunk, None] - maps[None]) ** 2).sum(-1))
            mask = dx > 0
            r = dphi[mask] / dx[mask]
            lo, hi = min(lo, float(r.min())), max(hi, float(r.max()))
        return lo, hi
    rng = np.random.default_rng(seed)
    a = rng.integers(0, npts, 2**16)
    b = rng.integers(0, npts, 2**16)
    # nearest neighbours along the row-major order capture local stretching
    a = np.concatenate([a, np.arange(npts - 1)])
    b = np.concatenate([b, np.arange(1, npts)])
    dx = np.sqrt(((pts[a] - pts[b]) ** 2).sum(-1))
    dphi = np.sqrt(((maps[a] - maps[b]) ** 2).sum(-1))
    ok = dx > 0
    r = dphi[ok] / dx[ok]
    return float(r.min()), float(r.max())


def check_diffeomorphism(phi: list[GridFunction], rho: float, seed: int = HOELDER_SEED) -> dict:
    """Bi-Lipschitz constants, Jacobian determinant bound and Hoelder norms of the partials."""
    n = len(phi)
    ref = phi[0]
    if any(not ref.same_grid(c) for c in phi) or ref.n != n:
        raise CellwaveError("map components must share one n-dimensional grid")
    pts = ref.points()
    maps = np.stack([c.values.ravel() for c in phi], axis=-1)
    c1, c2 = _pair_ratios(maps, pts, ref.h, seed)
    jac = np.empty(ref.dims + (n, n))
    partial_norms = {}
    for i, comp in enumerate(phi):
        for k in range(n):
            alpha = tuple(1 if a == k else 0 for a in range(n))
            d = finite_diff(comp, alpha)
            jac[..., i, k] = d.values
            if rho > 1:
                partial_norms[f"{i},{k}"] = hoelder_norm(d, rho - 1)
    det = np.linalg.det(jac) if n > 1 else jac[..., 0, 0]
    det_min = float(np.min(np.abs(det)))
    verdict = bool(c1 > 0 and det_min > 0 and rho >= 1)
    return {"c1": c1, "c2": c2, "det_min": det_min, "partials_hoelder": partial_norms,
            "rho": rho, "verdict": verdict}


def diffeo_valid(params: SpaceParams, rho: float) -> bool:
    s = float(params.s)
    if rho == 1:
        return params.sigma_p < s < 1
    return rho > max(s, 1 + params.sigma_p - s)


def compose(f: GridFunction, phi: list[GridFunction], wrap: bool = False) -> GridFunction:
    """``f(phi(x))`` by nearest-midpoint lookup; ``wrap`` reads ``phi`` modulo the box."""
    lo = np.array(f.lower)
    hi = np.array(f.upper)
    target = np.stack([c.values for c in phi], axis=-1)
    if wrap:
        target = lo + np.mod(target - lo, hi - lo)
    elif np.any(target < lo - 1e-12) or np.any(target > hi + 1e-12):
        raise CellwaveError(RANGE_ESCAPE)
    idx = np.floor((target - lo) / f.h + 1e-9).astype(np.int64)
    idx = np.clip(idx, 0, np.array(f.dims) - 1)
    vals = f.values[tuple(np.moveaxis(idx, -1, 0))]
    return GridFunction(phi[0].lower, phi[0].upper, phi[0].J, vals)


def diffeo_apply(f: GridFunction, phi: list[GridFunction], params: SpaceParams, rho: float,
                 wrap: bool = False, system=None) -> tuple[GridFunction, dict]:
    if not diffeo_valid(params, rho):
        raise CellwaveError("rho must exceed max(s, 1 + sigma_p - s), or rho = 1 with sigma_p < s < 1")
    report = check_diffeomorphism(phi, rho)
    if not report["verdict"]:
        raise CellwaveError("map is not a diffeomorphism at the sampled resolution")
    g = compose(f, phi, wrap)
    nf = wavelet_norm(f, params, system)
    ng = wavelet_norm(g, params, system)
    report.update({"norm_f": nf, "norm_composed": ng, "ratio": ng / nf if nf > 0 else float("nan")})
    return g, report
