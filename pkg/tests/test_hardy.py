import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import digamma

from cellwave.boundary import TraceBundle, cube_faces, extend, face_grid
from cellwave.errors import CellwaveError
from cellwave.grid import GridFunction, SpaceParams, coarsen, finite_diff
from cellwave.hardy import (
    check_reinforce,
    classify_growth,
    corner_compatibility,
    counterexample_fJ,
    hardy_trace_inequality_report,
    rloc_norm,
    shell_mask,
    weighted_lp,
)
from cellwave.wavelets import build_domain_system, wavelet_norm
from cellwave.whitney import DomainDescriptor, whitney_decompose

UNIT2 = ([0.0, 0.0], [1.0, 1.0])


def harmonic(count: int) -> float:
    """sum_{k < count} 1/(k + 1/2)."""
    return float(digamma(count + 0.5) - digamma(0.5))


def bottom_edge():
    return next(f for f in cube_faces(2, 1) if dict(f.fixed) == {1: 0.0})


def smooth_corpus(count, seed, bbox, J):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        c = rng.uniform(-0.3, 0.3, size=len(bbox[0]))
        w = rng.uniform(0.2, 0.5)
        k = rng.uniform(1, 4)

        def fn(*x, c=c, w=w, k=k):
            r2 = sum((xi - ci) ** 2 for xi, ci in zip(x, c))
            return np.exp(-r2 / w**2) * np.cos(k * x[0])
        out.append(GridFunction.from_function(fn, bbox[0], bbox[1], J))
    return out


# --- weighted functionals ----------------------------------------------------


def test_zero_function_gives_zero():
    f = GridFunction.zeros(*UNIT2, 8)
    for mode in ("critical", "subcritical", "plain"):
        rep = weighted_lp(f, bottom_edge(), mode, SpaceParams(0.5, 2, 2, 2), levels=[6, 7, 8])
        assert rep.values == [0.0, 0.0, 0.0]
        assert rep.growth == "bounded"


@pytest.mark.parametrize("eps", [0.125, 0.25])
def test_plain_mode_matches_harmonic_sum(eps):
    f = GridFunction.from_function(lambda x, y: np.ones_like(x), *UNIT2, 9)
    rep = weighted_lp(f, bottom_edge(), "plain", SpaceParams(0.5, 2, 2, 2), eps=eps, levels=[7, 8, 9])
    for J, v in zip(rep.levels, rep.values):
        oracle = harmonic(int(2**J * eps)) * 1.0  # face area 1
        assert abs(v / oracle - 1) < 0.01


def test_plain_mode_on_a_point_in_the_line():
    # two half-lines around the origin, each a harmonic sum
    f = GridFunction.from_function(lambda x: np.ones_like(x), [-1.0], [1.0], 8)
    rep = weighted_lp(f, 0, "plain", SpaceParams(0.5, 2, 2, 1))
    assert abs(rep.values[0] / (2 * harmonic(2**8 // 4)) - 1) < 0.01


def test_weighted_guards():
    f = GridFunction.zeros(*UNIT2, 6)
    params = SpaceParams(0.5, 2, 2, 2)
    with pytest.raises(CellwaveError, match="eps"):
        weighted_lp(f, bottom_edge(), "plain", params, eps=1.0)
    with pytest.raises(CellwaveError, match="mode"):
        weighted_lp(f, bottom_edge(), "sideways", params)
    with pytest.raises(CellwaveError, match="resolved"):
        weighted_lp(f, bottom_edge(), "plain", params, levels=[7])
    with pytest.raises(CellwaveError, match="p > 1"):
        weighted_lp(f, bottom_edge(), "critical", SpaceParams(1, 1, 2, 2))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.5), st.floats(0.05, 0.5))
def test_values_grow_with_the_region(e1, e2):
    f = smooth_corpus(1, 3, UNIT2, 7)[0]
    lo, hi = sorted((e1, e2))
    a = weighted_lp(f, bottom_edge(), "plain", SpaceParams(0.3, 2, 2, 2), eps=lo).values[0]
    b = weighted_lp(f, bottom_edge(), "plain", SpaceParams(0.3, 2, 2, 2), eps=hi).values[0]
    assert 0 <= a <= b


def test_corner_compatibility():
    J = 10
    one = GridFunction.from_function(lambda t: np.ones_like(t), [0.0], [1.0], J)
    assert corner_compatibility(one, one) == 0.0
    zero = GridFunction.zeros([0.0], [1.0], J)
    values = []
    for level in (8, 9, 10):
        g1 = GridFunction.from_function(lambda t: np.ones_like(t), [0.0], [1.0], level)
        values.append(corner_compatibility(g1, GridFunction.zeros([0.0], [1.0], level)))
        assert abs(values[-1] / harmonic(2 ** (level - 1)) - 1) < 1e-9
    assert np.allclose(np.diff(values), math.log(2), rtol=0.01)
    assert corner_compatibility(one, zero) == pytest.approx(values[-1])


# --- growth classification -------------------------------------------------------


@given(st.floats(0.5, 10), st.floats(0.1, 0.6))
def test_geometric_convergence_is_bounded(limit, q):
    values = [limit * (1 - 0.05 * q**k) for k in range(4)]
    assert classify_growth(values)[0] == "bounded"


@given(st.floats(0.1, 2), st.floats(0, 50))
def test_arithmetic_growth_is_log(slope, offset):
    values = [offset + slope * J for J in range(6, 10)]
    growth, rate = classify_growth(values)
    assert growth == "log-growth"
    assert rate == pytest.approx(slope)


@given(st.floats(0.5, 3))
def test_geometric_growth_is_power(gamma):
    values = [2.0 ** (gamma * J) for J in range(3)]
    growth, rate = classify_growth(values)
    assert growth == "power-growth"
    assert rate == pytest.approx(gamma)


# --- the counterexample family ---------------------------------------------------


def test_counterexample_value_on_the_inner_shell():
    f = counterexample_fJ(1, 0, 2, 4)
    vals = f.values[shell_mask(f, 0, 4)]
    assert vals.size and np.all(np.abs(vals - 2.0) <= 0.2)
    one = counterexample_fJ(1, 0, 3, 1)
    assert np.allclose(one.values[shell_mask(one, 0, 1)], 1.0)


def test_counterexample_lower_bound_near_a_line():
    J = 3
    f = counterexample_fJ(2, 1, 2, J, resolution=6)
    vals = f.values[shell_mask(f, 1, J)]
    assert vals.min() >= 0.9 * J**0.5
    disjoint = counterexample_fJ(2, 1, 2, J, variant="disjoint", resolution=6)
    assert disjoint.sup() <= f.sup()


def test_counterexample_guards():
    with pytest.raises(CellwaveError, match="p > 1"):
        counterexample_fJ(1, 0, 1, 3)
    with pytest.raises(CellwaveError, match="1..8"):
        counterexample_fJ(1, 0, 2, 9)
    with pytest.raises(CellwaveError, match="too large"):
        counterexample_fJ(3, 1, 2, 8)


def test_counterexample_sharpness():
    params = SpaceParams(0.5, 2, 2, 1)
    norms, flat, log_weighted = [], [], []
    for J in range(2, 9):
        f = counterexample_fJ(1, 0, 2, J)
        w = wavelet_norm(f, params)
        norms.append(w)
        if J >= 3:
            flat.append(weighted_lp(f, 0, "critical", params, "one").values[0] / w**2)
            log_weighted.append(weighted_lp(f, 0, "critical", params, "log").values[0] / w**2)
    assert max(norms) / min(norms) <= 4
    assert max(flat) / min(flat) <= 4
    assert log_weighted[-1] / log_weighted[0] >= 1.5


# --- reinforce ------------------------------------------------------------------


def test_constant_fails_reinforce_with_log_growth():
    f = GridFunction.from_function(lambda x, y: np.ones_like(x), *UNIT2, 10)
    rep = check_reinforce(f, bottom_edge(), 0, 2.0)
    (entry,) = rep["entries"]
    assert rep["verdict"] == "fail" and entry["growth"] == "log-growth"
    oracle = [harmonic(2**J // 4) for J in rep["levels"]]
    assert np.allclose(entry["values"], oracle, rtol=0.05)
    assert entry["rate"] == pytest.approx(math.log(2), rel=0.05)


@pytest.mark.parametrize("r", [0, 1])
def test_vanishing_power_passes_reinforce(r):
    bump = lambda x: np.exp(-((x - 0.5) ** 2) / 0.05)
    f = GridFunction.from_function(lambda x, y: y ** (r + 1) * bump(x), *UNIT2, 10)
    rep = check_reinforce(f, bottom_edge(), r, 2.0)
    assert rep["verdict"] == "pass"
    # closed form: int_0^eps t^(2) / t dt * int bump^2, times (r+1)^2 for the derivative
    tang = math.sqrt(math.pi * 0.05 / 2) * math.erf(0.5 / math.sqrt(0.025))
    oracle = (r + 1) ** 2 * 0.25**2 / 2 * tang
    assert rep["entries"][0]["values"][-1] == pytest.approx(oracle, rel=0.02)


def coarse_edge_extension(seed, J=11):
    face = bottom_edge()
    sys_ = build_domain_system(whitney_decompose(DomainDescriptor("cube", 1), 2), 0, 2, J)
    keys = sys_.keys()
    lam = np.random.default_rng(seed).standard_normal(len(keys.lam))
    vals = sys_.synthesize(keys.with_values(lam)).values
    bundle = TraceBundle(face, 0, {(0, 0): face_grid(face, *UNIT2, J, vals)})
    # critical for edges: s - 1/p = 1
    return extend(bundle, SpaceParams(1.5, 2, 2, 2), 2, face_system=sys_)


def test_extension_passes_reinforce():
    for seed in range(2):
        f = coarse_edge_extension(seed)
        rep = check_reinforce(f, bottom_edge(), 1, 2.0)
        assert rep["verdict"] == "pass"
        assert max(rep["entries"][0]["ratios"]) <= 1.1


def test_reinforce_verdict_stable_across_windows():
    bump = lambda x: np.exp(-((x - 0.5) ** 2) / 0.05)
    corpus = [GridFunction.from_function(lambda x, y: np.ones_like(x), *UNIT2, 10),
              GridFunction.from_function(lambda x, y: y * bump(x), *UNIT2, 10),
              GridFunction.from_function(lambda x, y: (1 + x) * np.cos(y), *UNIT2, 10)]
    for f in corpus:
        early = check_reinforce(f, bottom_edge(), 0, 2.0, levels=[7, 8, 9])["verdict"]
        late = check_reinforce(f, bottom_edge(), 0, 2.0, levels=[8, 9, 10])["verdict"]
        assert early == late


# --- the trace inequality -----------------------------------------------------------


def vanishing_corpus(J):
    rng = np.random.default_rng(21)
    out = []
    for _ in range(10):
        a, b, k = rng.uniform(0.5, 2), rng.uniform(-1, 1), rng.uniform(1, 5)
        out.append(GridFunction.from_function(
            lambda x, y, a=a, b=b, k=k: y * (a + b * y) * np.cos(k * x), *UNIT2, J))
    return out


def test_trace_inequality_ratio_bounded():
    ratios = []
    for f in vanishing_corpus(9):
        rep = hardy_trace_inequality_report(f, bottom_edge(), 1, 1.2, 2.0)
        ratios.extend(rep["ratios"])
    assert max(ratios) < 10
    assert max(ratios) / min(ratios) < 10


def test_trace_inequality_gate_and_zero():
    zero = GridFunction.zeros(*UNIT2, 8)
    rep = hardy_trace_inequality_report(zero, bottom_edge(), 1, 1.2, 2.0)
    assert rep["left"] == rep["right"] == [0.0, 0.0, 0.0]
    witness = GridFunction.from_function(lambda x, y: 1 + y, *UNIT2, 8)
    with pytest.raises(CellwaveError, match="hypothesis violated"):
        hardy_trace_inequality_report(witness, bottom_edge(), 1, 1.2, 2.0)


# --- subcritical and refined localization -------------------------------------------


def test_subcritical_ratio_bounded():
    params = SpaceParams(0.25, 2, 2, 1)
    box = ([-1.0], [1.0])
    for f in smooth_corpus(10, 5, box, 10):
        ratios = []
        for J in (8, 9, 10):
            fJ = f if J == 10 else coarsen(f, 10 - J)
            value = weighted_lp(fJ, 0, "subcritical", params).values[0]
            ratios.append(value / wavelet_norm(fJ, params) ** 2)
        assert max(ratios) < 10
        assert max(ratios) / min(ratios) <= 1.2


def test_rloc_zero_and_interior_bound():
    cube = DomainDescriptor("cube", 1)
    params = SpaceParams(1.5, 2, 2, 1)
    assert rloc_norm(GridFunction.zeros([0.0], [1.0], 8), cube, params) == 0.0
    f = GridFunction.from_function(lambda x: np.where(np.abs(x - 0.5) < 0.25, np.cos(8 * x), 0.0),
                                   [0.0], [1.0], 8)
    second = rloc_norm(f, cube, params) - wavelet_norm(f, params)
    lp = math.sqrt(float(np.sum(f.values**2)) * f.h)
    assert second <= 4**1.5 * lp + 1e-12


def test_rloc_of_constant_diverges():
    cube = DomainDescriptor("cube", 1)
    params = SpaceParams(0.5, 2, 2, 1)
    values = [rloc_norm(GridFunction.from_function(lambda x: np.ones_like(x), [0.0], [1.0], J), cube, params) ** 2
              for J in (8, 9, 10)]
    # the weighted part is two harmonic sums; the wavelet part stays bounded
    assert classify_growth(values)[0] == "log-growth"


def test_rloc_derivative_stability():
    cube = DomainDescriptor("cube", 1)
    params = SpaceParams(1.5, 2, 2, 1)
    lower = params.with_s(0.5)
    bump = lambda x: np.exp(-1 / np.maximum(1e-12, 0.16 - (x - 0.5) ** 2)) * np.sin(6 * x)
    values = []
    for J in (8, 9, 10):
        f = GridFunction.from_function(bump, [0.0], [1.0], J)
        assert math.isfinite(rloc_norm(f, cube, params))
        values.append(rloc_norm(finite_diff(f, (1,)), cube, lower))
    assert classify_growth(values)[0] == "bounded"
