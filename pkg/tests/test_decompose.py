from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cellwave.boundary import TraceBundle, cube_faces, default_face_system, extend_all, face_grid
from cellwave.decompose import (
    bundle_difference,
    coefficient_norm,
    decompose_cube,
    direct_norm,
    interior_system,
    load_decomposition,
    plan,
    reconstruct,
    riesz_report,
    save_decomposition,
)
from cellwave.errors import CellwaveError
from cellwave.grid import GridFunction, SpaceParams

W21 = SpaceParams(1, 2, 2, 2)
UNIT2 = ([0.0, 0.0], [1.0, 1.0])


def brute_plan(s: Fraction, p: Fraction, n: int):
    """Plan read off the defining inequalities, one dimension at a time."""
    offsets = {l: s - Fraction(n - l) / p for l in range(n + 1)}
    if s > Fraction(n) / p:
        l0 = 0
    else:
        (l0,) = [l for l in range(1, n + 1) if 0 < offsets[l] <= 1 / p]
    orders = {}
    for l in range(l0, n):
        r = 0
        while r + 1 < offsets[l]:
            r += 1
        orders[l] = r
    critical = [l for l in range(n) if any(offsets[l] == k for k in range(0, 50))]
    return l0, orders, critical


# --- plan ---------------------------------------------------------------------


def test_plan_examples():
    p = plan(W21)
    assert (p.l0, p.orders, p.critical_set) == (1, {1: 0}, [0])
    p = plan(SpaceParams(Fraction(1, 4), 2, 2, 1))
    assert (p.l0, p.orders, p.critical_set) == (1, {}, [])
    p = plan(SpaceParams(4, 1, 2, 3))
    assert (p.l0, p.orders, p.critical_set) == (0, {0: 0, 1: 1, 2: 2}, [0, 1, 2])


@given(st.integers(1, 60), st.sampled_from([Fraction(1), Fraction(3, 2), Fraction(2), Fraction(3)]),
       st.integers(1, 3))
def test_plan_matches_brute_force(k, p, n):
    s = Fraction(k, 12)
    pl = plan(SpaceParams(s, p, 2, n))
    assert (pl.l0, pl.orders, pl.critical_set) == brute_plan(s, p, n)
    assert all(r >= 0 for r in pl.orders.values())
    if s <= 1 / p:
        assert pl.l0 == n and not pl.orders


def test_plan_float_inputs_use_tolerance():
    pl = plan(SpaceParams(1.0 + 1e-12, 2.0, 2, 2))
    assert pl.critical_set == [0]
    assert plan(SpaceParams(1.01, 2.0, 2, 2)).critical_set == []


# --- decomposition -------------------------------------------------------------------


def corner_vanishing(fn):
    return lambda x, y: (x * (1 - x) + y * (1 - y)) * fn(x, y)


def test_interior_function_has_zero_bundles():
    J = 8
    f = GridFunction.from_function(lambda x, y: np.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / 0.01)
                                   * (np.abs(x - 0.5) < 0.3) * (np.abs(y - 0.5) < 0.3), *UNIT2, J)
    dec = decompose_cube(f, W21, 2)
    assert all(b.sup() < 1e-12 for b in dec.bundles.values())
    assert np.allclose(dec.f_rloc.values, f.values, atol=1e-12)


def span_bundle(face, J, rng):
    sys_ = default_face_system(face, J)
    keys = sys_.keys()
    vals = sys_.synthesize(keys.with_values(rng.standard_normal(len(keys.lam)))).values
    return TraceBundle(face, 0, {(0,) * 2: face_grid(face, *UNIT2, J, vals)})


def test_extension_round_trip_and_complement():
    J = 9
    rng = np.random.default_rng(2)
    bundles = {(1, f.index): span_bundle(f, J, rng) for f in cube_faces(2, 1)}
    f = extend_all(bundles, W21, 2, orders={1: 0})
    dec = decompose_cube(f, W21, 2, reinforce=False)
    for key, b in bundles.items():
        err = np.abs(dec.bundles[key].data[(0, 0)].values - b.data[(0, 0)].values).max()
        assert err <= 5 * 2.0**-J * f.sup()
    assert np.sqrt(np.sum(dec.f_rloc.values**2)) <= 1e-3 * np.sqrt(np.sum(f.values**2))


def test_boundary_bump_pipeline():
    J = 9
    f = GridFunction.from_function(lambda x, y: np.exp(-((x - 0.5) ** 2 + (y + 0.1) ** 2) / 0.04), *UNIT2, J)
    dec = decompose_cube(f, W21, 2)
    v = dec.verification
    assert v["reconstruction_error_rel"] <= 1e-3
    assert v["remainder_trace_max_rel"] <= 5 * 2.0**-J
    assert v["stepwise_difference_rel"] <= 1e-10
    assert set(v["reinforce"]) == {f.name for f in cube_faces(2, 0)}
    back = reconstruct(dec)
    assert np.abs(back.values - f.values).max() <= 1e-3 * f.sup()


def test_corner_value_fails_reinforce():
    f = GridFunction.from_function(lambda x, y: np.ones_like(x) + 0 * y, *UNIT2, 9)
    dec = decompose_cube(f, W21, 2, cross_check=False)
    assert all(r["verdict"] == "fail" for r in dec.verification["reinforce"].values())


def test_idempotence_at_the_data_level():
    J = 8
    f = GridFunction.from_function(corner_vanishing(lambda x, y: np.cos(2 * x + y)), *UNIT2, J)
    dec = decompose_cube(f, W21, 2, reinforce=False)
    again = decompose_cube(reconstruct(dec), W21, 2, reinforce=False)
    assert bundle_difference(dec, again) <= 5 * 2.0**-J * f.sup()
    assert np.allclose(again.interior.lam, dec.interior.lam, atol=1e-10)


def test_non_critical_parameters_skip_reinforce():
    params = SpaceParams(Fraction(5, 4), 2, 2, 2)
    assert plan(params).critical_set == []
    f = GridFunction.from_function(corner_vanishing(lambda x, y: np.sin(x + 2 * y)), *UNIT2, 8)
    dec = decompose_cube(f, params, 2)
    assert dec.verification["reinforce"] == {}
    assert dec.verification["reinforce_checked"] is False


def test_decompose_guards():
    f = GridFunction.zeros(*UNIT2, 8)
    with pytest.raises(CellwaveError, match="u > s"):
        decompose_cube(f, W21, 1)
    with pytest.raises(CellwaveError, match="too coarse"):
        decompose_cube(GridFunction.zeros(*UNIT2, 6), W21, 2)
    with pytest.raises(CellwaveError, match=r"\[0,1\]"):
        decompose_cube(GridFunction.zeros([0.0, 0.0], [2.0, 1.0], 8), W21, 2)


def test_reconstruct_zero_and_single_block():
    J = 8
    dec = decompose_cube(GridFunction.zeros(*UNIT2, J), W21, 2)
    assert not reconstruct(dec).values.any()
    sys_ = interior_system(2, 2, J)
    keys = sys_.keys()
    lam = np.zeros(len(keys))
    lam[len(keys) // 2] = 1.0
    block = sys_.synthesize(keys.with_values(lam))
    dec.interior = keys.with_values(lam)
    assert np.allclose(reconstruct(dec).values, block.values)


def test_decomposition_files_round_trip(tmp_path):
    f = GridFunction.from_function(corner_vanishing(lambda x, y: np.cos(x - y)), *UNIT2, 8)
    dec = decompose_cube(f, W21, 2, reinforce=False)
    save_decomposition(dec, tmp_path)
    for name in ("plan.json", "interior.coeffs.json", "remainder.gfn", "verify.json"):
        assert (tmp_path / name).exists()
    back = load_decomposition(tmp_path)
    assert np.allclose(reconstruct(back).values, f.values, atol=1e-12)
    assert bundle_difference(dec, back) == 0.0


# --- Riesz comparison -----------------------------------------------------------------


def test_riesz_skips_zero_and_normalizes_a_block():
    J = 8
    assert riesz_report([GridFunction.zeros(*UNIT2, J)], W21, 2)["rows"][0]["skipped"]
    sys_ = interior_system(2, 2, J)
    keys = sys_.keys()
    lam = np.zeros(len(keys))
    lam[np.argmin(np.abs(keys.centers - 0.5).sum(axis=1) + 10 * (keys.j != 3))] = 1.0
    block = sys_.synthesize(keys.with_values(lam))
    dec = decompose_cube(block, W21, 2, reinforce=False)
    # sampled blocks are orthogonal only up to quadrature, so neighbours pick up a trace
    assert coefficient_norm(dec) / direct_norm(block, W21) == pytest.approx(1.0, rel=1e-3)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**16))
def test_riesz_ratio_positive(seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0, 1, 2)
    f = GridFunction.from_function(corner_vanishing(
        lambda x, y: np.exp(-((x - c[0]) ** 2 + (y - c[1]) ** 2) / 0.1)), *UNIT2, 8)
    rep = riesz_report([f], W21, 2)
    assert 1 / 16 <= rep["rows"][0]["ratio"] <= 16
