"""
Lipschitz-lacunary 向量場測試

涵蓋範圍：
1. 運算式語言與 Lipschitz / 鏈條件檢查
2. v_D 的值域、截斷、level set、值域憑證
3. 沿向量場的截斷 Hilbert 轉換（與直接數值積分比對）
4. Γ₀ / Γ₁ 幾何與逐點化約

跑法：
    pytest test_vectorfield.py
"""
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from src.directions import Direction, verify_order  # noqa: E402
from src.experiments import standard_fields  # noqa: E402
from src.field_engine import ComplexField, gaussian, grid_coordinates, plane_wave, random_bandlimited  # noqa: E402
from src.operators import trunc_complement_dir  # noqa: E402
from src.vectorfield import (  # noqa: E402
    ScalarLipschitzField,
    VectorFieldError,
    almostradial_check,
    build_vd,
    compile_expression,
    field_from_dict,
    floor_log2,
    gamma0_mask,
    gamma0_restrict,
    gamma1_invariance_check,
    level_sets,
    load_field_spec,
    pointwise_reduction_check,
    range_certificate,
    trunc_hilbert_field,
    truncate,
)


def _field(*exprs, size=64):
    return build_vd([ScalarLipschitzField(e) for e in exprs], size)


# ============================================================
# 運算式與建構
# ============================================================

def test_constant_lambdas():
    vf = _field("1/64", "1/2048")
    assert vf.range_tuples == ((6, 11),)
    assert vf.directions[0].theta == Fraction(1, 64) + Fraction(1, 2048)
    assert np.allclose(vf.angle_field(), 2.0 ** -6 + 2.0 ** -11)


def test_dyadic_exponents_of_a_distance_field():
    vf = _field("clamp(dist(0.5, 0.5), 1/1024, 1/64)", size=256)
    ks = {t[0] for t in vf.range_tuples}
    assert ks <= set(range(6, 11))
    assert {6, 10} <= ks
    # 中心點 λ = 1/1024
    assert vf.exponents[0, 128, 128] == 10


def test_range_is_sorted_and_certified():
    vf = build_vd(field_from_dict(standard_fields()[2]), 64)
    assert list(vf.range_tuples) == sorted(set(vf.range_tuples))
    assert len(vf.range_tuples) >= 2
    dset = range_certificate(vf)
    assert verify_order(dset).ok
    assert sorted(dset) == sorted(vf.range_set())


def test_chain_condition():
    with pytest.raises(VectorFieldError, match="grid point"):
        _field("1/64", "1/256")


def test_range_and_names():
    with pytest.raises(VectorFieldError):
        _field("x - 0.5")
    with pytest.raises(VectorFieldError):
        compile_expression("sin(x)")
    with pytest.raises(VectorFieldError):
        compile_expression("foo(x)")
    with pytest.raises(VectorFieldError):
        compile_expression("x + z")
    with pytest.raises(VectorFieldError):
        compile_expression("1/(")


def test_lipschitz_constant_is_enforced():
    with pytest.raises(VectorFieldError, match="Lipschitz"):
        _field("clamp(10*dist(0.5, 0.5), 1/64, 1)")
    lam = ScalarLipschitzField("clamp(10*dist(0.5, 0.5), 1/64, 1/8)", lipschitz=10)
    assert build_vd([lam], 32).order == 1


@pytest.mark.parametrize("expr", ["1", "1/2"])
def test_angles_beyond_a_quarter(expr):
    with pytest.raises(VectorFieldError, match="beyond"):
        _field(expr)


def test_floor_log2():
    values = np.array([1.0, 0.5, 0.75, 2.0 ** -10])
    assert floor_log2(values).tolist() == [0, -1, -1, -10]


def test_truncate_and_level_sets():
    vf = build_vd(field_from_dict(standard_fields()[2]), 64)
    first = truncate(vf, 1)
    assert first.order == 1
    assert np.array_equal(first.exponents[0], vf.exponents[0])
    with pytest.raises(VectorFieldError):
        truncate(vf, 0)
    with pytest.raises(VectorFieldError):
        truncate(vf, 3)

    sets = level_sets(vf)
    cover = sum(m.astype(int) for m in sets.values())
    assert np.all(cover == 1)


def test_field_spec_errors(tmp_path):
    with pytest.raises(VectorFieldError):
        field_from_dict({"order": 2, "lambdas": [{"expr": "1/64"}]})
    with pytest.raises(VectorFieldError):
        field_from_dict({"lambdas": [{"lipschitz": 1}]})

    bad = tmp_path / "bad.json"
    bad.write_text("[", encoding="utf-8")
    with pytest.raises(VectorFieldError):
        load_field_spec(bad)
    with pytest.raises(OSError):
        load_field_spec(tmp_path / "missing.json")

    good = tmp_path / "good.json"
    good.write_text(json.dumps(standard_fields()[0]), encoding="utf-8")
    assert len(load_field_spec(good)) == 1


# ============================================================
# 沿向量場的截斷 Hilbert
# ============================================================

def test_constant_field_matches_single_direction():
    vf = _field("1/16")
    f = random_bandlimited(64, 3, lambda a, b: np.hypot(a, b) <= 16)
    expected = trunc_complement_dir(f, vf.directions[0], 0.1)
    assert np.allclose(trunc_hilbert_field(f, vf, 0.1).data, expected.data, atol=1e-12)


def test_constant_input_gives_zero():
    vf = _field("clamp(dist(0.5, 0.5), 1/64, 1/8)")
    f = ComplexField(np.full((64, 64), 3.0))
    assert np.max(np.abs(trunc_hilbert_field(f, vf, 0.5).data)) < 1e-12


def test_against_direct_quadrature():
    size = 32
    eps = 0.25
    waves = [((1, 2), 1.0), ((-3, 1), 0.5j), ((2, -1), -0.75)]
    f = ComplexField(sum(c * plane_wave(size, xi).data for xi, c in waves))
    vf = _field("clamp(dist(0.5, 0.5), 1/32, 1/16)", size=size)
    assert len(vf.range_tuples) == 2

    result = trunc_hilbert_field(f, vf, eps).data

    # p.v.∫_{|t|≤ε} f(x + tv) dt/t = ∫_0^ε (f(x + tv) − f(x − tv)) dt/t，中點法
    m = 2000
    t = (np.arange(m) + 0.5) * eps / m
    x1, x2 = grid_coordinates(size)
    vectors = np.array([d.vector for d in vf.directions])
    v1 = vectors[vf.labels, 0][..., None]
    v2 = vectors[vf.labels, 1][..., None]
    expected = np.zeros((size, size), dtype=np.complex128)
    for (a, b), c in waves:
        base = np.exp(2j * np.pi * (a * x1 + b * x2))[..., None]
        phase = 2 * np.pi * (a * v1 + b * v2) * t
        expected += c * np.sum(base * 2j * np.sin(phase) / t, axis=-1) * (eps / m)

    assert np.max(np.abs(result - expected)) <= 1e-3 * np.max(np.abs(expected))


def test_truncation_radius_and_grid_checks():
    vf = _field("1/16")
    f = ComplexField(np.ones((64, 64)))
    with pytest.raises(ValueError):
        trunc_hilbert_field(f, vf, 0.0)
    with pytest.raises(ValueError):
        trunc_hilbert_field(f, vf, 0.6)
    with pytest.raises(VectorFieldError):
        trunc_hilbert_field(ComplexField(np.ones((32, 32))), vf, 0.1)


# ============================================================
# Γ₀ / Γ₁ 與逐點化約
# ============================================================

def test_gamma0_is_empty_on_small_grids():
    assert not gamma0_mask(256).any()
    f = random_bandlimited(256, 1, lambda a, b: a < 0)
    assert np.max(np.abs(gamma0_restrict(f).data)) == 0


def test_gamma0_on_a_larger_grid():
    kept = plane_wave(512, (-70, 200))
    removed = plane_wave(512, (-70, 100))
    assert np.allclose(gamma0_restrict(kept).data, kept.data, atol=1e-12)
    assert np.max(np.abs(gamma0_restrict(removed).data)) < 1e-12


def test_almost_radial_bound():
    report = almostradial_check(100_000, 7)
    assert report.violations == 0
    assert report.samples == 100_000
    assert 1.0 <= report.worst_ratio <= 2.0


def test_gamma1_invariance():
    f = random_bandlimited(256, 9, lambda a, b: a < 0)
    assert gamma1_invariance_check(f) < 1e-10
    with pytest.raises(VectorFieldError):
        gamma1_invariance_check(f, [Fraction(1, 16)])


def test_pointwise_reduction():
    f = gaussian(64, (0.5, 0.5), 0.08)
    vf = _field("clamp(dist(0.5, 0.5)/4, 1/512, 1/32)")
    assert all(d.theta <= Fraction(1, 32) for d in vf.directions)
    fit = pointwise_reduction_check(f, vf)
    assert np.isfinite(fit.constant)
    assert fit.constant <= 50


def test_pointwise_reduction_constant_across_grids():
    constants = []
    for size in (64, 128):
        f = gaussian(size, (0.5, 0.5), 0.08)
        vf = _field("clamp(dist(0.5, 0.5)/4, 1/512, 1/32)", size=size)
        constants.append(pointwise_reduction_check(f, vf).constant)
    assert min(constants) > 0
    assert 0.5 <= constants[1] / constants[0] <= 2


def test_pointwise_reduction_needs_nearly_horizontal_field():
    vf = _field("1/16")
    with pytest.raises(VectorFieldError):
        pointwise_reduction_check(gaussian(64, (0.5, 0.5), 0.08), vf)


def test_directions_are_exact():
    vf = _field("1/8")
    assert vf.directions == (Direction(Fraction(1, 8)),)
