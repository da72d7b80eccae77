"""
次線性與極大算子測試

涵蓋範圍：
1. H_Θ、H_Θ^+：單點集合、單調性、兩點集合、同值取較小索引
2. 方向平均 M_v / M_Θ：常數、條帶重疊、平滑場下界
3. 截斷乘子 m_ε：極限值與數值積分對照
4. Cotlar 擬合、錐表示式、遞迴估計
5. 平方函數、向量值極大函數、單一環帶估計

跑法：
    pytest test_operators.py
"""
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

sys.path.insert(0, str(Path(__file__).parent))

from src.directions import ROOT, Direction, DirectionSet, DirectionSetError, canonical_lacunary  # noqa: E402
from src.experiments import level_counts  # noqa: E402
from src.field_engine import (  # noqa: E402
    ComplexField,
    gaussian,
    grid_coordinates,
    indicator,
    plane_wave,
    random_bandlimited,
)
from src.multipliers import default_krange, half_plane, hilbert_dir, lp_radial  # noqa: E402
from src.operators import (  # noqa: E402
    ScaleGrid,
    SupportError,
    complement_symbol,
    cotlar_check,
    cotlar_check_set,
    cotlar_grid,
    directional_average,
    fit_domination,
    fs_vector_maximal,
    line_averages,
    max_average,
    maximal_with_limit,
    max_hilbert,
    max_trunc_hilbert,
    recurrence_check,
    reduce_branches,
    representation_check,
    single_annulus_check,
    square_fn_cww,
    square_fn_sfe,
    trunc_complement_dir,
    trunc_hilbert_dir,
    trunc_symbol,
)

N = 64
REPRESENTATION_GRID = 256
HALF = Fraction(1, 2)


def _quadrant_field(size, seed, *counters):
    return random_bandlimited(size, seed, lambda a, b: (a < 0) & (b > 0) & (np.hypot(a, b) <= size / 4), *counters)


def _smooth_field(seed=1):
    return random_bandlimited(N, seed, lambda a, b: np.hypot(a, b) <= 8)


# ============================================================
# H_Θ 與 H_Θ^+
# ============================================================

def test_max_hilbert_singleton():
    f = _smooth_field()
    v = Direction(Fraction(1, 16))
    result = max_hilbert(f, DirectionSet((v,)))
    assert np.allclose(result.value, np.abs(hilbert_dir(f, v).data), atol=1e-12)
    assert result.branches == 1


def test_max_hilbert_two_directions():
    f = _smooth_field(2)
    dset = canonical_lacunary(1, HALF, 2)
    result = max_hilbert(f, dset, plus=True)
    expected = np.maximum(np.abs(half_plane(f, dset[0]).data), np.abs(half_plane(f, dset[1]).data))
    assert np.allclose(result.value, expected, atol=1e-12)
    assert set(np.unique(result.argmax)) <= {0, 1}


def test_max_hilbert_is_monotone_in_the_set():
    f = _smooth_field(3)
    dset = canonical_lacunary(2, HALF, 3)
    small = dset.subset([0, 4, 7])
    assert np.all(max_hilbert(f, small).value <= max_hilbert(f, dset).value + 1e-12)


def test_ties_go_to_the_smaller_index():
    flat = np.ones((4, 4))
    result = reduce_branches(lambda i: [flat], [0, 1, 2])
    assert np.all(result.argmax == 0)
    assert result.branches == 3

    later = reduce_branches(lambda i: [flat * (1 + (i == 2))], [0, 1, 2])
    assert np.all(later.argmax == 2)
    assert np.allclose(later.value, 2.0)


def test_max_hilbert_on_zero():
    result = max_hilbert(ComplexField(np.zeros((N, N))), canonical_lacunary(1, HALF, 3))
    assert np.all(result.argmax == 0)
    assert np.max(result.value) == 0


def test_empty_set_rejected():
    with pytest.raises(DirectionSetError):
        max_hilbert(_smooth_field(), DirectionSet(()))


# ============================================================
# 方向平均
# ============================================================

def test_scale_grid():
    grid = ScaleGrid.dyadic(N)
    assert grid.radii == (1 / 64, 1 / 32, 1 / 16, 1 / 8)
    assert len(grid.refined().radii) == 7
    with pytest.raises(ValueError):
        ScaleGrid(N, (0.6,))
    with pytest.raises(ValueError):
        ScaleGrid(N, (1 / 128,))


def test_average_of_constant():
    f = ComplexField(np.ones((N, N)))
    for eps in (1 / 64, 3 / 64, 0.25):
        assert np.allclose(directional_average(f, Direction(Fraction(1, 16)), eps).data, 1.0, atol=1e-12)
    assert np.allclose(max_average(f, canonical_lacunary(1, HALF, 3)).value, 1.0, atol=1e-12)


def test_average_inside_a_strip():
    # x₁ ∈ [1/4, 1/2)，寬 1/4 ≥ 2ε
    f = indicator(N, (0.25, 0.5, 0.0, 1.0))
    avg = directional_average(f, ROOT, 1 / 16).data.real
    assert avg[24, 5] == pytest.approx(1.0, abs=1e-12)


def test_average_overlap_with_a_strip():
    f = indicator(N, (0.25, 0.5, 0.0, 1.0))
    eps = 1 / 8
    avg = directional_average(f, ROOT, eps).data.real
    h = 1 / N
    # x₁ = 30/64：[x − ε, x + ε] 與條帶重疊 [22/64, 32/64)
    overlap = 10 / 64
    assert abs(avg[30, 0] - overlap / (2 * eps)) <= h / (2 * eps)


def test_line_averages_are_self_adjoint():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((32, 32))
    b = rng.standard_normal((32, 32))
    v = Direction(Fraction(3, 32))
    [la] = line_averages(a, v, [3 / 32])
    [lb] = line_averages(b, v, [3 / 32])
    assert np.sum(la * b) == pytest.approx(np.sum(a * lb), rel=1e-10)


def test_max_average_dominates_smooth_fields():
    f = gaussian(N, (0.5, 0.5), 0.1)
    dset = canonical_lacunary(1, HALF, 3)
    h = 1 / N
    assert np.all(max_average(f, dset).value >= (1 - 10 * h) * f.modulus() - 1e-12)


def test_max_average_is_monotone():
    f = _smooth_field(4)
    dset = canonical_lacunary(1, HALF, 4)
    assert np.all(max_average(f, dset.subset([1, 3])).value <= max_average(f, dset).value + 1e-12)


# ============================================================
# 截斷
# ============================================================

def test_trunc_symbol_limits():
    sigma = np.array([-5.0, -1.0, 1.0, 3.0])
    assert np.allclose(trunc_symbol(sigma, 1e-12), 1j * np.pi * np.sign(sigma), atol=1e-9)
    assert np.max(np.abs(trunc_symbol(sigma, 1e6))) < 1e-5
    assert trunc_symbol(0.0, 0.1) == 0


def test_trunc_and_complement_add_up():
    sigma = np.linspace(-20, 20, 81)
    total = trunc_symbol(sigma, 0.07) + complement_symbol(sigma, 0.07)
    assert np.allclose(total, 1j * np.pi * np.sign(sigma), atol=1e-14)


@pytest.mark.parametrize("eps", [0.01, 0.05, 0.125, 0.25, 0.5])
@pytest.mark.parametrize("sigma", [1.0, -3.0, 7.0, -16.0])
def test_trunc_symbol_against_quadrature(eps, sigma):
    # ∫_ε^∞ sin(2πσt)/t dt = (π/2)·sgn σ − ∫_0^ε sin(2πσt)/t dt
    head, _ = integrate.quad(lambda t: np.sin(2 * np.pi * sigma * t) / t, 0.0, eps,
                             epsabs=1e-15, epsrel=1e-13, limit=200)
    tail = np.pi / 2 * np.sign(sigma) - head
    expected = 2j * tail
    assert complex(trunc_symbol(sigma, eps)) == pytest.approx(expected, rel=1e-8)


def test_truncated_transforms_split_the_hilbert_transform():
    f = _smooth_field(5)
    v = Direction(Fraction(1, 16))
    total = trunc_hilbert_dir(f, v, 0.1) + trunc_complement_dir(f, v, 0.1)
    assert np.allclose(total.data, hilbert_dir(f, v).data, atol=1e-11)
    with pytest.raises(ValueError):
        trunc_hilbert_dir(f, v, 0.0)


def test_max_trunc_hilbert_single_radius():
    f = _smooth_field(6)
    v = Direction(Fraction(1, 8))
    grid = ScaleGrid(N, (1 / 16,))
    result = max_trunc_hilbert(f, DirectionSet((v,)), grid)
    assert np.allclose(result.value, trunc_hilbert_dir(f, v, 1 / 16).modulus(), atol=1e-12)


# ============================================================
# Cotlar
# ============================================================

def test_fit_domination():
    lhs = np.array([1.0, 2.0, 3.0])
    base = np.array([1.0, 1.0, 1.0])
    weight = np.array([1.0, 0.5, 4.0])
    fit = fit_domination(lhs, base, weight)
    assert fit.constant == pytest.approx(2.0)
    assert np.all(fit.lhs <= fit.rhs + 1e-12)


def test_cotlar_on_zero():
    fit = cotlar_check(ComplexField(np.zeros((N, N))), ROOT)
    assert fit.constant == 0.0


def test_cotlar_on_a_smooth_bump():
    f = gaussian(128, (0.5, 0.5), 0.05)
    fit = cotlar_check(f, ROOT)
    assert np.isfinite(fit.constant)
    assert fit.constant <= 10
    assert cotlar_grid(128).radii[-1] == 0.5


def _ridge(size, sigma):
    """只依 x₁ 變化的週期高斯脊"""
    x1, _ = grid_coordinates(size)
    d1 = x1 % 1.0 - 0.5
    return ComplexField(np.exp(-d1 * d1 / (2.0 * sigma * sigma)))


def test_cotlar_constant_across_resolutions():
    constants = []
    for size in (256, 512):
        fit = cotlar_check(_ridge(size, 0.05), ROOT)
        assert np.all(fit.lhs <= fit.rhs + 1e-12)
        constants.append(fit.constant)
    # 對稱遞減的剖面上 0 ≤ H_ε f ≤ H_v f，M_v(H_v f) 一項已足夠
    assert max(constants) <= 1e-6
    assert abs(constants[0] - constants[1]) <= 1e-6


def test_cotlar_limit_branch_on_the_right():
    f = _ridge(64, 0.05)
    grid = cotlar_grid(64)
    single = DirectionSet((ROOT,))
    h = hilbert_dir(f, ROOT)
    limit = maximal_with_limit(h, single, grid)
    assert np.all(limit >= h.modulus())
    assert np.all(limit >= max_average(h, single, grid).value)
    assert np.all(maximal_with_limit(f, single, grid) >= f.modulus())


def test_cotlar_set_version():
    f = gaussian(N, (0.5, 0.5), 0.08)
    fit = cotlar_check_set(f, canonical_lacunary(1, HALF, 2))
    assert np.isfinite(fit.constant)
    assert np.all(fit.lhs <= fit.rhs + 1e-9)


# ============================================================
# 錐表示式與遞迴估計
# ============================================================

@pytest.mark.parametrize("order,size", [(1, 8), (1, 16), (1, 32), (2, 8), (2, 16), (2, 32)])
def test_representation_is_exact(order, size):
    dset = canonical_lacunary(order, HALF, level_counts(size, order))
    assert len(dset) == size
    for instance in range(2):
        g = _quadrant_field(REPRESENTATION_GRID, 2017, size, instance)
        deviation = representation_check(g, dset)
        assert deviation <= 1e-9 * np.max(g.modulus())


@pytest.mark.parametrize("order,size", [(1, 8), (1, 16), (1, 32), (2, 8), (2, 16), (2, 32)])
def test_recurrence_holds(order, size):
    dset = canonical_lacunary(order, HALF, level_counts(size, order))
    for instance in range(2):
        g = _quadrant_field(REPRESENTATION_GRID, 2018, size, instance)
        assert recurrence_check(g, dset) <= 1e-9 * np.max(g.modulus())


def test_representation_keeps_the_boundary_line():
    dset = canonical_lacunary(2, HALF, [4, 4])
    # ξ = (−5, 5) 恰在 θ = 1/8 的 ξ·v = 0 線上
    wave = plane_wave(N, (-5, 5))
    assert np.allclose(max_hilbert(wave, dset, plus=True).value, 1.0, atol=1e-12)
    assert representation_check(wave, dset) <= 1e-12


def test_representation_on_zero_and_bad_support():
    dset = canonical_lacunary(2, HALF, 3)
    assert representation_check(ComplexField(np.zeros((N, N))), dset) == 0.0
    with pytest.raises(SupportError):
        representation_check(plane_wave(N, (3, 2)), dset)
    with pytest.raises(SupportError):
        recurrence_check(plane_wave(N, (3, 2)), dset)


def test_single_cone_wave_is_kept():
    dset = canonical_lacunary(1, HALF, 4)
    # ξ = (−3, 20) 與前三個方向內積為正，與 θ = 1/64 為負
    wave = plane_wave(N, (-3, 20))
    assert np.allclose(max_hilbert(wave, dset, plus=True).value, 1.0, atol=1e-12)
    assert representation_check(wave, dset) <= 1e-12


# ============================================================
# 平方函數與向量值極大函數
# ============================================================

def test_square_functions_on_zero():
    zero = ComplexField(np.zeros((32, 32)))
    dset = canonical_lacunary(1, HALF, 3)
    assert np.max(square_fn_sfe(zero, dset).data) == 0
    assert np.max(square_fn_cww(zero, dset).data) == 0


def test_square_fn_sfe_singleton():
    f = _quadrant_field(32, 3)
    v = Direction(Fraction(1, 16))
    expected = np.sqrt(sum(np.abs(half_plane(lp_radial(f, k), v).data) ** 2 for k in default_krange(32)))
    assert np.allclose(square_fn_sfe(f, DirectionSet((v,))).data, expected, atol=1e-12)


def test_square_functions_are_monotone():
    f = _quadrant_field(32, 4)
    dset = canonical_lacunary(1, HALF, 4)
    small = dset.subset([0, 2])
    assert np.all(square_fn_sfe(f, small).data.real <= square_fn_sfe(f, dset).data.real + 1e-12)
    assert np.all(square_fn_cww(f, small).data.real <= square_fn_cww(f, dset).data.real + 1e-12)


def test_square_fn_cww_hilbert_variant():
    f = _quadrant_field(32, 5)
    v = Direction(Fraction(1, 8))
    lhs = square_fn_cww(f, DirectionSet((v,)), plus=False).data.real
    expected = np.sqrt(sum(np.abs(hilbert_dir(lp_radial(f, k), v).data) ** 2 for k in default_krange(32)))
    assert np.allclose(lhs, expected, atol=1e-10)


def test_fs_vector_maximal():
    dset = canonical_lacunary(1, HALF, 3)
    ones = [ComplexField(np.ones((32, 32))) for _ in dset]
    result = fs_vector_maximal(ones, dset, ScaleGrid.dyadic(32))
    assert result.lhs == pytest.approx(result.rhs, rel=1e-12)
    assert result.ratio == pytest.approx(1.0, rel=1e-12)

    zeros = [ComplexField(np.zeros((32, 32))) for _ in dset]
    empty = fs_vector_maximal(zeros, dset)
    assert (empty.lhs, empty.rhs) == (0.0, 0.0)

    with pytest.raises(ValueError):
        fs_vector_maximal(ones[:2], dset)
    with pytest.raises(ValueError):
        fs_vector_maximal(ones, dset, p=1.0)


def test_single_annulus_check():
    dset = canonical_lacunary(1, HALF, 5)
    f = _quadrant_field(N, 6)
    fit = single_annulus_check(f, dset, 3)
    assert np.isfinite(fit.constant)
    assert fit.constant >= 0
    with pytest.raises(DirectionSetError):
        single_annulus_check(f, canonical_lacunary(2, HALF, 2), 3)
