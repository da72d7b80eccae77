"""
Lipschitz-lacunary 向量場模組

v_D(x) = ∏_j e^{2πi 2^{⌊log₂ λ_j(x)⌋}}：各 λ_j 以小型運算式語言給定，
逐點取二進位指數後得到分段常數、值域為 D 階 lacunary 集合的方向場。
"""
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy
from loguru import logger
from sympy.parsing.sympy_parser import parse_expr, standard_transformations

from .directions import QUARTER, Direction, DirectionSet, LacunaryTree, TreeNode
from .field_engine import ComplexField, dft, grid_coordinates, lattice, SpectralField
from .multipliers import apply, hilbert_dir
from .operators import ScaleGrid, complement_multiplier, fit_domination, max_average
from .utils import parallel_map, trial_rng

CHAIN_GAP = 5                       # λ_j ≤ 2^{−5} λ_{j−1}
NEARLY_HORIZONTAL = Fraction(1, 32)  # θ ∈ [0, 2^{−5}]
GAMMA_THRESHOLD = 64                # ξ₁ < −2⁶
LIPSCHITZ_SLACK = 1e-6


class VectorFieldError(ValueError):
    """向量場的定義或限制條件不成立"""


# ------------------------------------------------------------
# 運算式語言
# ------------------------------------------------------------

_X, _Y = sympy.symbols("x y", real=True)


def _periodic_gap(t):
    r = sympy.Mod(t, 1)
    return sympy.Min(r, 1 - r)


def _clamp(value, lo, hi):
    return sympy.Min(sympy.Max(value, lo), hi)


def _dist(cx, cy):
    """到點 (cx, cy) 的週期距離"""
    return sympy.sqrt(_periodic_gap(_X - cx) ** 2 + _periodic_gap(_Y - cy) ** 2)


_NAMESPACE = {
    "x": _X,
    "y": _Y,
    "min": sympy.Min,
    "max": sympy.Max,
    "abs": sympy.Abs,
    "clamp": _clamp,
    "dist": _dist,
}

_GLOBALS = {
    "Integer": sympy.Integer,
    "Float": sympy.Float,
    "Rational": sympy.Rational,
    "Symbol": sympy.Symbol,
    "__builtins__": {},
}


def compile_expression(text: str):
    """
    解析運算式並轉成 numpy 函式 (x, y) -> 值

    允許：數字、x、y、+ − · /、min、max、abs、clamp(v, lo, hi)、dist(cx, cy)

    Raises:
        VectorFieldError: 語法錯誤或出現未知名稱
    """
    try:
        expr = parse_expr(text, local_dict=dict(_NAMESPACE), global_dict=dict(_GLOBALS),
                          transformations=standard_transformations)
    except Exception as e:
        raise VectorFieldError(f"Cannot parse expression {text!r}: {e}") from e
    if not isinstance(expr, sympy.Expr):
        raise VectorFieldError(f"Expression {text!r} is not a scalar expression")
    unknown = expr.free_symbols - {_X, _Y}
    if unknown:
        raise VectorFieldError(f"Unknown names in {text!r}: {sorted(str(s) for s in unknown)}")
    return expr, sympy.lambdify((_X, _Y), expr, "numpy")


@dataclass(frozen=True)
class ScalarLipschitzField:
    """
    值域 (0,1] 的 Lipschitz 純量場

    Attributes:
        expression: 運算式字串
        lipschitz: 宣告的 Lipschitz 常數
    """
    expression: str
    lipschitz: float = 1.0

    def __post_init__(self):
        compile_expression(self.expression)

    def sample(self, size: int) -> np.ndarray:
        """在 N×N 網格點上取值，並檢查值域與 Lipschitz 常數"""
        _, fn = compile_expression(self.expression)
        x, y = grid_coordinates(size)
        values = np.broadcast_to(np.asarray(fn(x, y), dtype=np.float64), (size, size)).copy()
        if not np.all(np.isfinite(values)):
            raise VectorFieldError(f"{self.expression!r} is not finite on the grid")
        bad = np.argwhere((values <= 0) | (values > 1))
        if bad.size:
            i, j = bad[0]
            raise VectorFieldError(
                f"{self.expression!r} leaves (0,1] at grid point ({i}, {j}): {values[i, j]}"
            )
        quotient = lipschitz_quotient(values)
        if quotient > self.lipschitz * (1 + LIPSCHITZ_SLACK):
            raise VectorFieldError(
                f"{self.expression!r} has Lipschitz quotient {quotient:.6g} > {self.lipschitz}"
            )
        return values


def lipschitz_quotient(values: np.ndarray) -> float:
    """沿軸向與對角方向的週期差商最大值"""
    h = 1.0 / values.shape[0]
    worst = 0.0
    for shift, step in (((1, 0), h), ((0, 1), h), ((1, 1), h * math.sqrt(2)), ((1, -1), h * math.sqrt(2))):
        diff = np.abs(np.roll(values, shift, axis=(0, 1)) - values)
        worst = max(worst, float(diff.max()) / step)
    return worst


def floor_log2(values: np.ndarray) -> np.ndarray:
    """
    ⌊log₂ λ⌋，取自浮點數的二進位指數

    frexp 給出 λ = m·2^e，m ∈ [1/2, 1)，故 ⌊log₂ λ⌋ = e − 1；2 的冪次精確。
    """
    _, exponent = np.frexp(values)
    return exponent.astype(np.int64) - 1


# ------------------------------------------------------------
# v_D
# ------------------------------------------------------------

def _angle_of(exponents: Tuple[int, ...]) -> Fraction:
    return sum((Fraction(1, 2 ** k) for k in exponents), Fraction(0))


@dataclass(frozen=True, eq=False)
class VectorFieldLac:
    """
    分段常數的 lacunary 方向場

    Attributes:
        lams: λ_1..λ_D
        size: 網格大小
        exponents: (D, N, N) 的 k_j(x) = −⌊log₂ λ_j(x)⌋
        labels: (N, N) 每點在 range 中的索引
        range_tuples: 依指數字典序排序的值域 (k_1, ..., k_D)
        directions: 與 range_tuples 同順序的方向
    """
    lams: Tuple[ScalarLipschitzField, ...]
    size: int
    exponents: np.ndarray
    labels: np.ndarray
    range_tuples: Tuple[Tuple[int, ...], ...]
    directions: Tuple[Direction, ...]

    @property
    def order(self) -> int:
        return len(self.lams)

    def angle_field(self) -> np.ndarray:
        """每點的角度（圈）"""
        table = np.array([float(d.theta) for d in self.directions])
        return table[self.labels]

    def range_set(self) -> DirectionSet:
        """值域，未附憑證"""
        return DirectionSet(tuple(sorted(self.directions, reverse=True)))

    def mask(self, index: int) -> np.ndarray:
        return self.labels == index


def build_vd(lams: Sequence[ScalarLipschitzField], size: int) -> VectorFieldLac:
    """
    由 λ_1..λ_D 建立 v_D

    Args:
        lams: 純量場，需滿足 λ_j ≤ 2^{−5} λ_{j−1}
        size: 網格大小

    Returns:
        VectorFieldLac

    Raises:
        VectorFieldError: 鏈條件、值域或 Lipschitz 條件不成立，或角度超出 [0, 1/4]
    """
    lams = tuple(lams)
    if not lams:
        raise VectorFieldError("build_vd needs at least one lambda")
    samples = [lam.sample(size) for lam in lams]
    for d in range(1, len(samples)):
        # 乘以 2 的冪次是精確的
        bad = np.argwhere(samples[d] * 2 ** CHAIN_GAP > samples[d - 1])
        if bad.size:
            i, j = bad[0]
            raise VectorFieldError(
                f"Chain condition lambda_{d + 1} <= 2^-{CHAIN_GAP} lambda_{d} fails at grid point "
                f"({i}, {j}) = ({i / size:.6g}, {j / size:.6g}): "
                f"{samples[d][i, j]:.6g} vs {samples[d - 1][i, j]:.6g}"
            )

    exponents = np.stack([-floor_log2(s) for s in samples])
    flat = exponents.reshape(len(lams), -1).T
    tuples, inverse = np.unique(flat, axis=0, return_inverse=True)
    range_tuples = tuple(tuple(int(k) for k in row) for row in tuples)
    angles = [_angle_of(t) for t in range_tuples]
    too_wide = [t for t, a in zip(range_tuples, angles) if a > QUARTER]
    if too_wide:
        raise VectorFieldError(f"Exponents {too_wide[0]} give an angle beyond 1/4")

    labels = np.asarray(inverse).reshape(size, size)
    logger.debug(f"Built order-{len(lams)} vector field on {size}x{size} with {len(range_tuples)} values")
    return VectorFieldLac(
        lams, size, exponents, labels, range_tuples,
        tuple(Direction(a) for a in angles)
    )


def truncate(vf: VectorFieldLac, d: int) -> VectorFieldLac:
    """v_d（d ≤ D），只用前 d 個 λ"""
    if not 1 <= d <= vf.order:
        raise VectorFieldError(f"Truncation depth must lie in 1..{vf.order}, got {d}")
    return build_vd(vf.lams[:d], vf.size)


def level_sets(vf: VectorFieldLac) -> Dict[Tuple[Fraction, int], np.ndarray]:
    """
    E_{θ,j} = {x: v_{D−1}(x) = θ, j_θ(x) = j}

    θ 為前 D−1 個指數的角度，j = −⌊log₂ λ_D(x)⌋。
    """
    prefix = vf.exponents[:-1]
    last = vf.exponents[-1]
    sets: Dict[Tuple[Fraction, int], np.ndarray] = {}
    for t in vf.range_tuples:
        theta = _angle_of(t[:-1])
        key = (theta, t[-1])
        match = last == t[-1]
        for d, k in enumerate(t[:-1]):
            match &= prefix[d] == k
        sets[key] = sets.get(key, np.zeros_like(match)) | match
    return sets


def range_certificate(vf: VectorFieldLac) -> DirectionSet:
    """以指數序列建立 λ = 1/2 的 D 階憑證"""
    def build(prefix: Tuple[int, ...], depth: int) -> TreeNode:
        theta = _angle_of(prefix)
        if depth == vf.order:
            return TreeNode(Direction(theta))
        nexts = sorted({t[depth] for t in vf.range_tuples if t[:depth] == prefix})
        return TreeNode(Direction(theta), tuple(build(prefix + (k,), depth + 1) for k in nexts))

    tree = LacunaryTree(build((), 0), Fraction(1, 2), vf.order)
    return DirectionSet.from_tree(tree)


# ------------------------------------------------------------
# 沿向量場的截斷 Hilbert 轉換
# ------------------------------------------------------------

def trunc_hilbert_field(f: ComplexField, vf: VectorFieldLac, eps: float) -> ComplexField:
    """
    H_{v,ε} f(x) = p.v.∫_{|t|≤ε} f(x + t v(x)) dt/t

    v 只取有限個值：對每個值 w 套用沿 w 的互補截斷乘子，再以 1_{v=w} 拼回。

    Args:
        f: 輸入場
        vf: 向量場（網格需與 f 相同）
        eps: 截斷半徑，0 < ε ≤ 1/2
    """
    if not 0 < eps <= 0.5:
        raise ValueError(f"Truncation radius must lie in (0, 1/2], got {eps}")
    if vf.size != f.size:
        raise VectorFieldError(f"Vector field grid {vf.size} does not match field grid {f.size}")
    spectrum = dft(f, "forward").coeffs

    def piece(index: int) -> np.ndarray:
        w = vf.directions[index]
        values = dft(SpectralField(spectrum * complement_multiplier(f.size, w, eps)), "inverse").data
        return np.where(vf.mask(index), values, 0)

    total = np.zeros((f.size, f.size), dtype=np.complex128)
    for values in parallel_map(piece, range(len(vf.range_tuples))):
        total += values
    return ComplexField(total)


# ------------------------------------------------------------
# Γ₀ 幾何
# ------------------------------------------------------------

def gamma0_mask(size: int) -> np.ndarray:
    """{ξ₂ > −2ξ₁, ξ₁ < −2⁶, ξ₂ > 0}"""
    lat = lattice(size)
    return (lat.xi2 > -2 * lat.xi1) & (lat.xi1 < -GAMMA_THRESHOLD) & (lat.xi2 > 0)


def gamma1_mask(size: int) -> np.ndarray:
    """{ξ₁ < −2⁶, 0 < ξ₂ ≤ −2ξ₁}"""
    lat = lattice(size)
    return (lat.xi1 < -GAMMA_THRESHOLD) & (lat.xi2 > 0) & (lat.xi2 <= -2 * lat.xi1)


def gamma0_restrict(f: ComplexField) -> ComplexField:
    """Γ₀ 的銳利指示乘子（N ≤ 256 時 Γ₀ 在格點上是空的）"""
    return apply(f, gamma0_mask(f.size).astype(np.float64))


@dataclass(frozen=True)
class AlmostRadialReport:
    worst_ratio: float
    violations: int
    samples: int


def almostradial_check(samples: int, seed: int, bound: int = 4096) -> AlmostRadialReport:
    """
    隨機抽 ξ ∈ Γ₀（|ξ₁| ≤ bound）與 θ ∈ [0, 2^{−5}]，回傳 |ξ|/(ξ·v^⊥) 的最大值

    Args:
        samples: 樣本數
        seed: 亂數種子
        bound: 頻率方框大小
    """
    rng = trial_rng(seed, 0)
    xi1 = -rng.integers(GAMMA_THRESHOLD + 1, bound + 1, size=samples)
    # ξ₂ ∈ (−2ξ₁, 4·bound]
    xi2 = rng.integers(-2 * xi1 + 1, 4 * bound + 1)
    theta = rng.uniform(0.0, float(NEARLY_HORIZONTAL), size=samples)
    phase = 2 * np.pi * theta
    along_perp = -xi1 * np.sin(phase) + xi2 * np.cos(phase)
    ratio = np.hypot(xi1, xi2) / along_perp
    worst = float(ratio.max()) if samples else 0.0
    violations = int(np.count_nonzero(ratio > 2))
    if violations:
        logger.warning(f"{violations} of {samples} samples violate |xi| <= 2 xi.v_perp")
    return AlmostRadialReport(worst, violations, samples)


def gamma1_invariance_check(f: ComplexField, thetas: Optional[Sequence[Union[Fraction, float]]] = None) -> float:
    """
    f 投影到 Γ₁ 後，H_v f = −iπ f 對所有近水平 v 成立；回傳最大偏差

    Args:
        f: 輸入場
        thetas: 要檢查的角度，預設為 0 與 2^{−k}，k = 5..9
    """
    thetas = thetas if thetas is not None else [Fraction(0)] + [Fraction(1, 2 ** k) for k in range(5, 10)]
    g = apply(f, gamma1_mask(f.size).astype(np.float64))
    worst = 0.0
    for theta in thetas:
        if theta > NEARLY_HORIZONTAL:
            raise VectorFieldError(f"Direction {theta} is not nearly horizontal")
        deviation = hilbert_dir(g, Direction(theta)).data + 1j * np.pi * g.data
        worst = max(worst, float(np.max(np.abs(deviation))))
    return worst


def pointwise_reduction_check(
    f: ComplexField,
    vf: VectorFieldLac,
    eps: float = 0.5,
    grid: Optional[ScaleGrid] = None
):
    """
    |H_{v,ε} f| ≤ C·(M_{(0,1)} M_{(1,0)} f + M_{Θ_D} f)，f 的頻譜先移出 Γ₀ ∪ −Γ₀

    Args:
        f: 輸入場
        vf: 近水平（角度 ≤ 2^{−5}）的向量場
        eps: 截斷半徑，週期為 1，1/2 即覆蓋一整個週期
        grid: 平均半徑

    Returns:
        DominationFit: constant 為最小的 C
    """
    if any(d.theta > NEARLY_HORIZONTAL for d in vf.directions):
        raise VectorFieldError("pointwise_reduction_check needs a nearly horizontal field")
    grid = grid or ScaleGrid.dyadic(f.size, 0.5)
    cone = gamma0_mask(f.size)
    reflected = np.roll(np.flip(cone, axis=(0, 1)), 1, axis=(0, 1))
    g = apply(f, (~(cone | reflected)).astype(np.float64))

    lhs = trunc_hilbert_field(g, vf, eps).modulus()
    horizontal = max_average(g, DirectionSet((Direction(Fraction(0)),)), grid).as_field()
    strong = max_average(horizontal, DirectionSet((Direction(QUARTER),)), grid).value
    along = max_average(g, vf.range_set(), grid).value
    return fit_domination(lhs, np.zeros_like(lhs), strong + along)


# ------------------------------------------------------------
# 向量場設定檔
# ------------------------------------------------------------

def field_from_dict(data: dict) -> List[ScalarLipschitzField]:
    """{"order": D, "lambdas": [{"expr": ..., "lipschitz": ...}, ...]}"""
    try:
        entries = data["lambdas"]
        lams = [ScalarLipschitzField(str(e["expr"]), float(e.get("lipschitz", 1.0))) for e in entries]
    except (KeyError, TypeError) as e:
        raise VectorFieldError(f"Malformed vector field spec: {e}") from e
    order = data.get("order", len(lams))
    if order != len(lams):
        raise VectorFieldError(f"Spec declares order {order} but lists {len(lams)} lambdas")
    return lams


def load_field_spec(path: Union[str, Path]) -> List[ScalarLipschitzField]:
    """
    讀取向量場設定檔

    Raises:
        OSError: 檔案不存在
        VectorFieldError: 內容格式錯誤
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise VectorFieldError(f"{path} is not valid JSON: {e}") from e
    return field_from_dict(data)
