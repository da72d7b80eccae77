"""
次線性與極大算子模組 - H_Θ、H_Θ^+、M_v / M_Θ、極大截斷、Cotlar 檢驗、錐表示式與遞迴估計、平方函數
"""
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import ndimage, special

from .config import LACUNA_THREADS, MAX_AVERAGE_RADIUS
from .directions import Direction, DirectionSet, DirectionSetError, enumerate_jtau
from .field_engine import ComplexField, dft, lattice, lp_norm, SpectralField
from .multipliers import (
    apply,
    cones_between,
    default_krange,
    directional_frequency,
    dot_sign,
    half_plane,
    half_plane_multiplier,
    hilbert_dir,
    hilbert_multiplier,
    lp_radial,
    odd_even_split,
    quadrant_mask,
    radial_multiplier,
)
from .utils import parallel_map

SUPPORT_TOLERANCE = 1e-12
# 浮點 ξ·v 判定半平面邊界的相對容差
BOUNDARY_SLACK = 1e-9


class SupportError(ValueError):
    """輸入的頻譜支撐不符合前提"""


@dataclass(frozen=True, eq=False)
class MaximalResult:
    """逐點上確界與達到上確界的分支索引（同值時取較小索引）"""
    value: np.ndarray
    argmax: np.ndarray
    branches: int

    def as_field(self) -> ComplexField:
        return ComplexField(self.value)


class _MaxReducer:
    """依索引順序累積逐點最大值"""

    def __init__(self):
        self.value = None
        self.argmax = None
        self.count = 0

    def push(self, branch: np.ndarray):
        if self.value is None:
            self.value = np.array(branch, dtype=np.float64, copy=True)
            self.argmax = np.zeros(branch.shape, dtype=np.int64)
        else:
            better = branch > self.value
            self.value[better] = branch[better]
            self.argmax[better] = self.count
        self.count += 1

    def result(self) -> MaximalResult:
        return MaximalResult(self.value, self.argmax, self.count)


def _batched(items: Sequence, size: int) -> Iterable[Sequence]:
    for start in range(0, len(items), size):
        yield items[start:start + size]


def reduce_branches(fn: Callable[[object], List[np.ndarray]], items: Sequence) -> MaximalResult:
    """
    對每個項目平行計算分支模長，再依項目順序做確定性的最大值歸約

    Args:
        fn: 項目 -> 該項目的分支列表（實數陣列）
        items: 項目（方向等）

    Returns:
        MaximalResult: 分支索引依 (項目, 分支) 的字典序編號
    """
    reducer = _MaxReducer()
    for batch in _batched(list(items), max(1, LACUNA_THREADS)):
        for branches in parallel_map(fn, batch):
            for branch in branches:
                reducer.push(branch)
    return reducer.result()


@dataclass(frozen=True)
class ScaleGrid:
    """平均與截斷使用的半徑集合，最小為一個網格、最大不超過 1/2"""
    size: int
    radii: Tuple[float, ...]

    def __post_init__(self):
        radii = tuple(sorted(float(r) for r in self.radii))
        h = 1.0 / self.size
        if not radii:
            raise ValueError("ScaleGrid needs at least one radius")
        if radii[0] < h * (1 - 1e-12) or radii[-1] > 0.5:
            raise ValueError(f"Radii must lie in [h, 1/2] with h = {h}, got {radii[0]}..{radii[-1]}")
        object.__setattr__(self, "radii", radii)

    @classmethod
    def dyadic(cls, size: int, max_radius: float = MAX_AVERAGE_RADIUS) -> "ScaleGrid":
        """h·2^m，m = 0..M，h·2^M ≤ max_radius"""
        h = 1.0 / size
        radii = []
        r = h
        while r <= max_radius * (1 + 1e-12):
            radii.append(r)
            r *= 2
        return cls(size, tuple(radii))

    def refined(self) -> "ScaleGrid":
        """在相鄰半徑之間插入幾何中點（密度加倍）"""
        extra = [np.sqrt(a * b) for a, b in zip(self.radii, self.radii[1:])]
        return ScaleGrid(self.size, tuple(self.radii) + tuple(extra))


# ------------------------------------------------------------
# 方向平均
# ------------------------------------------------------------

def _line_sample(values: np.ndarray, v: Direction, t: float, h: float) -> np.ndarray:
    """values(x + t v)，週期邊界雙線性內插"""
    if t == 0:
        return values
    c, s = v.vector
    return ndimage.shift(values, (-t * c / h, -t * s / h), order=1, mode="grid-wrap")


def line_averages(values: np.ndarray, v: Direction, radii: Sequence[float]) -> List[np.ndarray]:
    """
    (1/2ε)∫_{−ε}^{ε} values(x + t v) dt，複合梯形法

    半徑 ε 使用 K = ⌈2ε/h⌉ 段、步長 ε/K；二進位半徑的步長都是 h/2，可共用累加。
    對實數陣列是自伴算子（節點對稱）。

    Args:
        values: 實數陣列
        v: 方向
        radii: 半徑

    Returns:
        List[np.ndarray]: 與 radii 同順序的平均
    """
    values = np.asarray(values, dtype=np.float64)
    h = 1.0 / values.shape[0]
    groups: Dict[float, List[Tuple[int, int]]] = {}
    for idx, r in enumerate(radii):
        segments = max(1, int(np.ceil(2 * r / h - 1e-9)))
        groups.setdefault(r / segments, []).append((segments, idx))

    results: Dict[int, np.ndarray] = {}
    for step, items in groups.items():
        items.sort()
        running = values.copy()
        k = 0
        for segments, idx in items:
            while k < segments - 1:
                k += 1
                running += _line_sample(values, v, k * step, h)
                running += _line_sample(values, v, -k * step, h)
            edge = _line_sample(values, v, segments * step, h) + _line_sample(values, v, -segments * step, h)
            results[idx] = (running + 0.5 * edge) / (2 * segments)
    return [results[i] for i in range(len(radii))]


def directional_average(f: ComplexField, v: Direction, eps: float) -> ComplexField:
    """M_v 的單一半徑平均 (1/2ε)∫|f(x + tv)| dt"""
    if eps <= 0:
        raise ValueError(f"Radius must be positive, got {eps}")
    return ComplexField(line_averages(f.modulus(), v, [eps])[0])


def max_average(f: ComplexField, dset: DirectionSet, grid: Optional[ScaleGrid] = None) -> MaximalResult:
    """
    M_Θ f = sup_{v∈Θ} sup_{ε∈grid} 平均

    單一方向即 M_v；以 ScaleGrid.dyadic(N, ε) 截頂即 M_{v,ε}。
    分支索引為 方向索引·len(radii) + 半徑索引。
    """
    if len(dset) == 0:
        raise DirectionSetError("max_average over an empty direction set")
    grid = grid or ScaleGrid.dyadic(f.size)
    modulus = f.modulus()
    return reduce_branches(lambda v: line_averages(modulus, v, grid.radii), list(dset))


# ------------------------------------------------------------
# 方向 Hilbert 的極大算子與截斷
# ------------------------------------------------------------

def max_hilbert(f: ComplexField, dset: DirectionSet, plus: bool = False) -> MaximalResult:
    """
    H_Θ f = sup_{v∈Θ} |H_v f|；plus 時為 H_Θ^+ f = sup_v |H_v^+ f|
    """
    if len(dset) == 0:
        raise DirectionSetError("max_hilbert over an empty direction set")
    op = half_plane if plus else hilbert_dir
    return reduce_branches(lambda v: [op(f, v).modulus()], list(dset))


def sine_integral(x) -> np.ndarray:
    """Si(x) = ∫_0^x sin(t)/t dt"""
    return special.sici(np.asarray(x, dtype=np.float64))[0]


def trunc_symbol(sigma, eps: float) -> np.ndarray:
    """核 1_{|t|>ε}/t 的乘子 m_ε(σ) = i(π − 2Si(2πε|σ|))·sgn σ"""
    sigma = np.asarray(sigma, dtype=np.float64)
    return 1j * (np.pi - 2 * sine_integral(2 * np.pi * eps * np.abs(sigma))) * np.sign(sigma)


def complement_symbol(sigma, eps: float) -> np.ndarray:
    """核 1_{|t|≤ε}/t 的乘子 iπ sgn σ − m_ε(σ) = 2i·Si(2πε|σ|)·sgn σ"""
    sigma = np.asarray(sigma, dtype=np.float64)
    return 2j * sine_integral(2 * np.pi * eps * np.abs(sigma)) * np.sign(sigma)


def trunc_multiplier(size: int, v: Direction, eps: float) -> np.ndarray:
    return trunc_symbol(directional_frequency(size, v), eps)


def complement_multiplier(size: int, v: Direction, eps: float) -> np.ndarray:
    return complement_symbol(directional_frequency(size, v), eps)


def trunc_hilbert_dir(f: ComplexField, v: Direction, eps: float) -> ComplexField:
    """H_{v,ε}：只保留 |t| > ε 的部分"""
    if eps <= 0:
        raise ValueError(f"Truncation radius must be positive, got {eps}")
    return apply(f, trunc_multiplier(f.size, v, eps))


def trunc_complement_dir(f: ComplexField, v: Direction, eps: float) -> ComplexField:
    """p.v.∫_{|t|≤ε} f(x + tv) dt/t"""
    if eps <= 0:
        raise ValueError(f"Truncation radius must be positive, got {eps}")
    return apply(f, complement_multiplier(f.size, v, eps))


def max_trunc_hilbert(f: ComplexField, dset: DirectionSet, grid: Optional[ScaleGrid] = None) -> MaximalResult:
    """H_Θ^* f = sup_{v∈Θ} sup_{ε∈grid} |H_{v,ε} f|，分支索引同 max_average"""
    if len(dset) == 0:
        raise DirectionSetError("max_trunc_hilbert over an empty direction set")
    grid = grid or ScaleGrid.dyadic(f.size)
    spectrum = dft(f, "forward").coeffs

    def branches(v: Direction) -> List[np.ndarray]:
        sigma = directional_frequency(f.size, v)
        out = []
        for eps in grid.radii:
            coeffs = SpectralField(spectrum * trunc_symbol(sigma, eps))
            out.append(dft(coeffs, "inverse").modulus())
        return out

    return reduce_branches(branches, list(dset))


# ------------------------------------------------------------
# Cotlar
# ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DominationFit:
    """
    lhs ≤ base + C·weight 的最小 C

    Attributes:
        lhs: 左側場
        rhs: 以擬合出的 C 組成的右側場
        constant: 最小的 C ≥ 0
    """
    lhs: np.ndarray
    rhs: np.ndarray
    constant: float


def fit_domination(lhs: np.ndarray, base: np.ndarray, weight: np.ndarray) -> DominationFit:
    """
    求最小 C ≥ 0 使 lhs ≤ base + C·weight 在網格上成立

    weight 低於其最大值 1e-12 倍的點不參與擬合（數值上等於零）。
    """
    excess = lhs - base
    floor = SUPPORT_TOLERANCE * float(weight.max()) if weight.size else 0.0
    usable = weight > floor
    constant = 0.0
    if np.any(usable):
        constant = max(0.0, float(np.max(excess[usable] / weight[usable])))
    ignored = int(np.count_nonzero((~usable) & (excess > SUPPORT_TOLERANCE * max(1.0, float(lhs.max())))))
    if ignored:
        logger.warning(f"{ignored} points with vanishing weight exceed the base term")
    return DominationFit(lhs, base + constant * weight, constant)


def cotlar_grid(size: int) -> ScaleGrid:
    """Cotlar 檢驗用的半徑：一路到 1/2，平均窗口才能覆蓋整個週期"""
    return ScaleGrid.dyadic(size, 0.5)


def maximal_truncation(f: ComplexField, v: Direction, grid: ScaleGrid) -> np.ndarray:
    """H_v^* f：ε → 0 的極限 |H_v f| 與格點上各截斷的上確界"""
    spectrum = dft(f, "forward").coeffs
    sigma = directional_frequency(f.size, v)
    best = np.abs(hilbert_dir(f, v).data)
    for eps in grid.radii:
        branch = dft(SpectralField(spectrum * trunc_symbol(sigma, eps)), "inverse").modulus()
        np.maximum(best, branch, out=best)
    return best


def maximal_with_limit(g: ComplexField, dset: DirectionSet, grid: ScaleGrid) -> np.ndarray:
    """M_Θ g 連同 r → 0 的極限 |g|，與 maximal_truncation 的 ε → 0 分支對齊"""
    return np.maximum(g.modulus(), max_average(g, dset, grid).value)


def cotlar_check(f: ComplexField, v: Direction, grid: Optional[ScaleGrid] = None) -> DominationFit:
    """
    一維 Cotlar 不等式 H_v^* f ≤ M_v(H_v f) + C·M_v f，回傳最小 C

    兩側都含半徑 → 0 的極限分支：左側 |H_v f|，右側 |H_v f| 與 |f|。

    Args:
        f: 輸入場
        v: 方向
        grid: 半徑集合，預設 cotlar_grid
    """
    grid = grid or cotlar_grid(f.size)
    single = DirectionSet((v,))
    lhs = maximal_truncation(f, v, grid)
    base = maximal_with_limit(hilbert_dir(f, v), single, grid)
    weight = maximal_with_limit(f, single, grid)
    fit = fit_domination(lhs, base, weight)
    logger.debug(f"Cotlar constant along theta={float(v.theta):.6g}: {fit.constant:.6g}")
    return fit


def cotlar_check_set(f: ComplexField, dset: DirectionSet, grid: Optional[ScaleGrid] = None) -> DominationFit:
    """集合版本 H_Θ^* f ≤ M_Θ(H_Θ f) + C·M_Θ f"""
    grid = grid or cotlar_grid(f.size)
    lhs = reduce_branches(lambda v: [maximal_truncation(f, v, grid)], list(dset)).value
    h_theta = max_hilbert(f, dset).as_field()
    base = maximal_with_limit(h_theta, dset, grid)
    weight = maximal_with_limit(f, dset, grid)
    return fit_domination(lhs, base, weight)


# ------------------------------------------------------------
# 錐表示式與遞迴估計
# ------------------------------------------------------------

def _require_second_quadrant(g: ComplexField):
    coeffs = np.abs(dft(g, "forward").coeffs)
    outside = ~lattice(g.size).second_quadrant()
    peak = float(coeffs.max())
    if peak > 0 and float(coeffs[outside].max(initial=0.0)) > SUPPORT_TOLERANCE * peak:
        raise SupportError("Spectrum of g is not contained in the open second quadrant")


def _restrict(spectrum: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dft(SpectralField(spectrum * mask), "inverse").data


def representation_check(g: ComplexField, dset: DirectionSet) -> float:
    """
    H_Θ^+ g 與錐和表示式的最大偏差

    左側以浮點 ξ·v ≥ 0 遮罩逐方向重算 sup_{v∈Θ} |H_v^+ g|，不經過精確符號表；
    右側對每個實際出現的 v_{J,T} ∈ Θ 計算
    |Σ_{j≥J} R_{j,T} g + Σ_{τ≥T} R̃_τ g|，
    R̃_τ 為 {ξ·u_τ ≥ 0, ξ·u_{τ+1} < 0} ∩ 第二象限，也就是第 τ+1 段弧的錐。

    Args:
        g: 頻譜在開第二象限內的場
        dset: D ≥ 1 的帶憑證集合

    Returns:
        float: sup-norm 偏差
    """
    _require_second_quadrant(g)
    view = enumerate_jtau(dset)
    size = g.size
    spectrum = dft(g, "forward").coeffs

    lat = lattice(size)
    slack = BOUNDARY_SLACK * np.hypot(lat.xi1, lat.xi2)
    left = np.zeros((size, size))
    for v in dset:
        # ξ·v = 0 線上的格點算在半平面內
        keep = lat.dot(v.vector) >= -slack
        np.maximum(left, np.abs(_restrict(spectrum, keep)), out=left)

    blocks = view.blocks
    # 每段弧整體的錐：上邊界 v_{1,τ}（τ = 1 時為 v_1），下邊界 u_τ
    arc_pieces = [
        _restrict(spectrum, cones_between([blk.top, blk.bottom])[0].mask(size))
        for blk in blocks
    ]
    # tails[τ] = Σ_{σ>τ} 第 σ 段弧的錐
    tails = [None] * (len(blocks) + 1)
    tails[len(blocks)] = np.zeros((size, size), dtype=np.complex128)
    for i in range(len(blocks) - 1, -1, -1):
        tails[i] = tails[i + 1] + arc_pieces[i]

    right = np.zeros((size, size))
    for i, blk in enumerate(blocks):
        if not blk.members:
            continue
        cones = cones_between(blk.boundaries())
        pieces = [_restrict(spectrum, c.mask(size)) for c in cones]
        # 由下往上累加 Σ_{j≥J} R_{j,T}
        partial = tails[i + 1].copy()
        sums = {}
        for j in range(len(cones), 0, -1):
            partial = partial + pieces[j - 1]
            sums[j] = partial
        for j, _ in blk.indexed():
            np.maximum(right, np.abs(sums[j]), out=right)

    deviation = float(np.max(np.abs(left - right)))
    logger.debug(f"Representation deviation {deviation:.3e} over {len(dset)} directions")
    return deviation


def recurrence_check(g: ComplexField, dset: DirectionSet) -> float:
    """
    H_Θ^+ g ≤ H_{′Θ}^+ g + sup_τ H_{Θ_τ}^+(R̃_{τ−1} g) 的最大正違規量

    R̃_{τ−1} 為第 τ 段弧的錐 {ξ·u_{τ−1} ≥ 0, ξ·u_τ < 0} ∩ 第二象限，u_0 = v_1。
    """
    _require_second_quadrant(g)
    view = enumerate_jtau(dset)
    lhs = max_hilbert(g, dset, plus=True).value
    parent = DirectionSet(view.parent)
    rhs = max_hilbert(g, parent, plus=True).value

    inner_max = np.zeros_like(lhs)
    for blk in view.blocks:
        if not blk.members:
            continue
        cone = cones_between([blk.top, blk.bottom])[0]
        piece = apply(g, cone.mask(g.size).astype(np.float64))
        branch = max_hilbert(piece, DirectionSet(blk.members), plus=True).value
        np.maximum(inner_max, branch, out=inner_max)

    violation = float(np.max(lhs - (rhs + inner_max)))
    return max(0.0, violation)


# ------------------------------------------------------------
# 平方函數與向量值極大函數
# ------------------------------------------------------------

def square_fn_sfe(f: ComplexField, dset: DirectionSet, krange: Optional[Iterable[int]] = None) -> ComplexField:
    """(Σ_k |H_Θ^+(S_k f)|²)^{1/2}"""
    krange = default_krange(f.size) if krange is None else krange
    total = np.zeros((f.size, f.size))
    for k in krange:
        branch = max_hilbert(lp_radial(f, k), dset, plus=True).value
        total += branch * branch
    return ComplexField(np.sqrt(total))


def square_fn_cww(
    f: ComplexField,
    dset: DirectionSet,
    krange: Optional[Iterable[int]] = None,
    plus: bool = True
) -> ComplexField:
    """
    (Σ_k (sup_j |P_j S_k f|)²)^{1/2}，P_j 為 H_{v_j}^+（plus=False 時為 H_{v_j}）

    直接在頻域把 φ̂(2^{−k}|ξ|) 與 P_j 的乘子相乘，不經過 max_hilbert。
    """
    krange = default_krange(f.size) if krange is None else krange
    size = f.size
    spectrum = dft(f, "forward").coeffs
    symbols = [
        half_plane_multiplier(size, v) if plus else hilbert_multiplier(size, v)
        for v in dset
    ]
    total = np.zeros((size, size))
    for k in krange:
        band = spectrum * radial_multiplier(size, k)
        best = np.zeros((size, size))
        for symbol in symbols:
            np.maximum(best, np.abs(dft(SpectralField(band * symbol), "inverse").data), out=best)
        total += best * best
    return ComplexField(np.sqrt(total))


@dataclass(frozen=True)
class MixedNormResult:
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else 0.0


def mixed_norm(values: Sequence[np.ndarray], p: float, q: float) -> float:
    """‖(Σ_j |h_j|^q)^{1/q}‖_{L^p}"""
    stacked = sum(np.abs(v) ** q for v in values)
    return lp_norm(stacked ** (1.0 / q), p)


def fs_vector_maximal(
    hs: Sequence[ComplexField],
    dset: DirectionSet,
    grid: Optional[ScaleGrid] = None,
    p: float = 2.0,
    q: float = 2.0
) -> MixedNormResult:
    """
    ‖{M_{v_j} h_j}‖_{L^p(ℓ^q)} 與 ‖{h_j}‖_{L^p(ℓ^q)}

    Args:
        hs: 函數族，第 j 個配第 j 個方向
        dset: 方向集合
        grid: 半徑集合
        p, q: 1 < p, q < ∞
    """
    if len(hs) != len(dset):
        raise ValueError(f"Expected {len(dset)} functions, got {len(hs)}")
    if not (1 < p < np.inf and 1 < q < np.inf):
        raise ValueError(f"Need 1 < p, q < inf, got p={p}, q={q}")
    if not hs:
        return MixedNormResult(0.0, 0.0)
    grid = grid or ScaleGrid.dyadic(hs[0].size)
    pairs = list(zip(hs, dset))
    maximal = parallel_map(lambda pair: max_average(pair[0], DirectionSet((pair[1],)), grid).value, pairs)
    lhs = mixed_norm(maximal, p, q)
    rhs = mixed_norm([h.data for h in hs], p, q)
    return MixedNormResult(lhs, rhs)


def single_annulus_check(
    f: ComplexField,
    dset: DirectionSet,
    k: int,
    grid: Optional[ScaleGrid] = None
) -> DominationFit:
    """
    一階集合的單一環帶逐點估計 sup_j |H_{v_j}^+(S_k f)| ≤ C(M_u[(S_k f)_odd] + M_u[(S_k f)_ev])

    f 先投影到 {ξ·v_1 ≥ 0, ξ·u < 0} ∩ 第二象限，u 為憑證的根（極限方向）。
    """
    if dset.certificate is None or dset.order != 1:
        raise DirectionSetError("single_annulus_check needs a certified 1-lacunary set")
    limit = dset.certificate.root.direction
    grid = grid or ScaleGrid.dyadic(f.size)
    size = f.size
    region = quadrant_mask(size, dset[0]) & (dot_sign(size, limit) < 0)
    g = lp_radial(apply(f, region.astype(np.float64)), k)
    lhs = max_hilbert(g, dset, plus=True).value
    odd, even = odd_even_split(g, dset, limit)
    single = DirectionSet((limit,))
    weight = max_average(odd, single, grid).value + max_average(even, single, grid).value
    return fit_domination(lhs, np.zeros_like(lhs), weight)
