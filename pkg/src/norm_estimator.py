"""
算子範數下界估計模組

每個登記的算子提供：
    forward(f)        -> (Lf, state)  目前 f 的凍結線性化之值（|Lf| 即 Tf）
    adjoint(u, state) -> L* u        凍結線性化的伴隨

上升法：f ← J_{p'}(L* J_p(Lf))，再以 L^p 正規化；回報目前為止的最佳比值，
因此回報值對迭代次數單調不減。
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from .config import ASCENT_ITERS, PROBE_COUNT
from .directions import DirectionSet, DirectionSetError
from .field_engine import ComplexField, SpectralField, dft, lp_norm, plane_wave, random_bandlimited
from .multipliers import cones_of, directional_frequency, hilbert_multiplier, half_plane_multiplier
from .operators import (
    ScaleGrid,
    complement_multiplier,
    line_averages,
    reduce_branches,
    trunc_symbol,
)
from .utils import derive_seed, trial_rng
from .vectorfield import VectorFieldLac


class UnknownOperatorError(ValueError):
    """未登記的算子名稱"""


def duality_map(u: np.ndarray, p: float) -> np.ndarray:
    """J_p(u) = |u|^{p−1}·u/|u|，u = 0 處為 0"""
    modulus = np.abs(u)
    safe = np.where(modulus > 0, modulus, 1.0)
    return np.where(modulus > 0, modulus ** (p - 1) * u / safe, 0)


def _spectral(values: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
    return dft(SpectralField(dft(ComplexField(values), "forward").coeffs * multiplier), "inverse").data


def _scatter_adjoint(u: np.ndarray, argmax: np.ndarray, symbols: Sequence[np.ndarray]) -> np.ndarray:
    """Σ_a (m_a 的共軛)(1_{argmax=a}·u)"""
    total = np.zeros(u.shape, dtype=np.complex128)
    for index, symbol in enumerate(symbols):
        selected = np.where(argmax == index, u, 0)
        if np.any(selected):
            total += _spectral(selected, np.conj(symbol))
    return total


# ------------------------------------------------------------
# 算子
# ------------------------------------------------------------

class IdentityOperator:
    name = "identity"

    def forward(self, f: ComplexField):
        return f.data, None

    def adjoint(self, u: np.ndarray, state) -> np.ndarray:
        return u


class MultiplierFamilyOperator:
    """
    sup_a |m_a(D) f|；單一乘子時就是線性算子

    Args:
        name: 登記名稱
        symbols: 乘子列表（分支依此順序編號）
    """

    def __init__(self, name: str, symbols: Sequence[np.ndarray]):
        if not symbols:
            raise DirectionSetError(f"{name} needs at least one direction")
        self.name = name
        self.symbols = list(symbols)

    def forward(self, f: ComplexField):
        spectrum = dft(f, "forward").coeffs
        value = best = argmax = None
        for index, symbol in enumerate(self.symbols):
            branch = dft(SpectralField(spectrum * symbol), "inverse").data
            modulus = np.abs(branch)
            if best is None:
                value = np.array(branch, copy=True)
                best = modulus
                argmax = np.zeros(branch.shape, dtype=np.int64)
                continue
            # 同值保留較小索引
            better = modulus > best
            best[better] = modulus[better]
            value[better] = branch[better]
            argmax[better] = index
        return value, argmax

    def adjoint(self, u: np.ndarray, state) -> np.ndarray:
        return _scatter_adjoint(u, state, self.symbols)


class MaxAverageOperator:
    """M_Θ；線性化時凍結 f 的相位與 (方向, 半徑) 的 argmax"""
    name = "max_average"

    def __init__(self, dset: DirectionSet, grid: ScaleGrid):
        if len(dset) == 0:
            raise DirectionSetError("max_average needs at least one direction")
        self.dset = dset
        self.grid = grid

    def forward(self, f: ComplexField):
        modulus = f.modulus()
        result = reduce_branches(lambda v: line_averages(modulus, v, self.grid.radii), list(self.dset))
        safe = np.where(modulus > 0, modulus, 1.0)
        phase = np.where(modulus > 0, f.data / safe, 1.0)
        return result.value, (result.argmax, phase)

    def adjoint(self, u: np.ndarray, state) -> np.ndarray:
        argmax, phase = state
        radii = self.grid.radii
        total = np.zeros(u.shape, dtype=np.complex128)
        for d, v in enumerate(self.dset):
            for r_index, r in enumerate(radii):
                selected = np.where(argmax == d * len(radii) + r_index, u, 0)
                if not np.any(selected):
                    continue
                real = line_averages(selected.real, v, [r])[0]
                imag = line_averages(selected.imag, v, [r])[0]
                total += real + 1j * imag
        return phase * total


class FieldTruncationOperator:
    """H_{v,ε} 沿向量場；線性"""
    name = "trunc_hilbert_field"

    def __init__(self, vf: VectorFieldLac, eps: float):
        self.vf = vf
        self.eps = eps
        self.symbols = [complement_multiplier(vf.size, w, eps) for w in vf.directions]

    def forward(self, f: ComplexField):
        spectrum = dft(f, "forward").coeffs
        total = np.zeros((f.size, f.size), dtype=np.complex128)
        for index, symbol in enumerate(self.symbols):
            values = dft(SpectralField(spectrum * symbol), "inverse").data
            total += np.where(self.vf.labels == index, values, 0)
        return total, None

    def adjoint(self, u: np.ndarray, state) -> np.ndarray:
        return _scatter_adjoint(u, self.vf.labels, self.symbols)


OPERATOR_NAMES = (
    "identity",
    "hilbert_dir",
    "max_hilbert",
    "max_hilbert_plus",
    "max_trunc_hilbert",
    "max_average",
    "trunc_hilbert_field",
)


def make_operator(
    name: str,
    size: int,
    dset: Optional[DirectionSet] = None,
    direction_index: int = 0,
    grid: Optional[ScaleGrid] = None,
    vf: Optional[VectorFieldLac] = None,
    eps: float = 0.5
):
    """
    依名稱建立可上升的算子

    Args:
        name: OPERATOR_NAMES 之一
        size: 網格大小
        dset: 方向集合
        direction_index: hilbert_dir 使用的方向索引
        grid: 平均與截斷的半徑
        vf: trunc_hilbert_field 的向量場
        eps: trunc_hilbert_field 的截斷半徑

    Raises:
        UnknownOperatorError: 名稱未登記
    """
    if name not in OPERATOR_NAMES:
        raise UnknownOperatorError(f"Unknown operator: {name} (expected one of {', '.join(OPERATOR_NAMES)})")
    if name == "identity":
        return IdentityOperator()
    if name == "trunc_hilbert_field":
        if vf is None:
            raise ValueError("trunc_hilbert_field needs a vector field")
        return FieldTruncationOperator(vf, eps)
    if dset is None:
        raise DirectionSetError(f"{name} needs a direction set")
    grid = grid or ScaleGrid.dyadic(size)
    if name == "hilbert_dir":
        if not 0 <= direction_index < len(dset):
            raise DirectionSetError(f"Direction index {direction_index} outside 0..{len(dset) - 1}")
        return MultiplierFamilyOperator(name, [hilbert_multiplier(size, dset[direction_index])])
    if name == "max_hilbert":
        return MultiplierFamilyOperator(name, [hilbert_multiplier(size, v) for v in dset])
    if name == "max_hilbert_plus":
        return MultiplierFamilyOperator(name, [half_plane_multiplier(size, v) for v in dset])
    if name == "max_trunc_hilbert":
        symbols = [
            trunc_symbol(directional_frequency(size, v), eps_k)
            for v in dset for eps_k in grid.radii
        ]
        return MultiplierFamilyOperator(name, symbols)
    return MaxAverageOperator(dset, grid)


# ------------------------------------------------------------
# 探針
# ------------------------------------------------------------

def second_quadrant_band(size: int):
    """{ξ₁ < 0, ξ₂ > 0, |ξ| ≤ N/4}"""
    cutoff = size / 4

    def support(xi1, xi2):
        return (xi1 < 0) & (xi2 > 0) & (np.hypot(xi1, xi2) <= cutoff)

    return support


def cone_frequency(size: int, cone, radius: float) -> Optional[Tuple[int, int]]:
    """錐中線上最接近給定半徑、且落在錐內的格點；錐太窄時為 None"""
    mask = cone.mask(size)
    phase = 2 * np.pi * cone.bisector()
    for r in np.arange(radius, size / 2 - 1, 1.0):
        xi = (int(round(r * np.cos(phase))), int(round(r * np.sin(phase))))
        if mask[xi[0] % size, xi[1] % size]:
            return xi
    return None


def probe_corpus(size: int, dset: Optional[DirectionSet], count: int, seed: int) -> List[ComplexField]:
    """
    探針：隨機第二象限頻帶場、單一錐平面波、lacunary 波包

    Args:
        size: 網格大小
        dset: 方向集合（None 時只有隨機探針）
        count: 隨機探針與單錐探針的數量
        seed: 實驗種子

    Returns:
        List[ComplexField]: 固定順序的探針
    """
    probes = [random_bandlimited(size, seed, second_quadrant_band(size), 0, i) for i in range(count)]
    if dset is None or len(dset) == 0:
        return probes

    frequencies = []
    for cone in cones_of(dset):
        xi = cone_frequency(size, cone, size / 4)
        if xi is None:
            logger.debug(f"Cone below theta={float(cone.lower.theta):.3g} holds no lattice point at N={size}")
            continue
        frequencies.append(xi)
    if not frequencies:
        return probes

    picks = np.unique(np.linspace(0, len(frequencies) - 1, min(count, len(frequencies))).round().astype(int))
    probes.extend(plane_wave(size, frequencies[i]) for i in picks)

    rng = trial_rng(seed, 1)
    phases = np.exp(2j * np.pi * rng.uniform(size=len(frequencies)))
    packet = sum((plane_wave(size, xi).scale(c) for xi, c in zip(frequencies, phases)),
                 ComplexField(np.zeros((size, size), dtype=np.complex128)))
    probes.append(packet)
    return probes


# ------------------------------------------------------------
# 估計
# ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NormEstimate:
    """
    ‖T‖_{L^p→L^p} 的下界

    Attributes:
        operator: 算子名稱
        p: 指數
        grid: 網格大小
        descriptor: 方向集合描述
        value: 所有已評估探針比值的最大值
        probes: 探針數
        iters: 每個探針的上升步數
        seed: 實驗種子
        history: 每一步後的最佳比值（單調不減）
    """
    operator: str
    p: float
    grid: int
    descriptor: str
    value: float
    probes: int
    iters: int
    seed: int
    history: Tuple[float, ...] = ()
    best_probe: Optional[ComplexField] = field(default=None, repr=False)


def _ratio(op, f: ComplexField, p: float) -> Tuple[float, np.ndarray, object]:
    values, state = op.forward(f)
    denominator = lp_norm(f, p)
    if denominator == 0:
        return 0.0, values, state
    return lp_norm(np.abs(values), p) / denominator, values, state


def ascend(op, probe: ComplexField, p: float, iters: int) -> Tuple[float, ComplexField, List[float]]:
    """
    從單一探針做凍結線性化的上升

    Returns:
        (最佳比值, 達到最佳比值的場, 每步之後的最佳比值)
    """
    q = p / (p - 1)
    best, values, state = _ratio(op, probe, p)
    best_field = probe
    history = [best]
    f = probe
    for _ in range(iters):
        g = op.adjoint(duality_map(values, p), state)
        update = duality_map(g, q)
        norm = lp_norm(update, p)
        if not np.isfinite(norm) or norm == 0:
            break
        f = ComplexField(update / norm)
        ratio, values, state = _ratio(op, f, p)
        if ratio > best:
            best, best_field = ratio, f
        history.append(best)
    return best, best_field, history


def estimate_norm_lower(
    op,
    p: float,
    probes: Sequence[ComplexField],
    ascent_iters: int = ASCENT_ITERS,
    seed: int = 0,
    descriptor: str = ""
) -> NormEstimate:
    """
    以探針與上升法估計範數下界

    Args:
        op: make_operator 建立的算子
        p: 1 < p < ∞
        probes: 探針（依序評估）
        ascent_iters: 每個探針的上升步數
        seed: 紀錄用的種子
        descriptor: 方向集合描述

    Returns:
        NormEstimate: value ≥ 每個探針的初始比值
    """
    if not 1 < p < np.inf:
        raise ValueError(f"Exponent must satisfy 1 < p < inf, got {p}")
    best = 0.0
    best_field = None
    history: List[float] = []
    size = probes[0].size if probes else 0
    for probe in probes:
        if lp_norm(probe, p) == 0:
            history.append(best)
            continue
        value, f, steps = ascend(op, probe, p, ascent_iters)
        for step in steps:
            history.append(max(best, step))
        if value > best:
            best, best_field = value, f
    logger.debug(f"{op.name} p={p}: lower bound {best:.6g} from {len(probes)} probes")
    return NormEstimate(op.name, p, size, descriptor, best, len(probes), ascent_iters, seed,
                        tuple(history), best_field)


def default_probes(size: int, dset: Optional[DirectionSet], seed: int, count: int = PROBE_COUNT) -> List[ComplexField]:
    return probe_corpus(size, dset, count, derive_seed(seed, size))
