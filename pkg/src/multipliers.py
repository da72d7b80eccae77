"""
傅立葉乘子模組 - 半平面投影、方向 Hilbert 轉換、錐限制與 Littlewood-Paley 投影

所有運算都是 dft → 逐點乘上乘子 → 逆 dft，乘子只在整數頻率格點上取值。
ξ·v 的符號判斷集中在 dot_sign：角度為 0、1/8、1/4 時以整數精確判斷，
其餘以浮點配合 ANGLE_DEAD_BAND 死區，死區內視為 0（歸到 ≥ 那一側）。
"""
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import ANGLE_DEAD_BAND
from .directions import ROOT, Direction, DirectionSet
from .field_engine import ComplexField, lattice, spectral_multiply

# ξ·v 與整數組合 a·ξ₁ + b·ξ₂ 同號的角度
EXACT_FORMS = {
    Fraction(0): (1, 0),
    Fraction(1, 8): (1, 1),
    Fraction(1, 4): (0, 1),
}

KINDS = ("phi", "psi", "psi2", "A", "B")


@lru_cache(maxsize=256)
def _sign_table(size: int, direction: Direction, shift: float) -> np.ndarray:
    lat = lattice(size)
    form = EXACT_FORMS.get(direction.theta) if shift == 0 else None
    if form is not None:
        sign = np.sign(form[0] * lat.xi1 + form[1] * lat.xi2).astype(np.int8)
    else:
        dot = lat.dot(direction.vector) - shift
        band = ANGLE_DEAD_BAND * np.maximum(1.0, lat.norm)
        sign = np.where(dot > band, 1, np.where(dot < -band, -1, 0)).astype(np.int8)
    sign.setflags(write=False)
    return sign


def dot_sign(size: int, direction: Direction, shift: float = 0.0) -> np.ndarray:
    """
    sgn(ξ·v − τ) 在整個頻率格點上的值

    Args:
        size: 網格大小
        direction: 方向 v
        shift: 平移 τ

    Returns:
        np.ndarray: int8 陣列，值為 −1、0、1
    """
    return _sign_table(size, direction, float(shift))


def directional_frequency(size: int, direction: Direction) -> np.ndarray:
    """ξ·e_θ；位於 ξ·e_θ = 0 線上的點精確為 0"""
    t = lattice(size).dot(direction.vector)
    return np.where(dot_sign(size, direction) == 0, 0.0, t)


def apply(f: ComplexField, multiplier: np.ndarray) -> ComplexField:
    return spectral_multiply(f, multiplier)


# ------------------------------------------------------------
# 半平面與 Hilbert
# ------------------------------------------------------------

def half_plane_multiplier(size: int, v: Direction, tau: float = 0.0) -> np.ndarray:
    """1_{[τ,∞)}(ξ·v)"""
    return (dot_sign(size, v, tau) >= 0).astype(np.float64)


def hilbert_multiplier(size: int, v: Direction) -> np.ndarray:
    """iπ·sgn(ξ·v)，sgn(0) = 0"""
    return 1j * np.pi * dot_sign(size, v).astype(np.float64)


def half_plane(f: ComplexField, v: Direction, tau: float = 0.0) -> ComplexField:
    """H_v^{+τ}：保留 ξ·v ≥ τ 的頻率；τ = 0 即 H_v^+"""
    return apply(f, half_plane_multiplier(f.size, v, tau))


def hilbert_dir(f: ComplexField, v: Direction) -> ComplexField:
    """沿方向 v 的 Hilbert 轉換（核 p.v. dt/t，f(x + tv)）"""
    return apply(f, hilbert_multiplier(f.size, v))


# ------------------------------------------------------------
# 錐
# ------------------------------------------------------------

def quadrant_mask(size: int, v1: Optional[Direction] = None) -> np.ndarray:
    """{ξ₁ < 0, ξ₂ > 0}，給定 v₁ 時再交上 {ξ·v₁ ≥ 0}"""
    mask = lattice(size).second_quadrant()
    if v1 is not None:
        mask = mask & (dot_sign(size, v1) >= 0)
    return mask


@dataclass(frozen=True)
class ConeRegion:
    """
    頻率錐 {ξ·lower ≥ 0, ξ·upper < 0, ξ₁ < 0, ξ₂ > 0}

    lower 為順時針序列中的 v_j，upper 為下一個 v_{j+1}；
    最後一個錐的 upper 為根方向 (1,0)，在第二象限恆有 ξ·(1,0) < 0。
    """
    lower: Direction
    upper: Direction

    def mask(self, size: int) -> np.ndarray:
        return (
            (dot_sign(size, self.lower) >= 0)
            & (dot_sign(size, self.upper) < 0)
            & lattice(size).second_quadrant()
        )

    def contains(self, size: int, xi: Tuple[int, int]) -> bool:
        return bool(self.mask(size)[xi[0] % size, xi[1] % size])

    def bisector(self) -> float:
        """錐在頻率平面上的中線角度（圈），供結構化探針取點"""
        return 0.25 + (float(self.lower.theta) + float(self.upper.theta)) / 2


def cones_between(boundaries: Sequence[Direction]) -> List[ConeRegion]:
    """相鄰邊界方向之間的錐"""
    return [ConeRegion(a, b) for a, b in zip(boundaries, boundaries[1:])]


def cones_of(dset: DirectionSet) -> List[ConeRegion]:
    """C_1, ..., C_n，v_{n+1} 取根方向"""
    return cones_between(list(dset.directions) + [ROOT])


def cone_restrict(f: ComplexField, cone: ConeRegion) -> ComplexField:
    """R：錐的銳利指示乘子"""
    return apply(f, cone.mask(f.size).astype(np.float64))


def signed_cone_sum(f: ComplexField, dset: DirectionSet, signs: Sequence[int]) -> ComplexField:
    """
    Σ_j ε_j R_j f

    Args:
        f: 輸入場
        dset: 方向集合（決定錐 C_j）
        signs: 每個錐一個 ε_j ∈ {−1, 0, 1}
    """
    cones = cones_of(dset)
    if len(signs) != len(cones):
        raise ValueError(f"Expected {len(cones)} signs, got {len(signs)}")
    if any(s not in (-1, 0, 1) for s in signs):
        raise ValueError(f"Signs must be in {{-1, 0, 1}}, got {list(signs)}")
    multiplier = np.zeros((f.size, f.size))
    for sign, cone in zip(signs, cones):
        if sign:
            multiplier += sign * cone.mask(f.size)
    return apply(f, multiplier)


def odd_even_split(
    f: ComplexField,
    dset: DirectionSet,
    limit: Direction = ROOT
) -> Tuple[ComplexField, ComplexField]:
    """(Σ_{j 奇} R_j f, Σ_{j 偶} R_j f)，j 從 1 起算，最後一個錐以 limit 為下邊界"""
    odd = np.zeros((f.size, f.size), dtype=bool)
    even = np.zeros((f.size, f.size), dtype=bool)
    for j, cone in enumerate(cones_between(list(dset.directions) + [limit]), start=1):
        if j % 2:
            odd |= cone.mask(f.size)
        else:
            even |= cone.mask(f.size)
    return apply(f, odd.astype(np.float64)), apply(f, even.astype(np.float64))


# ------------------------------------------------------------
# Littlewood-Paley
# ------------------------------------------------------------

class BumpProfile:
    """
    支撐在 |t| ∈ (1/2, 2) 的平滑 bump 與其二進位正規化

    φ̂₀(t) = exp(−1/(t−1/2)) · exp(−1/(2−t))
    φ̂(t)  = φ̂₀(|t|) / Σ_k φ̂₀(2^{−k}|t|)          （Σ_k φ̂(2^{−k}t) = 1）
    ψ̂(t)  = φ̂₀(|t|) / (Σ_k φ̂₀(2^{−k}|t|)²)^{1/2}   （Σ_k ψ̂(2^{−k}t)² = 1）
    """

    LOW = 0.5
    HIGH = 2.0

    def base(self, t) -> np.ndarray:
        a = np.abs(np.asarray(t, dtype=np.float64))
        inside = (a > self.LOW) & (a < self.HIGH)
        safe = np.where(inside, a, 1.0)
        value = np.exp(-1.0 / (safe - self.LOW) - 1.0 / (self.HIGH - safe))
        return np.where(inside, value, 0.0)

    def _dyadic_sum(self, a: np.ndarray, power: int) -> np.ndarray:
        positive = a > 0
        s = np.floor(np.log2(np.where(positive, a, 1.0)))
        total = np.zeros_like(a)
        for shift in (-1, 0, 1, 2):
            total += self.base(a * np.exp2(-(s + shift))) ** power
        return np.where(positive, total, 0.0)

    def phi(self, t) -> np.ndarray:
        a = np.abs(np.asarray(t, dtype=np.float64))
        denom = self._dyadic_sum(a, 1)
        return np.where(denom > 0, self.base(a) / np.where(denom > 0, denom, 1.0), 0.0)

    def psi(self, t) -> np.ndarray:
        a = np.abs(np.asarray(t, dtype=np.float64))
        denom = np.sqrt(self._dyadic_sum(a, 2))
        return np.where(denom > 0, self.base(a) / np.where(denom > 0, denom, 1.0), 0.0)

    def low_pass(self, t, k: int) -> np.ndarray:
        """Σ_{τ≤k} φ̂(2^{−τ}t)，t = 0 時為 1"""
        a = np.abs(np.asarray(t, dtype=np.float64))
        result = np.ones_like(a)
        peak = float(a.max()) if a.size else 0.0
        if peak == 0:
            return result
        top = int(np.ceil(np.log2(peak))) + 1
        for tau in range(k + 1, top + 1):
            result -= self.phi(a * 2.0 ** (-tau))
        return result


PROFILE = BumpProfile()


def default_krange(size: int) -> range:
    """涵蓋整個格點的 S_k 尺度：k = −1 .. log₂N + 1"""
    return range(-1, int(np.log2(size)) + 2)


def radial_multiplier(size: int, k: int) -> np.ndarray:
    return PROFILE.phi(lattice(size).norm * 2.0 ** (-k))


def directional_multiplier(size: int, theta: Direction, k: int, kind: str) -> np.ndarray:
    """Φ/Ψ/Ψ̃/A/B_{θ,k} 的乘子"""
    t = directional_frequency(size, theta)
    scaled = t * 2.0 ** (-k)
    if kind == "phi":
        return PROFILE.phi(scaled)
    if kind == "psi":
        return PROFILE.psi(scaled)
    if kind == "psi2":
        return PROFILE.psi(scaled) ** 2
    if kind == "A":
        return PROFILE.low_pass(t, k)
    if kind == "B":
        return 1.0 - PROFILE.low_pass(t, k)
    raise ValueError(f"Unknown projection kind: {kind} (expected one of {KINDS})")


def lp_radial(f: ComplexField, k: int) -> ComplexField:
    """S_k：乘子 φ̂(2^{−k}|ξ|)"""
    return apply(f, radial_multiplier(f.size, k))


def lp_directional(f: ComplexField, theta: Direction, k: int, kind: str) -> ComplexField:
    """方向 Littlewood-Paley 投影，作用在 ξ·e_θ 上"""
    return apply(f, directional_multiplier(f.size, theta, k, kind))
