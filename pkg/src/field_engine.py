"""
週期網格場模組 - 單位環面 [0,1)² 上的複數場、離散傅立葉轉換、範數與測試場產生器

網格約定：
    data[i, j] 對應座標 x = (i·h, j·h)，h = 1/N；第 0 軸為 x₁，第 1 軸為 x₂。
    正轉換除以 N²、逆轉換不再縮放，因此平面波 e^{2πi ξ·x} 的係數恰為 1。
    頻率 ξ 為 [−N/2, N/2) 內的整數，排列同 numpy.fft.fftfreq。
"""
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterator, Tuple, Union

import numpy as np
from loguru import logger

from .utils import atomic_write_bytes, is_power_of_two, trial_rng

MIN_GRID = 32

F2D1_MAGIC = b"F2D1"
F2D1_VERSION = 1
F2D1_HEADER = np.dtype([
    ("magic", "S4"),
    ("version", "<u2"),
    ("width", "<u4"),
    ("height", "<u4"),
])


class GridError(ValueError):
    """網格尺寸、頻率或檔案格式不合法"""


def _check_grid(width: int, height: int):
    if width != height:
        raise GridError(f"Grid must be square, got {width}x{height}")
    if not is_power_of_two(width) or width < MIN_GRID:
        raise GridError(f"Grid size must be a power of two >= {MIN_GRID}, got {width}")


@dataclass(frozen=True, eq=False)
class ComplexField:
    """N×N 週期網格上的複數取樣（建立後唯讀）"""
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.complex128, copy=True)
        if data.ndim != 2:
            raise GridError(f"Field data must be 2-D, got shape {data.shape}")
        _check_grid(data.shape[0], data.shape[1])
        if not np.all(np.isfinite(data)):
            raise GridError("Field contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def size(self) -> int:
        return self.width

    @property
    def h(self) -> float:
        return 1.0 / self.width

    def __add__(self, other: "ComplexField") -> "ComplexField":
        return ComplexField(self.data + other.data)

    def __sub__(self, other: "ComplexField") -> "ComplexField":
        return ComplexField(self.data - other.data)

    def scale(self, c: complex) -> "ComplexField":
        return ComplexField(self.data * c)

    def modulus(self) -> np.ndarray:
        return np.abs(self.data)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """DFT 係數，排列同 numpy.fft（索引 ξ mod N）"""
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=np.complex128, copy=True)
        if coeffs.ndim != 2:
            raise GridError(f"Spectrum must be 2-D, got shape {coeffs.shape}")
        _check_grid(coeffs.shape[0], coeffs.shape[1])
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def size(self) -> int:
        return self.coeffs.shape[0]

    def coefficient(self, xi1: int, xi2: int) -> complex:
        """讀取整數頻率 ξ 的係數"""
        n = self.size
        if not (-n // 2 <= xi1 < n // 2 and -n // 2 <= xi2 < n // 2):
            raise GridError(f"Frequency ({xi1}, {xi2}) outside lattice of size {n}")
        return complex(self.coeffs[xi1 % n, xi2 % n])


class FrequencyLattice:
    """
    整數頻率格點 ξ ∈ [−N/2, N/2)²

    陣列屬性與 SpectralField.coeffs 同形，可直接做逐點遮罩。
    """

    def __init__(self, size: int):
        _check_grid(size, size)
        self.size = size
        freqs = np.fft.fftfreq(size, d=1.0 / size).round().astype(np.int64)
        xi1, xi2 = np.meshgrid(freqs, freqs, indexing="ij")
        xi1.setflags(write=False)
        xi2.setflags(write=False)
        self.xi1 = xi1
        self.xi2 = xi2
        norm = np.hypot(xi1, xi2)
        norm.setflags(write=False)
        self.norm = norm

    def __iter__(self) -> Iterator[Tuple[int, int]]:
        for a, b in zip(self.xi1.ravel(), self.xi2.ravel()):
            yield int(a), int(b)

    def __len__(self) -> int:
        return self.size * self.size

    def dot(self, vector: Tuple[float, float]) -> np.ndarray:
        """ξ·v（浮點）"""
        return self.xi1 * vector[0] + self.xi2 * vector[1]

    def second_quadrant(self) -> np.ndarray:
        """開第二象限 {ξ₁ < 0, ξ₂ > 0}"""
        return (self.xi1 < 0) & (self.xi2 > 0)


@lru_cache(maxsize=8)
def lattice(size: int) -> FrequencyLattice:
    """取得（快取的）頻率格點"""
    return FrequencyLattice(size)


def grid_coordinates(size: int) -> Tuple[np.ndarray, np.ndarray]:
    """空間座標 (x₁, x₂)，indexing='ij'"""
    _check_grid(size, size)
    axis = np.arange(size) / size
    return np.meshgrid(axis, axis, indexing="ij")


def dft(field: Union[ComplexField, SpectralField], direction: str = "forward"):
    """
    離散傅立葉轉換

    Args:
        field: forward 時為 ComplexField，inverse 時為 SpectralField
        direction: 'forward' 或 'inverse'

    Returns:
        SpectralField 或 ComplexField
    """
    if direction == "forward":
        if not isinstance(field, ComplexField):
            raise TypeError("forward DFT expects a ComplexField")
        n = field.size
        return SpectralField(np.fft.fft2(field.data) / (n * n))
    if direction == "inverse":
        if not isinstance(field, SpectralField):
            raise TypeError("inverse DFT expects a SpectralField")
        n = field.size
        return ComplexField(np.fft.ifft2(field.coeffs) * (n * n))
    raise ValueError(f"Unknown DFT direction: {direction}")


def spectral_multiply(field: ComplexField, multiplier: np.ndarray) -> ComplexField:
    """套用頻域乘子：dft → 逐點相乘 → 逆 dft"""
    spectrum = dft(field, "forward")
    return dft(SpectralField(spectrum.coeffs * multiplier), "inverse")


def lp_norm(field: Union[ComplexField, np.ndarray], p: float) -> float:
    """
    環面上的 L^p 範數（Riemann 和）

    Args:
        field: 複數場或同形的數值陣列
        p: 指數，p > 1 或 p = ∞

    Returns:
        float: (h² Σ|f|^p)^{1/p}；p = ∞ 時為 max|f|
    """
    p = float(p)
    if not p > 1:
        raise ValueError(f"Exponent p must be > 1, got {p}")
    values = np.abs(field.data if isinstance(field, ComplexField) else np.asarray(field))
    if np.isinf(p):
        return float(values.max())
    n = values.shape[0]
    peak = values.max()
    if peak == 0:
        return 0.0
    # 先除以最大值再升冪，避免大 p 時溢位
    return float(peak * (np.sum((values / peak) ** p) / (n * n)) ** (1.0 / p))


def integrate(field: ComplexField) -> complex:
    """∫ f，Riemann 和 h² Σ f"""
    return complex(field.data.sum() / (field.size ** 2))


def inner(f: ComplexField, g: ComplexField) -> complex:
    """⟨f, g⟩ = ∫ f · conj(g)"""
    return complex(np.vdot(g.data, f.data) / (f.size ** 2))


# ------------------------------------------------------------
# 測試場產生器
# ------------------------------------------------------------

def plane_wave(size: int, xi: Tuple[int, int]) -> ComplexField:
    """e^{2πi ξ·x}"""
    _check_grid(size, size)
    xi1, xi2 = int(xi[0]), int(xi[1])
    half = size // 2
    if not (-half <= xi1 < half and -half <= xi2 < half):
        raise GridError(f"Frequency {xi} outside lattice of size {size}")
    coeffs = np.zeros((size, size), dtype=np.complex128)
    coeffs[xi1 % size, xi2 % size] = 1.0
    return dft(SpectralField(coeffs), "inverse")


def gaussian(size: int, center: Tuple[float, float], sigma: float) -> ComplexField:
    """以最小映像距離計算的週期高斯 exp(−|x−c|²/(2σ²))"""
    if sigma <= 0:
        raise ValueError(f"Gaussian width must be positive, got {sigma}")
    x1, x2 = grid_coordinates(size)
    d1 = (x1 - center[0] + 0.5) % 1.0 - 0.5
    d2 = (x2 - center[1] + 0.5) % 1.0 - 0.5
    return ComplexField(np.exp(-(d1 * d1 + d2 * d2) / (2.0 * sigma * sigma)))


def indicator(size: int, rect: Tuple[float, float, float, float]) -> ComplexField:
    """
    矩形指示函數

    Args:
        size: 網格大小
        rect: (x₁ 起, x₁ 迄, x₂ 起, x₂ 迄)，半開區間 [起, 迄)
    """
    a1, b1, a2, b2 = rect
    x1, x2 = grid_coordinates(size)
    mask = (x1 >= a1) & (x1 < b1) & (x2 >= a2) & (x2 < b2)
    return ComplexField(mask.astype(np.complex128))


def random_bandlimited(
    size: int,
    seed: int,
    support: Callable[[np.ndarray, np.ndarray], np.ndarray],
    *counters: int
) -> ComplexField:
    """
    隨機頻帶限制場：頻譜恰在 support(ξ₁, ξ₂) 為真處有複高斯係數

    Args:
        size: 網格大小
        seed: 實驗種子
        support: 頻率述詞，接受 ξ₁、ξ₂ 整數陣列，回傳布林陣列
        counters: 衍生子種子用的計數器

    Returns:
        ComplexField: L² 範數為 1 的場（支撐為空時為零場）
    """
    lat = lattice(size)
    mask = np.asarray(support(lat.xi1, lat.xi2), dtype=bool)
    rng = trial_rng(seed, *counters)
    values = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
    coeffs = np.where(mask, values, 0.0)
    energy = np.sqrt(np.sum(np.abs(coeffs) ** 2))
    if energy > 0:
        coeffs = coeffs / energy
    return dft(SpectralField(coeffs), "inverse")


def synth_field(kind: str, size: int, **params) -> ComplexField:
    """
    依種類產生測試場

    Args:
        kind: plane_wave | gaussian | indicator | random_bandlimited
        size: 網格大小
        params: 各種類的參數（xi / center, sigma / rect / seed, support）
    """
    if kind == "plane_wave":
        return plane_wave(size, params["xi"])
    if kind == "gaussian":
        return gaussian(size, params["center"], params["sigma"])
    if kind == "indicator":
        return indicator(size, params["rect"])
    if kind == "random_bandlimited":
        return random_bandlimited(size, params["seed"], params["support"], *params.get("counters", ()))
    raise ValueError(f"Unknown field kind: {kind}")


# ------------------------------------------------------------
# F2D1 檔案格式
# ------------------------------------------------------------

def encode_field(field: ComplexField) -> bytes:
    header = np.zeros(1, dtype=F2D1_HEADER)
    header["magic"] = F2D1_MAGIC
    header["version"] = F2D1_VERSION
    header["width"] = field.width
    header["height"] = field.height
    return header.tobytes() + field.data.astype("<c16").tobytes(order="C")


def decode_field(payload: bytes) -> ComplexField:
    if len(payload) < F2D1_HEADER.itemsize:
        raise GridError("F2D1 payload shorter than its header")
    header = np.frombuffer(payload, dtype=F2D1_HEADER, count=1)[0]
    if bytes(header["magic"]) != F2D1_MAGIC:
        raise GridError(f"Bad magic bytes: {bytes(header['magic'])!r}")
    if int(header["version"]) != F2D1_VERSION:
        raise GridError(f"Unsupported F2D1 version {int(header['version'])}")
    width, height = int(header["width"]), int(header["height"])
    _check_grid(width, height)
    body = payload[F2D1_HEADER.itemsize:]
    expected = width * height * 16
    if len(body) != expected:
        raise GridError(f"F2D1 body has {len(body)} bytes, expected {expected}")
    data = np.frombuffer(body, dtype="<c16").reshape(width, height)
    return ComplexField(data)


def write_field(path: Union[str, Path], field: ComplexField):
    """以 F2D1 格式原子寫入場"""
    atomic_write_bytes(path, encode_field(field))
    logger.debug(f"Saved {field.width}x{field.height} field to {path}")


def read_field(path: Union[str, Path]) -> ComplexField:
    """讀取 F2D1 檔；檔案不存在時拋出 OSError"""
    payload = Path(path).read_bytes()
    return decode_field(payload)
