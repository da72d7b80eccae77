"""
實驗模組 - 範數成長實驗、一致性比值套件與成長指數擬合

所有亂數都由設定檔的 seed 經計數器導出，輸出列依 (算子, D, p, 大小, 實例) 的固定順序產生，
因此同一份設定重跑會得到逐位元相同的 CSV。
"""
import json
import math
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from .config import ASCENT_ITERS, DEFAULT_GRID, DEFAULT_SEED, GROWTH_GRID, PROBE_COUNT, RECORD_RUNTIME
from .directions import DirectionSet, canonical_lacunary, equispaced_set
from .field_engine import MIN_GRID, ComplexField, lp_norm, random_bandlimited
from .multipliers import signed_cone_sum
from .norm_estimator import (
    OPERATOR_NAMES,
    default_probes,
    estimate_norm_lower,
    make_operator,
    second_quadrant_band,
)
from .operators import ScaleGrid, fs_vector_maximal, max_hilbert, square_fn_cww, square_fn_sfe
from .utils import is_power_of_two, trial_rng
from .vectorfield import build_vd, field_from_dict, trunc_hilbert_field

GROWTH_COLUMNS = ["operator", "p", "D", "lambda", "set_size", "grid", "seed", "estimate", "iters", "runtime_ms"]
SUITE_COLUMNS = ["suite", "p", "D", "lambda", "set_size", "grid", "seed", "instance", "lhs", "rhs", "ratio"]
SUITES = ("sfe", "ss_signs", "cww", "fs", "t2")
FAMILIES = ("lacunary", "equispaced")


class ConfigError(ValueError):
    """實驗設定檔格式錯誤"""


@dataclass(frozen=True)
class ExperimentConfig:
    """
    實驗設定

    Attributes:
        kind: growth | suite
        suite: 比值套件名稱（kind = suite 時）
        operators: 成長實驗的算子
        orders: 階數 D 的列表
        lam: λ
        sizes: #Θ 的列表
        ps: 指數列表
        grid: 網格大小（成長實驗預設 GROWTH_GRID，其餘 DEFAULT_GRID）
        seed: 實驗種子
        probes: 隨機探針數
        iters: 上升步數
        family: lacunary | equispaced
        corpus: 每個設定的實例數
        patterns: ss_signs 每個實例的符號組數
        fields: t2 套件的向量場設定
        eps: t2 套件的截斷半徑
    """
    kind: str = "growth"
    suite: Optional[str] = None
    operators: Tuple[str, ...] = ("max_hilbert",)
    orders: Tuple[int, ...] = (1,)
    lam: Fraction = Fraction(1, 2)
    sizes: Tuple[int, ...] = ()
    ps: Tuple[float, ...] = (2.0,)
    grid: int = DEFAULT_GRID
    seed: int = DEFAULT_SEED
    probes: int = PROBE_COUNT
    iters: int = ASCENT_ITERS
    family: str = "lacunary"
    corpus: int = 4
    patterns: int = 100
    fields: Tuple[dict, ...] = ()
    eps: float = 0.5

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("Experiment config must be a JSON object")
        known = {"kind", "suite", "operators", "orders", "lambda", "sizes", "p", "grid", "seed",
                 "probes", "iters", "family", "corpus", "patterns", "fields", "eps"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown config keys: {sorted(unknown)}")
        kind = str(data.get("kind", "growth"))
        default_grid = GROWTH_GRID if kind == "growth" else DEFAULT_GRID
        try:
            config = cls(
                kind=kind,
                suite=data.get("suite"),
                operators=tuple(str(o) for o in data.get("operators", ["max_hilbert"])),
                orders=tuple(int(d) for d in data.get("orders", [1])),
                lam=Fraction(str(data.get("lambda", "1/2"))),
                sizes=tuple(int(n) for n in data.get("sizes", [])),
                ps=tuple(float(p) for p in _as_list(data.get("p", [2]))),
                grid=int(data.get("grid", default_grid)),
                seed=int(data.get("seed", DEFAULT_SEED)),
                probes=int(data.get("probes", PROBE_COUNT)),
                iters=int(data.get("iters", ASCENT_ITERS)),
                family=str(data.get("family", "lacunary")),
                corpus=int(data.get("corpus", 4)),
                patterns=int(data.get("patterns", 100)),
                fields=tuple(data.get("fields", [])),
                eps=float(data.get("eps", 0.5)),
            )
        except (TypeError, ValueError, ZeroDivisionError) as e:
            raise ConfigError(f"Malformed experiment config: {e}") from e
        config.validate()
        return config

    def validate(self):
        if self.kind not in ("growth", "suite"):
            raise ConfigError(f"Unknown experiment kind: {self.kind}")
        if self.kind == "suite" and self.suite not in SUITES:
            raise ConfigError(f"Unknown suite: {self.suite} (expected one of {', '.join(SUITES)})")
        if self.kind == "growth":
            bad = [o for o in self.operators if o not in OPERATOR_NAMES or o == "trunc_hilbert_field"]
            if bad:
                raise ConfigError(f"Operators not available for growth experiments: {bad}")
        if self.grid < MIN_GRID or not is_power_of_two(self.grid):
            raise ConfigError(f"Grid must be a power of two >= {MIN_GRID}, got {self.grid}")
        if self.family not in FAMILIES:
            raise ConfigError(f"Unknown set family: {self.family}")
        if not 0 < self.lam < 1:
            raise ConfigError(f"lambda must lie in (0,1), got {self.lam}")
        if any(not 1 < p < math.inf for p in self.ps):
            raise ConfigError(f"Exponents must satisfy 1 < p < inf, got {self.ps}")
        if any(n < 1 for n in self.sizes):
            raise ConfigError(f"Set sizes must be positive, got {self.sizes}")
        if any(d < 0 for d in self.orders):
            raise ConfigError(f"Orders must be >= 0, got {self.orders}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind, "suite": self.suite, "operators": list(self.operators),
            "orders": list(self.orders), "lambda": str(self.lam), "sizes": list(self.sizes),
            "p": list(self.ps), "grid": self.grid, "seed": self.seed, "probes": self.probes,
            "iters": self.iters, "family": self.family, "corpus": self.corpus,
            "patterns": self.patterns, "fields": list(self.fields), "eps": self.eps,
        }


def _as_list(value) -> list:
    return value if isinstance(value, list) else [value]


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    讀取 JSON 實驗設定

    Raises:
        OSError: 檔案不存在
        ConfigError: 內容格式錯誤
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    return ExperimentConfig.from_dict(data)


# ------------------------------------------------------------
# 方向集合
# ------------------------------------------------------------

def level_counts(size: int, order: int) -> List[int]:
    """
    把 #Θ = 2^b 的 b 個位元輪流分給各層（第 1 層優先）

    大小遞增時每層的數量也遞增，產生的集合彼此巢狀。
    """
    if order == 1:
        return [size]
    bits = int(round(math.log2(size))) if size > 0 else -1
    if bits < 0 or 2 ** bits != size:
        raise ConfigError(f"Set size {size} must be a power of two for order {order}")
    counts = [0] * order
    for b in range(bits):
        counts[b % order] += 1
    return [2 ** c for c in counts]


def build_set(family: str, order: int, lam: Fraction, size: int) -> DirectionSet:
    if family == "equispaced":
        return equispaced_set(size)
    if order == 0:
        return canonical_lacunary(0, lam, [])
    return canonical_lacunary(order, lam, level_counts(size, order))


def _row_runtime(start: float) -> int:
    return int(round((time.perf_counter() - start) * 1000)) if RECORD_RUNTIME else 0


# ------------------------------------------------------------
# 成長實驗
# ------------------------------------------------------------

def growth_experiment(config: ExperimentConfig) -> List[Dict[str, Any]]:
    """
    對每個 (算子, D, p) 依 #Θ 遞增估計範數下界

    前一個大小的最佳探針若其集合包含於目前集合，會加入目前的探針，
    巢狀集合的估計值因此單調不減。

    Args:
        config: kind = growth 的設定

    Returns:
        List[dict]: 依 GROWTH_COLUMNS 的列
    """
    rows = []
    sizes = sorted(config.sizes)
    for operator in config.operators:
        for order in config.orders:
            for p in config.ps:
                previous: Optional[Tuple[DirectionSet, ComplexField]] = None
                for size in sizes:
                    start = time.perf_counter()
                    dset = build_set(config.family, order, config.lam, size)
                    op = make_operator(operator, config.grid, dset)
                    probes = default_probes(config.grid, dset, config.seed, config.probes)
                    if previous is not None and set(previous[0]) <= set(dset) and previous[1] is not None:
                        probes.append(previous[1])
                    estimate = estimate_norm_lower(op, p, probes, config.iters, config.seed, dset.describe())
                    previous = (dset, estimate.best_probe)
                    rows.append({
                        "operator": operator,
                        "p": p,
                        "D": order,
                        "lambda": str(config.lam),
                        "set_size": len(dset),
                        "grid": config.grid,
                        "seed": config.seed,
                        "estimate": estimate.value,
                        "iters": config.iters,
                        "runtime_ms": _row_runtime(start),
                    })
                    logger.info(f"{operator} D={order} p={p} #Theta={len(dset)}: {estimate.value:.6g}")
    return rows


# ------------------------------------------------------------
# 比值套件
# ------------------------------------------------------------

def _ratio(lhs: float, rhs: float) -> float:
    return lhs / rhs if rhs > 0 else 0.0


def _corpus_field(config: ExperimentConfig, size: int, instance: int) -> ComplexField:
    return random_bandlimited(config.grid, config.seed, second_quadrant_band(config.grid), size, instance)


def _suite_row(config, name, p, order, size, instance, lhs, rhs) -> Dict[str, Any]:
    return {
        "suite": name, "p": p, "D": order, "lambda": str(config.lam), "set_size": size,
        "grid": config.grid, "seed": config.seed, "instance": instance,
        "lhs": lhs, "rhs": rhs, "ratio": _ratio(lhs, rhs),
    }


def _set_suite(name: str, config: ExperimentConfig) -> List[Dict[str, Any]]:
    rows = []
    grid = ScaleGrid.dyadic(config.grid)
    for order in config.orders:
        for size in sorted(config.sizes):
            dset = build_set(config.family, order, config.lam, size)
            for p in config.ps:
                for instance in range(config.corpus):
                    f = _corpus_field(config, size, instance)
                    rhs = lp_norm(f, p)
                    if name == "sfe":
                        lhs = lp_norm(square_fn_sfe(f, dset), p)
                        rows.append(_suite_row(config, name, p, order, len(dset), instance, lhs, rhs))
                    elif name == "cww":
                        lhs = lp_norm(max_hilbert(f, dset, plus=True).value, p)
                        rhs = lp_norm(square_fn_cww(f, dset), p)
                        rows.append(_suite_row(config, name, p, order, len(dset), instance, lhs, rhs))
                    elif name == "ss_signs":
                        rng = trial_rng(config.seed, size, instance)
                        for pattern in range(config.patterns):
                            signs = rng.integers(-1, 2, size=len(dset))
                            lhs = lp_norm(signed_cone_sum(f, dset, [int(s) for s in signs]), p)
                            rows.append(_suite_row(config, name, p, order, len(dset),
                                                   instance * config.patterns + pattern, lhs, rhs))
                    elif name == "fs":
                        hs = [random_bandlimited(config.grid, config.seed, second_quadrant_band(config.grid),
                                                 size, instance, j) for j in range(len(dset))]
                        result = fs_vector_maximal(hs, dset, grid, p, 2.0)
                        rows.append(_suite_row(config, name, p, order, len(dset), instance,
                                               result.lhs, result.rhs))
            logger.info(f"{name} D={order} #Theta={len(dset)} done")
    return rows


def standard_fields() -> List[dict]:
    """
    值域大小 4、8、16、32 的向量場（網格 ≥ 32）

    λ_1 只依 y 取 2^{−3}..2^{−6} 四個層級；λ_2 只依 x 取 1、2、4、8 個層級，
    兩者獨立，值域即為乘積。
    """
    outer = {"expr": "clamp(min(y, 1 - y), 1/64, 1/8)"}
    fields = [{"order": 1, "lambdas": [outer]}]
    for lower in ("1/2", "1/8", "1/128"):
        inner = {"expr": f"clamp(4*min(x, 1 - x)*min(x, 1 - x), {lower}, 1)/2048"}
        fields.append({"order": 2, "lambdas": [outer, inner]})
    return fields


def _field_suite(config: ExperimentConfig) -> List[Dict[str, Any]]:
    rows = []
    specs = list(config.fields) or standard_fields()
    for index, spec in enumerate(specs):
        vf = build_vd(field_from_dict(spec), config.grid)
        for p in config.ps:
            for instance in range(config.corpus):
                f = random_bandlimited(config.grid, config.seed,
                                       lambda a, b: np.hypot(a, b) <= config.grid / 4, index, instance)
                lhs = lp_norm(trunc_hilbert_field(f, vf, config.eps), p)
                rhs = lp_norm(f, p)
                rows.append(_suite_row(config, "t2", p, vf.order, len(vf.range_tuples), instance, lhs, rhs))
        logger.info(f"t2 field {index}: {len(vf.range_tuples)} values")
    return rows


def ratio_suite(name: str, config: ExperimentConfig) -> List[Dict[str, Any]]:
    """
    一致性比值套件：每個實例一列 lhs / rhs

        sfe      ‖square_fn_sfe f‖_p / ‖f‖_p
        ss_signs ‖Σ_j ε_j R_j f‖_p / ‖f‖_p，每個實例 patterns 組隨機符號
        cww      ‖H_Θ^+ f‖_p / ‖square_fn_cww f‖_p
        fs       ‖{M_{v_j} h_j}‖_{L^p(ℓ²)} / ‖{h_j}‖_{L^p(ℓ²)}
        t2       ‖H_{v,ε} f‖_p / ‖f‖_p

    Raises:
        ConfigError: 未知的套件
    """
    if name not in SUITES:
        raise ConfigError(f"Unknown suite: {name} (expected one of {', '.join(SUITES)})")
    if name == "t2":
        return _field_suite(config)
    return _set_suite(name, config)


def run_experiment(config: ExperimentConfig) -> Tuple[List[Dict[str, Any]], List[str]]:
    """依 kind 執行，回傳 (列, 欄位)"""
    if config.kind == "growth":
        return growth_experiment(config), GROWTH_COLUMNS
    return ratio_suite(config.suite, config), SUITE_COLUMNS


# ------------------------------------------------------------
# 擬合
# ------------------------------------------------------------

@dataclass(frozen=True)
class GrowthFit:
    """value ≈ c·(log N)^α"""
    alpha: float
    constant: float
    residual: float
    points: int = 0


def _point(row) -> Tuple[float, float]:
    if isinstance(row, dict):
        return float(row["set_size"]), float(row["estimate"])
    n, value = row
    return float(n), float(value)


def fit_exponent(rows: Sequence[Union[dict, Tuple[float, float]]]) -> GrowthFit:
    """
    log(value) 對 log log N 的最小平方擬合

    Args:
        rows: (N, value) 或含 set_size / estimate 的列，N ≥ 2

    Raises:
        ValueError: 少於 3 列、value ≤ 0 或 N < 2
    """
    points = [_point(r) for r in rows]
    if len(points) < 3:
        raise ValueError(f"fit_exponent needs at least 3 rows, got {len(points)}")
    n = np.array([p[0] for p in points])
    values = np.array([p[1] for p in points])
    if np.any(values <= 0):
        raise ValueError("fit_exponent needs positive values")
    if np.any(n < 2):
        raise ValueError("fit_exponent needs set sizes >= 2")
    x = np.log(np.log(n))
    y = np.log(values)
    design = np.stack([x, np.ones_like(x)], axis=1)
    (alpha, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    residual = float(np.sqrt(np.mean((design @ np.array([alpha, intercept]) - y) ** 2)))
    return GrowthFit(float(alpha), float(np.exp(intercept)), residual, len(points))


# ------------------------------------------------------------
# 驗收統計
# ------------------------------------------------------------

def suite_spread(rows: Sequence[dict]) -> Dict[Tuple[str, float, int], float]:
    """
    每個 (suite, p, D) 下，各 #Θ 的最大比值之間的倍數 max / min

    比值全為 0 的大小不參與；只剩一個大小時倍數為 1。
    """
    frame = pd.DataFrame(list(rows), columns=SUITE_COLUMNS)
    peaks = frame.groupby(["suite", "p", "D", "set_size"])["ratio"].max()
    peaks = peaks[peaks > 0]
    spread = {}
    for key, group in peaks.groupby(level=["suite", "p", "D"]):
        spread[(str(key[0]), float(key[1]), int(key[2]))] = float(group.max() / group.min())
    return spread


def growth_summary(rows: Sequence[dict]) -> pd.DataFrame:
    """
    每條成長曲線 (operator, p, D) 的摘要

    欄位：alpha（少於 3 個大小時為 NaN）、spread（max / min 估計值）、
    monotone（估計值是否隨 #Θ 不減）。
    """
    frame = pd.DataFrame(list(rows), columns=GROWTH_COLUMNS)
    records = []
    for (operator, p, order), group in frame.groupby(["operator", "p", "D"], sort=False):
        curve = group.sort_values("set_size")
        estimates = curve["estimate"].to_numpy(dtype=float)
        alpha = math.nan
        if len(curve) >= 3 and np.all(estimates > 0) and curve["set_size"].min() >= 2:
            alpha = fit_exponent(curve.to_dict("records")).alpha
        records.append({
            "operator": operator, "p": float(p), "D": int(order), "alpha": alpha,
            "spread": float(estimates.max() / estimates.min()) if estimates.min() > 0 else math.inf,
            "monotone": bool(np.all(np.diff(estimates) >= 0)),
        })
    return pd.DataFrame(records, columns=["operator", "p", "D", "alpha", "spread", "monotone"])
