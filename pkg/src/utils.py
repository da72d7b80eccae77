"""
工具函數模組
"""
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, List, TypeVar, Union

import numpy as np
from loguru import logger

from .config import LACUNA_THREADS

T = TypeVar("T")
R = TypeVar("R")


def is_power_of_two(n: int) -> bool:
    """
    判斷整數是否為 2 的冪次

    Args:
        n: 整數

    Returns:
        bool: n > 0 且為 2 的冪次
    """
    return n > 0 and (n & (n - 1)) == 0


def trial_rng(seed: int, *counters: int) -> np.random.Generator:
    """
    由實驗種子與計數器導出子亂數產生器

    使用 SeedSequence 的 spawn_key 當作固定的計數器雜湊，
    同一組 (seed, counters) 不論排程順序都得到同一串亂數。

    Args:
        seed: 64 位元實驗種子
        counters: 試驗編號等非負整數

    Returns:
        np.random.Generator: 獨立的子產生器
    """
    sequence = np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(c) for c in counters))
    return np.random.default_rng(sequence)


def derive_seed(seed: int, *counters: int) -> int:
    """導出可寫進 CSV 的子種子（64 位元）"""
    sequence = np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(c) for c in counters))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def parallel_map(fn: Callable[[T], R], items: Iterable[T], max_workers: int = None) -> List[R]:
    """
    以執行緒池平行套用函式，結果依輸入順序回傳

    numpy 的 FFT 與 ndimage 會釋放 GIL，執行緒已足夠。

    Args:
        fn: 純函式
        items: 輸入項目
        max_workers: 執行緒上限，預設為 LACUNA_THREADS

    Returns:
        List: 與輸入同順序的結果
    """
    items = list(items)
    workers = max(1, min(max_workers or LACUNA_THREADS, len(items) or 1))
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def atomic_write_bytes(path: Union[str, Path], payload: bytes):
    """
    原子寫入：先寫同目錄暫存檔再 rename

    Args:
        path: 目標路徑
        payload: 檔案內容
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.debug(f"Wrote {len(payload)} bytes to {path}")


def atomic_write_text(path: Union[str, Path], text: str):
    """原子寫入文字檔（UTF-8）"""
    atomic_write_bytes(path, text.encode("utf-8"))


def setup_logging(log_path: str, log_level: str = "INFO"):
    """
    設定日誌記錄

    Args:
        log_path: 日誌檔案路徑
        log_level: 日誌級別
    """
    # 移除預設的 handler
    logger.remove()

    # 加入 console handler（彩色輸出）
    logger.add(
        sys.stderr,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan> - <level>{message}</level>",
        level=log_level
    )

    # 加入 file handler
    logger.add(
        log_path,
        rotation="10 MB",  # 檔案達到 10 MB 時輪換
        retention="30 days",  # 保留 30 天
        format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function} - {message}",
        level=log_level
    )

    return logger
