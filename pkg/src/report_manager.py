"""
結果管理模組 - 統一管理實驗 CSV 與結果索引
"""
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pandas as pd
from loguru import logger

from .utils import atomic_write_text

INDEX_NAME = "results_index.json"
INDEX_LIMIT = 200


class ReportManager:
    """結果管理器 - 寫出 CSV、讀回 CSV、維護 results_index.json"""

    def __init__(self, results_dir: Union[str, Path]):
        """
        初始化結果管理器

        Args:
            results_dir: 結果索引所在目錄
        """
        self.results_dir = Path(results_dir)
        self.results_dir.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def to_csv_text(rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> str:
        """依固定欄位順序轉成 CSV 文字（無索引欄）"""
        frame = pd.DataFrame(list(rows), columns=list(columns))
        return frame.to_csv(index=False, lineterminator="\n")

    def write_csv(self, rows: Sequence[Dict[str, Any]], columns: Sequence[str], out_path: Union[str, Path]) -> Path:
        """
        原子寫入 CSV

        Args:
            rows: 實驗列
            columns: 欄位順序
            out_path: 輸出路徑

        Returns:
            Path: 輸出路徑
        """
        out_path = Path(out_path)
        atomic_write_text(out_path, self.to_csv_text(rows, columns))
        logger.info(f"CSV saved to: {out_path} ({len(rows)} rows)")
        return out_path

    @staticmethod
    def read_csv(path: Union[str, Path]) -> pd.DataFrame:
        """
        讀取實驗 CSV

        Raises:
            OSError: 檔案不存在
            ValueError: 內容不是 CSV
        """
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"No such results file: {path}")
        try:
            return pd.read_csv(path)
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise ValueError(f"{path} is not a results CSV: {e}") from e

    def record_run(
        self,
        rows: Sequence[Dict[str, Any]],
        columns: Sequence[str],
        out_path: Union[str, Path],
        config: Optional[Dict[str, Any]] = None
    ) -> Path:
        """寫出 CSV 並更新索引"""
        out_path = self.write_csv(rows, columns, out_path)
        self._update_results_index(out_path, rows, config or {})
        return out_path

    def load_index(self) -> List[Dict[str, Any]]:
        index_file = self.results_dir / INDEX_NAME
        if not index_file.exists():
            return []
        try:
            entries = json.loads(index_file.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            logger.warning(f"{index_file} is corrupted, starting a new index")
            return []
        return entries if isinstance(entries, list) else []

    def _update_results_index(self, csv_path: Path, rows: Sequence[Dict[str, Any]], config: Dict[str, Any]):
        """
        更新結果索引檔案

        Args:
            csv_path: CSV 路徑
            rows: 實驗列
            config: 實驗設定
        """
        entries = self.load_index()
        run_id = csv_path.stem
        new_entry = {
            "run_id": run_id,
            "created": datetime.now().isoformat(timespec="seconds"),
            "kind": config.get("kind"),
            "seed": config.get("seed"),
            "rows": len(rows),
            "csv": str(csv_path),
            "config": config,
        }

        # 同一份 CSV 重跑時覆蓋舊紀錄
        entries = [e for e in entries if e.get("csv") != str(csv_path)]
        entries.insert(0, new_entry)
        entries.sort(key=lambda e: e.get("created", ""), reverse=True)
        entries = entries[:INDEX_LIMIT]

        atomic_write_text(self.results_dir / INDEX_NAME, json.dumps(entries, ensure_ascii=False, indent=2))
        logger.info(f"Results index updated: {len(entries)} runs")
