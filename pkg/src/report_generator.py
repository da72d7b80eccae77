"""
圖表生成器模組 - 把實驗 CSV 畫成 SVG 折線圖
"""
import io
import re
from pathlib import Path
from typing import List, Optional, Tuple, Union

import matplotlib
import numpy as np
import pandas as pd
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from .experiments import fit_exponent
from .report_manager import ReportManager
from .utils import atomic_write_text

SVG_SALT = "lacuna"


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", text).strip("-")


class ChartGenerator:
    """SVG 圖表生成器：數值對 log #Θ，每個 (算子, D) 一條線，點數 ≥ 3 時疊上擬合曲線"""

    def __init__(self, output_dir: Optional[Path] = None):
        """
        初始化圖表生成器

        Args:
            output_dir: 預設輸出目錄
        """
        self.output_dir = Path(output_dir) if output_dir else Path("results")
        self.output_dir.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def series(frame: pd.DataFrame) -> List[Tuple[str, np.ndarray, np.ndarray]]:
        """
        依 (算子或套件, D) 分組

        成長 CSV 取 estimate；比值 CSV 取同一 #Θ 下最大的 ratio。

        Returns:
            List[(標籤, #Θ, 數值)]，#Θ 遞增
        """
        if "estimate" in frame.columns:
            name_col, value_col = "operator", "estimate"
        elif "ratio" in frame.columns:
            name_col, value_col = "suite", "ratio"
        else:
            raise ValueError("CSV has neither an estimate nor a ratio column")

        out = []
        for (name, order), group in frame.groupby([name_col, "D"], sort=True):
            per_size = group.groupby("set_size")[value_col].max().sort_index()
            label = f"{name} D={order}"
            out.append((label, per_size.index.to_numpy(dtype=float), per_size.to_numpy(dtype=float)))
        return out

    def render(self, frame: pd.DataFrame, title: str = "") -> str:
        """
        產生 SVG 文字（同樣的輸入得到同樣的輸出）

        Args:
            frame: 實驗 CSV
            title: 圖表標題
        """
        fig = Figure(figsize=(7, 4.5))
        FigureCanvasSVG(fig)
        ax = fig.add_subplot(1, 1, 1)

        for label, sizes, values in self.series(frame):
            x = np.log(sizes)
            line, = ax.plot(x, values, marker="o", label=label)
            line.set_gid(f"series-{_slug(label)}")
            positive = (sizes >= 2) & (values > 0)
            if np.count_nonzero(positive) >= 3:
                fit = fit_exponent(list(zip(sizes[positive], values[positive])))
                dense = np.linspace(sizes[positive].min(), sizes[positive].max(), 64)
                curve, = ax.plot(np.log(dense), fit.constant * np.log(dense) ** fit.alpha,
                                 linestyle="--", color=line.get_color(),
                                 label=f"{label} fit alpha={fit.alpha:.3f}")
                curve.set_gid(f"fit-{_slug(label)}")

        ax.set_xlabel("log #Theta")
        ax.set_ylabel("value")
        if title:
            ax.set_title(title)
        ax.grid(True, alpha=0.3)
        if ax.get_lines():
            ax.legend(fontsize="small")

        buffer = io.StringIO()
        with matplotlib.rc_context({"svg.hashsalt": SVG_SALT}):
            fig.savefig(buffer, format="svg", metadata={"Date": None})
        return buffer.getvalue()

    def generate_chart(self, csv_path: Union[str, Path], out_path: Optional[Union[str, Path]] = None) -> Path:
        """
        讀取 CSV 並寫出 SVG

        Args:
            csv_path: 實驗 CSV
            out_path: 輸出路徑，預設為輸出目錄下的同名 .svg

        Returns:
            Path: SVG 檔案路徑
        """
        csv_path = Path(csv_path)
        frame = ReportManager.read_csv(csv_path)
        out_path = Path(out_path) if out_path else self.output_dir / f"{csv_path.stem}.svg"
        atomic_write_text(out_path, self.render(frame, title=csv_path.stem))
        return out_path
