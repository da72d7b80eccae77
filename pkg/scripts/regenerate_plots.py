"""
重新產生 results/ 下所有實驗 CSV 對應的 SVG 圖表。

繪圖樣式調整後執行一次即可讓所有圖表一致；CSV 本身不會被改寫。
讀不進來的 CSV 會記錄警告後略過。

執行：
    python scripts/regenerate_plots.py [results_dir]
"""
import sys
from pathlib import Path

from loguru import logger

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from src.config import RESULTS_DIR  # noqa: E402
from src.report_generator import ChartGenerator  # noqa: E402


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    results_dir = Path(argv[0]) if argv else RESULTS_DIR
    csv_files = sorted(results_dir.glob("*.csv"))
    logger.info(f"Regenerating {len(csv_files)} charts under {results_dir}")

    generator = ChartGenerator(results_dir)
    failed = 0
    for csv_path in csv_files:
        try:
            out = generator.generate_chart(csv_path)
            logger.info(f"{csv_path.name} -> {out.name}")
        except ValueError as e:
            failed += 1
            logger.warning(f"{csv_path.name}: skipped ({e})")

    logger.info(f"Done: {len(csv_files) - failed} charts, {failed} skipped")
    return 0


if __name__ == "__main__":
    sys.exit(main())
