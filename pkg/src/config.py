"""
配置管理模組
"""
import os
from pathlib import Path
from dotenv import load_dotenv

# 載入環境變數
load_dotenv()

# 專案根目錄
BASE_DIR = Path(__file__).parent.parent

# 網格設定（皆為 2 的冪次的正方形網格）
DEFAULT_GRID = int(os.getenv("DEFAULT_GRID", "256"))
GROWTH_GRID = int(os.getenv("GROWTH_GRID", "512"))

# 平行運算上限；未設定時使用 CPU 核心數
LACUNA_THREADS = int(os.getenv("LACUNA_THREADS", str(os.cpu_count() or 1)))

# ξ·v 符號判斷的浮點死區。
# 落在死區內視為在邊界線上：半平面投影歸到 ≥ 那一側，Hilbert 乘子取 sgn(0)=0。
# 角度為 0、1/8、1/4 時改用整數精確判斷，不經過死區。
ANGLE_DEAD_BAND = float(os.getenv("ANGLE_DEAD_BAND", "1e-13"))

# 方向平均的最大半徑（ScaleGrid 的上限，必須 ≤ 1/2）
MAX_AVERAGE_RADIUS = float(os.getenv("MAX_AVERAGE_RADIUS", "0.125"))

# 實驗設定
DEFAULT_SEED = int(os.getenv("DEFAULT_SEED", "20170101"))
ASCENT_ITERS = int(os.getenv("ASCENT_ITERS", "20"))
PROBE_COUNT = int(os.getenv("PROBE_COUNT", "4"))

# runtime_ms 欄位預設寫 0：實測時間每次都不同，寫進去 CSV 就無法逐位元重現。
# 需要計時時再打開。
RECORD_RUNTIME = os.getenv("RECORD_RUNTIME", "False").lower() == "true"

# 日誌設定
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_PATH = BASE_DIR / os.getenv("LOG_PATH", "logs/lacuna.log")

# 實驗輸出（CSV、SVG、索引）
RESULTS_DIR = BASE_DIR / os.getenv("RESULTS_DIR", "results")


# 確保必要目錄存在
def ensure_directories():
    """確保必要的目錄存在"""
    LOG_PATH.parent.mkdir(parents=True, exist_ok=True)
    RESULTS_DIR.mkdir(parents=True, exist_ok=True)


# 初始化時建立目錄
ensure_directories()
