"""
Lacunary 方向 Hilbert 轉換數值實驗工具
"""

__version__ = "0.1.0"
