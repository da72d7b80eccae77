"""
Lacunary 方向 Hilbert 轉換工具 - 主程式

子命令：
    gen    產生標準 D 階 lacunary 方向集合
    check  驗證方向集合檔的 lacunary 階數
    apply  對 F2D1 場檔套用算子
    exp    執行實驗設定並寫出 CSV
    plot   把實驗 CSV 畫成 SVG
"""
import argparse
import sys
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, List, Optional

from loguru import logger

from src.config import DEFAULT_SEED, LOG_LEVEL, LOG_PATH, RESULTS_DIR
from src.directions import DirectionSet, DirectionSetError, canonical_lacunary, load_set, save_set, verify_order
from src.experiments import load_config, run_experiment
from src.field_engine import ComplexField, lp_norm, read_field, write_field
from src.multipliers import (
    KINDS,
    cone_restrict,
    cones_of,
    half_plane,
    hilbert_dir,
    lp_directional,
    lp_radial,
    signed_cone_sum,
)
from src.operators import (
    ScaleGrid,
    directional_average,
    max_average,
    max_hilbert,
    max_trunc_hilbert,
    square_fn_cww,
    square_fn_sfe,
    trunc_hilbert_dir,
)
from src.report_generator import ChartGenerator
from src.report_manager import ReportManager
from src.utils import setup_logging, trial_rng
from src.vectorfield import build_vd, gamma0_restrict, load_field_spec, trunc_hilbert_field

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2


class CommandParser(argparse.ArgumentParser):
    """用法錯誤（未知旗標、錯誤的值）視為驗證失敗，結束碼 1"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# ============================================================
# gen / check
# ============================================================

def cmd_gen(args) -> int:
    """產生標準 lacunary 集合並寫成 JSON"""
    counts = args.counts if len(args.counts) != 1 else args.counts[0]
    dset = canonical_lacunary(args.order, Fraction(args.lam), counts)
    save_set(dset, args.out)
    logger.info(f"Generated {dset.describe()} -> {args.out}")
    print(f"{len(dset)} directions written to {args.out}")
    return EXIT_OK


def cmd_check(args) -> int:
    """驗證集合檔，印出 order 報告"""
    dset = load_set(args.set)
    if dset.certificate is None:
        print("violation: set carries no certificate")
        return EXIT_INVALID
    report = verify_order(dset)
    print(str(report))
    if not report.ok:
        logger.warning(f"Lacunarity check failed for {args.set}: {report}")
        return EXIT_INVALID
    return EXIT_OK


# ============================================================
# apply
# ============================================================

def _direction(args, dset: DirectionSet):
    if not 0 <= args.direction_index < len(dset):
        raise DirectionSetError(f"Direction index {args.direction_index} outside 0..{len(dset) - 1}")
    return dset[args.direction_index]


def _grid(args, f: ComplexField) -> ScaleGrid:
    return ScaleGrid.dyadic(f.size) if args.eps is None else ScaleGrid.dyadic(f.size, args.eps)


def _radius(args, f: ComplexField) -> float:
    """--eps 未給時為一個網格間距；0 與負值原樣交給算子檢查"""
    return f.h if args.eps is None else args.eps


def _random_signs(args, count: int) -> List[int]:
    rng = trial_rng(args.seed, count)
    return [int(s) for s in rng.integers(-1, 2, size=count)]


APPLY_OPS: Dict[str, Callable] = {
    "identity": lambda a, f, s: f,
    "half_plane": lambda a, f, s: half_plane(f, _direction(a, s), a.tau),
    "hilbert_dir": lambda a, f, s: hilbert_dir(f, _direction(a, s)),
    "max_hilbert": lambda a, f, s: max_hilbert(f, s).as_field(),
    "max_hilbert_plus": lambda a, f, s: max_hilbert(f, s, plus=True).as_field(),
    "directional_average": lambda a, f, s: directional_average(f, _direction(a, s), _radius(a, f)),
    "max_average": lambda a, f, s: max_average(f, s, _grid(a, f)).as_field(),
    "trunc_hilbert_dir": lambda a, f, s: trunc_hilbert_dir(f, _direction(a, s), _radius(a, f)),
    "max_trunc_hilbert": lambda a, f, s: max_trunc_hilbert(f, s, _grid(a, f)).as_field(),
    "lp_radial": lambda a, f, s: lp_radial(f, a.k),
    "lp_directional": lambda a, f, s: lp_directional(f, _direction(a, s), a.k, a.kind),
    "cone_restrict": lambda a, f, s: cone_restrict(f, cones_of(s)[a.direction_index]),
    "signed_cone_sum": lambda a, f, s: signed_cone_sum(f, s, _random_signs(a, len(s))),
    "square_fn_sfe": lambda a, f, s: square_fn_sfe(f, s),
    "square_fn_cww": lambda a, f, s: square_fn_cww(f, s),
}

FIELD_OPS = ("trunc_hilbert_field", "gamma0_restrict")


def cmd_apply(args) -> int:
    """讀入場檔，套用算子，原子寫出結果"""
    f = read_field(args.input)
    if args.op == "gamma0_restrict":
        result = gamma0_restrict(f)
    elif args.op == "trunc_hilbert_field":
        if not args.field:
            raise ValueError("trunc_hilbert_field needs --field")
        vf = build_vd(load_field_spec(args.field), f.size)
        result = trunc_hilbert_field(f, vf, args.eps if args.eps is not None else 0.5)
    else:
        if args.op != "identity" and not args.set:
            raise ValueError(f"{args.op} needs --set")
        dset = load_set(args.set) if args.set else DirectionSet(())
        if args.op == "cone_restrict" and not 0 <= args.direction_index < len(dset):
            raise DirectionSetError(f"Cone index {args.direction_index} outside 0..{len(dset) - 1}")
        result = APPLY_OPS[args.op](args, f, dset)

    write_field(args.out, result)
    before = lp_norm(f, args.p)
    ratio = lp_norm(result, args.p) / before if before > 0 else 0.0
    logger.info(f"{args.op}: {args.input} -> {args.out}, L^{args.p} ratio {ratio:.6g}")
    return EXIT_OK


# ============================================================
# exp / plot
# ============================================================

def cmd_exp(args) -> int:
    """執行實驗設定，寫出 CSV 並更新結果索引"""
    config = load_config(args.config)
    logger.info(f"Running {config.kind} experiment (seed {config.seed})")
    rows, columns = run_experiment(config)
    manager = ReportManager(args.results_dir)
    manager.record_run(rows, columns, args.out, config.to_dict())
    print(f"{len(rows)} rows written to {args.out}")
    return EXIT_OK


def cmd_plot(args) -> int:
    """把 CSV 畫成 SVG"""
    out = ChartGenerator(Path(args.out).parent).generate_chart(args.input, args.out)
    logger.info(f"Chart saved to: {out}")
    return EXIT_OK


def build_parser() -> CommandParser:
    parser = CommandParser(
        prog="lacuna",
        description="Directional Hilbert transforms along lacunary direction sets on a periodic grid",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CommandParser)

    gen = sub.add_parser("gen", help="產生標準 D 階 lacunary 方向集合")
    gen.add_argument("--order", type=int, required=True, help="階數 D ≥ 0")
    gen.add_argument("--lambda", dest="lam", type=str, default="1/2", help="lacunary 常數 λ ∈ (0,1)，可寫分數")
    gen.add_argument("--counts", type=int, nargs="*", default=[4], help="每層每個節點的子節點數（一個值代表各層相同）")
    gen.add_argument("--out", required=True, help="輸出 JSON 路徑")
    gen.set_defaults(handler=cmd_gen)

    check = sub.add_parser("check", help="驗證方向集合檔的 lacunary 階數")
    check.add_argument("set", help="方向集合 JSON")
    check.set_defaults(handler=cmd_check)

    apply = sub.add_parser("apply", help="對 F2D1 場檔套用算子")
    apply.add_argument("--op", required=True, choices=sorted(list(APPLY_OPS) + list(FIELD_OPS)), help="算子名稱")
    apply.add_argument("--set", help="方向集合 JSON")
    apply.add_argument("--in", dest="input", required=True, help="輸入 F2D1 檔")
    apply.add_argument("--out", required=True, help="輸出 F2D1 檔")
    apply.add_argument("--field", help="向量場設定 JSON（trunc_hilbert_field）")
    apply.add_argument("--eps", type=float, help="截斷或平均半徑")
    apply.add_argument("--direction-index", type=int, default=0, help="單一方向算子使用的方向索引")
    apply.add_argument("--k", type=int, default=0, help="Littlewood-Paley 尺度")
    apply.add_argument("--kind", choices=KINDS, default="phi", help="方向投影種類")
    apply.add_argument("--tau", type=float, default=0.0, help="半平面平移 τ")
    apply.add_argument("--p", type=float, default=2.0, help="記錄 L^p 比值用的指數")
    apply.add_argument("--seed", type=int, default=DEFAULT_SEED, help="隨機符號的種子")
    apply.set_defaults(handler=cmd_apply)

    exp = sub.add_parser("exp", help="執行實驗設定並寫出 CSV")
    exp.add_argument("--config", required=True, help="實驗設定 JSON")
    exp.add_argument("--out", required=True, help="輸出 CSV")
    exp.add_argument("--results-dir", default=str(RESULTS_DIR), help="results_index.json 所在目錄")
    exp.set_defaults(handler=cmd_exp)

    plot = sub.add_parser("plot", help="把實驗 CSV 畫成 SVG")
    plot.add_argument("--in", dest="input", required=True, help="實驗 CSV")
    plot.add_argument("--out", required=True, help="輸出 SVG")
    plot.set_defaults(handler=cmd_plot)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """主程式"""
    parser = build_parser()
    args = parser.parse_args(argv)

    # 設定日誌
    setup_logging(str(LOG_PATH), LOG_LEVEL)
    logger.info("=" * 60)
    logger.info(f"Lacuna {args.command} started")
    logger.info("=" * 60)

    try:
        code = args.handler(args)
        logger.info(f"{args.command} finished with exit code {code}")
        return code
    except KeyboardInterrupt:
        logger.warning("Program interrupted by user")
        return EXIT_INVALID
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    except ValueError as e:
        logger.error(f"Validation error: {e}")
        return EXIT_INVALID
    except Exception as e:
        logger.error(f"Unexpected error: {e}")
        logger.exception(e)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
