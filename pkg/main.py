"""
torus-ci-lab: 环面凸积分谱方法实验室

命令行入口：python main.py run <config> [--out DIR] [--seed N] [--dump-fields t1,t2,...]
"""

import argparse
import sys
import time
import unicodedata
from typing import Optional, Sequence

from src.config import ConfigManager
from src.constants import (
    APP_DESCRIPTION,
    APP_NAME,
    APP_VERSION,
    EXIT_ASSERTION_FAILED,
    EXIT_CONFIG_ERROR,
    EXIT_NUMERICAL_ERROR,
    EXIT_OK,
)
from src.errors import ConfigError, LabError
from src.runner import run


BANNER_WIDTH = 58


def _display_width(text: str) -> int:
    return sum(2 if unicodedata.east_asian_width(ch) in ("W", "F") else 1 for ch in text)


def banner_lines() -> list[str]:
    body = ["", f"   {APP_NAME} v{APP_VERSION}", f"   {APP_DESCRIPTION}", ""]
    lines = ["╔" + "═" * BANNER_WIDTH + "╗"]
    for text in body:
        lines.append("║" + text + " " * (BANNER_WIDTH - _display_width(text)) + "║")
    lines.append("╚" + "═" * BANNER_WIDTH + "╝")
    return lines


def print_banner():
    print("\n" + "\n".join(banner_lines()) + "\n")


def print_config_summary(config):
    print(f"[CONFIG] 子命令: {config.command}")
    print(f"[CONFIG] 主种子: {config.seed}")
    print(f"[CONFIG] 网格: N = {config.grid.n_modes}")
    print(f"[CONFIG] 输出目录: {config.output.directory}")
    if config.command == "iterate":
        it = config.iteration
        print(f"[CONFIG] 迭代层数: q_max = {it.q_max}, dt = {it.dt}, 噪声: {'开' if config.noise.enabled else '关'}")
    if config.output.dump_fields:
        print(f"[CONFIG] 场快照时刻: {', '.join(f'{t:g}' for t in config.output.dump_fields)}")


def _parse_times(raw: str) -> list[float]:
    try:
        return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"无法解析的时间列表: {raw!r}")


def _parse_seed(raw: str) -> int:
    try:
        seed = int(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"种子必须是整数: {raw!r}")
    if not (0 <= seed < 2 ** 64):
        raise argparse.ArgumentTypeError(f"种子必须在 [0, 2^64) 中: {seed}")
    return seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=APP_NAME, description=APP_DESCRIPTION)
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
    sub = parser.add_subparsers(dest="action", required=True)
    run_parser = sub.add_parser("run", help="执行运行计划中的子命令")
    run_parser.add_argument("config", help="JSON 运行计划路径")
    run_parser.add_argument("--out", dest="out_dir", default=None, help="输出目录（覆盖配置）")
    run_parser.add_argument("--seed", type=_parse_seed, default=None, help="主种子（覆盖配置）")
    run_parser.add_argument("--dump-fields", type=_parse_times, default=None, help="场快照时刻，逗号分隔")
    run_parser.add_argument("--quiet", action="store_true", help="不打印横幅与账本表格")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if not args.quiet:
        print_banner()

    manager = ConfigManager(args.config)
    try:
        manager.load()
        config = manager.override(seed=args.seed, out_dir=args.out_dir, dump_fields=args.dump_fields)
    except ConfigError as e:
        print(f"[ERROR] 配置加载失败: {e.message}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    if not args.quiet:
        print_config_summary(config)
        print(f"[STARTUP] 开始执行 {config.command}")
        print("-" * 60)

    started = time.perf_counter()
    try:
        outcome = run(config)
    except ConfigError as e:
        print(f"[ERROR] 配置错误: {e.message}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except LabError as e:
        print(f"[ERROR] 数值错误 ({e.component}): {e.message}", file=sys.stderr)
        return EXIT_NUMERICAL_ERROR
    except ValueError as e:
        print(f"[ERROR] 数值错误 (input): {e}", file=sys.stderr)
        return EXIT_NUMERICAL_ERROR

    elapsed = time.perf_counter() - started
    checks = outcome.report.checks
    failed = [c for c in checks if not c.passed]
    if not args.quiet:
        if outcome.ledger_text:
            print(outcome.ledger_text)
            print("-" * 60)
        for c in failed:
            print(f"[RUN] 未通过: {c.name} value={c.value:.6e} target={c.target} {c.detail or ''}")
        print(f"[RUN] 完成: {len(checks) - len(failed)}/{len(checks)} 项检查通过，用时 {elapsed:.1f}s")
    return EXIT_OK if outcome.passed else EXIT_ASSERTION_FAILED


if __name__ == "__main__":
    sys.exit(main())
