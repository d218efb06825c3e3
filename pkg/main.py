#!/usr/bin/env python3
"""
CGS Library - 主执行文件

约束图采样库的命令行入口，通过配置文件与命令行参数控制实验。

使用方法:
    python main.py enumerate --scenario pick_place
    python main.py sample --config config/pick_place_config.yml
    python main.py bench --config config/handover_config.yml --workers 4
    python main.py coverage --scenario ik_arc --samples tree=output/a.txt --samples random=output/b.txt
    python main.py export-scenario --scenario banana:3
    python main.py --help
"""

import argparse
import sys
import os
from pathlib import Path

# 添加当前目录到Python路径
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from cgs_library import SamplingPipeline
from cgs_library.exceptions import CGSError


def _int_list(text: str):
    return [int(v) for v in text.split(',') if v.strip()]


def _str_list(text: str):
    return [v.strip() for v in text.split(',') if v.strip()]


def _add_experiment_arguments(parser: argparse.ArgumentParser) -> None:
    """实验配置参数（与 ExperimentConfig 字段一一对应）"""
    parser.add_argument('--config', '-c', type=str, help='配置文件路径 (例如: config/pick_place_config.yml)')
    parser.add_argument('--scenario', type=str, help='场景选择器 name:index，例如 handover:3')
    parser.add_argument('--graph', type=str, help='问题描述文件（替代 --scenario）')
    parser.add_argument('--instances', type=_int_list, help='基准矩阵的实例索引，逗号分隔')
    parser.add_argument('--strategies', type=_str_list,
                        help='策略列表，逗号分隔：tree, tree_warm, random, expert:<名称或文件>')
    parser.add_argument('--seeds', type=_int_list, help='种子列表，逗号分隔')
    parser.add_argument('--budget', type=float, help='每次运行的时间预算（秒）')
    parser.add_argument('--output', '-o', type=str, help='输出目录')
    parser.add_argument('--warmstart', type=str, help='tree_warm 使用的热启动文件')
    parser.add_argument('--workers', type=int, help='基准矩阵并行进程数（0 表示按物理核数）')
    parser.add_argument('--calibration-rollouts', type=int, help='lambda: auto 时的校准尝试次数')
    parser.add_argument('--max-attempts', type=int, help='每次运行的尝试次数上限')
    parser.add_argument('--lambda', dest='lam', type=str, help='奖励权衡系数 λ，或 auto')
    parser.add_argument('--cost-source', choices=['cost_proxy', 'wall_clock'], help='转移代价来源')
    parser.add_argument('--exploration', type=float, help='UCT 探索常数 c')
    parser.add_argument('--bins', type=int, help='覆盖率每维格子数')
    parser.add_argument('--fixtures', type=str, help='问题描述文件目录（默认读取 CGS_FIXTURES_DIR）')
    parser.add_argument('--verbose', '-v', action='store_true', help='显示详细输出')


def parse_arguments(argv=None):
    """解析命令行参数"""
    parser = argparse.ArgumentParser(
        description='约束图采样：转移剪枝 + UCT 采样顺序搜索',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
使用示例:
  %(prog)s enumerate --scenario pick_place --dot pick_place.dot   # 剪枝报告 + 转移图
  %(prog)s sample --scenario handover:0 --strategies tree,random --budget 10
  %(prog)s bench --config config/banana_config.yml --workers 0
  %(prog)s coverage --scenario ik_arc --samples tree=a.txt --samples random=b.txt
  %(prog)s export-scenario --scenario banana:3
  %(prog)s --list-configs                                         # 列出可用配置

退出码: 0 成功, 2 解析/校验错误, 3 配置或策略错误, 4 不存在 ∅→S 路径
        """
    )
    parser.add_argument('--list-configs', action='store_true', help='列出可用的配置文件')
    subparsers = parser.add_subparsers(dest='command')

    enumerate_parser = subparsers.add_parser('enumerate', help='枚举并剪枝转移，打印剪枝报告')
    _add_experiment_arguments(enumerate_parser)
    enumerate_parser.add_argument('--dot', type=str, help='导出存活转移图（DOT 格式）的文件名')
    enumerate_parser.add_argument('--sweep', action='store_true', help='附加等式行数灵敏度分析')

    sample_parser = subparsers.add_parser('sample', help='对单个场景运行采样')
    _add_experiment_arguments(sample_parser)

    bench_parser = subparsers.add_parser('bench', help='运行基准矩阵（实例 × 策略 × 种子）')
    _add_experiment_arguments(bench_parser)

    coverage_parser = subparsers.add_parser('coverage', help='从样本文件计算投影覆盖率')
    _add_experiment_arguments(coverage_parser)
    coverage_parser.add_argument('--samples', action='append', default=[],
                                 help='策略=样本文件[,样本文件...]，可重复')

    export_parser = subparsers.add_parser('export-scenario', help='把场景实例导出为问题描述文件')
    _add_experiment_arguments(export_parser)
    export_parser.add_argument('--file', type=str, help='输出文件名（默认 <场景>_<实例>.cg）')

    return parser, parser.parse_args(argv)


def build_overrides(args) -> dict:
    """把命令行参数转换为点分隔的配置覆盖项"""
    return {
        'experiment.scenario': args.scenario,
        'experiment.graph_file': args.graph,
        'experiment.instances': args.instances,
        'experiment.strategies': args.strategies,
        'experiment.seeds': args.seeds,
        'experiment.budget': args.budget,
        'experiment.output_directory': args.output,
        'experiment.warmstart_path': args.warmstart,
        'experiment.workers': args.workers,
        'experiment.calibration_rollouts': args.calibration_rollouts,
        'experiment.max_attempts': args.max_attempts,
        'experiment.fixtures_directory': args.fixtures,
        'reward.lambda': args.lam,
        'reward.cost_source': args.cost_source,
        'reward.exploration': args.exploration,
        'coverage.bins_per_dim': args.bins,
    }


def parse_sample_specs(specs) -> dict:
    """解析 `策略=文件1,文件2` 形式的 --samples 参数"""
    files = {}
    for spec in specs:
        strategy, sep, paths = spec.partition('=')
        if not sep or not paths:
            raise ValueError(f"--samples 需写成 策略=文件: {spec}")
        files.setdefault(strategy.strip(), []).extend(_str_list(paths))
    return files


def list_available_configs():
    """列出可用的配置文件"""
    config_dir = Path(os.path.dirname(os.path.abspath(__file__))) / 'config'

    if not config_dir.exists():
        print("❌ 配置目录不存在: config/")
        return

    print("📋 可用的配置文件:")
    print("-" * 50)

    descriptions = {
        'default_config.yml': '默认基础配置（被其他配置 include）',
        'pick_place_config.yml': 'pick_place 基准（3 个变量）',
        'handover_config.yml': 'handover 基准（7 个变量，8 个实例）',
        'banana_config.yml': 'banana 基准（9 个变量，8 个实例）',
    }
    for config_file in sorted(config_dir.glob('*.yml')):
        print(f"  {config_file.name:<25} - {descriptions.get(config_file.name, '自定义配置')}")

    print("\n使用方法:")
    print("  python main.py sample --config config/pick_place_config.yml")


def run_command(args) -> int:
    pipeline = SamplingPipeline(args.config, build_overrides(args))

    if args.command == 'enumerate':
        pipeline.enumerate(dot_filename=args.dot, sweep=args.sweep)
    elif args.command == 'sample':
        reports = pipeline.sample(verbose=True)
        print(f"\n📊 共 {sum(len(r.samples) for r in reports)} 个样本 / {len(reports)} 次运行")
    elif args.command == 'bench':
        tables = pipeline.bench()
        failed = int((tables['runs'].get('status') == 'failed').sum()) if len(tables['runs']) else 0
        if failed:
            print(f"⚠️  {failed} 个单元失败，详见 run_reports.csv")
    elif args.command == 'coverage':
        pipeline.coverage(parse_sample_specs(args.samples))
    elif args.command == 'export-scenario':
        selector = args.scenario or pipeline.experiment.scenario
        pipeline.export_scenario(selector, args.file)
        return 0

    pipeline.print_final_summary()
    pipeline.export_summary_report()
    return 0


def main(argv=None):
    """主函数"""
    parser, args = parse_arguments(argv)

    print("🚀 约束图采样 CGS v1.0")
    print("=" * 60)

    if args.list_configs:
        list_available_configs()
        return 0

    if not args.command:
        print("❌ 错误: 必须指定子命令")
        parser.print_help()
        return 1

    if args.config and not os.path.exists(args.config):
        print(f"❌ 配置文件不存在: {args.config}")
        print("\n💡 提示: 使用 --list-configs 查看可用配置")
        return 1

    try:
        return run_command(args)

    except KeyboardInterrupt:
        print("\n\n⚠️  处理被用户中断")
        return 1

    except CGSError as e:
        print(f"\n❌ {type(e).__name__}: {str(e)}")
        if args.verbose:
            import traceback
            traceback.print_exc()
        return e.exit_code

    except Exception as e:
        print(f"\n❌ 执行过程中发生错误: {str(e)}")
        if args.verbose:
            import traceback
            traceback.print_exc()
        return 1


if __name__ == "__main__":
    exit_code = main()
    sys.exit(exit_code)
