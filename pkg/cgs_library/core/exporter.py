"""
结果导出器模块

负责导出样本文件、CSV 表格（运行报告、覆盖率、采样率曲线、转移统计）、
DOT 转移图、热启动存储、问题描述文件与处理总结。
"""

import os
import pandas as pd
from datetime import datetime
from typing import Any, Dict, Optional, Sequence

from .graph import ConstraintGraph, serialize_graph
from .mcts import WarmstartStore
from .runtime import RunReport, SampleRecord
from .states import TransitionTable, to_dot
from ..utils import ensure_directory_exists, safe_create_filename


def format_sample_line(sample: SampleRecord, g: ConstraintGraph) -> str:
    """样本行：`seed=<s> seq=<signature> max_eq=<v> max_ineq=<v> timings=<t,...> <var>=<v,...> ...`"""
    parts = [
        f"seed={sample.seed}",
        f"seq={sample.sequence_used.signature(g)}",
        f"max_eq={sample.max_eq!r}",
        f"max_ineq={sample.max_ineq!r}",
        "timings=" + ",".join(repr(float(t)) for t in sample.timings),
    ]
    for var_id in g.variable_ids:
        parts.append(f"{var_id}=" + ",".join(repr(float(v)) for v in sample.values[var_id]))
    return " ".join(parts)


def transition_stats_frame(reports: Sequence[RunReport]) -> pd.DataFrame:
    """每个 (运行, 转移) 一行的统计表"""
    records = []
    for report in reports:
        for label in sorted(report.transition_stats):
            stats = report.transition_stats[label]
            row = dict(report.labels)
            row.update({
                'strategy': report.strategy,
                'seed': report.seed,
                'transition': label,
                'attempts': stats.attempts,
                'successes': stats.successes,
                'success_rate': round(stats.success_rate, 9),
                'mean_cost': round(stats.mean_cost, 9),
            })
            records.append(row)
    return pd.DataFrame(records)


class ResultExporter:
    """结果导出器类"""

    def __init__(self, output_config: Dict[str, Any]):
        """
        初始化结果导出器

        Args:
            output_config: 输出配置字典
        """
        self.config = output_config
        self.output_directory = output_config.get('output_directory', './output')
        self.include_timestamp = output_config.get('include_timestamp', False)

        # 确保输出目录存在
        ensure_directory_exists(self.output_directory)

    def _path(self, filename: str) -> str:
        return os.path.join(self.output_directory, filename)

    def export_dataframe(self, df: pd.DataFrame, filename: str, **kwargs) -> str:
        """
        导出DataFrame到CSV文件

        Args:
            df: 要导出的DataFrame
            filename: 文件名
            **kwargs: 传递给DataFrame.to_csv的额外参数

        Returns:
            导出文件的完整路径（空表也会写出表头）
        """
        output_path = self._path(filename)
        default_kwargs = {'index': False, 'encoding': 'utf-8', 'float_format': '%.9g'}
        default_kwargs.update(kwargs)
        df.to_csv(output_path, **default_kwargs)
        print(f"✅ 已导出 {filename}: {len(df)} 行 × {len(df.columns)} 列")
        return output_path

    def export_samples(self, report: RunReport, g: ConstraintGraph, scenario: str = 'GRAPH',
                       filename: Optional[str] = None) -> str:
        """
        导出样本文件，每个样本一行

        Args:
            report: 运行报告
            g: 约束图
            scenario: 场景名（用于文件名）
            filename: 自定义文件名

        Returns:
            文件路径
        """
        if filename is None:
            pattern = self.config.get('patterns', {}).get('samples', 'CGS_{scenario}_{strategy}_{seed}_SAMPLES.txt')
            filename = safe_create_filename(
                pattern, scenario=scenario, strategy=report.strategy.replace(':', '-').replace('/', '_'),
                seed=report.seed,
                timestamp=datetime.now().strftime("%Y%m%d_%H%M%S") if self.include_timestamp else "")
        output_path = self._path(filename)
        with open(output_path, 'w', encoding='utf-8') as f:
            f.write(f"# graph={g.name} strategy={report.strategy} seed={report.seed} "
                    f"samples={len(report.samples)} attempts={report.attempts}\n")
            for sample in report.samples:
                f.write(format_sample_line(sample, g) + "\n")
        print(f"✅ 样本已导出: {output_path} ({len(report.samples)} 个)")
        return output_path

    def export_dot(self, table: TransitionTable, filename: str) -> str:
        output_path = self._path(filename)
        with open(output_path, 'w', encoding='utf-8') as f:
            f.write(to_dot(table))
        print(f"✅ 转移图已导出: {output_path}")
        return output_path

    def export_warmstart(self, store: WarmstartStore, filename: str) -> str:
        output_path = filename if os.path.isabs(filename) else self._path(filename)
        ensure_directory_exists(os.path.dirname(output_path))
        with open(output_path, 'w', encoding='utf-8') as f:
            f.write(store.to_text())
        print(f"✅ 热启动存储已导出: {output_path} ({len(store)} 个节点)")
        return output_path

    def export_graph(self, g: ConstraintGraph, filename: str) -> str:
        """导出问题描述文件"""
        output_path = filename if os.path.isabs(filename) else self._path(filename)
        with open(output_path, 'w', encoding='utf-8') as f:
            f.write(serialize_graph(g))
        print(f"✅ 问题描述已导出: {output_path}")
        return output_path

    def export_summary_report(self, all_results: Dict[str, Any],
                              summary_filename: str = "processing_summary.txt") -> str:
        """
        创建处理过程总结文件

        Args:
            all_results: 所有处理结果字典
            summary_filename: 总结文件名

        Returns:
            总结文件路径
        """
        summary_path = self._path(summary_filename)
        try:
            with open(summary_path, 'w', encoding='utf-8') as f:
                f.write("CGS 采样总结\n")
                f.write("=" * 50 + "\n")
                f.write(f"生成时间: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n\n")

                for stage, result in all_results.items():
                    f.write(f"【{stage}】\n")
                    if isinstance(result, dict):
                        for key, value in result.items():
                            f.write(f"  {key}: {value}\n")
                    else:
                        f.write(f"  {result}\n")
                    f.write("\n")

            print(f"✅ 处理总结已保存: {summary_path}")
            return summary_path

        except OSError as e:
            print(f"❌ 总结文件保存失败: {str(e)}")
            return ""

    def __str__(self) -> str:
        return f"ResultExporter(output_directory='{self.output_directory}')"
