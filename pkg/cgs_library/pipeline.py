"""
约束图采样管道

这是核心 Pipeline 类，协调转移枚举、采样运行、基准矩阵与覆盖率统计，
提供统一的实验接口。
"""

import os
import platform
import psutil
import pandas as pd
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .config import ConfigManager, default_fixtures_dir
from .core import (
    CoverageReport, GraphLoader, ResultExporter, RunReport, SampleValidator, TransitionTable,
    WarmstartStore, coverage_table, generate, prune_table, projected_coverage, rate_curve,
    sensitivity_sweep, transition_stats_frame,
)
from .core.scenarios import build_scenario, scenario_family
from .utils import create_progress_logger, handle_exception, print_dataframe_summary, safe_create_filename


def run_bench_cell(scenario: str, index: int, strategy_spec: str, seed: int, budget: float,
                   solver: Dict[str, Any], reward: Dict[str, Any], fixtures_directory: str,
                   calibration_rollouts: int, max_attempts: Optional[int],
                   store_text: Optional[str]) -> Dict[str, Any]:
    """
    在独立进程中运行基准矩阵的一个单元（场景实例 × 策略 × 种子）

    Returns:
        {'report': RunReport} 或 {'error': 错误信息}
    """
    from .core import RewardConfig, SolverConfig

    try:
        g = build_scenario(scenario, index)
        table = prune_table(g)
        reward_cfg = RewardConfig.from_dict(reward)
        loader = GraphLoader(fixtures_directory)
        strategy = loader.load_strategy(strategy_spec, g, table, n_equiv=reward_cfg.n_equiv)
        if store_text is not None:
            strategy.store = WarmstartStore.from_text(store_text, n_equiv=reward_cfg.n_equiv)
        report = generate(g, table, strategy, budget, SolverConfig.from_dict(solver), reward_cfg,
                          seed=seed, calibration_rollouts=calibration_rollouts, max_attempts=max_attempts)
        report.strategy = strategy_spec
        report.labels = {'scenario': scenario, 'instance': index}
        return {'report': report}
    except Exception as e:
        return {'error': f"{type(e).__name__}: {e}"}


class SamplingPipeline:
    """约束图采样管道主类"""

    def __init__(self, config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None):
        """
        初始化采样管道

        Args:
            config_path: 配置文件路径（可选）
            overrides: 点分隔键 → 值的覆盖项

        Raises:
            FileNotFoundError: 当配置文件不存在时
            ConfigValidationError: 当配置非法时
        """
        print(f"🚀 初始化约束图采样管道")
        if config_path:
            print(f"📋 配置文件: {config_path}")

        self.config = ConfigManager(config_path, overrides)
        self.experiment = self.config.get_experiment_config()
        self.solver_cfg = self.config.get_solver_config()
        self.reward_cfg = self.config.get_reward_config()
        self.coverage_cfg = self.config.get_coverage_config()
        self._initialize_modules()

        self.results: Dict[str, Any] = {
            'pipeline_start_time': datetime.now(),
            'config_path': config_path,
            'scenario': self.experiment.scenario,
            'processing_stages': {},
        }

    def _initialize_modules(self) -> None:
        """初始化加载器、验证器与导出器"""
        fixtures = self.config.get('experiment.fixtures_directory') or default_fixtures_dir()
        self.loader = GraphLoader(fixtures)
        self.validator = SampleValidator({'tol_eq': self.solver_cfg.tol_eq,
                                          'tol_ineq': self.solver_cfg.tol_ineq})
        output_config = dict(self.config.get('output', {}) or {})
        output_config['output_directory'] = self.experiment.output_directory
        self.exporter = ResultExporter(output_config)

    def _save_config_snapshot(self) -> None:
        if self.config.get('output.save_config_snapshot', True):
            path = os.path.join(self.exporter.output_directory, 'resolved_config.yml')
            self.config.save_resolved(path)

    # ------------------------------------------------------------ enumerate

    @handle_exception
    def enumerate(self, source: Optional[str] = None, dot_filename: Optional[str] = None,
                  sweep: bool = False) -> TransitionTable:
        """
        枚举并剪枝转移，打印剪枝报告

        Args:
            source: 场景选择器或问题描述文件，默认使用配置中的场景
            dot_filename: 导出存活转移图的文件名（可选）
            sweep: 是否附加等式行数灵敏度分析

        Returns:
            剪枝后的转移表
        """
        g, _, _ = self.loader.load_graph(source or self.experiment.graph_file or self.experiment.scenario)
        print(f"\n=== 转移枚举与剪枝: {g.name} ===")
        table = prune_table(g)
        print(table.report())
        self.results['processing_stages']['enumerate'] = table.counts()

        if dot_filename:
            self.exporter.export_dot(table, dot_filename)
        if sweep:
            df = sensitivity_sweep(g)
            print_dataframe_summary(df, "等式行数灵敏度分析")
            print(df[['grasp_rows', 'position_rows', 'surviving', 'pruning_ratio']].to_string(index=False))
            self.exporter.export_dataframe(df, f"{g.name}_sensitivity.csv")
        return table

    # ------------------------------------------------------------ sample

    @handle_exception
    def sample(self, source: Optional[str] = None, verbose: bool = True) -> List[RunReport]:
        """
        对单个场景按配置中的 (策略, 种子) 运行 generate，导出样本与运行报告

        Args:
            source: 场景选择器或问题描述文件
            verbose: 是否打印每次运行的摘要

        Returns:
            运行报告列表
        """
        exp = self.experiment
        g, scenario, index = self.loader.load_graph(source or exp.graph_file or exp.scenario)
        table = prune_table(g)
        print(f"\n=== 采样: {g.name} (存活转移 {table.surviving}/{table.total}) ===")

        reports = []
        tree_stores = []
        for strategy_spec in exp.strategies:
            for seed in exp.seeds:
                strategy = self.loader.load_strategy(strategy_spec, g, table, exp.warmstart_path,
                                                     self.reward_cfg.n_equiv)
                if strategy.tag == 'tree_warm' and strategy.store is None:
                    print("⚠️  tree_warm 未提供热启动文件，按冷启动运行")
                report = generate(g, table, strategy, exp.budget, self.solver_cfg, self.reward_cfg,
                                  seed=seed, calibration_rollouts=exp.calibration_rollouts,
                                  max_attempts=exp.max_attempts, verbose=verbose)
                report.strategy = strategy_spec
                report.labels = {'scenario': scenario, 'instance': index}
                self.validator.validate_samples(report.samples, g, f"{strategy_spec} seed={seed}",
                                                verbose=verbose)
                self.exporter.export_samples(report, g, scenario=g.name)
                if report.warmstart is not None:
                    tree_stores.append(report.warmstart)
                reports.append(report)

        runs = pd.DataFrame([r.to_row() for r in reports])
        self.exporter.export_dataframe(runs, self.config.get_output_pattern('runs'))
        self.exporter.export_dataframe(transition_stats_frame(reports),
                                       self.config.get_output_pattern('transitions'))
        if tree_stores and self.config.get('output.save_warmstart', True):
            store = WarmstartStore.merge(tree_stores, n_equiv=self.reward_cfg.n_equiv)
            self.exporter.export_warmstart(store, 'warmstart.txt')
        self._save_config_snapshot()

        self.results['processing_stages']['sample'] = {
            'runs': len(reports),
            'samples': sum(len(r.samples) for r in reports),
            'attempts': sum(r.attempts for r in reports),
        }
        self.results['reports'] = reports
        return reports

    # ------------------------------------------------------------ bench

    def _bench_workers(self, cells: int) -> int:
        workers = self.experiment.workers
        if workers == 0:
            workers = psutil.cpu_count(logical=False) or psutil.cpu_count() or 1
        return max(1, min(workers, cells))

    def _run_cells(self, cells: Sequence[Tuple[int, str, int, Optional[str]]],
                   progress, done: int) -> List[Tuple[Tuple[int, str, int], Dict[str, Any]]]:
        exp = self.experiment
        scenario = exp.scenario_name
        args = [
            (scenario, index, strategy, seed, exp.budget, self.config.get('solver', {}) or {},
             self.config.get('reward', {}) or {}, self.loader.fixtures_directory,
             exp.calibration_rollouts, exp.max_attempts, store_text)
            for index, strategy, seed, store_text in cells
        ]
        keys = [(index, strategy, seed) for index, strategy, seed, _ in cells]
        workers = self._bench_workers(len(cells))
        outcomes = []
        if workers == 1:
            for key, arg in zip(keys, args):
                outcomes.append((key, run_bench_cell(*arg)))
                done += 1
                progress(done, f"实例 {key[0]} / {key[1]} / seed={key[2]}")
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(run_bench_cell, *arg) for arg in args]
                for key, future in zip(keys, futures):
                    try:
                        outcome = future.result()
                    except Exception as e:
                        # 工作进程崩溃（BrokenProcessPool 等）只记为该单元失败
                        outcome = {'error': f"{type(e).__name__}: {e}"}
                    outcomes.append((key, outcome))
                    done += 1
                    progress(done, f"实例 {key[0]} / {key[1]} / seed={key[2]}")
        return outcomes

    @handle_exception
    def bench(self) -> Dict[str, pd.DataFrame]:
        """
        运行完整基准矩阵（实例 × 策略 × 种子）并导出汇总 CSV

        tree_warm 单元在第二阶段运行，热启动存储来自其他实例的 tree 运行（留一法），
        或来自配置中的 warmstart_path。

        Returns:
            各输出表
        """
        exp = self.experiment
        family = scenario_family(exp.scenario_name)
        instances = exp.instances or list(range(family.instance_count))
        strategies = list(exp.strategies)
        warm = [s for s in strategies if s == 'tree_warm']
        cold = [s for s in strategies if s != 'tree_warm']
        if warm and not exp.warmstart_path and 'tree' not in cold:
            print("⚠️  tree_warm 需要 tree 运行构建热启动存储，自动加入 tree 策略")
            cold.append('tree')

        total = len(instances) * len(exp.seeds) * (len(cold) + len(warm))
        print(f"\n=== 基准矩阵: {exp.scenario_name} {len(instances)} 个实例 × "
              f"{len(cold) + len(warm)} 个策略 × {len(exp.seeds)} 个种子 ===")
        print(f"📋 并行进程数: {self._bench_workers(total)}")
        progress = create_progress_logger(total)

        phase1 = [(i, s, seed, None) for i in instances for s in cold for seed in exp.seeds]
        outcomes = self._run_cells(phase1, progress, 0)

        if warm:
            stores = self._leave_one_out_stores(instances, outcomes)
            phase2 = [(i, 'tree_warm', seed, stores[i]) for i in instances for seed in exp.seeds]
            outcomes += self._run_cells(phase2, progress, len(phase1))

        outcomes.sort(key=lambda item: (item[0][0], item[0][1], item[0][2]))
        return self._export_bench(outcomes, family.name)

    def _leave_one_out_stores(self, instances: Sequence[int],
                              outcomes: Sequence[Tuple[Tuple[int, str, int], Dict[str, Any]]]) -> Dict[int, str]:
        n_equiv = self.reward_cfg.n_equiv
        if self.experiment.warmstart_path:
            shared = self.loader.load_warmstart(self.experiment.warmstart_path, n_equiv)
            return {i: shared.to_text() for i in instances}

        per_instance: Dict[int, List[WarmstartStore]] = {i: [] for i in instances}
        for (index, strategy, _), outcome in outcomes:
            report = outcome.get('report')
            if strategy == 'tree' and report is not None and report.warmstart is not None:
                per_instance[index].append(report.warmstart)
        stores = {}
        for i in instances:
            others = [s for j in instances if j != i for s in per_instance[j]]
            stores[i] = WarmstartStore.merge(others, n_equiv=n_equiv).to_text()
        return stores

    def _export_bench(self, outcomes, scenario: str) -> Dict[str, pd.DataFrame]:
        rows, reports, failures = [], [], 0
        for (index, strategy, seed), outcome in outcomes:
            if 'report' in outcome:
                reports.append(outcome['report'])
                rows.append(outcome['report'].to_row())
            else:
                failures += 1
                print(f"❌ 单元失败: 实例 {index} / {strategy} / seed={seed}: {outcome['error']}")
                rows.append({'scenario': scenario, 'instance': index, 'strategy': strategy,
                             'seed': seed, 'status': 'failed', 'error': outcome['error']})
        runs = pd.DataFrame(rows)

        ok = runs[runs['status'] == 'ok'] if 'status' in runs else runs
        aggregate = (ok.groupby('strategy', sort=True)
                     .agg(runs=('seed', 'count'), mean_samples=('samples', 'mean'),
                          mean_attempts=('attempts', 'mean'),
                          mean_samples_per_second=('samples_per_second', 'mean'))
                     .reset_index()) if len(ok) else pd.DataFrame()

        coverage = self._coverage_from_reports(reports)
        curves = []
        for report in reports:
            curve = rate_curve(report, self.coverage_cfg.rate_window)
            curve.insert(0, 'seed', report.seed)
            curve.insert(0, 'strategy', report.strategy)
            curve.insert(0, 'instance', report.labels.get('instance', 0))
            curves.append(curve)
        rates = pd.concat(curves, ignore_index=True) if curves else pd.DataFrame()

        self.exporter.export_dataframe(runs, self.config.get_output_pattern('runs'))
        self.exporter.export_dataframe(aggregate, self.config.get_output_pattern('aggregate'))
        self.exporter.export_dataframe(coverage, self.config.get_output_pattern('coverage'))
        self.exporter.export_dataframe(rates, self.config.get_output_pattern('rates'))
        self.exporter.export_dataframe(transition_stats_frame(reports),
                                       self.config.get_output_pattern('transitions'))
        self._save_config_snapshot()

        self.results['processing_stages']['bench'] = {
            'cells': len(outcomes),
            'failed_cells': failures,
            'samples': sum(len(r.samples) for r in reports),
        }
        self.results['reports'] = reports
        return {'runs': runs, 'aggregate': aggregate, 'coverage': coverage, 'rates': rates}

    def _coverage_from_reports(self, reports: Sequence[RunReport]) -> pd.DataFrame:
        """同一 (策略, 实例) 下各种子的样本合并后计算投影覆盖率"""
        pooled: Dict[str, Dict[str, list]] = {}
        graphs = {}
        for report in reports:
            instance = str(report.labels.get('instance', 0))
            pooled.setdefault(report.strategy, {}).setdefault(instance, []).extend(report.samples)
            if instance not in graphs:
                graphs[instance] = build_scenario(report.labels['scenario'], int(instance), certify=False)
        coverage: Dict[str, Dict[str, CoverageReport]] = {
            strategy: {inst: projected_coverage(samples, graphs[inst], self.coverage_cfg)
                       for inst, samples in by_instance.items()}
            for strategy, by_instance in pooled.items()
        }
        return coverage_table(coverage, self.coverage_cfg.normalize_against)

    # ------------------------------------------------------------ coverage

    @handle_exception
    def coverage(self, sample_files: Dict[str, List[str]], source: Optional[str] = None) -> pd.DataFrame:
        """
        从样本文件计算投影覆盖率

        Args:
            sample_files: 策略名 → 样本文件列表
            source: 样本所属的场景选择器或问题描述文件

        Returns:
            覆盖率表
        """
        g, _, index = self.loader.load_graph(source or self.experiment.graph_file or self.experiment.scenario)
        print(f"\n=== 投影覆盖率: {g.name} (每维 {self.coverage_cfg.bins_per_dim} 格) ===")
        reports = {}
        for strategy, files in sample_files.items():
            samples = [s for path in files for s in self.loader.load_samples(path, g)]
            reports[strategy] = {str(index): projected_coverage(samples, g, self.coverage_cfg)}
        df = coverage_table(reports, self.coverage_cfg.normalize_against)
        print(df.to_string(index=False))
        self.exporter.export_dataframe(df, self.config.get_output_pattern('coverage'))
        self.results['processing_stages']['coverage'] = {'strategies': len(reports), 'rows': len(df)}
        return df

    # ------------------------------------------------------------ export-scenario

    def export_scenario(self, selector: str, filename: Optional[str] = None) -> str:
        """把场景实例导出为问题描述文件"""
        g, _, _ = self.loader.load_graph(selector)
        return self.exporter.export_graph(g, filename or f"{g.name}.cg")

    # ------------------------------------------------------------ 汇总

    def environment_snapshot(self) -> Dict[str, Any]:
        """运行环境快照（写入总结报告）"""
        memory = psutil.virtual_memory()
        return {
            'platform': platform.platform(),
            'python': platform.python_version(),
            'cpu_physical': psutil.cpu_count(logical=False),
            'cpu_logical': psutil.cpu_count(),
            'memory_gb': round(memory.total / 1024 ** 3, 1),
        }

    def print_final_summary(self) -> None:
        """打印最终总结"""
        self.results['pipeline_end_time'] = datetime.now()
        duration = (self.results['pipeline_end_time'] - self.results['pipeline_start_time']).total_seconds()
        self.results['pipeline_duration'] = duration

        print(f"\n{'=' * 80}")
        print(f" 🎉 约束图采样管道执行完成")
        print(f"{'=' * 80}")
        print(f"⏱️  总耗时: {duration:.2f} 秒")
        for stage, summary in self.results.get('processing_stages', {}).items():
            print(f"\n📋 {stage}:")
            for key, value in summary.items():
                print(f"   {key}: {value}")
        for report in self.results.get('reports', [])[:20]:
            if report.best_sequence:
                print(f"   🌲 {report.strategy} seed={report.seed} 最佳序列: {report.best_sequence}")
        print(f"\n{'=' * 80}")

    def get_summary_report(self) -> str:
        """
        获取处理总结报告

        Returns:
            格式化的总结报告字符串
        """
        lines = [
            "约束图采样管道执行报告",
            "=" * 50,
            f"配置文件: {self.results.get('config_path') or '默认'}",
            f"场景: {self.results.get('scenario')}",
            f"开始时间: {self.results.get('pipeline_start_time')}",
            "",
        ]
        for stage, summary in self.results.get('processing_stages', {}).items():
            lines.append(f"【{stage}】")
            for key, value in summary.items():
                lines.append(f"  {key}: {value}")
            lines.append("")
        return "\n".join(lines)

    def export_summary_report(self, filename: Optional[str] = None) -> str:
        """
        导出处理总结报告

        Args:
            filename: 文件名（可选）

        Returns:
            导出文件路径
        """
        if filename is None:
            filename = safe_create_filename(self.config.get_output_pattern('summary'),
                                            scenario=self.experiment.scenario_name)
        return self.exporter.export_summary_report(
            {'pipeline_summary': self.get_summary_report(), 'environment': self.environment_snapshot()},
            filename)

    def __str__(self) -> str:
        return f"SamplingPipeline(scenario='{self.experiment.scenario}')"

    def __repr__(self) -> str:
        return (f"SamplingPipeline(config_path='{self.results.get('config_path')}', "
                f"scenario='{self.experiment.scenario}', strategies={self.experiment.strategies})")
