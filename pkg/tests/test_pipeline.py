"""
管道集成测试
"""

import pytest
import tempfile
import os
import yaml
import pandas as pd
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cgs_library.pipeline import SamplingPipeline
from cgs_library.core.graph import serialize_graph
from cgs_library.core.scenarios import build_scenario
from main import main, parse_sample_specs


NO_PATH_DOC = """graph no_path
var x dim=1 lo=0 hi=1
con c kind=eq scope=x residual=custom_affine(A=[1,1], b=[0,0])
"""


class TestSamplingPipeline:
    """约束图采样管道测试类"""

    def create_test_config(self, temp_dir, **experiment):
        """创建测试配置文件"""
        config = {
            'project': {
                'name': 'Test CGS Pipeline',
                'version': '1.0'
            },
            'experiment': {
                'scenario': 'pick_place:0',
                'instances': [0],
                'strategies': ['tree', 'random'],
                'seeds': [0],
                'budget': 1000.0,
                'output_directory': temp_dir,
                'workers': 1,
                'calibration_rollouts': 5,
                'max_attempts': 10,
            },
            'solver': {
                'max_iters': 60,
            },
            'reward': {
                'lambda': 0.5,
                'cost_source': 'cost_proxy',
            },
            'coverage': {
                'bins_per_dim': 10,
                'rate_window': 1.0,
            },
            'output': {
                'include_timestamp': False,
                'save_config_snapshot': True,
            }
        }
        config['experiment'].update(experiment)

        config_file = os.path.join(temp_dir, 'test_config.yml')
        with open(config_file, 'w', encoding='utf-8') as f:
            yaml.dump(config, f, default_flow_style=False, allow_unicode=True)

        return config_file

    def test_pipeline_initialization(self):
        """测试管道初始化"""
        with tempfile.TemporaryDirectory() as temp_dir:
            pipeline = SamplingPipeline(self.create_test_config(temp_dir))

            assert pipeline.loader is not None
            assert pipeline.validator is not None
            assert pipeline.exporter is not None
            assert pipeline.results['scenario'] == 'pick_place:0'
            assert pipeline.reward_cfg.cost_source == 'cost_proxy'
            assert pipeline.solver_cfg.max_iters == 60

    def test_overrides_take_precedence(self):
        """测试覆盖项优先于配置文件"""
        with tempfile.TemporaryDirectory() as temp_dir:
            pipeline = SamplingPipeline(self.create_test_config(temp_dir),
                                        {'experiment.seeds': [4, 5], 'reward.lambda': 'auto'})

            assert pipeline.experiment.seeds == [4, 5]
            assert pipeline.reward_cfg.auto

    def test_enumerate(self):
        """测试剪枝报告与 DOT 导出"""
        with tempfile.TemporaryDirectory() as temp_dir:
            pipeline = SamplingPipeline(self.create_test_config(temp_dir))

            table = pipeline.enumerate(dot_filename='pick_place.dot', sweep=True)

            assert table.surviving == 8
            assert pipeline.results['processing_stages']['enumerate']['total'] == 19
            assert os.path.exists(os.path.join(temp_dir, 'pick_place.dot'))
            sweep = pd.read_csv(os.path.join(temp_dir, 'pick_place_0_sensitivity.csv'))
            assert len(sweep) == 3

    def test_sample_outputs(self):
        """测试采样输出：样本文件、运行报告、转移统计、热启动与配置快照"""
        with tempfile.TemporaryDirectory() as temp_dir:
            config_file = self.create_test_config(
                temp_dir, strategies=['tree', 'random', 'expert:expert2-pick_place'], max_attempts=15)
            pipeline = SamplingPipeline(config_file)

            reports = pipeline.sample(verbose=False)

            assert len(reports) == 3
            assert all(r.attempts == 15 for r in reports)
            for name in ['CGS_pick_place_0_tree_0_SAMPLES.txt', 'CGS_pick_place_0_random_0_SAMPLES.txt',
                         'CGS_pick_place_0_expert-expert2-pick_place_0_SAMPLES.txt',
                         'run_reports.csv', 'transition_stats.csv', 'warmstart.txt',
                         'resolved_config.yml']:
                assert os.path.exists(os.path.join(temp_dir, name)), name

            runs = pd.read_csv(os.path.join(temp_dir, 'run_reports.csv'))
            assert list(runs['strategy']) == ['tree', 'random', 'expert:expert2-pick_place']
            assert (runs['status'] == 'ok').all()

            with open(os.path.join(temp_dir, 'resolved_config.yml'), 'r', encoding='utf-8') as f:
                resolved = yaml.safe_load(f)
            assert resolved['experiment']['max_attempts'] == 15

    def test_exported_samples_are_feasible(self):
        """测试重新加载的样本通过独立复查"""
        with tempfile.TemporaryDirectory() as temp_dir:
            pipeline = SamplingPipeline(self.create_test_config(
                temp_dir, strategies=['expert:expert3-pick_place'], max_attempts=30))
            reports = pipeline.sample(verbose=False)

            g = build_scenario('pick_place', 0)
            path = os.path.join(temp_dir, 'CGS_pick_place_0_expert-expert3-pick_place_0_SAMPLES.txt')
            samples = pipeline.loader.load_samples(path, g)

            assert len(samples) == len(reports[0].samples)
            assert pipeline.validator.validate_samples(samples, g, verbose=False)['passed']
            for loaded, original in zip(samples, reports[0].samples):
                assert loaded.seed == original.seed
                assert loaded.sequence_used == original.sequence_used

    def test_coverage_from_sample_files(self):
        """测试从样本文件计算覆盖率"""
        with tempfile.TemporaryDirectory() as temp_dir:
            pipeline = SamplingPipeline(self.create_test_config(temp_dir))
            pipeline.sample(verbose=False)

            files = {s: [os.path.join(temp_dir, f'CGS_pick_place_0_{s}_0_SAMPLES.txt')]
                     for s in ('tree', 'random')}
            df = pipeline.coverage(files, 'pick_place:0')

            assert len(df) == 6
            assert (df.loc[df['strategy'] == 'tree', 'normalized_ratio'] == 1.0).all()
            assert os.path.exists(os.path.join(temp_dir, 'coverage.csv'))

    def test_bench_matrix(self):
        """测试基准矩阵：2 个实例 × 2 个策略 × 3 个种子"""
        with tempfile.TemporaryDirectory() as temp_dir:
            pipeline = SamplingPipeline(self.create_test_config(
                temp_dir, instances=[0, 1], seeds=[0, 1, 2], max_attempts=6))

            tables = pipeline.bench()

            runs = tables['runs']
            assert len(runs) == 12
            assert (runs['status'] == 'ok').all()
            assert set(tables['aggregate']['strategy']) == {'tree', 'random'}
            coverage = tables['coverage']
            assert (coverage.loc[coverage['strategy'] == 'tree', 'normalized_ratio'] == 1.0).all()
            assert set(coverage['instance']) == {'0', '1'}
            for name in ['run_reports.csv', 'aggregate.csv', 'coverage.csv', 'rate_curves.csv',
                         'transition_stats.csv', 'resolved_config.yml']:
                assert os.path.exists(os.path.join(temp_dir, name)), name

    def test_bench_is_reproducible(self):
        """测试代价代理模式下重复运行基准矩阵得到相同的 CSV"""
        outputs = []
        with tempfile.TemporaryDirectory() as temp_dir:
            for run in ('a', 'b'):
                out = os.path.join(temp_dir, run)
                config_file = self.create_test_config(temp_dir, output_directory=out,
                                                      seeds=[0, 1], max_attempts=6)
                SamplingPipeline(config_file).bench()
                contents = {}
                for name in ['run_reports.csv', 'coverage.csv', 'rate_curves.csv', 'transition_stats.csv']:
                    with open(os.path.join(out, name), 'r', encoding='utf-8') as f:
                        contents[name] = f.read()
                outputs.append(contents)

        assert outputs[0] == outputs[1]

    def test_bench_warm_start_phase(self):
        """测试 tree_warm 自动加入 tree 并在第二阶段运行"""
        with tempfile.TemporaryDirectory() as temp_dir:
            pipeline = SamplingPipeline(self.create_test_config(
                temp_dir, instances=[0, 1], strategies=['tree_warm'], max_attempts=6))

            runs = pipeline.bench()['runs']

            assert sorted(runs['strategy'].unique()) == ['tree', 'tree_warm']
            assert len(runs) == 4
            assert (runs['status'] == 'ok').all()

    def test_bench_failed_cell(self):
        """测试失败的单元记录为 status=failed"""
        with tempfile.TemporaryDirectory() as temp_dir:
            pipeline = SamplingPipeline(self.create_test_config(
                temp_dir, strategies=['random', 'expert:q1;t;q2'], max_attempts=4))

            tables = pipeline.bench()
            runs = tables['runs']

            failed = runs[runs['status'] == 'failed']
            assert len(failed) == 1
            assert 'StrategyValidationError' in failed['error'].iloc[0]
            assert list(tables['aggregate']['strategy']) == ['random']
            assert pipeline.results['processing_stages']['bench']['failed_cells'] == 1

    def test_bench_broken_worker(self, monkeypatch):
        """测试工作进程崩溃时该单元记为 failed，其余单元照常汇总"""
        from concurrent.futures import Future
        from concurrent.futures.process import BrokenProcessPool
        import cgs_library.pipeline as pipeline_module

        class InlinePool:
            """在当前进程执行，tree 单元模拟进程崩溃"""

            def __init__(self, max_workers=None):
                self.max_workers = max_workers

            def __enter__(self):
                return self

            def __exit__(self, *exc):
                return False

            def submit(self, fn, *args):
                future = Future()
                if args[2] == 'tree':
                    future.set_exception(BrokenProcessPool("worker died"))
                else:
                    future.set_result(fn(*args))
                return future

        monkeypatch.setattr(pipeline_module, 'ProcessPoolExecutor', InlinePool)
        with tempfile.TemporaryDirectory() as temp_dir:
            pipeline = SamplingPipeline(self.create_test_config(temp_dir, workers=2, max_attempts=4))

            runs = pipeline.bench()['runs']

            failed = runs[runs['status'] == 'failed']
            assert list(failed['strategy']) == ['tree']
            assert 'BrokenProcessPool' in failed['error'].iloc[0]
            assert list(runs.loc[runs['status'] == 'ok', 'strategy']) == ['random']

    def test_export_scenario(self):
        """测试导出问题描述文件"""
        with tempfile.TemporaryDirectory() as temp_dir:
            pipeline = SamplingPipeline(self.create_test_config(temp_dir))

            path = pipeline.export_scenario('banana:3')

            with open(path, 'r', encoding='utf-8') as f:
                assert f.read() == serialize_graph(build_scenario('banana', 3))

    def test_summary_report(self):
        """测试总结报告"""
        with tempfile.TemporaryDirectory() as temp_dir:
            pipeline = SamplingPipeline(self.create_test_config(temp_dir))
            pipeline.enumerate()

            summary = pipeline.get_summary_report()
            assert '约束图采样管道执行报告' in summary
            assert 'pick_place:0' in summary

            summary_file = pipeline.export_summary_report()
            assert os.path.basename(summary_file) == 'CGS_pick_place_SUMMARY.txt'
            with open(summary_file, 'r', encoding='utf-8') as f:
                content = f.read()
            assert '管道执行报告' in content
            assert 'cpu_physical' in content

    def test_pipeline_invalid_config(self):
        """测试无效配置的处理"""
        with tempfile.TemporaryDirectory() as temp_dir:
            config_file = os.path.join(temp_dir, 'invalid_config.yml')
            with open(config_file, 'w') as f:
                f.write("invalid: yaml: content:\n  - missing")

            with pytest.raises(Exception):
                SamplingPipeline(config_file)

    def test_pipeline_string_representation(self):
        """测试管道字符串表示"""
        with tempfile.TemporaryDirectory() as temp_dir:
            config_file = self.create_test_config(temp_dir)
            pipeline = SamplingPipeline(config_file)

            assert 'SamplingPipeline' in str(pipeline)
            assert 'pick_place:0' in str(pipeline)
            assert config_file in repr(pipeline)


class TestCommandLine:
    """命令行入口测试类"""

    def test_enumerate_succeeds(self):
        """测试 enumerate 子命令"""
        with tempfile.TemporaryDirectory() as temp_dir:
            assert main(['enumerate', '--scenario', 'pick_place', '-o', temp_dir]) == 0
            assert os.path.exists(os.path.join(temp_dir, 'CGS_pick_place_SUMMARY.txt'))

    def test_missing_command(self):
        """测试未指定子命令"""
        assert main([]) == 1

    def test_unknown_strategy_exit_code(self):
        """测试未知策略的退出码"""
        with tempfile.TemporaryDirectory() as temp_dir:
            assert main(['sample', '--strategies', 'greedy', '-o', temp_dir]) == 3

    def test_parse_error_exit_code(self):
        """测试问题描述文件语法错误的退出码"""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = os.path.join(temp_dir, 'bad.cg')
            with open(path, 'w', encoding='utf-8') as f:
                f.write("var x dim=1 lo=0 hi=1\nfactor c kind=eq\n")

            assert main(['enumerate', '--graph', path, '-o', temp_dir]) == 2

    def test_no_path_exit_code(self):
        """测试剪枝后不存在路径的退出码"""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = os.path.join(temp_dir, 'no_path.cg')
            with open(path, 'w', encoding='utf-8') as f:
                f.write(NO_PATH_DOC)

            assert main(['sample', '--graph', path, '--budget', '1', '-o', temp_dir]) == 4

    def test_missing_config_file(self):
        """测试配置文件不存在"""
        assert main(['sample', '--config', 'no_such_config.yml']) == 1

    def test_parse_sample_specs(self):
        """测试 --samples 参数解析"""
        specs = parse_sample_specs(['tree=a.txt,b.txt', 'random=c.txt', 'tree=d.txt'])

        assert specs == {'tree': ['a.txt', 'b.txt', 'd.txt'], 'random': ['c.txt']}
        with pytest.raises(ValueError):
            parse_sample_specs(['tree'])


if __name__ == '__main__':
    pytest.main([__file__])
