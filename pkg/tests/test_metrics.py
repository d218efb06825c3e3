"""
覆盖率与采样率指标测试
"""

import pytest
import os
import math
import numpy as np

import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cgs_library.core.graph import parse_graph
from cgs_library.core.mcts import History, RewardConfig, WarmstartStore
from cgs_library.core.metrics import (
    CoverageConfig, CoverageReport, bin_cells, coverage_table, normalize_coverage,
    projected_coverage, rate_curve,
)
from cgs_library.core.runtime import (
    BUILTIN_EXPERTS, RunReport, SampleRecord, Strategy, generate, load_expert,
)
from cgs_library.core.scenarios import build_scenario, ik_arc_oracle_cells
from cgs_library.core.states import prune_table
from cgs_library.exceptions import ConfigValidationError


LINE_DOC = "graph line\nvar x dim=1 lo=0 hi=1\nvar y dim=2 lo=0,0 hi=1,1\n"


def make_sample(x, y=(0.5, 0.5)):
    return SampleRecord(values={'x': np.array([x]), 'y': np.array(y)}, sequence_used=History(),
                        max_eq=0.0, max_ineq=0.0, timings=[], seed=0)


def occupied_joint_cells(samples, bins):
    points = np.vstack([s.values['q'] for s in samples])
    cells, _ = bin_cells(points, np.array([-math.pi, -math.pi]), np.array([math.pi, math.pi]), bins)
    return {tuple(row) for row in cells.tolist()}


class TestProjectedCoverage:
    """投影覆盖率测试类"""

    def test_no_samples(self):
        """测试没有样本时所有变量为0"""
        g = parse_graph(LINE_DOC)

        report = projected_coverage([], g)

        assert report.occupied == {'x': 0, 'y': 0}
        assert report.sample_count == 0

    def test_identical_samples_occupy_one_cell(self):
        """测试完全相同的样本只占一个格子"""
        g = parse_graph(LINE_DOC)

        report = projected_coverage([make_sample(0.3) for _ in range(50)], g)

        assert report.occupied == {'x': 1, 'y': 1}

    def test_uniform_one_dimensional(self):
        """测试一维均匀样本：10 个格子全部占据"""
        g = parse_graph(LINE_DOC)
        samples = [make_sample((k + 0.5) / 10) for k in range(10)]

        report = projected_coverage(samples, g, CoverageConfig(bins_per_dim=10))

        assert report.occupied['x'] == 10
        assert report.out_of_bounds['x'] == 0

    def test_out_of_bounds_clamped(self):
        """测试越界样本截断到边界格子并计数"""
        g = parse_graph(LINE_DOC)
        samples = [make_sample(1.5), make_sample(0.99)]

        report = projected_coverage(samples, g, CoverageConfig(bins_per_dim=10))

        assert report.occupied['x'] == 1
        assert report.out_of_bounds['x'] == 1

    def test_bin_cells_upper_edge(self):
        """测试上边界值落入最后一个格子"""
        cells, outside = bin_cells(np.array([[1.0], [0.0]]), np.array([0.0]), np.array([1.0]), 4)

        assert cells.tolist() == [[3], [0]]
        assert outside == 0

    def test_monotone_when_samples_added(self):
        """测试增加样本时每个变量的占据格子数不减"""
        g = parse_graph(LINE_DOC)
        rng = np.random.default_rng(6)
        samples = [make_sample(rng.uniform(), rng.uniform(size=2)) for _ in range(200)]

        previous = {'x': 0, 'y': 0}
        for count in range(0, 201, 20):
            occupied = projected_coverage(samples[:count], g).occupied
            assert all(occupied[v] >= previous[v] for v in previous)
            previous = occupied

    def test_invariant_under_permutation(self):
        """测试样本顺序不影响覆盖率"""
        g = parse_graph(LINE_DOC)
        rng = np.random.default_rng(9)
        samples = [make_sample(rng.uniform(), rng.uniform(size=2)) for _ in range(100)]

        base = projected_coverage(samples, g, CoverageConfig(bins_per_dim=7))
        for _ in range(5):
            order = rng.permutation(len(samples))
            shuffled = projected_coverage([samples[k] for k in order], g, CoverageConfig(bins_per_dim=7))
            assert shuffled.occupied == base.occupied
            assert shuffled.out_of_bounds == base.out_of_bounds

    def test_ik_arc_matches_oracle(self):
        """测试双连杆解析逆运动学：采样占据的格子与解曲线扫描一致"""
        g = build_scenario('ik_arc', 0)
        report = generate(g, prune_table(g), Strategy('random'), 1e9,
                          reward_cfg=RewardConfig(cost_source='cost_proxy'), seed=0, max_attempts=400)
        oracle = ik_arc_oracle_cells(20)

        sampled = occupied_joint_cells(report.samples, 20)

        assert len(report.samples) > 100
        assert len(sampled - oracle) <= 2
        assert len(sampled & oracle) >= 0.6 * len(oracle)

    @pytest.mark.slow
    def test_tree_reaches_ik_arc_oracle(self):
        """测试预算充足时 tree 占据解曲线扫描的（几乎）全部格子"""
        g = build_scenario('ik_arc', 0)
        report = generate(g, prune_table(g), Strategy('tree'), 1e9,
                          reward_cfg=RewardConfig(cost_source='cost_proxy', auto=True), seed=0,
                          max_attempts=4000)
        oracle = ik_arc_oracle_cells(20)

        sampled = occupied_joint_cells(report.samples, 20)

        assert len(sampled - oracle) <= 2
        assert len(sampled & oracle) >= 0.95 * len(oracle)

    @pytest.mark.slow
    def test_tree_coverage_on_handover(self):
        """测试 handover：tree 与 tree_warm 每个变量的归一化覆盖率（5 个种子平均）≥ 0.8×最佳专家"""
        budget, seeds = 60.0, range(5)
        reward = RewardConfig(cost_source='cost_proxy', auto=True)
        stores = []
        for index in range(1, 8):
            other = build_scenario('handover', index)
            stores.append(generate(other, prune_table(other), Strategy('tree'), budget,
                                   reward_cfg=reward, seed=index).warmstart)
        g = build_scenario('handover', 0)
        table = prune_table(g)

        def coverage_runs(make_strategy):
            return [generate(g, table, make_strategy(), budget, reward_cfg=reward, seed=seed).samples
                    for seed in seeds]

        expert_runs = {name: coverage_runs(lambda: load_expert(name, g, table))
                       for name in BUILTIN_EXPERTS if name.endswith('-handover')}
        best = max(expert_runs, key=lambda name: sum(len(s) for s in expert_runs[name]))
        reference = [projected_coverage(samples, g) for samples in expert_runs[best]]

        warm_store = WarmstartStore.merge(stores)
        for make_strategy in (lambda: Strategy('tree'), lambda: Strategy('tree_warm', store=warm_store)):
            reports = [projected_coverage(samples, g) for samples in coverage_runs(make_strategy)]
            for var_id in g.variable_ids:
                mine = np.mean([r.occupied[var_id] for r in reports])
                theirs = np.mean([r.occupied[var_id] for r in reference])
                assert mine >= 0.8 * theirs, var_id


class TestNormalization:
    """归一化测试类"""

    def test_ratio(self):
        """测试相对参考策略的比值"""
        report = CoverageReport(occupied={'x': 5, 'y': 0})
        reference = CoverageReport(occupied={'x': 10, 'y': 0})

        ratios = normalize_coverage(report, reference)

        assert ratios == {'x': 0.5, 'y': 1.0}

    def test_reference_zero(self):
        """测试参考为0而自身非0"""
        ratios = normalize_coverage(CoverageReport(occupied={'x': 3}), CoverageReport(occupied={'x': 0}))

        assert math.isinf(ratios['x'])

    def test_coverage_table(self):
        """测试汇总表：参考策略自身比值为1.0"""
        reports = {
            'tree': {'pick_place_0': CoverageReport(occupied={'t': 4, 'q1': 8})},
            'random': {'pick_place_0': CoverageReport(occupied={'t': 2, 'q1': 8})},
        }

        df = coverage_table(reports, 'tree')

        assert len(df) == 4
        assert (df.loc[df['strategy'] == 'tree', 'normalized_ratio'] == 1.0).all()
        row = df[(df['strategy'] == 'random') & (df['variable'] == 't')].iloc[0]
        assert row['normalized_ratio'] == 0.5

    def test_missing_reference(self):
        """测试没有参考策略时比值为空"""
        df = coverage_table({'random': {'g': CoverageReport(occupied={'x': 1})}}, 'tree')

        assert df['normalized_ratio'].isna().all()

    @pytest.mark.parametrize('values', [{'bins_per_dim': 0}, {'rate_window': 0.0}])
    def test_invalid_config(self, values):
        """测试非法覆盖率配置"""
        with pytest.raises(ConfigValidationError):
            CoverageConfig.from_dict(values)


class TestRateCurve:
    """采样率曲线测试类"""

    def test_constant_rate(self):
        """测试 1 秒内 10 个样本、窗口 0.1：最终采样率为 10"""
        report = RunReport('tree', 'g', 0, wall_time=1.0,
                           emission_times=list(np.linspace(0.05, 0.95, 10)))

        df = rate_curve(report, 0.1)

        assert len(df) == 10
        assert df['samples'].iloc[-1] == 10
        assert df['rate'].iloc[-1] == pytest.approx(10.0)
        assert list(df['samples']) == list(range(1, 11))

    def test_no_samples(self):
        """测试没有样本时曲线全为0"""
        df = rate_curve(RunReport('tree', 'g', 0, wall_time=2.0), 0.5)

        assert len(df) == 4
        assert (df['rate'] == 0.0).all()

    def test_last_boundary_clamped(self):
        """测试最后一个边界截断为 wall_time"""
        df = rate_curve(RunReport('tree', 'g', 0, wall_time=1.25, emission_times=[1.2]), 0.5)

        assert list(df['time']) == [0.5, 1.0, 1.25]
        assert df['samples'].iloc[-1] == 1

    def test_invalid_window(self):
        """测试窗口必须为正"""
        with pytest.raises(ValueError):
            rate_curve(RunReport('tree', 'g', 0, wall_time=1.0), 0.0)
