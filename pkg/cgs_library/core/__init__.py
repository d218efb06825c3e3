"""
CGS Core Modules

核心计算模块，包含：
- graph: 约束图模型、问题描述文件解析与序列化
- residuals: 残差函数库（平面运动学、位姿、区域、避障）
- solver: 条件投影采样求解器
- states: 计算状态、转移枚举与剪枝
- mcts: UCT 搜索树、奖励与热启动
- runtime: 采样运行时（tree / tree_warm / expert / random）
- metrics: 投影覆盖率与采样率曲线
- scenarios: 内置场景族
- loader / validator / exporter: 加载、样本复查与结果导出
"""

from .graph import (
    ConstraintGraph, ConstraintSpec, VariableSpec, check_assignment, conditional_independence_components,
    eval_residual, graph_adjacency, parse_adjacency, parse_graph, serialize_graph,
)
from .solver import SampleAttemptResult, SolverConfig, conditional_sample, residual_stack
from .states import (
    ComputationState, Transition, TransitionTable, enumerate_transitions, prune_table,
    sensitivity_sweep, to_dot,
)
from .mcts import (
    History, RewardConfig, SearchNode, SearchTree, WarmstartStore, auto_lambda, backpropagate,
    best_sequence, rollout, select_child, warmstart_apply,
)
from .runtime import RunReport, SampleRecord, Strategy, generate, load_expert
from .metrics import (
    CoverageConfig, CoverageReport, coverage_table, normalize_coverage, projected_coverage, rate_curve,
)
from .scenarios import SCENARIOS, build_scenario, scenario_witness
from .loader import GraphLoader
from .validator import SampleValidator
from .exporter import ResultExporter, transition_stats_frame

__all__ = [
    'ConstraintGraph', 'ConstraintSpec', 'VariableSpec', 'check_assignment',
    'conditional_independence_components', 'eval_residual', 'graph_adjacency', 'parse_adjacency',
    'parse_graph', 'serialize_graph',
    'SampleAttemptResult', 'SolverConfig', 'conditional_sample', 'residual_stack',
    'ComputationState', 'Transition', 'TransitionTable', 'enumerate_transitions', 'prune_table',
    'sensitivity_sweep', 'to_dot',
    'History', 'RewardConfig', 'SearchNode', 'SearchTree', 'WarmstartStore', 'auto_lambda',
    'backpropagate', 'best_sequence', 'rollout', 'select_child', 'warmstart_apply',
    'RunReport', 'SampleRecord', 'Strategy', 'generate', 'load_expert',
    'CoverageConfig', 'CoverageReport', 'coverage_table', 'normalize_coverage', 'projected_coverage',
    'rate_curve',
    'SCENARIOS', 'build_scenario', 'scenario_witness',
    'GraphLoader', 'SampleValidator', 'ResultExporter', 'transition_stats_frame',
]
