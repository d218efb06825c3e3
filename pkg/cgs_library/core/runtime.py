"""
采样运行时模块

在给定时间预算内按策略反复尝试：从空状态出发选择转移、执行条件采样，
到达全集 S 的完整可行赋值作为样本输出。支持四种策略:
    tree       UCT 搜索树（每次尝试即一次 rollout）
    tree_warm  带热启动先验的搜索树
    expert     固定采样顺序
    random     每个状态在存活转移中均匀随机选择
"""

import os
import time
import dataclasses
import numpy as np
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .graph import ConstraintGraph, check_assignment
from .solver import SolverConfig, conditional_sample
from .states import ComputationState, EMPTY_STATE, TransitionTable
from .mcts import (
    History, RewardConfig, SearchTree, WarmstartStore, auto_lambda, best_sequence, requalify, rollout,
    warmstart_apply,
)
from ..exceptions import NoPathError, StrategyValidationError
from ..utils import split_top_level


STRATEGY_TAGS = ('tree', 'tree_warm', 'expert', 'random')

# 代理时钟下每次操作的固定开销（代理单位）
PROXY_OVERHEAD = 10


# 专家采样顺序：每个元素是一次联合采样的变量组
BUILTIN_EXPERTS: Dict[str, List[Tuple[str, ...]]] = {
    'expert1-handover': [('q_a1', 'q_a2', 't_a', 'q_b1', 'q_b2', 't_b', 'p')],
    'expert2-handover': [('p',), ('t_a',), ('t_b',), ('q_a1',), ('q_a2',), ('q_b2',), ('q_b1',)],
    'expert3-handover': [('q_a1', 't_a'), ('q_a2', 'p', 'q_b2', 't_b'), ('q_b1',)],
    'expert1-banana': [('q_a1', 'q_a2', 't_a', 'p', 'q_x', 't_x', 'q_b1', 'q_b2', 't_b')],
    'expert2-banana': [('p',), ('t_a',), ('t_b',), ('t_x',), ('q_a1',), ('q_a2',), ('q_x',),
                       ('q_b1',), ('q_b2',)],
    'expert3-banana': [('q_a1', 't_a'), ('q_a2', 'p'), ('q_x', 't_x'), ('q_b1', 't_b'), ('q_b2',)],
    'expert1-pick_place': [('t', 'q1', 'q2')],
    'expert2-pick_place': [('t',), ('q1',), ('q2',)],
    'expert3-pick_place': [('t', 'q1'), ('q2',)],
}


@dataclass
class Strategy:
    """采样策略"""

    tag: str
    name: str = ''
    expert_sequence: Optional[Tuple[ComputationState, ...]] = None
    warmstart_path: Optional[str] = None
    store: Optional[WarmstartStore] = None

    def __post_init__(self):
        if self.tag not in STRATEGY_TAGS:
            raise StrategyValidationError(f"未知策略: {self.tag}，可选 {', '.join(STRATEGY_TAGS)}",
                                          entity=self.tag)
        if not self.name:
            self.name = self.tag

    @property
    def uses_tree(self) -> bool:
        return self.tag in ('tree', 'tree_warm')

    def validate(self, table: TransitionTable) -> None:
        """
        校验策略：专家序列必须严格递增、以 S 结尾且每个转移都未被剪枝

        Raises:
            StrategyValidationError: 校验失败
        """
        if self.tag != 'expert':
            return
        if not self.expert_sequence:
            raise StrategyValidationError("expert 策略缺少采样顺序", entity=self.name)
        validate_sequence(self.expert_sequence, table, self.name)


def validate_sequence(sequence: Sequence[ComputationState], table: TransitionTable,
                      name: str = 'expert') -> None:
    g = table.graph
    if sequence[0] != EMPTY_STATE:
        raise StrategyValidationError("采样顺序必须从空状态开始", entity=name)
    if sequence[-1] != table.goal:
        missing = g.ids_of_mask(table.goal.mask & ~sequence[-1].mask)
        raise StrategyValidationError(f"采样顺序没有到达全集 S，缺少变量 {list(missing)}", entity=name)
    for source, target in zip(sequence, sequence[1:]):
        if source == target or not source.issubset(target):
            raise StrategyValidationError(
                f"采样顺序必须严格递增: {source.label(g)} -> {target.label(g)}", entity=name)
        transition = table.find(source, target)
        if transition is None or not transition.survives:
            reason = transition.pruned_by if transition else 'missing'
            raise StrategyValidationError(
                f"转移 {source.label(g)} -> {target.label(g)} 已被剪枝 ({reason})", entity=name)


def parse_expert_text(text: str) -> List[Tuple[str, ...]]:
    """
    解析专家序列文本：每行一步（或用 `;` 分隔），组内变量用空格或逗号分隔，`#` 为注释
    """
    steps = []
    for raw in text.replace(';', '\n').splitlines():
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        ids = tuple(token for part in split_top_level(line.strip('()'))
                    for token in part.split())
        steps.append(ids)
    return steps


def load_expert(source: str, g: ConstraintGraph, table: Optional[TransitionTable] = None) -> Strategy:
    """
    加载专家策略

    Args:
        source: 内置名称（如 'expert2-handover'）、专家文件路径或内联序列（如 't;q1;q2'）
        g: 约束图
        table: 提供时校验每个转移均未被剪枝

    Returns:
        expert 策略

    Raises:
        StrategyValidationError: 未知变量、变量重复、未到达 S 或转移被剪枝
    """
    if source in BUILTIN_EXPERTS:
        steps, name = BUILTIN_EXPERTS[source], source
    elif os.path.isfile(source):
        with open(source, 'r', encoding='utf-8') as f:
            steps = parse_expert_text(f.read())
        name = os.path.splitext(os.path.basename(source))[0]
    else:
        steps, name = parse_expert_text(source), source

    known = set(g.variable_ids)
    seen = set()
    states = [EMPTY_STATE]
    for step in steps:
        unknown = [v for v in step if v not in known]
        if unknown:
            raise StrategyValidationError(f"专家序列引用了未知变量 {unknown}", entity=name)
        repeated = [v for v in step if v in seen]
        if repeated:
            raise StrategyValidationError(f"专家序列中变量重复出现 {repeated}", entity=name)
        seen.update(step)
        states.append(ComputationState(states[-1].mask | g.mask_of(step)))

    sequence = tuple(states)
    if sequence[-1].mask != (1 << g.n) - 1:
        missing = [v for v in g.variable_ids if v not in seen]
        raise StrategyValidationError(f"专家序列没有到达全集 S，缺少变量 {missing}", entity=name)
    strategy = Strategy('expert', name=name, expert_sequence=sequence)
    if table is not None:
        strategy.validate(table)
    return strategy


@dataclass
class SampleRecord:
    """一个完整可行样本"""

    values: Dict[str, np.ndarray]
    sequence_used: History
    max_eq: float
    max_ineq: float
    timings: List[float]
    seed: int

    def slice(self, var_id: str) -> np.ndarray:
        """样本在单个变量子空间上的投影"""
        return self.values[var_id]


@dataclass
class TransitionStats:
    """单个转移的尝试统计"""

    attempts: int = 0
    successes: int = 0
    total_cost: float = 0.0

    @property
    def success_rate(self) -> float:
        return self.successes / self.attempts if self.attempts else 0.0

    @property
    def mean_cost(self) -> float:
        return self.total_cost / self.attempts if self.attempts else 0.0


@dataclass
class RunReport:
    """一次 generate 运行的报告"""

    strategy: str
    graph_name: str
    seed: int
    samples: List[SampleRecord] = field(default_factory=list)
    attempts: int = 0
    wall_time: float = 0.0
    transition_stats: Dict[str, TransitionStats] = field(default_factory=dict)
    emission_times: List[float] = field(default_factory=list)
    lam: float = 0.5
    cost_source: str = 'cost_proxy'
    best_sequence: str = ''
    warmstart: Optional[WarmstartStore] = None
    labels: Dict[str, str] = field(default_factory=dict)

    @property
    def samples_per_second(self) -> float:
        return len(self.samples) / self.wall_time if self.wall_time > 0 else 0.0

    def to_row(self) -> Dict[str, object]:
        """CSV 汇总行"""
        row = dict(self.labels)
        row.update({
            'strategy': self.strategy,
            'graph': self.graph_name,
            'seed': self.seed,
            'attempts': self.attempts,
            'samples': len(self.samples),
            'wall_time': round(self.wall_time, 9),
            'samples_per_second': round(self.samples_per_second, 9),
            'lambda': round(self.lam, 9),
            'cost_source': self.cost_source,
            'best_sequence': self.best_sequence,
            'status': 'ok',
        })
        return row


class WallClock:
    """墙钟：从创建开始计时"""

    def __init__(self):
        self._start = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self._start

    def charge(self, cost_proxy: int, elapsed: float) -> float:
        return elapsed


class ProxyClock:
    """代理时钟：按确定性代价推进，保证同一种子下结果逐位可复现"""

    def __init__(self, proxy_unit: float = 1000.0, overhead: int = PROXY_OVERHEAD):
        self.proxy_unit = proxy_unit
        self.overhead = overhead
        self._now = 0.0

    def elapsed(self) -> float:
        return self._now

    def charge(self, cost_proxy: int, elapsed: float) -> float:
        duration = (cost_proxy + self.overhead) / self.proxy_unit
        self._now += duration
        return duration


class _AttemptExecutor:
    """一次采样尝试的执行器：维护部分赋值并执行条件采样"""

    def __init__(self, g: ConstraintGraph, solver_cfg: SolverConfig, reward_cfg: RewardConfig,
                 clock, report: RunReport):
        self.g = g
        self.solver_cfg = solver_cfg
        self.reward_cfg = reward_cfg
        self.clock = clock
        self.report = report
        self.rng = np.random.default_rng(0)
        self.assignment: Dict[str, np.ndarray] = {}
        self.timings: List[float] = []

    def begin(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)
        self.reset()

    def reset(self) -> None:
        self.assignment = {}
        self.timings = []

    def step(self, source: ComputationState, target: ComputationState) -> Tuple[bool, float]:
        new_vars = self.g.ids_of_mask(target.mask & ~source.mask)
        result = conditional_sample(self.g, self.assignment, new_vars, self.solver_cfg, self.rng)
        duration = self.clock.charge(result.cost_proxy, result.elapsed)
        self.timings.append(duration)

        key = f"{source.label(self.g)}->{target.label(self.g)}"
        stats = self.report.transition_stats.setdefault(key, TransitionStats())
        stats.attempts += 1
        stats.total_cost += duration
        if result.feasible:
            stats.successes += 1
            self.assignment.update(result.values)
        return result.feasible, self.reward_cfg.transition_cost(result.cost_proxy, result.elapsed)


def _walk(table: TransitionTable, executor: _AttemptExecutor, choose) -> Tuple[History, bool, List[float]]:
    history = History()
    costs = []
    for _ in range(table.graph.n):
        state = history.last
        if state == table.goal:
            break
        target = choose(state)
        if target is None:
            return history, False, costs
        ok, cost = executor.step(state, target)
        costs.append(cost)
        history = history.extend(target)
        if not ok:
            return history, False, costs
    return history, history.last == table.goal, costs


def generate(g: ConstraintGraph, table: TransitionTable, strategy: Strategy, budget: float,
             solver_cfg: Optional[SolverConfig] = None, reward_cfg: Optional[RewardConfig] = None,
             seed: int = 0, calibration_rollouts: int = 20, max_attempts: Optional[int] = None,
             verbose: bool = False) -> RunReport:
    """
    在时间预算内生成样本

    Args:
        g: 约束图
        table: 剪枝后的转移表
        strategy: 采样策略
        budget: 时间预算（秒；代理时钟下为代理秒）
        solver_cfg: 求解器配置
        reward_cfg: 奖励配置（cost_source 决定使用墙钟还是代理时钟；缺省时 λ 自动校准）
        seed: 运行种子
        calibration_rollouts: `lambda: auto` 时用于校准 λ 的前若干次树搜索 rollout
        max_attempts: 尝试次数上限（可选）
        verbose: 结束时打印一行摘要

    Returns:
        RunReport

    Raises:
        StrategyValidationError: 策略校验失败
        NoPathError: 转移表中不存在 ∅ → S 路径
    """
    if budget <= 0:
        raise StrategyValidationError(f"预算必须为正数，实际为 {budget}", entity=strategy.name)
    solver_cfg = solver_cfg or SolverConfig()
    reward_cfg = reward_cfg or RewardConfig(auto=True)
    strategy.validate(table)
    if not table.has_path():
        raise NoPathError(f"{g.name} 的存活转移中不存在 ∅ → S 路径", entity=g.name)

    run_seq, policy_seq = np.random.SeedSequence(seed).spawn(2)
    run_rng = np.random.default_rng(run_seq)
    policy_rng = np.random.default_rng(policy_seq)
    clock = ProxyClock(reward_cfg.proxy_unit) if reward_cfg.cost_source == 'cost_proxy' else WallClock()

    report = RunReport(strategy.name, g.name, seed, lam=reward_cfg.lam, cost_source=reward_cfg.cost_source)
    executor = _AttemptExecutor(g, solver_cfg, reward_cfg, clock, report)

    tree = None
    if strategy.uses_tree:
        store = strategy.store if strategy.tag == 'tree_warm' else None
        tree = SearchTree(table, reward_cfg.exploration)
        if store is not None:
            warmstart_apply(tree, store)

    def random_choice(state):
        options = table.successors(state)
        return options[int(policy_rng.integers(len(options)))] if options else None

    expert_next = {}
    if strategy.tag == 'expert':
        expert_next = dict(zip(strategy.expert_sequence, strategy.expert_sequence[1:]))

    calibrating = tree is not None and reward_cfg.auto
    calibration_rollouts = max(int(calibration_rollouts), 1)
    calibration_costs: List[float] = []

    while clock.elapsed() < budget:
        if max_attempts is not None and report.attempts >= max_attempts:
            break
        attempt_seed = int(run_rng.integers(2 ** 63))
        executor.begin(attempt_seed)
        report.attempts += 1

        if tree is not None:
            outcome = rollout(tree, executor, reward_cfg, policy_rng)
            history, reached = outcome.history, outcome.reached_goal
            if calibrating:
                calibration_costs.append(sum(outcome.costs))
                if len(calibration_costs) >= calibration_rollouts:
                    # 校准 rollout 的统计保留在树中，按新的 λ 重算 Q
                    reward_cfg = dataclasses.replace(reward_cfg, lam=auto_lambda(calibration_costs),
                                                     auto=False)
                    executor.reward_cfg = reward_cfg
                    report.lam = reward_cfg.lam
                    requalify(tree, reward_cfg)
                    calibrating = False
        elif strategy.tag == 'expert':
            history, reached, _ = _walk(table, executor, expert_next.get)
        else:
            history, reached, _ = _walk(table, executor, random_choice)

        if not reached:
            continue
        check = check_assignment(g, executor.assignment, solver_cfg.tol_eq, solver_cfg.tol_ineq)
        if not check.feasible:
            continue
        report.samples.append(SampleRecord(
            values={v: np.array(executor.assignment[v]) for v in g.variable_ids},
            sequence_used=history,
            max_eq=check.max_eq,
            max_ineq=check.max_ineq,
            timings=list(executor.timings),
            seed=attempt_seed,
        ))
        report.emission_times.append(clock.elapsed())

    report.wall_time = clock.elapsed()
    if tree is not None:
        report.best_sequence = best_sequence(tree).signature(g)
        report.warmstart = WarmstartStore(n_equiv=reward_cfg.n_equiv)
        report.warmstart.absorb(tree)

    if verbose:
        print(f"📋 {g.name} [{strategy.name}] seed={seed}: {len(report.samples)} 个样本 / "
              f"{report.attempts} 次尝试, {report.samples_per_second:.2f} 样本/秒")
    return report
