"""
蒙特卡洛树搜索模块

在赋值历史构成的MDP上做UCT选择。每次 rollout 都真实执行条件采样操作：
树策略沿 UCT 下降并只扩展一个新节点，之后用转移级统计的默认策略走到
目标状态或失败。奖励为 (1−λ)·r_g·[到达S] − λ·Σ r_t，按路径回传并以
滑动平均更新 Q 值。热启动把先前问题实例的平均 Q 值作为先验。
"""

import math
import numpy as np
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Mapping, Optional, Protocol, Sequence, Tuple

from .states import ComputationState, EMPTY_STATE, TransitionTable
from .graph import ConstraintGraph
from ..exceptions import ConfigValidationError


LAMBDA_FLOOR = 1e-6
LAMBDA_CEIL = 1.0 - 1e-6
COST_SOURCES = ('cost_proxy', 'wall_clock')


@dataclass(frozen=True)
class History:
    """赋值历史 (s_0, s_1, …, s_i)，从空集开始严格递增"""

    states: Tuple[ComputationState, ...] = (EMPTY_STATE,)

    def __post_init__(self):
        if not self.states or self.states[0] != EMPTY_STATE:
            raise ValueError("历史必须从空状态开始")
        for prev, nxt in zip(self.states, self.states[1:]):
            if prev == nxt or not prev.issubset(nxt):
                raise ValueError("历史中的状态必须严格递增")

    @property
    def last(self) -> ComputationState:
        return self.states[-1]

    def extend(self, state: ComputationState) -> 'History':
        return History(self.states + (state,))

    def signature(self, g: ConstraintGraph) -> str:
        """规范字符串键，如 `{}|{t}|{t,q1}`"""
        return "|".join(s.label(g) for s in self.states)

    def __len__(self) -> int:
        return len(self.states)


@dataclass
class RewardConfig:
    """奖励配置：λ 权衡时间代价与到达奖励"""

    lam: float = 0.5
    r_g: float = 1.0
    cost_source: str = 'cost_proxy'
    time_unit: float = 1.0
    proxy_unit: float = 1000.0
    exploration: float = 0.5
    n_equiv: int = 10
    auto: bool = False

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ConfigValidationError(f"lambda 必须在 (0, 1) 内，实际为 {self.lam}", entity='reward')
        if self.cost_source not in COST_SOURCES:
            raise ConfigValidationError(f"未知 cost_source: {self.cost_source}", entity='reward')
        if self.time_unit <= 0 or self.proxy_unit <= 0:
            raise ConfigValidationError("time_unit / proxy_unit 必须为正数", entity='reward')
        if self.exploration < 0:
            raise ConfigValidationError("exploration 不能为负", entity='reward')
        if int(self.n_equiv) < 1:
            raise ConfigValidationError("n_equiv 必须 ≥ 1", entity='reward')
        self.n_equiv = int(self.n_equiv)

    @classmethod
    def from_dict(cls, values: Optional[Mapping[str, Any]]) -> 'RewardConfig':
        """从配置字典构造，`lambda: auto`（或缺省）表示用校准 rollout 自动确定"""
        values = dict(values or {})
        lam = values.pop('lambda', values.pop('lam', 'auto'))
        auto = isinstance(lam, str) and lam.strip().lower() == 'auto'
        known = {k: v for k, v in values.items() if k in cls.__dataclass_fields__ and k != 'auto'}
        return cls(lam=0.5 if auto else float(lam), auto=auto, **known)

    def transition_cost(self, cost_proxy: float, elapsed: float) -> float:
        """把一次操作的代价换算为奖励单位 r_t"""
        if self.cost_source == 'cost_proxy':
            return cost_proxy / self.proxy_unit
        return elapsed / self.time_unit

    def expected_reward(self, goal_rate: float, mean_cost: float) -> float:
        """到达率与平均代价对应的期望奖励"""
        return (1.0 - self.lam) * self.r_g * goal_rate - self.lam * mean_cost

    def episode_reward(self, reached_goal: bool, costs: Sequence[float]) -> float:
        return self.expected_reward(float(reached_goal), float(sum(costs)))

    @property
    def reward_scale(self) -> float:
        """奖励量级 (1−λ)·r_g；λ 自动校准时等于平均代价项 λ·ĉ"""
        return (1.0 - self.lam) * self.r_g


@dataclass(eq=False)
class SearchNode:
    """搜索树节点，以赋值历史为键"""

    history: History
    parent: Optional['SearchNode'] = None
    q_value: float = 0.0
    visits: int = 0
    children: Dict[ComputationState, 'SearchNode'] = field(default_factory=dict)
    terminal: bool = False
    expanded: bool = False
    populated: bool = False
    stops: int = 0
    prior_visits: int = 0
    prior_q: float = 0.0
    # 真实访问上的到达率与平均总代价，λ 变化后据此重算 Q
    goal_mean: float = 0.0
    cost_mean: float = 0.0

    @property
    def state(self) -> ComputationState:
        return self.history.last

    def walk(self) -> Iterator['SearchNode']:
        """先序遍历子树"""
        yield self
        for child in self.children.values():
            yield from child.walk()


class TransitionExecutor(Protocol):
    """rollout 中执行转移的对象"""

    def reset(self) -> None:
        ...

    def step(self, source: ComputationState, target: ComputationState) -> Tuple[bool, float]:
        """执行 source → target，返回 (是否可行, 奖励单位的代价)"""
        ...


@dataclass
class WarmstartStore:
    """热启动存储：节点签名 → (平均Q值, 实例数)"""

    entries: Dict[str, Tuple[float, int]] = field(default_factory=dict)
    n_equiv: int = 10

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, signature: str) -> Optional[Tuple[float, int]]:
        return self.entries.get(signature)

    def record(self, signature: str, q_value: float, count: int = 1) -> None:
        """把一个（或 count 个）实例的 Q 值并入平均值"""
        if signature in self.entries:
            mean, n = self.entries[signature]
            self.entries[signature] = ((mean * n + q_value * count) / (n + count), n + count)
        else:
            self.entries[signature] = (float(q_value), int(count))

    def absorb(self, tree: 'SearchTree') -> None:
        """把一棵完成搜索的树作为一个先前实例并入存储（只取真实访问过的节点）"""
        for node in tree.root.walk():
            if node.visits > node.prior_visits:
                self.record(tree.signature(node), node.q_value)

    @classmethod
    def merge(cls, stores: Sequence['WarmstartStore'], n_equiv: int = 10) -> 'WarmstartStore':
        merged = cls(n_equiv=n_equiv)
        for store in stores:
            for signature, (mean, count) in store.entries.items():
                merged.record(signature, mean, count)
        return merged

    def to_text(self) -> str:
        """每行 `<signature> <mean_q> <instance_count>`，按签名排序"""
        return "".join(f"{sig} {mean!r} {count}\n" for sig, (mean, count) in sorted(self.entries.items()))

    @classmethod
    def from_text(cls, text: str, n_equiv: int = 10) -> 'WarmstartStore':
        store = cls(n_equiv=n_equiv)
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3 or int(parts[2]) < 1:
                raise ValueError(f"热启动文件第{line_no}行格式错误: {raw}")
            store.entries[parts[0]] = (float(parts[1]), int(parts[2]))
        return store


class TransitionValues:
    """
    与历史无关的转移统计 (到达次数, 总代价, 尝试次数)，供树外的默认策略使用

    每次 rollout 结束后，路径上的每个转移记入本次是否到达 S 以及从该转移起的剩余代价。
    """

    def __init__(self):
        self.stats: Dict[Tuple[int, int], List[float]] = {}

    def count(self, source: ComputationState, target: ComputationState) -> int:
        entry = self.stats.get((source.mask, target.mask))
        return int(entry[2]) if entry else 0

    def update(self, history: History, reached: bool, costs: Sequence[float]) -> None:
        remaining = float(sum(costs))
        for source, target, cost in zip(history.states, history.states[1:], costs):
            entry = self.stats.setdefault((source.mask, target.mask), [0.0, 0.0, 0.0])
            entry[0] += float(reached)
            entry[1] += remaining
            entry[2] += 1.0
            remaining -= cost

    def value(self, source: ComputationState, target: ComputationState,
              reward_cfg: RewardConfig) -> float:
        goals, cost, n = self.stats[(source.mask, target.mask)]
        return reward_cfg.expected_reward(goals / n, cost / n)

    def choose(self, state: ComputationState, options: Sequence[ComputationState],
               reward_cfg: RewardConfig, c: float, rng: np.random.Generator) -> ComputationState:
        """
        默认策略：未尝试过的转移中均匀随机选一个，全部尝试过后按转移级 UCB 选择

        Args:
            state: 当前状态
            options: 存活转移的目标状态（非空）
            reward_cfg: 奖励配置
            c: 探索常数（已按奖励量级缩放）
            rng: 随机数流

        Returns:
            目标状态
        """
        fresh = [t for t in options if self.count(state, t) == 0]
        if fresh:
            return fresh[int(rng.integers(len(fresh)))]
        log_total = math.log(sum(self.count(state, t) for t in options))
        scores = [self.value(state, t, reward_cfg) + c * math.sqrt(log_total / self.count(state, t))
                  for t in options]
        return options[int(np.argmax(scores))]


class SearchTree:
    """单次运行的 UCT 搜索树"""

    def __init__(self, table: TransitionTable, exploration: float = 1.0,
                 store: Optional[WarmstartStore] = None):
        self.table = table
        self.graph = table.graph
        self.exploration = exploration
        self.store = store
        self.moves = TransitionValues()
        self.root = SearchNode(History())
        self.root.expanded = True
        self._prime(self.root)
        self.populate(self.root)

    def signature(self, node: SearchNode) -> str:
        return node.history.signature(self.graph)

    def _prime(self, node: SearchNode) -> None:
        if self.store is None:
            return
        prior = self.store.lookup(self.signature(node))
        if prior is not None:
            node.q_value = prior[0]
            node.visits = self.store.n_equiv
            node.prior_visits = self.store.n_equiv
            node.prior_q = prior[0]

    def populate(self, node: SearchNode) -> None:
        """按声明顺序为所有存活转移创建子节点（零统计或热启动先验）"""
        if node.populated:
            return
        node.populated = True
        if node.state == self.table.goal:
            node.terminal = True
            return
        for target in self.table.successors(node.state):
            child = SearchNode(node.history.extend(target), parent=node)
            child.terminal = target == self.table.goal
            self._prime(child)
            node.children[target] = child

    def nodes(self) -> List[SearchNode]:
        return list(self.root.walk())


def select_child(node: SearchNode, c: float) -> ComputationState:
    """
    UCT 选择：argmax Q_i + c·sqrt(ln N / n_i)

    Args:
        node: 父节点（至少有一个子节点）
        c: 探索常数

    Returns:
        被选中子节点的状态；未访问子节点按声明顺序优先，平局取下标最小者

    Raises:
        LookupError: 没有可选子节点
    """
    if not node.children:
        raise LookupError("节点没有可选子节点")
    log_parent = math.log(max(node.visits, 1))
    best_state, best_score = None, -math.inf
    for state, child in node.children.items():
        if child.visits == 0:
            return state
        score = child.q_value + c * math.sqrt(log_parent / child.visits)
        if score > best_score:
            best_state, best_score = state, score
    return best_state


def backpropagate(leaf: SearchNode, reward: float,
                  outcome: Optional[Tuple[bool, float]] = None) -> None:
    """
    沿父指针回传奖励：visits += 1，Q 取滑动平均

    Args:
        leaf: rollout 停止的节点
        reward: 本次奖励
        outcome: (是否到达 S, 总代价)，提供时同时更新到达率与平均代价
    """
    leaf.stops += 1
    node = leaf
    while node is not None:
        node.visits += 1
        node.q_value += (reward - node.q_value) / node.visits
        if outcome is not None:
            real = node.visits - node.prior_visits
            node.goal_mean += (float(outcome[0]) - node.goal_mean) / real
            node.cost_mean += (outcome[1] - node.cost_mean) / real
        node = node.parent


def requalify(tree: SearchTree, reward_cfg: RewardConfig) -> SearchTree:
    """λ 改变后按到达率与平均代价重算各节点的 Q（热启动先验按 n_equiv 次访问保留）"""
    for node in tree.nodes():
        real = node.visits - node.prior_visits
        if real > 0:
            q_real = reward_cfg.expected_reward(node.goal_mean, node.cost_mean)
            node.q_value = (node.prior_visits * node.prior_q + real * q_real) / node.visits
    return tree


@dataclass
class RolloutOutcome:
    """一次 rollout 的结果"""

    history: History
    reached_goal: bool
    reward: float
    costs: List[float]
    leaf: SearchNode


def rollout(tree: SearchTree, executor: TransitionExecutor, reward_cfg: RewardConfig,
            rng: np.random.Generator) -> RolloutOutcome:
    """
    执行一次完整 rollout 并更新树

    探索常数按奖励量级 (1−λ)·r_g 缩放，Q 值的平移或缩放不改变选择。
    树外的默认策略使用转移级统计（见 TransitionValues）。

    Args:
        tree: 搜索树
        executor: 转移执行器
        reward_cfg: 奖励配置
        rng: 默认策略使用的随机数流

    Returns:
        RolloutOutcome；失败的转移进入吸收态并结束本次 rollout
    """
    table = tree.table
    c = tree.exploration * reward_cfg.reward_scale
    executor.reset()
    node = tree.root
    history = node.history
    costs: List[float] = []
    in_tree = True
    feasible = True

    for _ in range(tree.graph.n):
        state = history.last
        if state == table.goal:
            break
        if in_tree:
            tree.populate(node)
            if not node.children:
                feasible = False
                break
            target = select_child(node, c)
        else:
            options = table.successors(state)
            if not options:
                feasible = False
                break
            target = tree.moves.choose(state, options, reward_cfg, c, rng)

        ok, cost = executor.step(state, target)
        costs.append(cost)
        history = history.extend(target)
        if in_tree:
            node = node.children[target]
            if not node.expanded:
                node.expanded = True
                in_tree = False
        if not ok:
            feasible = False
            break

    reached = feasible and history.last == table.goal
    reward = reward_cfg.episode_reward(reached, costs)
    backpropagate(node, reward, (reached, float(sum(costs))))
    tree.moves.update(history, reached, costs)
    return RolloutOutcome(history, reached, reward, costs, node)


def auto_lambda(costs: Sequence[float]) -> float:
    """
    λ = 1/(ĉ+1)，ĉ 为校准 rollout 的平均总代价（奖励单位），结果截断到 (0, 1) 内

    Args:
        costs: 每次校准 rollout 的总代价

    Returns:
        λ
    """
    if len(costs) == 0:
        raise ValueError("至少需要一次校准 rollout")
    mean_cost = float(np.mean(costs))
    return float(np.clip(1.0 / (mean_cost + 1.0), LAMBDA_FLOOR, LAMBDA_CEIL))


def warmstart_apply(tree: SearchTree, store: WarmstartStore) -> SearchTree:
    """
    对签名出现在存储中的节点设置 Q = mean_q、visits = n_equiv；之后新建的节点也按存储初始化

    Args:
        tree: 搜索树
        store: 热启动存储

    Returns:
        同一棵树
    """
    tree.store = store
    if not store.entries:
        return tree
    for node in tree.nodes():
        if node.visits == node.prior_visits:
            tree._prime(node)
    return tree


def best_sequence(tree: SearchTree) -> History:
    """从根节点沿访问次数最多的子节点下降得到的最佳序列（平局取声明顺序靠前者）"""
    node = tree.root
    while node.children:
        visited = [c for c in node.children.values() if c.visits > c.prior_visits]
        if not visited:
            break
        node = max(visited, key=lambda c: c.visits - c.prior_visits)
    return node.history
