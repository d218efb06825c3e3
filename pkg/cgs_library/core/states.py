"""
计算状态与转移表模块

计算状态是已赋值变量的下标集合（幂集格中的元素），有效转移 s_i → s_j
要求 s_i ⊂ s_j。本模块枚举全部有效转移，并按以下顺序剪枝:
    1. 零概率剪枝：新激活等式行数 > 新增自由度
    2. 条件独立剪枝：新变量在删除已赋值变量后分成 ≥2 个连通分量
    3. 闭包剪枝：反复移除通往死胡同的转移与不可达状态出发的转移，直到不动点
"""

import itertools
import pandas as pd
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .graph import ConstraintGraph, components_of_mask
from ..exceptions import LatticeSizeError
from ..utils import format_id_set


MAX_LATTICE_VARIABLES = 20

ZERO_PROBABILITY = 'zero_probability'
COND_INDEPENDENCE = 'cond_independence'
DEAD_END = 'dead_end'
UNREACHABLE = 'unreachable'
PRUNE_TAGS = (ZERO_PROBABILITY, COND_INDEPENDENCE, DEAD_END, UNREACHABLE)


@dataclass(frozen=True, order=True)
class ComputationState:
    """计算状态：已赋值变量下标集合，内部用位掩码表示"""

    mask: int

    @property
    def members(self) -> Tuple[int, ...]:
        """变量下标（升序）"""
        return tuple(i for i in range(self.mask.bit_length()) if self.mask >> i & 1)

    @classmethod
    def of(cls, g: ConstraintGraph, var_ids: Iterable[str]) -> 'ComputationState':
        return cls(g.mask_of(var_ids))

    def ids(self, g: ConstraintGraph) -> Tuple[str, ...]:
        return g.ids_of_mask(self.mask)

    def label(self, g: ConstraintGraph) -> str:
        """规范文本形式，如 `{t,q1}`"""
        return format_id_set(self.ids(g))

    def issubset(self, other: 'ComputationState') -> bool:
        return self.mask & ~other.mask == 0

    def __len__(self) -> int:
        return bin(self.mask).count('1')


EMPTY_STATE = ComputationState(0)


@dataclass
class Transition:
    """有效转移 source → target 及剪枝标记"""

    source: ComputationState
    target: ComputationState
    new_vars: Tuple[str, ...]
    new_dof: int
    new_eq_rows: int
    pruned_by: Optional[str] = None

    @property
    def new_mask(self) -> int:
        return self.target.mask & ~self.source.mask

    @property
    def survives(self) -> bool:
        return self.pruned_by is None

    def label(self, g: ConstraintGraph) -> str:
        return f"{self.source.label(g)}->{self.target.label(g)}"


@dataclass
class TransitionTable:
    """按源状态索引的转移表"""

    graph: ConstraintGraph
    transitions: List[Transition]
    _by_source: Dict[int, List[Transition]] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.reindex()

    def reindex(self) -> None:
        """重建存活转移索引（剪枝后调用）"""
        self._by_source = {}
        for t in self.transitions:
            if t.survives:
                self._by_source.setdefault(t.source.mask, []).append(t)

    @property
    def goal(self) -> ComputationState:
        return ComputationState((1 << self.graph.n) - 1)

    @property
    def root(self) -> ComputationState:
        return EMPTY_STATE

    @property
    def total(self) -> int:
        return len(self.transitions)

    @property
    def surviving(self) -> int:
        return sum(1 for t in self.transitions if t.survives)

    @property
    def pruning_ratio(self) -> float:
        return (self.total - self.surviving) / self.total if self.total else 0.0

    def counts(self) -> Dict[str, int]:
        """总数、各规则剪枝数、存活数"""
        counts = {'total': self.total}
        for tag in PRUNE_TAGS:
            counts[tag] = sum(1 for t in self.transitions if t.pruned_by == tag)
        counts['surviving'] = self.surviving
        return counts

    def successors(self, state: ComputationState) -> List[ComputationState]:
        """存活转移的目标状态（声明顺序即目标掩码升序）"""
        return [t.target for t in self._by_source.get(state.mask, [])]

    def outgoing(self, state: ComputationState) -> List[Transition]:
        return list(self._by_source.get(state.mask, []))

    def find(self, source: ComputationState, target: ComputationState) -> Optional[Transition]:
        for t in self.transitions:
            if t.source == source and t.target == target:
                return t
        return None

    def surviving_transitions(self) -> List[Transition]:
        return [t for t in self.transitions if t.survives]

    def has_path(self) -> bool:
        """是否存在一条由存活转移组成的 ∅ → S 路径"""
        return self.goal.mask in _reachable(self.surviving_transitions(), self.root.mask)

    def label(self, state: ComputationState) -> str:
        return state.label(self.graph)

    def report(self) -> str:
        """剪枝报告文本（总数、各规则剪枝数、存活数、剪枝比例）"""
        counts = self.counts()
        lines = [
            f"图: {self.graph.name}  变量数: {self.graph.n}",
            f"转移总数: {counts['total']}",
            f"  零概率剪枝: {counts[ZERO_PROBABILITY]}",
            f"  条件独立剪枝: {counts[COND_INDEPENDENCE]}",
            f"  死胡同闭包: {counts[DEAD_END]}",
            f"  不可达闭包: {counts[UNREACHABLE]}",
            f"存活转移: {counts['surviving']}",
            f"剪枝比例: {self.pruning_ratio * 100:.2f}%",
        ]
        return "\n".join(lines)


def _equality_rows(g: ConstraintGraph, row_override: Optional[Mapping[str, int]]) -> List[Tuple[int, int]]:
    rows = []
    for position, con in enumerate(g.constraints):
        if not con.is_equality:
            continue
        codim = con.codim
        if row_override and con.id in row_override:
            codim = int(row_override[con.id])
        rows.append((g.scope_mask(position), codim))
    return rows


def enumerate_transitions(g: ConstraintGraph, row_override: Optional[Mapping[str, int]] = None,
                          max_variables: int = MAX_LATTICE_VARIABLES) -> TransitionTable:
    """
    枚举全部有效转移（未剪枝），共 3^n − 2^n 条

    Args:
        g: 约束图
        row_override: 约束ID → 替代等式行数（灵敏度分析用）
        max_variables: 格规模上限

    Returns:
        未剪枝的转移表，按 (源掩码, 目标掩码) 升序排列

    Raises:
        LatticeSizeError: 变量数超过上限
    """
    n = g.n
    if n > max_variables:
        raise LatticeSizeError(f"变量数 {n} 超过格规模上限 {max_variables}", entity=g.name)

    dims = [v.dim for v in g.variables]
    eq_rows = _equality_rows(g, row_override)
    full = (1 << n) - 1
    transitions = []

    for source in range(full + 1):
        rest = full & ~source
        targets = []
        sub = rest
        while sub:
            targets.append(source | sub)
            sub = (sub - 1) & rest
        for target in sorted(targets):
            new = target & ~source
            new_dof = sum(dims[i] for i in range(n) if new >> i & 1)
            new_eq_rows = sum(codim for scope, codim in eq_rows
                              if not scope & ~target and scope & ~source)
            transitions.append(Transition(
                ComputationState(source), ComputationState(target),
                g.ids_of_mask(new), new_dof, new_eq_rows))
    return TransitionTable(g, transitions)


def prune_zero_probability(t: Transition, g: ConstraintGraph) -> bool:
    """新激活等式行数超过新增自由度时成功概率为0"""
    return t.new_eq_rows > t.new_dof


def prune_cond_independence(t: Transition, g: ConstraintGraph) -> bool:
    """新变量条件独立（≥2 个连通分量）时联合采样与分步采样等价"""
    return len(components_of_mask(g, t.source.mask, t.new_mask)) >= 2


def _reachable(transitions: Iterable[Transition], start: int) -> set:
    forward: Dict[int, List[int]] = {}
    for t in transitions:
        forward.setdefault(t.source.mask, []).append(t.target.mask)
    seen = {start}
    frontier = [start]
    while frontier:
        node = frontier.pop()
        for nxt in forward.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return seen


def _co_reachable(transitions: Iterable[Transition], goal: int) -> set:
    backward: Dict[int, List[int]] = {}
    for t in transitions:
        backward.setdefault(t.target.mask, []).append(t.source.mask)
    seen = {goal}
    frontier = [goal]
    while frontier:
        node = frontier.pop()
        for prev in backward.get(node, ()):
            if prev not in seen:
                seen.add(prev)
                frontier.append(prev)
    return seen


def closure_prune(table: TransitionTable) -> TransitionTable:
    """
    死胡同/不可达闭包剪枝，迭代到不动点

    Args:
        table: 已完成规则剪枝的转移表

    Returns:
        同一个转移表（原地标记后重建索引）
    """
    root, goal = table.root.mask, table.goal.mask
    changed = True
    while changed:
        changed = False
        alive = table.surviving_transitions()
        can_finish = _co_reachable(alive, goal)
        for t in alive:
            if t.target.mask not in can_finish:
                t.pruned_by = DEAD_END
                changed = True

        alive = table.surviving_transitions()
        reached = _reachable(alive, root)
        for t in alive:
            if t.source.mask not in reached:
                t.pruned_by = UNREACHABLE
                changed = True
    table.reindex()
    return table


def prune_table(g: ConstraintGraph, row_override: Optional[Mapping[str, int]] = None,
                closure: bool = True) -> TransitionTable:
    """
    枚举并剪枝：零概率 → 条件独立 → 闭包

    Args:
        g: 约束图
        row_override: 替代等式行数
        closure: 是否执行闭包剪枝

    Returns:
        剪枝后的转移表
    """
    table = enumerate_transitions(g, row_override)
    for t in table.transitions:
        if prune_zero_probability(t, g):
            t.pruned_by = ZERO_PROBABILITY
        elif prune_cond_independence(t, g):
            t.pruned_by = COND_INDEPENDENCE
    table.reindex()
    return closure_prune(table) if closure else table


def sensitivity_sweep(g: ConstraintGraph, grasp_rows: Sequence[int] = (1, 2, 3),
                      position_rows: Sequence[int] = (1, 2, 3)) -> pd.DataFrame:
    """
    等式行数灵敏度分析：替换 Grasp*/Position* 约束的行数后重新统计存活转移

    Args:
        g: 约束图
        grasp_rows: Grasp 约束候选行数
        position_rows: Position 约束候选行数

    Returns:
        每种行数组合一行的 DataFrame
    """
    grasp_ids = [c.id for c in g.constraints if c.is_equality and c.id.startswith('Grasp')]
    position_ids = [c.id for c in g.constraints if c.is_equality and c.id.startswith('Position')]
    if not position_ids:
        position_rows = (None,)

    records = []
    for grasp, position in itertools.product(grasp_rows, position_rows):
        override = {cid: grasp for cid in grasp_ids}
        if position is not None:
            override.update({cid: position for cid in position_ids})
        table = prune_table(g, override)
        counts = table.counts()
        records.append({
            'graph': g.name,
            'grasp_rows': grasp,
            'position_rows': position,
            'total': counts['total'],
            'zero_probability': counts[ZERO_PROBABILITY],
            'cond_independence': counts[COND_INDEPENDENCE],
            'dead_end': counts[DEAD_END],
            'unreachable': counts[UNREACHABLE],
            'surviving': counts['surviving'],
            'pruning_ratio': round(table.pruning_ratio, 6),
            'has_path': table.has_path(),
        })
    return pd.DataFrame(records)


def to_dot(table: TransitionTable) -> str:
    """存活转移图的 DOT 文本"""
    g = table.graph
    lines = [f'digraph "{g.name}" {{', '  rankdir=LR;']
    states = sorted({t.source for t in table.surviving_transitions()} |
                    {t.target for t in table.surviving_transitions()})
    for state in states:
        shape = 'doublecircle' if state == table.goal else 'ellipse'
        lines.append(f'  s{state.mask} [label="{state.label(g)}", shape={shape}];')
    for t in table.surviving_transitions():
        lines.append(f'  s{t.source.mask} -> s{t.target.mask} '
                     f'[label="+{t.new_dof}dof/{t.new_eq_rows}eq"];')
    lines.append('}')
    return "\n".join(lines) + "\n"
