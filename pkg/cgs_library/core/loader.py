"""
加载器模块

负责加载问题描述文件、场景实例、专家序列、热启动存储与样本文件。
"""

import os
import numpy as np
from typing import Dict, List, Optional, Tuple

from .graph import ConstraintGraph, parse_graph
from .mcts import History, WarmstartStore
from .runtime import SampleRecord, Strategy, load_expert
from .scenarios import SCENARIOS, build_scenario
from .states import ComputationState, TransitionTable
from ..utils import parse_scenario_selector, validate_file_exists


class GraphLoader:
    """问题描述与运行数据加载器"""

    def __init__(self, fixtures_directory: str = "."):
        """
        初始化加载器

        Args:
            fixtures_directory: 问题描述文件目录
        """
        self.fixtures_directory = fixtures_directory

    def load_graph_file(self, file_path: str) -> ConstraintGraph:
        """
        加载问题描述文件

        Args:
            file_path: 文件路径（相对路径先按当前目录，再按 fixtures 目录查找）

        Returns:
            约束图

        Raises:
            FileNotFoundError: 文件不存在
            GraphParseError: 解析失败
        """
        path = self._resolve(file_path)
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
        name = os.path.splitext(os.path.basename(path))[0]
        g = parse_graph(text, name=name)
        print(f"📋 已加载问题描述: {path} ({g.n} 个变量, {len(g.constraints)} 个约束)")
        return g

    def _resolve(self, file_path: str) -> str:
        if os.path.exists(file_path):
            return file_path
        candidate = os.path.join(self.fixtures_directory, file_path)
        if os.path.exists(candidate):
            return candidate
        raise FileNotFoundError(f"问题描述文件不存在: {file_path}")

    def load_graph(self, source: str) -> Tuple[ConstraintGraph, str, int]:
        """
        按 `name:index` 场景选择器或文件路径加载约束图

        Args:
            source: 如 'handover:3'、'pick_place' 或 'fixtures/pick_place.cg'

        Returns:
            (约束图, 场景族名称, 实例索引)；文件来源的场景族名称为图名称、索引为0
        """
        if source.partition(':')[0].strip() in SCENARIOS:
            selector = parse_scenario_selector(source)
            g = build_scenario(selector['name'], selector['index'])
            return g, selector['name'], selector['index']
        g = self.load_graph_file(source)
        return g, g.name, 0

    def load_strategy(self, spec: str, g: ConstraintGraph, table: Optional[TransitionTable] = None,
                      warmstart_path: Optional[str] = None, n_equiv: int = 10) -> Strategy:
        """
        解析策略描述：`tree`、`tree_warm`、`random` 或 `expert:<名称|文件|内联序列>`

        Args:
            spec: 策略描述
            g: 约束图
            table: 转移表（校验专家序列）
            warmstart_path: tree_warm 使用的热启动文件
            n_equiv: 等效访问次数

        Returns:
            Strategy
        """
        tag, _, argument = spec.partition(':')
        if tag == 'expert':
            source = argument
            resolved = os.path.join(self.fixtures_directory, argument)
            if not os.path.isfile(argument) and os.path.isfile(resolved):
                source = resolved
            strategy = load_expert(source, g, table)
            strategy.name = f"expert:{argument}"
            return strategy
        strategy = Strategy(tag)
        if tag == 'tree_warm' and warmstart_path:
            strategy.warmstart_path = warmstart_path
            strategy.store = self.load_warmstart(warmstart_path, n_equiv)
        return strategy

    def load_warmstart(self, file_path: str, n_equiv: int = 10) -> WarmstartStore:
        """
        加载热启动存储，文件不存在时返回空存储

        Args:
            file_path: 文件路径
            n_equiv: 等效访问次数

        Returns:
            WarmstartStore
        """
        if not validate_file_exists(file_path, "热启动文件"):
            return WarmstartStore(n_equiv=n_equiv)
        with open(file_path, 'r', encoding='utf-8') as f:
            store = WarmstartStore.from_text(f.read(), n_equiv=n_equiv)
        print(f"📋 已加载热启动存储: {file_path} ({len(store)} 个节点)")
        return store

    def load_samples(self, file_path: str, g: ConstraintGraph) -> List[SampleRecord]:
        """
        加载样本文件（ResultExporter.export_samples 的输出）

        Args:
            file_path: 样本文件路径
            g: 样本所属的约束图

        Returns:
            样本列表
        """
        samples = []
        with open(file_path, 'r', encoding='utf-8') as f:
            for line in f:
                line = line.strip()
                if line and not line.startswith('#'):
                    samples.append(parse_sample_line(line, g))
        print(f"✅ {os.path.basename(file_path)}: {len(samples)} 个样本")
        return samples

    def __str__(self) -> str:
        return f"GraphLoader(fixtures_directory='{self.fixtures_directory}')"


def _parse_history(signature: str, g: ConstraintGraph) -> History:
    states = []
    for label in signature.split('|'):
        ids = [v for v in label.strip('{}').split(',') if v]
        states.append(ComputationState.of(g, ids))
    return History(tuple(states))


def parse_sample_line(line: str, g: ConstraintGraph) -> SampleRecord:
    """
    解析样本行 `seed=<s> seq=<signature> max_eq=<v> max_ineq=<v> timings=<t,...> <var>=<v,...> ...`
    """
    fields = dict(token.split('=', 1) for token in line.split())
    values = {v: np.array([float(x) for x in fields[v].split(',')]) for v in g.variable_ids}
    timings = [float(x) for x in fields.get('timings', '').split(',') if x]
    return SampleRecord(
        values=values,
        sequence_used=_parse_history(fields['seq'], g),
        max_eq=float(fields['max_eq']),
        max_ineq=float(fields['max_ineq']),
        timings=timings,
        seed=int(fields['seed']),
    )
