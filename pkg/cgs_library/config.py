"""
配置管理器

负责加载和管理YAML配置文件，支持配置继承和合并，并构造求解器、奖励、
覆盖率与实验配置对象。
"""

import os
import copy
import yaml
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from .exceptions import ConfigValidationError
from .core.solver import SolverConfig
from .core.mcts import RewardConfig
from .core.metrics import CoverageConfig
from .core.runtime import STRATEGY_TAGS


FIXTURES_ENV = 'CGS_FIXTURES_DIR'


def default_fixtures_dir() -> str:
    """问题描述文件目录：环境变量 CGS_FIXTURES_DIR 优先，否则为仓库下的 fixtures/"""
    env = os.environ.get(FIXTURES_ENV)
    if env:
        return env
    return os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'fixtures')


@dataclass
class ExperimentConfig:
    """实验配置：场景、策略、种子、预算、输出目录等"""

    scenario: str = 'pick_place:0'
    instances: List[int] = field(default_factory=lambda: [0])
    strategies: List[str] = field(default_factory=lambda: ['tree'])
    seeds: List[int] = field(default_factory=lambda: [0])
    budget: float = 10.0
    output_directory: str = 'output'
    warmstart_path: Optional[str] = None
    workers: int = 1
    calibration_rollouts: int = 20
    max_attempts: Optional[int] = None
    graph_file: Optional[str] = None

    def __post_init__(self):
        if not self.strategies:
            raise ConfigValidationError("至少需要一个策略", entity='experiment.strategies')
        if not self.seeds:
            raise ConfigValidationError("至少需要一个种子", entity='experiment.seeds')
        if self.budget is None or float(self.budget) <= 0:
            raise ConfigValidationError(f"预算必须为正数，实际为 {self.budget}", entity='experiment.budget')
        for strategy in self.strategies:
            tag = strategy.split(':', 1)[0]
            if tag not in STRATEGY_TAGS:
                raise ConfigValidationError(
                    f"未知策略: {strategy}，可选 {', '.join(STRATEGY_TAGS)}（expert 需写成 expert:<名称或文件>）",
                    entity='experiment.strategies')
            if tag == 'expert' and ':' not in strategy:
                raise ConfigValidationError("expert 策略需写成 expert:<名称或文件>", entity=strategy)
        if int(self.workers) < 0:
            raise ConfigValidationError("workers 不能为负", entity='experiment.workers')
        self.budget = float(self.budget)
        self.workers = int(self.workers)
        self.instances = [int(i) for i in self.instances]
        self.seeds = [int(s) for s in self.seeds]

    @property
    def scenario_name(self) -> str:
        return self.scenario.partition(':')[0]

    @classmethod
    def from_dict(cls, values: Optional[Dict[str, Any]]) -> 'ExperimentConfig':
        known = {k: v for k, v in (values or {}).items() if k in cls.__dataclass_fields__}
        return cls(**known)


class ConfigManager:
    """配置管理器类"""

    def __init__(self, config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None):
        """
        初始化配置管理器

        Args:
            config_path: 配置文件路径；为 None 时只使用覆盖项
            overrides: 点分隔键 → 值的覆盖项（通常来自命令行参数）

        Raises:
            FileNotFoundError: 当配置文件不存在时
            yaml.YAMLError: 当YAML文件格式错误时
        """
        self.config_path = config_path
        self.config = self._load_config() if config_path else {}
        for key_path, value in (overrides or {}).items():
            if value is not None:
                self.set(key_path, value)

    def _load_config(self) -> Dict[str, Any]:
        """
        加载配置文件，支持include机制

        Returns:
            配置字典
        """
        return self._load_file(self.config_path, seen=())

    def _load_file(self, path: str, seen: tuple) -> Dict[str, Any]:
        if not os.path.exists(path):
            raise FileNotFoundError(f"配置文件不存在: {path}")
        if os.path.abspath(path) in seen:
            raise ConfigValidationError(f"配置 include 形成循环: {path}", entity=path)

        with open(path, 'r', encoding='utf-8') as f:
            config = yaml.safe_load(f) or {}

        # 处理include机制
        if 'include' in config:
            base_path = self._resolve_include_path(config['include'], path)
            base_config = self._load_file(base_path, seen + (os.path.abspath(path),))
            config = self._merge_configs(base_config, config)
            del config['include']

        return config

    def _resolve_include_path(self, include_path: str, config_path: str) -> str:
        """
        解析include路径

        Args:
            include_path: 相对或绝对路径
            config_path: 当前配置文件路径

        Returns:
            绝对路径
        """
        if os.path.isabs(include_path):
            return include_path
        return os.path.join(os.path.dirname(config_path), include_path)

    def _merge_configs(self, base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
        """
        深度合并两个配置字典

        Args:
            base: 基础配置
            override: 覆盖配置

        Returns:
            合并后的配置
        """
        result = base.copy()

        for key, value in override.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = self._merge_configs(result[key], value)
            else:
                result[key] = value

        return result

    def get(self, key_path: str, default: Any = None) -> Any:
        """
        使用点分隔符获取嵌套配置值

        Args:
            key_path: 配置键路径，如 'solver.tol_eq'
            default: 默认值

        Returns:
            配置值

        Examples:
            >>> config.get('reward.exploration')
            1.0
        """
        keys = key_path.split('.')
        value = self.config

        try:
            for key in keys:
                value = value[key]
            return value
        except (KeyError, TypeError):
            return default

    def set(self, key_path: str, value: Any) -> None:
        """使用点分隔符设置嵌套配置值"""
        keys = key_path.split('.')
        node = self.config
        for key in keys[:-1]:
            if not isinstance(node.get(key), dict):
                node[key] = {}
            node = node[key]
        node[keys[-1]] = value

    def get_solver_config(self) -> SolverConfig:
        """
        获取求解器配置

        Returns:
            SolverConfig
        """
        return SolverConfig.from_dict(self.get('solver', {}))

    def get_reward_config(self) -> RewardConfig:
        """
        获取奖励配置（`lambda: auto` 表示自动校准）

        Returns:
            RewardConfig
        """
        return RewardConfig.from_dict(self.get('reward', {}))

    def get_coverage_config(self) -> CoverageConfig:
        """
        获取覆盖率配置

        Returns:
            CoverageConfig
        """
        return CoverageConfig.from_dict(self.get('coverage', {}))

    def get_experiment_config(self) -> ExperimentConfig:
        """
        获取实验配置

        Returns:
            ExperimentConfig
        """
        return ExperimentConfig.from_dict(self.get('experiment', {}))

    def get_output_pattern(self, kind: str = 'samples') -> str:
        """
        获取输出文件名模式

        Args:
            kind: samples / runs / aggregate / coverage / rates / transitions / summary

        Returns:
            文件名模式字符串
        """
        defaults = {
            'samples': 'CGS_{scenario}_{strategy}_{seed}_SAMPLES.txt',
            'runs': 'run_reports.csv',
            'aggregate': 'aggregate.csv',
            'coverage': 'coverage.csv',
            'rates': 'rate_curves.csv',
            'transitions': 'transition_stats.csv',
            'summary': 'CGS_{scenario}_SUMMARY.txt',
        }
        return self.get(f'output.patterns.{kind}', defaults.get(kind, 'CGS_OUTPUT_{timestamp}.txt'))

    def resolved(self) -> Dict[str, Any]:
        """完整解析后的配置副本（写入 resolved_config.yml）"""
        return copy.deepcopy(self.config)

    def save_resolved(self, path: str) -> str:
        with open(path, 'w', encoding='utf-8') as f:
            yaml.safe_dump(self.resolved(), f, allow_unicode=True, sort_keys=True)
        return path

    def __str__(self) -> str:
        """返回配置的字符串表示"""
        return f"ConfigManager(config_path='{self.config_path}')"

    def __repr__(self) -> str:
        """返回配置的详细表示"""
        return f"ConfigManager(config_path='{self.config_path}', keys={list(self.config.keys())})"
