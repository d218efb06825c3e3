"""
指标模块

投影覆盖率：把每个样本投影到单个变量的子空间，在该变量边界框上均匀分箱，
统计被占据的格子数（同一格子只计一次）。采样率曲线：各时间窗口边界处的
累计样本数除以已用时间。
"""

import numpy as np
import pandas as pd
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence

from .graph import ConstraintGraph
from .runtime import RunReport, SampleRecord
from ..exceptions import ConfigValidationError


@dataclass
class CoverageConfig:
    """覆盖率配置"""

    bins_per_dim: int = 10
    normalize_against: str = 'tree'
    rate_window: float = 1.0

    def __post_init__(self):
        if int(self.bins_per_dim) < 1:
            raise ConfigValidationError("bins_per_dim 必须 ≥ 1", entity='coverage')
        if self.rate_window <= 0:
            raise ConfigValidationError("rate_window 必须为正数", entity='coverage')
        self.bins_per_dim = int(self.bins_per_dim)

    @classmethod
    def from_dict(cls, values: Optional[Mapping[str, Any]]) -> 'CoverageConfig':
        known = {k: v for k, v in (values or {}).items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class CoverageReport:
    """每个变量被占据的格子数，以及越界样本计数"""

    occupied: Dict[str, int] = field(default_factory=dict)
    out_of_bounds: Dict[str, int] = field(default_factory=dict)
    normalized: Dict[str, float] = field(default_factory=dict)
    sample_count: int = 0


def bin_cells(points: np.ndarray, lower: np.ndarray, upper: np.ndarray, bins: int):
    """
    均匀分箱，越界点截断到边界格子

    Args:
        points: shape=(m, dim) 的投影点
        lower, upper: 边界
        bins: 每维格子数

    Returns:
        (格子下标数组 shape=(m, dim), 越界点数)
    """
    points = np.atleast_2d(points)
    scaled = (points - lower) / (upper - lower) * bins
    outside = int(np.count_nonzero(np.any((points < lower) | (points > upper), axis=1)))
    cells = np.clip(np.floor(scaled).astype(np.int64), 0, bins - 1)
    return cells, outside


def projected_coverage(samples: Sequence[SampleRecord], g: ConstraintGraph,
                       cfg: Optional[CoverageConfig] = None) -> CoverageReport:
    """
    计算投影覆盖率

    Args:
        samples: 样本列表
        g: 约束图
        cfg: 覆盖率配置

    Returns:
        CoverageReport；越界样本被截断到边界格子并计入 out_of_bounds
    """
    cfg = cfg or CoverageConfig()
    report = CoverageReport(sample_count=len(samples))
    for var in g.variables:
        if not samples:
            report.occupied[var.id] = 0
            report.out_of_bounds[var.id] = 0
            continue
        lower, upper = var.bounds()
        points = np.vstack([np.asarray(s.slice(var.id), dtype=float) for s in samples])
        cells, outside = bin_cells(points, lower, upper, cfg.bins_per_dim)
        report.occupied[var.id] = len({tuple(row) for row in cells.tolist()})
        report.out_of_bounds[var.id] = outside
    return report


def normalize_coverage(report: CoverageReport, reference: CoverageReport) -> Dict[str, float]:
    """
    相对参考策略归一化；两者均为0时比值记为1.0，参考为0而自身非0时记为 inf
    """
    ratios = {}
    for var_id, count in report.occupied.items():
        ref = reference.occupied.get(var_id, 0)
        if ref == 0:
            ratios[var_id] = 1.0 if count == 0 else float('inf')
        else:
            ratios[var_id] = count / ref
    report.normalized = ratios
    return ratios


def coverage_table(reports: Mapping[str, Mapping[str, CoverageReport]],
                   normalize_against: str = 'tree') -> pd.DataFrame:
    """
    汇总覆盖率为 DataFrame：每行 (strategy, instance, variable, occupied_cells, normalized_ratio)

    Args:
        reports: 策略 → 实例 → CoverageReport
        normalize_against: 参考策略；缺失时归一化列为空
    """
    records = []
    for strategy in sorted(reports):
        for instance in sorted(reports[strategy]):
            report = reports[strategy][instance]
            reference = reports.get(normalize_against, {}).get(instance)
            ratios = normalize_coverage(report, reference) if reference is not None else {}
            for var_id, count in report.occupied.items():
                records.append({
                    'strategy': strategy,
                    'instance': instance,
                    'variable': var_id,
                    'occupied_cells': count,
                    'out_of_bounds': report.out_of_bounds.get(var_id, 0),
                    'normalized_ratio': ratios.get(var_id, np.nan),
                })
    return pd.DataFrame(records, columns=['strategy', 'instance', 'variable', 'occupied_cells',
                                          'out_of_bounds', 'normalized_ratio'])


def rate_curve(report: RunReport, window: float) -> pd.DataFrame:
    """
    采样率曲线：每个窗口边界 k·window 处的累计样本数 / 已用时间

    Args:
        report: 运行报告（emission_times 单调递增）
        window: 窗口长度（秒）

    Returns:
        列为 (time, samples, rate) 的 DataFrame；最后一个边界截断为 wall_time
    """
    if window <= 0:
        raise ValueError("window 必须为正数")
    wall = report.wall_time
    if wall <= 0:
        return pd.DataFrame({'time': [], 'samples': [], 'rate': []})
    count = int(np.ceil(wall / window - 1e-12))
    boundaries = np.minimum(np.arange(1, count + 1) * window, wall)
    emitted = np.searchsorted(np.asarray(report.emission_times, dtype=float), boundaries, side='right')
    return pd.DataFrame({
        'time': boundaries,
        'samples': emitted.astype(np.int64),
        'rate': emitted / boundaries,
    })
