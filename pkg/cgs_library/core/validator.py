"""
样本验证器模块

负责对输出样本做独立的完整可行性复查：所有约束（而不只是各转移的激活集合）
在给定容差下重新求值，并检查样本是否落在变量边界框内。
"""

import numpy as np
from typing import Any, Dict, List, Mapping, Sequence

from .graph import ConstraintGraph, check_assignment
from .runtime import SampleRecord


class SampleValidator:
    """样本验证器类"""

    def __init__(self, validation_config: Mapping[str, Any] = None):
        """
        初始化样本验证器

        Args:
            validation_config: 验证配置字典（tol_eq, tol_ineq, bounds_slack）
        """
        self.config = dict(validation_config or {})
        self.tol_eq = float(self.config.get('tol_eq', 1e-6))
        self.tol_ineq = float(self.config.get('tol_ineq', 1e-8))
        self.bounds_slack = float(self.config.get('bounds_slack', 1e-9))

    def validate_samples(self, samples: Sequence[SampleRecord], g: ConstraintGraph,
                         data_name: str = "样本", verbose: bool = True) -> Dict[str, Any]:
        """
        执行完整的样本验证流程

        Args:
            samples: 样本列表
            g: 约束图
            data_name: 数据名称（用于日志）
            verbose: 是否打印结果

        Returns:
            验证结果字典
        """
        results = {
            'data_name': data_name,
            'total_samples': len(samples),
            'passed': True,
            'max_eq': 0.0,
            'max_ineq': 0.0,
            'failed_samples': 0,
            'issues': [],
        }
        if verbose:
            print(f"\n=== 验证 {data_name} ===")

        for k, sample in enumerate(samples):
            issues = self.check_sample(sample, g)
            if all(np.shape(sample.values.get(v.id)) == (v.dim,) for v in g.variables):
                check = check_assignment(g, sample.values, self.tol_eq, self.tol_ineq)
                results['max_eq'] = max(results['max_eq'], check.max_eq)
                results['max_ineq'] = max(results['max_ineq'], check.max_ineq)
            if issues:
                results['failed_samples'] += 1
                results['issues'].extend(f"样本 {k}: {issue}" for issue in issues)

        results['passed'] = results['failed_samples'] == 0
        if verbose:
            if results['passed']:
                print(f"✅ 全部 {len(samples)} 个样本通过复查 "
                      f"(max_eq={results['max_eq']:.2e}, max_ineq={results['max_ineq']:.2e})")
            else:
                print(f"⚠️  {results['failed_samples']}/{len(samples)} 个样本未通过复查")
                for issue in results['issues'][:10]:
                    print(f"   - {issue}")
        return results

    def check_sample(self, sample: SampleRecord, g: ConstraintGraph) -> List[str]:
        """
        检查单个样本

        Returns:
            问题描述列表（为空表示通过）
        """
        issues = []
        missing = [v for v in g.variable_ids if v not in sample.values]
        if missing:
            return [f"缺少变量 {missing}"]

        for var in g.variables:
            value = np.asarray(sample.values[var.id], dtype=float)
            lower, upper = var.bounds()
            if value.shape != (var.dim,):
                issues.append(f"{var.id} 维度应为 {var.dim}，实际为 {value.shape}")
            elif np.any(value < lower - self.bounds_slack) or np.any(value > upper + self.bounds_slack):
                issues.append(f"{var.id} 超出边界框")
        if issues:
            return issues

        check = check_assignment(g, sample.values, self.tol_eq, self.tol_ineq)
        if not check.feasible:
            issues.append(f"约束违反: {', '.join(check.violations)}")
        return issues

    def validate_witness(self, witness: Mapping[str, np.ndarray], g: ConstraintGraph) -> bool:
        """检查场景见证赋值是否满足全部约束"""
        return check_assignment(g, witness, self.tol_eq, self.tol_ineq).feasible

    def __str__(self) -> str:
        return f"SampleValidator(tol_eq={self.tol_eq}, tol_ineq={self.tol_ineq})"
