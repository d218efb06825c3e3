"""
样本验证器测试
"""

import pytest
import numpy as np
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cgs_library.core.mcts import History
from cgs_library.core.runtime import SampleRecord
from cgs_library.core.scenarios import build_scenario, scenario_witness
from cgs_library.core.validator import SampleValidator


class TestSampleValidator:
    """样本验证器测试类"""

    def create_validator(self):
        """创建验证器实例"""
        return SampleValidator({'tol_eq': 1e-6, 'tol_ineq': 1e-8})

    def create_sample(self, values):
        return SampleRecord(values=values, sequence_used=History(), max_eq=0.0, max_ineq=0.0,
                            timings=[], seed=0)

    def test_witness_passes(self):
        """测试见证赋值通过复查"""
        validator = self.create_validator()
        g = build_scenario('handover', 2)
        sample = self.create_sample(scenario_witness('handover', 2))

        results = validator.validate_samples([sample], g, verbose=False)

        assert results['passed']
        assert results['total_samples'] == 1
        assert results['max_eq'] <= 1e-6
        assert validator.validate_witness(scenario_witness('handover', 2), g)

    def test_constraint_violation(self):
        """测试约束违反被报告"""
        validator = self.create_validator()
        g = build_scenario('pick_place', 0)
        values = dict(scenario_witness('pick_place', 0))
        values['q1'] = np.zeros(3)

        issues = validator.check_sample(self.create_sample(values), g)

        assert len(issues) == 1
        assert 'Kin_q1' in issues[0]

    def test_out_of_bounds(self):
        """测试越界变量"""
        validator = self.create_validator()
        g = build_scenario('pick_place', 0)
        values = dict(scenario_witness('pick_place', 0))
        values['t'] = np.array([0.0, 0.0, 4.0])

        issues = validator.check_sample(self.create_sample(values), g)

        assert issues == ['t 超出边界框']

    def test_missing_and_misshapen_variables(self):
        """测试缺失变量与维度错误"""
        validator = self.create_validator()
        g = build_scenario('pick_place', 0)
        missing = {'t': np.zeros(3), 'q1': np.zeros(3)}
        misshapen = dict(scenario_witness('pick_place', 0), q2=np.zeros(2))

        results = validator.validate_samples(
            [self.create_sample(missing), self.create_sample(misshapen)], g, verbose=False)

        assert not results['passed']
        assert results['failed_samples'] == 2
        assert any('缺少变量' in issue for issue in results['issues'])
        assert any('维度' in issue for issue in results['issues'])

    def test_empty_sample_list(self):
        """测试空样本列表"""
        results = self.create_validator().validate_samples([], build_scenario('banana', 0), verbose=False)

        assert results['passed']
        assert results['total_samples'] == 0

    def test_default_tolerances(self):
        """测试默认容差"""
        validator = SampleValidator()

        assert validator.tol_eq == 1e-6
        assert 'SampleValidator' in str(validator)


if __name__ == '__main__':
    pytest.main([__file__])
