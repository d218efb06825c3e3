"""
CGS Library - 约束图采样库

在因子化约束图上生成可行样本：枚举并剪枝赋值顺序构成的转移格，
用 UCT 搜索树学习高效的采样顺序，逐步执行条件投影采样。

主要功能:
- 问题描述文件解析与序列化
- 转移枚举与剪枝（零概率、条件独立、闭包）
- tree / tree_warm / expert / random 四种采样策略
- 投影覆盖率与采样率曲线
- 内置 pick_place / handover / banana / ik_arc 场景

使用示例:
    from cgs_library import SamplingPipeline

    pipeline = SamplingPipeline('config/pick_place_config.yml')
    reports = pipeline.sample()
"""

__version__ = "1.0.0"

from .pipeline import SamplingPipeline
from .config import ConfigManager

__all__ = ['SamplingPipeline', 'ConfigManager']
