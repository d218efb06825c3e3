"""
测试公共配置
"""


def pytest_configure(config):
    """注册 slow 标记：整场景基准类测试，可用 `-m "not slow"` 跳过"""
    config.addinivalue_line("markers", "slow: 整场景基准测试，运行时间较长")
