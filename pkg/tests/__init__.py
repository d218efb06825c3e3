"""
CGS MCTS Sampler Tests

测试模块，包含对所有核心功能的单元测试。
"""