"""
UCT 搜索树、奖励与热启动测试
"""

import pytest
import os
import math
import numpy as np

import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cgs_library.core.graph import parse_graph
from cgs_library.core.mcts import (
    LAMBDA_CEIL, History, RewardConfig, SearchNode, SearchTree, WarmstartStore, auto_lambda,
    backpropagate, best_sequence, requalify, rollout, select_child, warmstart_apply,
)
from cgs_library.core.states import EMPTY_STATE, ComputationState, prune_table
from cgs_library.exceptions import ConfigValidationError


TWO_ARMS = "graph arms\nvar a dim=1 lo=0 hi=1\nvar b dim=1 lo=0 hi=1\n"
STATE_A = ComputationState(0b01)
STATE_B = ComputationState(0b10)
GOAL = ComputationState(0b11)


class ScriptedExecutor:
    """按源/目标状态给定成功率与代价的执行器"""

    def __init__(self, success, cost=0.0, seed=0):
        self.success = success
        self.cost = cost
        self.rng = np.random.default_rng(seed)
        self.calls = []

    def reset(self):
        self.calls.append('reset')

    def step(self, source, target):
        self.calls.append((source, target))
        rate = self.success.get((source, target), 1.0)
        return bool(self.rng.random() < rate), self.cost


def make_node(q_values, visits, parent_visits):
    parent = SearchNode(History(), visits=parent_visits)
    for k, (q, n) in enumerate(zip(q_values, visits)):
        state = ComputationState(1 << k)
        parent.children[state] = SearchNode(History().extend(state), parent=parent, q_value=q, visits=n)
    return parent


def make_tree():
    g = parse_graph(TWO_ARMS)
    return SearchTree(prune_table(g), exploration=1.0)


class TestSelectChild:
    """UCT 选择测试类"""

    def test_exploration_bonus(self):
        """测试访问少的子节点获得更大的探索项"""
        node = make_node([0.5, 0.5], [2, 8], 10)

        assert select_child(node, 1.0) == ComputationState(0b01)
        assert 0.5 + math.sqrt(math.log(10) / 2) == pytest.approx(1.5730, abs=1e-4)

    def test_single_child(self):
        """测试只有一个子节点"""
        node = make_node([0.1], [3], 3)

        assert select_child(node, 1.0) == ComputationState(0b01)

    def test_pure_exploitation(self):
        """测试 c=0 时取 Q 最大者"""
        node = make_node([0.9, 0.1], [1, 50], 51)

        assert select_child(node, 0.0) == ComputationState(0b01)

    def test_unvisited_first_in_declaration_order(self):
        """测试未访问子节点按声明顺序优先"""
        node = make_node([0.9, 0.0, 0.0], [5, 0, 0], 5)

        assert select_child(node, 1.0) == ComputationState(0b10)

    @pytest.mark.parametrize('shift', [-3.0, 0.25, 10.0])
    def test_invariant_under_q_shift(self, shift):
        """测试所有 Q 加同一常数时选择不变"""
        q_values, visits = [0.3, 0.45, 0.1], [4, 7, 2]

        base = select_child(make_node(q_values, visits, 13), 0.5)
        shifted = select_child(make_node([q + shift for q in q_values], visits, 13), 0.5)

        assert shifted == base

    def test_scale_with_exploration(self):
        """测试 Q 与探索常数同比缩放时选择不变"""
        q_values, visits = [0.3, 0.45, 0.1], [4, 7, 2]

        for c in (0.1, 0.5, 2.0):
            base = select_child(make_node(q_values, visits, 13), c)
            scaled = select_child(make_node([4.0 * q for q in q_values], visits, 13), 4.0 * c)
            assert scaled == base

    def test_no_children(self):
        """测试没有子节点"""
        with pytest.raises(LookupError):
            select_child(SearchNode(History()), 1.0)


class TestBackpropagate:
    """回传测试类"""

    def test_fresh_node(self):
        """测试新节点"""
        node = SearchNode(History())
        backpropagate(node, 1.0)

        assert node.q_value == 1.0
        assert node.visits == 1

    def test_running_mean(self):
        """测试滑动平均"""
        node = SearchNode(History(), q_value=0.5, visits=1)
        backpropagate(node, 0.0)

        assert node.q_value == pytest.approx(0.25)
        assert node.visits == 2

    def test_mean_of_seeded_stream(self):
        """测试 1000 个奖励后 Q 等于均值"""
        root = SearchNode(History())
        child = SearchNode(History().extend(STATE_A), parent=root)
        root.children[STATE_A] = child
        rewards = np.random.default_rng(7).normal(size=1000)

        for r in rewards:
            backpropagate(child, float(r))

        assert child.q_value == pytest.approx(float(np.mean(rewards)), abs=1e-12)
        assert root.q_value == pytest.approx(float(np.mean(rewards)), abs=1e-12)
        assert root.visits == child.visits == 1000

    def test_outcome_statistics(self):
        """测试到达率与平均代价只统计真实访问"""
        node = SearchNode(History(), q_value=0.4, visits=10, prior_visits=10, prior_q=0.4)

        backpropagate(node, 0.5, (True, 1.0))
        backpropagate(node, -0.2, (False, 0.4))

        assert node.visits == 12
        assert node.goal_mean == pytest.approx(0.5)
        assert node.cost_mean == pytest.approx(0.7)

    def test_requalify_after_lambda_change(self):
        """测试 λ 改变后 Q 按到达率与平均代价重算，先验部分保留"""
        tree = make_tree()
        child = tree.root.children[STATE_A]
        child.prior_visits, child.visits, child.prior_q, child.q_value = 2, 2, 1.0, 1.0
        backpropagate(child, 0.0, (True, 0.5))
        backpropagate(child, 0.0, (True, 0.5))

        requalify(tree, RewardConfig(lam=0.5))

        assert child.q_value == pytest.approx((2 * 1.0 + 2 * (0.5 - 0.25)) / 4)
        assert tree.root.q_value == pytest.approx(0.25)


class TestRollout:
    """rollout 测试类"""

    def test_cost_free_success(self):
        """测试全部成功且代价为0时奖励为 1−λ"""
        tree = make_tree()
        cfg = RewardConfig(lam=0.3)

        outcome = rollout(tree, ScriptedExecutor({}), cfg, np.random.default_rng(0))

        assert outcome.reached_goal
        assert outcome.reward == pytest.approx(0.7)
        assert outcome.history.last == GOAL

    def test_first_operation_fails(self):
        """测试第一步失败时奖励为 −λ·r_t"""
        tree = make_tree()
        cfg = RewardConfig(lam=0.5)
        executor = ScriptedExecutor({(EMPTY_STATE, STATE_A): 0.0}, cost=0.25)

        outcome = rollout(tree, executor, cfg, np.random.default_rng(0))

        assert not outcome.reached_goal
        assert outcome.reward == pytest.approx(-0.125)
        assert executor.calls == ['reset', (EMPTY_STATE, STATE_A)]

    def test_single_expansion_per_rollout(self):
        """测试每次 rollout 只扩展一个新节点"""
        tree = make_tree()
        cfg = RewardConfig(lam=0.1)
        rng = np.random.default_rng(0)

        rollout(tree, ScriptedExecutor({}), cfg, rng)
        assert len([n for n in tree.nodes() if n.expanded]) == 2

        rollout(tree, ScriptedExecutor({}), cfg, rng)
        assert len([n for n in tree.nodes() if n.expanded]) == 3

    def test_visit_accounting(self):
        """测试子节点访问次数加终止次数等于自身访问次数"""
        tree = make_tree()
        cfg = RewardConfig(lam=0.1)
        executor = ScriptedExecutor({(EMPTY_STATE, STATE_A): 0.6, (EMPTY_STATE, STATE_B): 0.4}, seed=3)
        rng = np.random.default_rng(3)

        for _ in range(200):
            rollout(tree, executor, cfg, rng)

        assert tree.root.visits == 200
        for node in tree.nodes():
            assert sum(c.visits for c in node.children.values()) + node.stops == node.visits

    def test_bandit_prefers_reliable_action(self):
        """测试两个动作成功率 0.9 / 0.2 时搜索树集中在可靠动作上（100 个种子中至少 95 个）"""
        cfg = RewardConfig(lam=0.1, exploration=1.0)
        shares = []
        for seed in range(100):
            tree = make_tree()
            executor = ScriptedExecutor({(EMPTY_STATE, STATE_A): 0.9, (EMPTY_STATE, STATE_B): 0.2}, seed=seed)
            rng = np.random.default_rng(seed)

            for _ in range(500):
                rollout(tree, executor, cfg, rng)

            visits_a = tree.root.children[STATE_A].visits
            visits_b = tree.root.children[STATE_B].visits
            shares.append(visits_a / (visits_a + visits_b))
            if seed == 1:
                assert best_sequence(tree).signature(tree.graph) == '{}|{a}|{a,b}'

        assert sum(share > 0.8 for share in shares) >= 95
        assert min(shares) > 0.5

    def test_transition_values_track_success(self):
        """测试转移级统计区分第二步成功率不同的两条路径"""
        tree = make_tree()
        cfg = RewardConfig(lam=0.1)
        executor = ScriptedExecutor({(STATE_A, GOAL): 0.1, (STATE_B, GOAL): 0.9}, seed=2)
        rng = np.random.default_rng(2)

        for _ in range(300):
            rollout(tree, executor, cfg, rng)

        assert tree.moves.count(STATE_B, GOAL) > 0
        assert tree.moves.value(STATE_B, GOAL, cfg) > tree.moves.value(STATE_A, GOAL, cfg)
        assert tree.root.children[STATE_B].visits > tree.root.children[STATE_A].visits


class TestRewardConfig:
    """奖励配置测试类"""

    def test_auto_lambda(self):
        """测试 λ 自动校准公式"""
        assert auto_lambda([1.0, 1.0]) == pytest.approx(0.5)
        assert auto_lambda([0.0]) == LAMBDA_CEIL
        assert auto_lambda([0.5, 1.5, 4.0]) == pytest.approx(1.0 / 3.0)

        with pytest.raises(ValueError):
            auto_lambda([])

    def test_from_dict(self):
        """测试 lambda: auto"""
        cfg = RewardConfig.from_dict({'lambda': 'auto', 'n_equiv': 4})

        assert cfg.auto
        assert cfg.n_equiv == 4
        assert RewardConfig.from_dict({'lambda': 0.2}).lam == 0.2

    def test_missing_lambda_means_auto(self):
        """测试未给出 lambda 时默认自动校准"""
        assert RewardConfig.from_dict({}).auto
        assert RewardConfig.from_dict(None).auto

    def test_reward_scale(self):
        """测试奖励量级：自动校准的 λ 下到达奖励与平均代价项相等"""
        mean_cost = 3.0
        cfg = RewardConfig(lam=auto_lambda([mean_cost]))

        assert cfg.reward_scale == pytest.approx(cfg.lam * mean_cost)
        assert cfg.expected_reward(1.0, mean_cost) == pytest.approx(0.0)
        assert cfg.episode_reward(True, [1.0, 2.0]) == pytest.approx(cfg.expected_reward(1.0, 3.0))

    @pytest.mark.parametrize('values', [
        {'lambda': 0.0},
        {'lambda': 1.0},
        {'cost_source': 'cpu'},
        {'n_equiv': 0},
    ])
    def test_invalid(self, values):
        """测试非法奖励配置"""
        with pytest.raises(ConfigValidationError):
            RewardConfig.from_dict(values)

    def test_transition_cost_units(self):
        """测试代价单位换算"""
        assert RewardConfig(proxy_unit=1000.0).transition_cost(500, 9.0) == 0.5
        assert RewardConfig(cost_source='wall_clock', time_unit=2.0).transition_cost(500, 1.0) == 0.5

    def test_history_must_increase(self):
        """测试历史必须严格递增"""
        with pytest.raises(ValueError):
            History((EMPTY_STATE, STATE_A, STATE_A))
        with pytest.raises(ValueError):
            History((STATE_A,))


class TestWarmstart:
    """热启动测试类"""

    def test_empty_store_leaves_tree_unchanged(self):
        """测试空存储"""
        tree = make_tree()
        warmstart_apply(tree, WarmstartStore())

        assert all(n.visits == 0 and n.q_value == 0.0 for n in tree.nodes())

    def test_prior_on_root_child(self):
        """测试根的子节点使用先验"""
        tree = make_tree()
        store = WarmstartStore({'{}|{a}': (0.8, 3)}, n_equiv=10)

        warmstart_apply(tree, store)
        child = tree.root.children[STATE_A]

        assert child.q_value == 0.8
        assert child.visits == 10
        assert tree.root.children[STATE_B].visits == 0

    def test_prior_applied_to_new_nodes(self):
        """测试之后新建的节点也按存储初始化"""
        tree = make_tree()
        warmstart_apply(tree, WarmstartStore({'{}|{b}|{a,b}': (0.5, 1)}, n_equiv=4))
        tree.populate(tree.root.children[STATE_B])

        grandchild = tree.root.children[STATE_B].children[GOAL]
        assert grandchild.q_value == 0.5
        assert grandchild.visits == 4

    def test_mean_over_instances(self):
        """测试两个先前实例的 Q 取平均"""
        store = WarmstartStore()
        store.record('{}|{a}', 0.6)
        store.record('{}|{a}', 1.0)

        assert store.lookup('{}|{a}') == (pytest.approx(0.8), 2)

    def test_absorb_and_text_round_trip(self):
        """测试从搜索树构建存储并读写文本"""
        tree = make_tree()
        rng = np.random.default_rng(0)
        for _ in range(20):
            rollout(tree, ScriptedExecutor({}), RewardConfig(lam=0.1), rng)

        store = WarmstartStore(n_equiv=5)
        store.absorb(tree)
        reloaded = WarmstartStore.from_text(store.to_text(), n_equiv=5)

        assert '{}' in reloaded.entries
        assert reloaded.entries == store.entries

    def test_merge(self):
        """测试合并存储按实例数加权"""
        first = WarmstartStore({'{}': (0.2, 1)})
        second = WarmstartStore({'{}': (0.8, 3), '{}|{a}': (0.4, 1)})

        merged = WarmstartStore.merge([first, second])

        assert merged.entries['{}'] == (pytest.approx(0.65), 4)
        assert merged.entries['{}|{a}'] == (0.4, 1)

    def test_malformed_text(self):
        """测试格式错误的热启动文件"""
        with pytest.raises(ValueError):
            WarmstartStore.from_text("{}|{a} 0.5\n")
