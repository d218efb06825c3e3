"""
基准场景模块

平面版本的三个操作场景（pick_place / handover / banana）加一个可解析验证的
双连杆逆运动学场景（ik_arc）。所有机械臂为三连杆、连杆长度 (1,1,1)；位姿
变量为 SE(2) 三维。每个实例换一个圆形障碍物位置，拓扑保持不变；每个实例
附带一组在构造时经完整残差检查认证的见证赋值。
"""

import math
import numpy as np
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

from .graph import ConstraintGraph, check_assignment, make_variable
from .metrics import bin_cells
from ..exceptions import CGSError


PI = math.pi
LINKS = (1.0, 1.0, 1.0)
JOINT_LO, JOINT_HI = (-PI, -PI, -PI), (PI, PI, PI)
IDENTITY = (0.0, 0.0, 0.0)

# 障碍物 (x, y, radius)，第 k 个实例使用第 k 个
PICK_PLACE_OBSTACLES = [
    (-1.5, 0.0, 0.4), (1.0, 0.0, 0.4), (0.0, 2.2, 0.4), (2.0, 0.0, 0.45),
    (-1.0, 1.5, 0.4), (-0.8, -1.2, 0.4), (1.2, 2.0, 0.4), (3.0, 0.0, 0.4),
]
HANDOVER_OBSTACLES = [
    (0.0, -0.8, 0.5), (-1.0, -0.4, 0.45), (1.0, -0.4, 0.45), (0.0, 2.2, 0.5),
    (-3.0, -0.3, 0.4), (3.0, -0.3, 0.4), (-1.0, 2.2, 0.45), (1.5, 2.1, 0.4),
]
BANANA_OBSTACLES = [
    (-1.2, 0.0, 0.4), (1.0, 0.0, 0.4), (3.0, 0.2, 0.4), (1.0, 2.2, 0.4),
    (1.0, -2.2, 0.4), (4.0, 1.2, 0.4), (-1.0, 1.5, 0.4), (2.8, 1.8, 0.4),
]

# banana 中 b 臂自身携带的障碍物（在 b 臂基座坐标系下）
BANANA_BODY_OBSTACLE = (0.0, -0.6, 0.3)


def _pose_var(var_id: str, xy: float = 0.3) -> 'VariableSpec':
    return make_variable(var_id, (-xy, -xy, -PI), (xy, xy, PI))


def _arm_var(var_id: str, links: Tuple[float, ...] = LINKS):
    return make_variable(var_id, (-PI,) * len(links), (PI,) * len(links))


def _grasp(cid: str, var_id: str, target=IDENTITY, components=(1, 2)):
    return (cid, 'eq', (var_id,), 'fixed_pose', {'target': target, 'components': components})


def _kin(cid: str, scope, base, obj, roles=None, links=LINKS, components=(0, 1, 2)):
    params = {'links': links, 'base': base, 'object': obj, 'components': components}
    if roles:
        params['roles'] = roles
    return (cid, 'eq', tuple(scope), 'planar_fk', params)


def _coll(cid: str, var_id: str, base, obstacle, links=LINKS):
    x, y, radius = obstacle
    return (cid, 'ineq', (var_id,), 'circle_clearance',
            {'center': (x, y), 'radius': radius, 'links': links, 'base': base})


def _pick_place(index: int) -> ConstraintGraph:
    obstacle = PICK_PLACE_OBSTACLES[index]
    variables = [_pose_var('t'), _arm_var('q1'), _arm_var('q2')]
    constraints = [
        _grasp('Grasp', 't'),
        _kin('Kin_q1', ('t', 'q1'), IDENTITY, (2.0, 1.0, 0.0)),
        _kin('Kin_q2', ('t', 'q2'), IDENTITY, (2.0, -1.0, 0.0)),
        _coll('Coll_q1', 'q1', IDENTITY, obstacle),
        _coll('Coll_q2', 'q2', IDENTITY, obstacle),
    ]
    return ConstraintGraph.assemble(f"pick_place_{index}", variables, constraints)


def _pick_place_witness() -> Dict[str, np.ndarray]:
    return {
        't': np.zeros(3),
        'q1': np.array([PI / 2, -PI / 2, 0.0]),
        'q2': np.array([-PI / 2, PI / 2, 0.0]),
    }


HANDOVER_BASE_A = (-2.0, 0.0, 0.0)
HANDOVER_BASE_B = (2.0, 0.0, PI)


def _handover(index: int) -> ConstraintGraph:
    obstacle = HANDOVER_OBSTACLES[index]
    variables = [
        make_variable('p', (-1.0, 0.0, -PI), (1.0, 2.0, PI)),
        _pose_var('t_a'), _pose_var('t_b'),
        _arm_var('q_a1'), _arm_var('q_a2'), _arm_var('q_b1'), _arm_var('q_b2'),
    ]
    constraints = [
        _grasp('Grasp_a', 't_a'),
        _grasp('Grasp_b', 't_b', target=(0.0, 0.0, PI)),
        ('Position', 'eq', ('p',), 'fixed_pose', {'target': (0.0, 1.0, 0.0), 'components': (0, 1)}),
        _kin('Kin_a1', ('t_a', 'q_a1'), HANDOVER_BASE_A, (-4.0, 1.0, PI)),
        _kin('Kin_a2', ('t_a', 'q_a2', 'p'), HANDOVER_BASE_A, IDENTITY, roles=('object',)),
        _kin('Kin_b2', ('t_b', 'q_b2', 'p'), HANDOVER_BASE_B, IDENTITY, roles=('object',)),
        _kin('Kin_b1', ('t_b', 'q_b1'), HANDOVER_BASE_B, (4.0, 1.0, PI)),
        _coll('Coll_a1', 'q_a1', HANDOVER_BASE_A, obstacle),
        _coll('Coll_a2', 'q_a2', HANDOVER_BASE_A, obstacle),
        _coll('Coll_b1', 'q_b1', HANDOVER_BASE_B, obstacle),
        _coll('Coll_b2', 'q_b2', HANDOVER_BASE_B, obstacle),
        ('Coll_ab', 'ineq', ('q_a2', 'q_b2'), 'circle_clearance',
         {'radius': 0.5, 'links': LINKS, 'base': HANDOVER_BASE_A,
          'links2': LINKS, 'base2': HANDOVER_BASE_B}),
    ]
    return ConstraintGraph.assemble(f"handover_{index}", variables, constraints)


def _handover_witness() -> Dict[str, np.ndarray]:
    return {
        'p': np.array([0.0, 1.0, 0.0]),
        't_a': np.zeros(3),
        't_b': np.array([0.0, 0.0, PI]),
        'q_a1': np.array([PI / 2, PI / 2, 0.0]),
        'q_a2': np.array([PI / 2, -PI / 2, 0.0]),
        'q_b1': np.array([-PI / 2, -PI / 2, 0.0]),
        'q_b2': np.array([-PI / 2, PI / 2, 0.0]),
    }


BANANA_BASE_A = (0.0, 0.0, 0.0)
BANANA_BASE_X = (4.0, 0.0, PI)


def _banana(index: int) -> ConstraintGraph:
    obstacle = BANANA_OBSTACLES[index]
    variables = [
        make_variable('p', (1.0, -2.0, -PI), (3.0, 0.0, PI)),
        _pose_var('t_a'), _pose_var('t_b'), _pose_var('t_x'),
        _arm_var('q_a1'), _arm_var('q_a2'), _arm_var('q_x'), _arm_var('q_b1'), _arm_var('q_b2'),
    ]
    constraints = [
        _grasp('Grasp_a', 't_a'),
        _grasp('Grasp_x', 't_x', target=(0.0, 0.0, PI)),
        _grasp('Grasp_b', 't_b'),
        ('Position', 'eq', ('p',), 'fixed_pose', {'target': (2.0, -1.0, 0.0), 'components': (0, 1)}),
        _kin('Kin_a1', ('t_a', 'q_a1'), BANANA_BASE_A, (2.0, 1.0, 0.0)),
        _kin('Kin_a2', ('t_a', 'q_a2', 'p'), BANANA_BASE_A, IDENTITY, roles=('object',)),
        _kin('Kin_x', ('t_x', 'q_x', 'p'), BANANA_BASE_X, IDENTITY, roles=('object',)),
        _kin('Kin_b1', ('t_b', 'q_b1', 'p', 't_x'), IDENTITY, (0.0, -2.0, PI), roles=('base', 'base')),
        _kin('Kin_b2', ('t_b', 'q_b2', 'p', 't_x'), IDENTITY, (0.0, 0.0, PI), roles=('base', 'base')),
        _coll('Coll_a1', 'q_a1', BANANA_BASE_A, obstacle),
        _coll('Coll_a2', 'q_a2', BANANA_BASE_A, obstacle),
        _coll('Coll_x', 'q_x', BANANA_BASE_X, obstacle),
        _coll('Coll_b1', 'q_b1', IDENTITY, BANANA_BODY_OBSTACLE),
        _coll('Coll_b2', 'q_b2', IDENTITY, BANANA_BODY_OBSTACLE),
    ]
    return ConstraintGraph.assemble(f"banana_{index}", variables, constraints)


def _banana_witness() -> Dict[str, np.ndarray]:
    return {
        'p': np.array([2.0, -1.0, 0.0]),
        't_a': np.zeros(3),
        't_b': np.zeros(3),
        't_x': np.array([0.0, 0.0, PI]),
        'q_a1': np.array([PI / 2, -PI / 2, 0.0]),
        'q_a2': np.array([-PI / 2, PI / 2, 0.0]),
        'q_x': np.array([PI / 2, -PI / 2, 0.0]),
        'q_b1': np.array([PI / 2, -PI / 2, 0.0]),
        'q_b2': np.array([0.0, -PI / 2, PI / 2]),
    }


IK_ARC_LINKS = (1.0, 1.0)
IK_ARC_OBJECT = (1.2, 0.0, PI / 2)
IK_ARC_SLIDE = 0.5


def _ik_arc(index: int) -> ConstraintGraph:
    variables = [
        make_variable('t', (-IK_ARC_SLIDE, -0.3, -PI), (IK_ARC_SLIDE, 0.3, PI)),
        _arm_var('q', IK_ARC_LINKS),
    ]
    constraints = [
        _grasp('Grasp', 't'),
        _kin('Kin', ('t', 'q'), IDENTITY, IK_ARC_OBJECT, links=IK_ARC_LINKS, components=(0, 1)),
    ]
    return ConstraintGraph.assemble(f"ik_arc_{index}", variables, constraints)


def ik_arc_solutions(slide: float) -> List[np.ndarray]:
    """
    双连杆解析逆运动学：抓取点沿物体滑动 slide 后的两支关节解

    Args:
        slide: t 的 x 分量

    Returns:
        两个关节角数组（肘上/肘下）
    """
    x, y = IK_ARC_OBJECT[0], slide
    l1, l2 = IK_ARC_LINKS
    c2 = (x * x + y * y - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    solutions = []
    for q2 in (math.acos(c2), -math.acos(c2)):
        q1 = math.atan2(y, x) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
        solutions.append(np.array([q1, q2]))
    return solutions


def _ik_arc_witness() -> Dict[str, np.ndarray]:
    return {'t': np.zeros(3), 'q': ik_arc_solutions(0.0)[0]}


def ik_arc_oracle_cells(bins: int, resolution: int = 20001) -> set:
    """
    稠密扫描 ik_arc 的一维解曲线，返回关节变量 q 被曲线经过的格子集合

    Args:
        bins: 每维格子数（与覆盖率计算一致，在 [−π, π]² 上均匀分箱）
        resolution: 扫描点数
    """
    points = [q for slide in np.linspace(-IK_ARC_SLIDE, IK_ARC_SLIDE, resolution)
              for q in ik_arc_solutions(float(slide))]
    lower, upper = np.array([-PI, -PI]), np.array([PI, PI])
    cells, _ = bin_cells(np.vstack(points), lower, upper, bins)
    return {tuple(row) for row in cells.tolist()}


@dataclass
class ScenarioFamily:
    """场景族：图模板、实例数、见证赋值与规范维度"""

    name: str
    builder: Callable[[int], ConstraintGraph]
    witness: Callable[[], Dict[str, np.ndarray]]
    instance_count: int
    description: str = ''
    canonical_dims: Dict[str, int] = field(default_factory=dict)

    def graph_template(self) -> ConstraintGraph:
        return self.builder(0)

    def instances(self) -> List[ConstraintGraph]:
        return [self.builder(i) for i in range(self.instance_count)]


SCENARIOS: Dict[str, ScenarioFamily] = {
    'pick_place': ScenarioFamily('pick_place', _pick_place, _pick_place_witness,
                                 len(PICK_PLACE_OBSTACLES), "单臂抓取-放置"),
    'handover': ScenarioFamily('handover', _handover, _handover_witness,
                               len(HANDOVER_OBSTACLES), "双臂交接"),
    'banana': ScenarioFamily('banana', _banana, _banana_witness,
                             len(BANANA_OBSTACLES), "借助工具够取"),
    'ik_arc': ScenarioFamily('ik_arc', _ik_arc, _ik_arc_witness, 1, "双连杆解析逆运动学"),
}

for _family in SCENARIOS.values():
    _template = _family.graph_template()
    _family.canonical_dims = {v.id: v.dim for v in _template.variables}
    _family.canonical_dims.update({c.id: c.codim for c in _template.constraints if c.is_equality})


def scenario_family(name: str) -> ScenarioFamily:
    if name not in SCENARIOS:
        raise CGSError(f"未知场景: {name}，可选 {', '.join(SCENARIOS)}", entity=name)
    return SCENARIOS[name]


def scenario_witness(name: str, index: int = 0) -> Dict[str, np.ndarray]:
    """实例的见证赋值（各实例共用同一组，障碍物均避开它）"""
    family = scenario_family(name)
    _check_index(family, index)
    return family.witness()


def _check_index(family: ScenarioFamily, index: int) -> None:
    if not 0 <= index < family.instance_count:
        raise CGSError(f"{family.name} 只有 {family.instance_count} 个实例，索引 {index} 越界",
                       entity=f"{family.name}:{index}")


def build_scenario(name: str, index: int = 0, certify: bool = True) -> ConstraintGraph:
    """
    构造场景实例

    Args:
        name: 场景名 pick_place / handover / banana / ik_arc
        index: 实例索引
        certify: 是否用见证赋值做完整残差检查

    Returns:
        约束图

    Raises:
        CGSError: 未知场景、索引越界或见证赋值不可行
    """
    family = scenario_family(name)
    _check_index(family, index)
    g = family.builder(index)
    if certify:
        report = check_assignment(g, family.witness())
        if not report.feasible:
            raise CGSError(f"见证赋值不可行: {report.violations}", entity=g.name)
    return g
