"""
内置残差类型

所有几何量均为平面 SE(2) 位姿 (x, y, θ)。每种残差把作用域变量按顺序
堆叠后映射到 ℝ^codim；等式约束可行当且仅当残差为0，
不等式约束可行当且仅当残差 ≤ 0。

求值函数对前导批维度广播：变量块形状为 (..., dim) 时输出 (..., codim)，
求解器一次调用即可得到有限差分所需的全部扰动残差。
"""

import math
import numpy as np
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Sequence, Tuple

from ..exceptions import GraphValidationError


RESIDUAL_TAGS = (
    'planar_fk',
    'relative_pose',
    'fixed_pose',
    'position_region',
    'circle_clearance',
    'box_membership',
    'custom_affine',
)

# 只允许出现在不等式约束上的类型
INEQUALITY_TAGS = ('position_region', 'circle_clearance', 'box_membership')


def wrap_angle(angle):
    """把角度归一化到 (-π, π]"""
    return math.pi - np.mod(math.pi - angle, 2.0 * math.pi)


def compose(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """SE(2) 位姿复合 a∘b"""
    c, s = np.cos(a[..., 2]), np.sin(a[..., 2])
    return np.stack([
        a[..., 0] + c * b[..., 0] - s * b[..., 1],
        a[..., 1] + s * b[..., 0] + c * b[..., 1],
        a[..., 2] + b[..., 2],
    ], axis=-1)


def inverse(a: np.ndarray) -> np.ndarray:
    """SE(2) 位姿求逆"""
    c, s = np.cos(a[..., 2]), np.sin(a[..., 2])
    return np.stack([
        -c * a[..., 0] - s * a[..., 1],
        s * a[..., 0] - c * a[..., 1],
        -a[..., 2],
    ], axis=-1)


def pose_difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """位姿差 a - b，角度分量归一化"""
    return np.stack([a[..., 0] - b[..., 0], a[..., 1] - b[..., 1], wrap_angle(a[..., 2] - b[..., 2])],
                    axis=-1)


def forward_kinematics(base: np.ndarray, links: Sequence[float],
                       joints: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    平面串联机械臂正运动学

    Args:
        base: 基座位姿 (..., 3)
        links: 连杆长度
        joints: 关节角 (..., n)

    Returns:
        (关节位置数组 shape=(..., n+1, 2)，含基座；末端执行器位姿 (..., 3))
    """
    base = np.asarray(base, dtype=float)
    joints = np.asarray(joints, dtype=float)
    headings = base[..., 2:3] + np.cumsum(joints, axis=-1)
    steps = np.stack([np.cos(headings), np.sin(headings)], axis=-1) * np.asarray(links, dtype=float)[:, None]
    lead = steps.shape[:-2]
    origin = np.broadcast_to(base[..., None, :2], lead + (1, 2))
    points = np.concatenate([origin, origin + np.cumsum(steps, axis=-2)], axis=-2)
    effector = np.concatenate([points[..., -1, :], headings[..., -1:]], axis=-1)
    return points, effector


def arm_check_points(points: np.ndarray) -> np.ndarray:
    """碰撞检查点：各关节（不含基座）加各连杆中点"""
    mids = 0.5 * (points[..., :-1, :] + points[..., 1:, :])
    return np.concatenate([points[..., 1:, :], mids], axis=-2)


@dataclass(frozen=True)
class ResidualKind:
    """内置残差描述：类型标签加数值参数"""

    tag: str
    params: Dict[str, Any] = field(default_factory=dict)

    def get(self, key: str, default: Any = None) -> Any:
        return self.params.get(key, default)

    def vector(self, key: str, default: Sequence[float] = ()) -> np.ndarray:
        return np.asarray(self.params.get(key, default), dtype=float)


def _components(kind: ResidualKind) -> List[int]:
    comps = [int(c) for c in kind.get('components', (0, 1, 2))]
    if not comps or any(c not in (0, 1, 2) for c in comps) or len(set(comps)) != len(comps):
        raise GraphValidationError(f"{kind.tag} 的 components 参数非法: {comps}")
    return comps


# ---------------------------------------------------------------- 各类型实现
# 每种类型提供 (codim 计算/校验, 求值函数)


def _planar_fk_codim(kind: ResidualKind, dims: List[int]) -> int:
    links = kind.get('links')
    if not links:
        raise GraphValidationError("planar_fk 缺少 links 参数")
    if len(dims) < 2 or dims[0] != 3 or dims[1] != len(links):
        raise GraphValidationError(
            f"planar_fk 作用域维度应为 [3, {len(links)}, 3...]，实际为 {dims}")
    if any(d != 3 for d in dims[2:]):
        raise GraphValidationError(f"planar_fk 的附加位姿变量维度必须为3，实际为 {dims[2:]}")
    roles = list(kind.get('roles', ('object',) * (len(dims) - 2)))
    if len(roles) != len(dims) - 2 or any(r not in ('object', 'base') for r in roles):
        raise GraphValidationError(f"planar_fk 的 roles 参数与作用域不匹配: {roles}")
    return len(_components(kind))


def _planar_fk(kind: ResidualKind, blocks: List[np.ndarray]) -> np.ndarray:
    transform, joints = blocks[0], blocks[1]
    base = kind.vector('base', (0.0, 0.0, 0.0))
    target = kind.vector('object', (0.0, 0.0, 0.0))
    roles = kind.get('roles', ('object',) * (len(blocks) - 2))
    for role, frame in zip(roles, blocks[2:]):
        if role == 'base':
            base = compose(base, frame)
        else:
            target = compose(target, frame)
    _, effector = forward_kinematics(base, kind.get('links'), joints)
    diff = pose_difference(effector, compose(target, transform))
    return diff[..., _components(kind)]


def _pose_codim(kind: ResidualKind, dims: List[int], arity: int) -> int:
    if len(dims) != arity or any(d != 3 for d in dims):
        raise GraphValidationError(f"{kind.tag} 需要 {arity} 个三维位姿变量，实际为 {dims}")
    if len(kind.vector('target', (0.0, 0.0, 0.0))) != 3:
        raise GraphValidationError(f"{kind.tag} 的 target 必须为三维位姿")
    return len(_components(kind))


def _fixed_pose(kind: ResidualKind, blocks: List[np.ndarray]) -> np.ndarray:
    diff = pose_difference(blocks[0], kind.vector('target', (0.0, 0.0, 0.0)))
    return diff[..., _components(kind)]


def _relative_pose(kind: ResidualKind, blocks: List[np.ndarray]) -> np.ndarray:
    relative = compose(inverse(blocks[0]), blocks[1])
    diff = pose_difference(relative, kind.vector('target', (0.0, 0.0, 0.0)))
    return diff[..., _components(kind)]


def _position_region_codim(kind: ResidualKind, dims: List[int]) -> int:
    if len(dims) != 1 or dims[0] < 2:
        raise GraphValidationError(f"position_region 需要一个维度≥2的变量，实际为 {dims}")
    if len(kind.vector('center')) != 2 or kind.get('radius') is None:
        raise GraphValidationError("position_region 需要 center=[x,y] 和 radius")
    return 1


def _position_region(kind: ResidualKind, blocks: List[np.ndarray]) -> np.ndarray:
    distance = np.linalg.norm(blocks[0][..., :2] - kind.vector('center'), axis=-1)
    return (distance - float(kind.get('radius')))[..., None]


def _circle_clearance_codim(kind: ResidualKind, dims: List[int]) -> int:
    if kind.get('radius') is None:
        raise GraphValidationError("circle_clearance 缺少 radius")
    links = kind.get('links')
    links2 = kind.get('links2')
    if links2:
        # 双臂模式：两条机械臂中间关节两两之间的间隙
        if not links or len(dims) != 2 or dims[0] != len(links) or dims[1] != len(links2):
            raise GraphValidationError(
                f"circle_clearance 双臂模式作用域维度应为 [{len(links or ())}, {len(links2)}]，实际为 {dims}")
        return (len(links) - 1) * (len(links2) - 1)
    if len(kind.vector('center')) != 2:
        raise GraphValidationError("circle_clearance 需要 center=[x,y]")
    if links:
        if len(dims) != 1 or dims[0] != len(links):
            raise GraphValidationError(
                f"circle_clearance 单臂模式作用域维度应为 [{len(links)}]，实际为 {dims}")
        return 2 * len(links)
    if len(dims) != 1 or dims[0] < 2:
        raise GraphValidationError(f"circle_clearance 点模式需要一个维度≥2的变量，实际为 {dims}")
    return 1


def _circle_clearance(kind: ResidualKind, blocks: List[np.ndarray]) -> np.ndarray:
    radius = float(kind.get('radius'))
    links = kind.get('links')
    links2 = kind.get('links2')
    if links2:
        points_a, _ = forward_kinematics(kind.vector('base', (0.0, 0.0, 0.0)), links, blocks[0])
        points_b, _ = forward_kinematics(kind.vector('base2', (0.0, 0.0, 0.0)), links2, blocks[1])
        inner_a, inner_b = points_a[..., 1:-1, :], points_b[..., 1:-1, :]
        gaps = np.linalg.norm(inner_a[..., :, None, :] - inner_b[..., None, :, :], axis=-1)
        return radius - gaps.reshape(gaps.shape[:-2] + (-1,))
    center = kind.vector('center')
    if links:
        points, _ = forward_kinematics(kind.vector('base', (0.0, 0.0, 0.0)), links, blocks[0])
        return radius - np.linalg.norm(arm_check_points(points) - center, axis=-1)
    return (radius - np.linalg.norm(blocks[0][..., :2] - center, axis=-1))[..., None]


def _box_membership_codim(kind: ResidualKind, dims: List[int]) -> int:
    lo, hi = kind.vector('lo'), kind.vector('hi')
    if len(dims) != 1 or len(lo) == 0 or len(lo) != len(hi) or len(lo) > dims[0]:
        raise GraphValidationError(f"box_membership 的 lo/hi 与变量维度 {dims} 不匹配")
    return 2 * len(lo)


def _box_membership(kind: ResidualKind, blocks: List[np.ndarray]) -> np.ndarray:
    lo, hi = kind.vector('lo'), kind.vector('hi')
    head = blocks[0][..., :len(lo)]
    return np.concatenate([lo - head, head - hi], axis=-1)


def _custom_affine_codim(kind: ResidualKind, dims: List[int]) -> int:
    offset = kind.vector('b')
    matrix = kind.vector('A')
    if len(offset) == 0 or len(matrix) != len(offset) * sum(dims):
        raise GraphValidationError(
            f"custom_affine 的 A 需要 {len(offset)}×{sum(dims)} 个元素，实际为 {len(matrix)}")
    return len(offset)


def _custom_affine(kind: ResidualKind, blocks: List[np.ndarray]) -> np.ndarray:
    offset = kind.vector('b')
    widths = [np.shape(b)[-1] for b in blocks]
    matrix = kind.vector('A').reshape(len(offset), sum(widths))
    columns = np.split(matrix, np.cumsum(widths)[:-1], axis=1)
    return sum(block @ cols.T for block, cols in zip(blocks, columns)) + offset


_REGISTRY: Dict[str, Tuple[Callable, Callable]] = {
    'planar_fk': (_planar_fk_codim, _planar_fk),
    'fixed_pose': (lambda k, d: _pose_codim(k, d, 1), _fixed_pose),
    'relative_pose': (lambda k, d: _pose_codim(k, d, 2), _relative_pose),
    'position_region': (_position_region_codim, _position_region),
    'circle_clearance': (_circle_clearance_codim, _circle_clearance),
    'box_membership': (_box_membership_codim, _box_membership),
    'custom_affine': (_custom_affine_codim, _custom_affine),
}


def residual_codim(kind: ResidualKind, scope_dims: List[int]) -> int:
    """
    校验残差参数并返回输出维度

    Args:
        kind: 残差描述
        scope_dims: 作用域内各变量的维度

    Returns:
        残差行数 codim

    Raises:
        GraphValidationError: 未知类型或参数/维度不匹配
    """
    if kind.tag not in _REGISTRY:
        raise GraphValidationError(f"未知残差类型: {kind.tag}")
    return _REGISTRY[kind.tag][0](kind, scope_dims)


def evaluate_residual(kind: ResidualKind, blocks: List[np.ndarray]) -> np.ndarray:
    """按作用域顺序给定的变量块求残差；块带相同前导批维度时逐批求值"""
    return np.asarray(_REGISTRY[kind.tag][1](kind, blocks), dtype=float)
