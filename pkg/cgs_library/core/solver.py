"""
条件采样求解器模块

实现条件采样操作：新变量在各自边界框内均匀随机初始化，再用带阻尼的
高斯-牛顿法投影到当前激活约束的流形上，已赋值变量始终保持不变。
不等式约束通过平方铰链罚项处理，罚权重按几何级数增长。
"""

import time
import numpy as np
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from .graph import ConstraintGraph, ConstraintSpec, check_assignment, evaluate_constraint
from .residuals import evaluate_residual
from ..exceptions import ConfigValidationError


# 回溯线搜索的最小步长
MIN_STEP = 1e-12


@dataclass
class SolverConfig:
    """求解器配置"""

    tol_eq: float = 1e-6
    tol_ineq: float = 1e-8
    max_iters: int = 100
    penalty_init: float = 1.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e8
    step_damping: float = 1e-6
    ineq_margin: float = 1e-6
    fd_step: float = 1e-6
    stall_tol: float = 1e-2
    stall_iters: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if self.tol_eq < 0 or self.tol_ineq < 0:
            raise ConfigValidationError("tol_eq / tol_ineq 不能为负", entity='solver')
        if int(self.max_iters) < 1:
            raise ConfigValidationError("max_iters 必须为正整数", entity='solver')
        for name in ('penalty_init', 'penalty_growth', 'penalty_max', 'step_damping', 'fd_step'):
            if getattr(self, name) <= 0:
                raise ConfigValidationError(f"{name} 必须为正数", entity='solver')
        if not 0.0 <= self.stall_tol < 1.0:
            raise ConfigValidationError("stall_tol 必须位于 [0,1)", entity='solver')
        if int(self.stall_iters) < 1:
            raise ConfigValidationError("stall_iters 必须为正整数", entity='solver')
        if self.ineq_margin < 0:
            raise ConfigValidationError("ineq_margin 不能为负", entity='solver')
        self.max_iters = int(self.max_iters)
        self.stall_iters = int(self.stall_iters)

    @classmethod
    def from_dict(cls, values: Optional[Mapping[str, Any]]) -> 'SolverConfig':
        """从配置字典构造，忽略未知键"""
        known = {k: v for k, v in (values or {}).items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class SampleAttemptResult:
    """单次条件采样尝试的结果"""

    feasible: bool
    values: Optional[Dict[str, np.ndarray]]
    residual_norm: float
    iters: int
    elapsed: float
    cost_proxy: int
    active_rows: int = 0
    # 每个被接受步的 (步前, 步后) 罚函数值
    merit_trace: List[Tuple[float, float]] = field(default_factory=list)


@dataclass(frozen=True)
class ActiveConstraint:
    """激活约束及其在残差堆叠中的行偏移"""

    constraint: ConstraintSpec
    offset: int

    @property
    def rows(self) -> slice:
        return slice(self.offset, self.offset + self.constraint.codim)


def residual_stack(g: ConstraintGraph, s_j: Any, s_i: Any) -> List[ActiveConstraint]:
    """
    计算转移 s_i → s_j 新激活的约束（作用域 ⊆ s_j 且 ⊄ s_i），按声明顺序排列

    Args:
        g: 约束图
        s_j: 目标状态（位掩码、状态对象或变量ID集合）
        s_i: 源状态

    Returns:
        带行偏移的激活约束列表，总行数为各约束 codim 之和
    """
    target, source = g.as_mask(s_j), g.as_mask(s_i)
    stack = []
    offset = 0
    for position, con in enumerate(g.constraints):
        scope = g.scope_mask(position)
        if scope & ~target or not scope & ~source:
            continue
        stack.append(ActiveConstraint(con, offset))
        offset += con.codim
    return stack


def stack_rows(stack: Sequence[ActiveConstraint]) -> int:
    """激活约束的总行数"""
    return sum(a.constraint.codim for a in stack)


class _Projection:
    """一次投影问题：把新变量拼接为向量 z，在固定已赋值变量的前提下求残差与雅可比"""

    def __init__(self, g: ConstraintGraph, assigned: Mapping[str, np.ndarray],
                 new_ids: Sequence[str], stack: Sequence[ActiveConstraint], cfg: SolverConfig):
        self.g = g
        self.assigned = assigned
        self.new_ids = list(new_ids)
        self.stack = list(stack)
        self.cfg = cfg

        self.slices: Dict[str, slice] = {}
        offset = 0
        for var_id in self.new_ids:
            dim = g.variable(var_id).dim
            self.slices[var_id] = slice(offset, offset + dim)
            offset += dim
        self.size = offset
        self.lower = np.concatenate([g.variable(v).bounds()[0] for v in self.new_ids])
        self.upper = np.concatenate([g.variable(v).bounds()[1] for v in self.new_ids])
        self.rows = stack_rows(self.stack)

    def unpack(self, z: np.ndarray) -> Dict[str, np.ndarray]:
        return {var_id: z[s].copy() for var_id, s in self.slices.items()}

    def _values(self, z: np.ndarray) -> Dict[str, np.ndarray]:
        values = dict(self.assigned)
        for var_id, s in self.slices.items():
            values[var_id] = z[s]
        return values

    def raw(self, z: np.ndarray) -> np.ndarray:
        """原始残差堆叠（等式与不等式各自的原值）"""
        values = self._values(z)
        out = np.empty(self.rows)
        for active in self.stack:
            out[active.rows] = evaluate_constraint(self.g, active.constraint, values)
        return out

    def _weighted(self, raw: np.ndarray, mu: float) -> np.ndarray:
        weighted = raw.copy()
        root_mu = np.sqrt(mu)
        for active in self.stack:
            if not active.constraint.is_equality:
                rows = active.rows
                weighted[rows] = root_mu * np.maximum(0.0, raw[rows] + self.cfg.ineq_margin)
        return weighted

    def merit(self, z: np.ndarray, mu: float, raw: Optional[np.ndarray] = None) -> float:
        weighted = self._weighted(self.raw(z) if raw is None else raw, mu)
        return float(weighted @ weighted)

    def linearize(self, z: np.ndarray, mu: float,
                  raw: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        在 z 处线性化，雅可比按约束分块用中心差分计算（只对作用域内的新变量求导）

        每个约束的全部 ±h 扰动堆叠为一批，一次求值得到该块的所有差分。

        Returns:
            (原始残差, 加权残差 F, 加权雅可比 J)
        """
        raw = self.raw(z) if raw is None else raw
        weighted = self._weighted(raw, mu)
        jac = np.zeros((self.rows, self.size))
        h = self.cfg.fd_step
        values = self._values(z)
        root_mu = np.sqrt(mu)

        for active in self.stack:
            con = active.constraint
            rows = active.rows
            if con.is_equality:
                row_scale = np.ones(con.codim)
            else:
                # 未激活的铰链行导数为0
                row_scale = root_mu * (raw[rows] + self.cfg.ineq_margin > 0.0)
                if not row_scale.any():
                    continue
            free = [v for v in con.scope if v in self.slices]
            if not free:
                continue
            cols = np.concatenate([np.arange(self.slices[v].start, self.slices[v].stop) for v in free])
            width = cols.size
            blocks = []
            local = 0
            for var_id in con.scope:
                block = np.tile(np.asarray(values[var_id], dtype=float), (2 * width, 1))
                if var_id in self.slices:
                    dim = block.shape[1]
                    k = np.arange(dim)
                    block[local + k, k] += h
                    block[width + local + k, k] -= h
                    local += dim
                blocks.append(block)
            out = evaluate_residual(con.residual, blocks)
            jac[rows, cols] = row_scale[:, None] * ((out[:width] - out[width:]) / (2.0 * h)).T
        return raw, weighted, jac

    def converged(self, raw: np.ndarray) -> Tuple[bool, bool]:
        """返回 (等式是否收敛, 不等式是否满足)"""
        eq_ok, ineq_ok = True, True
        for active in self.stack:
            r = raw[active.rows]
            if active.constraint.is_equality:
                eq_ok = eq_ok and float(np.max(np.abs(r))) <= self.cfg.tol_eq
            else:
                ineq_ok = ineq_ok and float(np.max(r)) <= self.cfg.tol_ineq
        return eq_ok, ineq_ok

    def violation(self, raw: np.ndarray) -> float:
        """等式 ∞-范数与不等式正违反量的最大值"""
        worst = 0.0
        for active in self.stack:
            r = raw[active.rows]
            if active.constraint.is_equality:
                worst = max(worst, float(np.max(np.abs(r))))
            else:
                worst = max(worst, float(np.max(r)))
        return worst


def _solve_step(jac: np.ndarray, weighted: np.ndarray, damping: float) -> np.ndarray:
    normal = jac.T @ jac + damping * np.eye(jac.shape[1])
    rhs = -jac.T @ weighted
    try:
        return np.linalg.solve(normal, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(normal, rhs, rcond=None)[0]


def conditional_sample(g: ConstraintGraph, assigned: Mapping[str, np.ndarray],
                       new_vars: Sequence[str], cfg: SolverConfig,
                       rng: np.random.Generator) -> SampleAttemptResult:
    """
    条件采样操作：给定 s_i 上的赋值，为 s_j \\ s_i 的新变量采样

    Args:
        g: 约束图
        assigned: 已赋值变量（调用前后保持不变）
        new_vars: 新变量ID，与 assigned 不相交
        cfg: 求解器配置
        rng: 随机数流

    Returns:
        SampleAttemptResult；不可行是正常结果而非异常
    """
    started = time.perf_counter()
    overlap = [v for v in new_vars if v in assigned]
    if overlap:
        raise ValueError(f"新变量与已赋值变量重叠: {overlap}")

    source = g.mask_of(assigned.keys())
    target = source | g.mask_of(new_vars)
    new_ids = g.ids_of_mask(target & ~source)
    stack = residual_stack(g, target, source)
    problem = _Projection(g, assigned, new_ids, stack, cfg)

    z = rng.uniform(problem.lower, problem.upper) if problem.size else np.empty(0)
    iters = 0
    trace: List[Tuple[float, float]] = []

    if problem.rows:
        mu = cfg.penalty_init
        raw_z = None
        stalled = 0
        while iters < cfg.max_iters:
            raw, weighted, jac = problem.linearize(z, mu, raw_z)
            eq_ok, ineq_ok = problem.converged(raw)
            if eq_ok and ineq_ok:
                break
            iters += 1

            current = float(weighted @ weighted)
            delta = _solve_step(jac, weighted, cfg.step_damping)
            step = 1.0
            accepted = False
            while step * float(np.linalg.norm(delta)) > MIN_STEP:
                candidate = np.clip(z + step * delta, problem.lower, problem.upper)
                raw_candidate = problem.raw(candidate)
                trial = problem.merit(candidate, mu, raw_candidate)
                if trial < current:
                    z, raw_z = candidate, raw_candidate
                    accepted = True
                    trace.append((current, trial))
                    # 停滞：相对下降不足 stall_tol
                    stalled = stalled + 1 if current - trial <= cfg.stall_tol * current else 0
                    break
                step *= 0.5

            if accepted and not (eq_ok and not ineq_ok) and stalled < cfg.stall_iters:
                continue
            if not ineq_ok and mu < cfg.penalty_max:
                mu = min(mu * cfg.penalty_growth, cfg.penalty_max)
                stalled = 0
            elif not accepted or stalled >= cfg.stall_iters:
                break

    values = problem.unpack(z)
    full = dict(assigned)
    full.update(values)
    closed = [c for p, c in enumerate(g.constraints) if not g.scope_mask(p) & ~target]
    report = check_assignment(g, full, cfg.tol_eq, cfg.tol_ineq, closed)
    residual_norm = problem.violation(problem.raw(z)) if problem.rows else 0.0

    return SampleAttemptResult(
        feasible=report.feasible,
        values=values if report.feasible else None,
        residual_norm=residual_norm,
        iters=iters,
        elapsed=time.perf_counter() - started,
        cost_proxy=iters * problem.rows,
        active_rows=problem.rows,
        merit_trace=trace,
    )
