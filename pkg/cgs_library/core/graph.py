"""
约束图模块

把因子化的可行性问题表示为约束图：变量（带维度与边界框）加约束因子
（等式/不等式残差及其作用域），并负责问题描述文件的解析与序列化。

文件格式（逐行，`#` 之后为注释）:
    graph <name>
    var <id> dim=<k> lo=<v,...> hi=<v,...>
    con <id> kind=<eq|ineq> scope=<id,...> residual=<tag>(<param=value,...>)

参数值可以是数字、标记或方括号列表，如 `links=[1,1,1]`、`roles=[object]`。
"""

import re
import numpy as np
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from .residuals import (
    INEQUALITY_TAGS, RESIDUAL_TAGS, ResidualKind, evaluate_residual, residual_codim,
)
from ..exceptions import GraphParseError, GraphValidationError, UnassignedVariableError
from ..utils import split_top_level


_ID_PATTERN = re.compile(r'^[A-Za-z_][A-Za-z0-9_]*$')
_RESIDUAL_PATTERN = re.compile(r'residual=([A-Za-z_]+)\((.*)\)\s*$')


@dataclass(frozen=True)
class VariableSpec:
    """变量：ID、环境维度与边界框"""

    id: str
    dim: int
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.lower, dtype=float), np.asarray(self.upper, dtype=float)


@dataclass(frozen=True)
class ConstraintSpec:
    """约束因子：类型、作用域、残差描述与输出行数"""

    id: str
    kind: str
    scope: Tuple[str, ...]
    codim: int
    residual: ResidualKind

    @property
    def is_equality(self) -> bool:
        return self.kind == 'eq'


def normalize_params(params: Mapping[str, Any]) -> Dict[str, Any]:
    """把参数值统一为 float / str / tuple，保证序列化往返后相等"""
    normalized = {}
    for key, value in params.items():
        if isinstance(value, (list, tuple, np.ndarray)):
            normalized[key] = tuple(v if isinstance(v, str) else float(v) for v in value)
        elif isinstance(value, str):
            normalized[key] = value
        else:
            normalized[key] = float(value)
    return normalized


def make_variable(var_id: str, lower: Sequence[float], upper: Sequence[float]) -> VariableSpec:
    """按边界框构造变量"""
    return VariableSpec(var_id, len(lower), tuple(float(v) for v in lower),
                        tuple(float(v) for v in upper))


@dataclass
class ConstraintGraph:
    """约束图：解析后不可变，可安全并发只读使用"""

    name: str
    variables: Tuple[VariableSpec, ...]
    constraints: Tuple[ConstraintSpec, ...] = ()
    _index: Dict[str, int] = field(default_factory=dict, init=False, repr=False, compare=False)
    _constraint_index: Dict[str, int] = field(default_factory=dict, init=False, repr=False, compare=False)
    _scope_masks: Tuple[int, ...] = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        self.variables = tuple(self.variables)
        self.constraints = tuple(self.constraints)
        self._validate()
        self._scope_masks = tuple(self.mask_of(c.scope) for c in self.constraints)

    @classmethod
    def assemble(cls, name: str, variables: Sequence[VariableSpec],
                 constraints: Sequence[Tuple[str, str, Sequence[str], str, Mapping[str, Any]]]
                 ) -> 'ConstraintGraph':
        """
        由 (id, kind, scope, tag, params) 元组构造约束图，自动计算 codim

        Args:
            name: 图名称
            variables: 变量列表
            constraints: 约束元组列表

        Returns:
            校验通过的约束图
        """
        dims = {v.id: v.dim for v in variables}
        specs = []
        for cid, kind, scope, tag, params in constraints:
            residual = ResidualKind(tag, normalize_params(params))
            missing = [v for v in scope if v not in dims]
            if missing:
                raise GraphValidationError(f"作用域引用了未声明的变量 {missing}", entity=cid)
            codim = residual_codim(residual, [dims[v] for v in scope])
            specs.append(ConstraintSpec(cid, kind, tuple(scope), codim, residual))
        return cls(name, tuple(variables), tuple(specs))

    def _validate(self) -> None:
        for i, var in enumerate(self.variables):
            if var.id in self._index:
                raise GraphValidationError("变量ID重复", entity=var.id)
            if var.dim < 1 or len(var.lower) != var.dim or len(var.upper) != var.dim:
                raise GraphValidationError(
                    f"维度不匹配: dim={var.dim}, lo={len(var.lower)}, hi={len(var.upper)}", entity=var.id)
            if any(lo >= hi for lo, hi in zip(var.lower, var.upper)):
                raise GraphValidationError("边界必须满足 lo < hi", entity=var.id)
            self._index[var.id] = i

        for j, con in enumerate(self.constraints):
            if con.id in self._constraint_index:
                raise GraphValidationError("约束ID重复", entity=con.id)
            if con.kind not in ('eq', 'ineq'):
                raise GraphValidationError(f"未知约束类型: {con.kind}", entity=con.id)
            if not con.scope:
                raise GraphValidationError("作用域为空", entity=con.id)
            if len(set(con.scope)) != len(con.scope):
                raise GraphValidationError("作用域内变量重复", entity=con.id)
            missing = [v for v in con.scope if v not in self._index]
            if missing:
                raise GraphValidationError(f"作用域引用了未声明的变量 {missing}", entity=con.id)
            if con.kind == 'eq' and con.residual.tag in INEQUALITY_TAGS:
                raise GraphValidationError(f"{con.residual.tag} 只能用于不等式约束", entity=con.id)
            try:
                codim = residual_codim(con.residual, [self.variable(v).dim for v in con.scope])
            except GraphValidationError as e:
                raise GraphValidationError(str(e), entity=con.id) from e
            if codim != con.codim:
                raise GraphValidationError(f"codim={con.codim} 与残差输出维度 {codim} 不一致", entity=con.id)
            self._constraint_index[con.id] = j

    # ------------------------------------------------------------ 查询

    @property
    def n(self) -> int:
        """变量个数"""
        return len(self.variables)

    @property
    def total_dim(self) -> int:
        """环境空间总维度 Σ dim(x_i)"""
        return sum(v.dim for v in self.variables)

    @property
    def variable_ids(self) -> Tuple[str, ...]:
        return tuple(v.id for v in self.variables)

    def index_of(self, var_id: str) -> int:
        return self._index[var_id]

    def variable(self, var_id: str) -> VariableSpec:
        return self.variables[self._index[var_id]]

    def constraint(self, constraint_id: str) -> ConstraintSpec:
        return self.constraints[self._constraint_index[constraint_id]]

    def mask_of(self, var_ids: Iterable[str]) -> int:
        """变量ID集合对应的位掩码（第i位表示第i个声明的变量）"""
        mask = 0
        for v in var_ids:
            mask |= 1 << self._index[v]
        return mask

    def as_mask(self, state: Any) -> int:
        """把位掩码、带 mask 属性的状态或变量ID集合统一转换为位掩码"""
        if isinstance(state, int):
            return state
        if hasattr(state, 'mask'):
            return state.mask
        return self.mask_of(state)

    def ids_of_mask(self, mask: int) -> Tuple[str, ...]:
        """位掩码对应的变量ID（按声明顺序）"""
        return tuple(v.id for i, v in enumerate(self.variables) if mask >> i & 1)

    def scope_mask(self, position: int) -> int:
        """第 position 个约束作用域的位掩码"""
        return self._scope_masks[position]

    def adjacency(self) -> Dict[str, Tuple[str, ...]]:
        """约束ID → 作用域变量（用于与黄金邻接文件比对）"""
        return {c.id: c.scope for c in self.constraints}


# ---------------------------------------------------------------- 求值


def eval_residual(g: ConstraintGraph, constraint_id: str,
                  x: Mapping[str, np.ndarray]) -> np.ndarray:
    """
    求单个约束的残差

    Args:
        g: 约束图
        constraint_id: 约束ID
        x: 完整或部分赋值（需覆盖作用域）

    Returns:
        长度为 codim 的残差向量

    Raises:
        UnassignedVariableError: 作用域内存在未赋值变量
    """
    con = g.constraint(constraint_id)
    return evaluate_constraint(g, con, x)


def evaluate_constraint(g: ConstraintGraph, con: ConstraintSpec,
                        x: Mapping[str, np.ndarray]) -> np.ndarray:
    blocks = []
    for var_id in con.scope:
        if var_id not in x:
            raise UnassignedVariableError(f"变量 {var_id} 尚未赋值", entity=con.id)
        blocks.append(np.asarray(x[var_id], dtype=float))
    return evaluate_residual(con.residual, blocks)


@dataclass
class AssignmentCheck:
    """赋值可行性检查结果"""

    feasible: bool
    max_eq: float
    max_ineq: float
    violations: List[str] = field(default_factory=list)


def check_assignment(g: ConstraintGraph, x: Mapping[str, np.ndarray],
                     tol_eq: float = 1e-6, tol_ineq: float = 1e-8,
                     constraints: Optional[Iterable[ConstraintSpec]] = None) -> AssignmentCheck:
    """
    对给定约束集合（默认全部约束）重新求值并判定可行性

    Args:
        g: 约束图
        x: 赋值
        tol_eq: 等式约束 ∞-范数容差
        tol_ineq: 不等式约束容差
        constraints: 需要检查的约束，默认全部

    Returns:
        AssignmentCheck
    """
    max_eq, max_ineq = 0.0, -np.inf
    violations = []
    for con in (g.constraints if constraints is None else constraints):
        r = evaluate_constraint(g, con, x)
        if con.is_equality:
            value = float(np.max(np.abs(r))) if r.size else 0.0
            max_eq = max(max_eq, value)
            if value > tol_eq:
                violations.append(con.id)
        else:
            value = float(np.max(r)) if r.size else -np.inf
            max_ineq = max(max_ineq, value)
            if value > tol_ineq:
                violations.append(con.id)
    if max_ineq == -np.inf:
        max_ineq = 0.0
    return AssignmentCheck(not violations, max_eq, max_ineq, violations)


# ---------------------------------------------------------------- 条件独立


def components_of_mask(g: ConstraintGraph, assigned_mask: int, candidate_mask: int) -> List[int]:
    """
    候选变量在删除已赋值变量后的连通分量（位掩码版本）

    只有作用域 ⊆ assigned ∪ candidate 的约束才连边；结果按分量最小变量下标排序。
    """
    within = assigned_mask | candidate_mask
    parent = {i: i for i in range(g.n) if candidate_mask >> i & 1}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for position in range(len(g.constraints)):
        scope = g.scope_mask(position)
        if scope & ~within:
            continue
        members = [i for i in parent if scope >> i & 1]
        for other in members[1:]:
            a, b = find(members[0]), find(other)
            if a != b:
                parent[max(a, b)] = min(a, b)

    groups: Dict[int, int] = {}
    for i in parent:
        root = find(i)
        groups[root] = groups.get(root, 0) | (1 << i)
    return [groups[root] for root in sorted(groups)]


def conditional_independence_components(g: ConstraintGraph, assigned: Iterable[str],
                                        candidate: Iterable[str]) -> List[FrozenSet[str]]:
    """
    把候选变量划分为条件独立的连通分量

    Args:
        g: 约束图
        assigned: 已赋值变量ID
        candidate: 新变量ID（与 assigned 不相交）

    Returns:
        分量列表，互不相交且覆盖全部候选变量
    """
    components = components_of_mask(g, g.mask_of(assigned), g.mask_of(candidate))
    return [frozenset(g.ids_of_mask(mask)) for mask in components]


# ---------------------------------------------------------------- 文件格式


def _parse_scalar(token: str) -> Any:
    try:
        return float(token)
    except ValueError:
        return token


def _parse_value(text: str) -> Any:
    text = text.strip()
    if text.startswith('['):
        if not text.endswith(']'):
            raise ValueError(f"列表缺少右括号: {text}")
        return tuple(_parse_scalar(t) for t in split_top_level(text[1:-1]))
    if ',' in text:
        return tuple(_parse_scalar(t) for t in split_top_level(text))
    return _parse_scalar(text)


def _parse_numbers(text: str, line_no: int, column: int, entity: str) -> Tuple[float, ...]:
    value = _parse_value(text)
    values = value if isinstance(value, tuple) else (value,)
    if any(isinstance(v, str) for v in values):
        raise GraphParseError(f"期望数值列表: {text}", line_no, column, entity)
    return tuple(float(v) for v in values)


def _split_fields(body: str, line_no: int, offset: int, entity: str) -> Dict[str, Tuple[str, int]]:
    fields = {}
    for match in re.finditer(r'\S+', body):
        token = match.group(0)
        key, eq, value = token.partition('=')
        if not eq:
            raise GraphParseError(f"无法识别的字段: {token}", line_no, offset + match.start() + 1, entity)
        fields[key] = (value, offset + match.start() + 1)
    return fields


def parse_graph(text: str, name: str = "graph") -> ConstraintGraph:
    """
    解析问题描述文档

    Args:
        text: 文档内容
        name: 文档未声明 graph 名称时使用的默认名称

    Returns:
        校验通过的约束图

    Raises:
        GraphParseError: 语法错误（带行列号）
        GraphValidationError: 未知残差类型、作用域解析失败、维度不匹配
    """
    variables: List[VariableSpec] = []
    constraint_rows = []
    graph_name = name

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].rstrip()
        if not line.strip():
            continue
        head = line.split(None, 2)
        keyword = head[0]
        column = line.index(keyword) + 1

        if keyword == 'graph':
            if len(head) != 2:
                raise GraphParseError("graph 行格式应为 `graph <name>`", line_no, column)
            graph_name = head[1]
            continue

        if keyword not in ('var', 'con') or len(head) < 2:
            raise GraphParseError(f"未知语句: {keyword}", line_no, column)

        entity = head[1]
        if not _ID_PATTERN.match(entity):
            raise GraphParseError(f"非法ID: {entity}", line_no, line.index(entity) + 1, entity)
        rest = head[2] if len(head) > 2 else ''
        rest_offset = line.index(rest) if rest else len(line)

        if keyword == 'var':
            fields = _split_fields(rest, line_no, rest_offset, entity)
            for required in ('dim', 'lo', 'hi'):
                if required not in fields:
                    raise GraphParseError(f"变量缺少字段 {required}", line_no, column, entity)
            try:
                dim = int(fields['dim'][0])
            except ValueError:
                raise GraphParseError(f"dim 必须为整数: {fields['dim'][0]}",
                                      line_no, fields['dim'][1], entity) from None
            lower = _parse_numbers(fields['lo'][0], line_no, fields['lo'][1], entity)
            upper = _parse_numbers(fields['hi'][0], line_no, fields['hi'][1], entity)
            variables.append(VariableSpec(entity, dim, lower, upper))
            continue

        match = _RESIDUAL_PATTERN.search(rest)
        if not match:
            raise GraphParseError("约束缺少 residual=<tag>(...) 字段", line_no, column, entity)
        tag = match.group(1)
        if tag not in RESIDUAL_TAGS:
            raise GraphValidationError(f"未知残差类型: {tag}", line_no,
                                       rest_offset + match.start(1) + 1, entity)
        params = {}
        for item in split_top_level(match.group(2)):
            key, eq, value = item.partition('=')
            if not eq:
                raise GraphParseError(f"残差参数格式应为 key=value: {item}",
                                      line_no, rest_offset + match.start(2) + 1, entity)
            try:
                params[key.strip()] = _parse_value(value)
            except ValueError as e:
                raise GraphParseError(str(e), line_no, rest_offset + match.start(2) + 1, entity) from None

        fields = _split_fields(rest[:match.start()], line_no, rest_offset, entity)
        for required in ('kind', 'scope'):
            if required not in fields:
                raise GraphParseError(f"约束缺少字段 {required}", line_no, column, entity)
        kind = fields['kind'][0]
        if kind not in ('eq', 'ineq'):
            raise GraphParseError(f"kind 必须为 eq 或 ineq: {kind}", line_no, fields['kind'][1], entity)
        scope = tuple(split_top_level(fields['scope'][0].strip('[]')))
        declared_codim = fields.get('codim')
        if declared_codim is not None:
            try:
                declared_codim = (int(declared_codim[0]), declared_codim[1])
            except ValueError:
                raise GraphParseError(f"codim 必须为整数: {declared_codim[0]}",
                                      line_no, declared_codim[1], entity) from None
        constraint_rows.append((entity, kind, scope, tag, params, declared_codim, line_no))

    dims = {v.id: v.dim for v in variables}
    specs = []
    for entity, kind, scope, tag, params, declared_codim, line_no in constraint_rows:
        missing = [v for v in scope if v not in dims]
        if missing:
            raise GraphValidationError(f"作用域引用了未声明的变量 {missing}", line_no, 0, entity)
        residual = ResidualKind(tag, normalize_params(params))
        try:
            codim = residual_codim(residual, [dims[v] for v in scope])
        except GraphValidationError as e:
            raise GraphValidationError(str(e), line_no, 0, entity) from None
        if declared_codim is not None and declared_codim[0] != codim:
            raise GraphValidationError(f"codim={declared_codim[0]} 与残差输出维度 {codim} 不一致",
                                       line_no, declared_codim[1], entity)
        specs.append(ConstraintSpec(entity, kind, scope, codim, residual))

    return ConstraintGraph(graph_name, tuple(variables), tuple(specs))


def _format_number(value: float) -> str:
    return repr(float(value))


def _format_param(value: Any) -> str:
    if isinstance(value, tuple):
        return "[" + ",".join(v if isinstance(v, str) else _format_number(v) for v in value) + "]"
    if isinstance(value, str):
        return value
    return _format_number(value)


def serialize_graph(g: ConstraintGraph) -> str:
    """
    把约束图序列化为问题描述文档（parse_graph 的逆操作）

    Args:
        g: 约束图

    Returns:
        文档文本
    """
    lines = [f"graph {g.name}"]
    for var in g.variables:
        lo = ",".join(_format_number(v) for v in var.lower)
        hi = ",".join(_format_number(v) for v in var.upper)
        lines.append(f"var {var.id} dim={var.dim} lo={lo} hi={hi}")
    for con in g.constraints:
        params = ", ".join(f"{k}={_format_param(v)}" for k, v in con.residual.params.items())
        lines.append(f"con {con.id} kind={con.kind} scope={','.join(con.scope)} "
                     f"residual={con.residual.tag}({params})")
    return "\n".join(lines) + "\n"


def graph_adjacency(g: ConstraintGraph) -> str:
    """
    约束图的邻接表文本（黄金邻接文件格式）

    每行: `<约束ID> <kind> <codim> <scope,...>`，按声明顺序排列。
    """
    lines = [f"# {g.name}: " + " ".join(f"{v.id}({v.dim})" for v in g.variables)]
    for con in g.constraints:
        lines.append(f"{con.id} {con.kind} {con.codim} {','.join(con.scope)}")
    return "\n".join(lines) + "\n"


def parse_adjacency(text: str) -> Dict[str, Tuple[str, int, Tuple[str, ...]]]:
    """解析邻接表文本，返回 约束ID → (kind, codim, scope)"""
    adjacency = {}
    for raw in text.splitlines():
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        cid, kind, codim, scope = line.split()
        adjacency[cid] = (kind, int(codim), tuple(scope.split(',')))
    return adjacency
