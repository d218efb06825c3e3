"""
工具函数模块

提供各种通用的工具函数，包括时间戳、文件操作、进度记录、表格摘要等。
"""

import os
import functools
import pandas as pd
from datetime import datetime
from typing import Any, Dict, Iterable, List


def generate_timestamp() -> str:
    """
    生成时间戳字符串

    Returns:
        格式为 YYYYMMDD_HHMMSS 的时间戳
    """
    return datetime.now().strftime("%Y%m%d_%H%M%S")


def ensure_directory_exists(directory: str) -> None:
    """
    确保目录存在，如果不存在则创建

    Args:
        directory: 目录路径
    """
    if directory and not os.path.exists(directory):
        os.makedirs(directory, exist_ok=True)


def validate_file_exists(file_path: str, file_description: str = "文件") -> bool:
    """
    验证文件是否存在

    Args:
        file_path: 文件路径
        file_description: 文件描述（用于错误信息）

    Returns:
        文件是否存在
    """
    exists = os.path.exists(file_path)
    if not exists:
        print(f"警告: {file_description} '{file_path}' 不存在")
    return exists


def safe_create_filename(pattern: str, **kwargs) -> str:
    """
    安全地创建文件名，替换模板中的占位符

    Args:
        pattern: 文件名模式，如 'CGS_{scenario}_{strategy}_SAMPLES_{timestamp}.txt'
        **kwargs: 替换参数

    Returns:
        生成的文件名
    """
    default_kwargs = {
        'timestamp': generate_timestamp(),
        'scenario': 'GRAPH',
        'strategy': 'RUN',
        'seed': 0,
    }
    default_kwargs.update(kwargs)

    try:
        return pattern.format(**default_kwargs)
    except KeyError as e:
        print(f"警告: 文件名模式中缺少参数 {e}")
        return f"CGS_OUTPUT_{generate_timestamp()}.txt"


def parse_scenario_selector(selector: str) -> Dict[str, Any]:
    """
    解析 `name:index` 形式的场景选择器

    Args:
        selector: 如 'handover:3'，省略索引时默认为0

    Returns:
        {'name': 场景名, 'index': 实例索引}
    """
    name, _, index = selector.partition(':')
    return {'name': name.strip(), 'index': int(index) if index.strip() else 0}


def print_dataframe_summary(df: pd.DataFrame, title: str = "结果摘要") -> None:
    """
    打印DataFrame摘要信息

    Args:
        df: pandas DataFrame
        title: 摘要标题
    """
    print(f"\n=== {title} ===")
    print(f"行数: {len(df):,}")
    print(f"列数: {len(df.columns)}")

    if len(df.columns) <= 10:
        print(f"列名: {', '.join(str(c) for c in df.columns)}")
    else:
        print(f"列名: {', '.join(str(c) for c in df.columns[:5])}... (共{len(df.columns)}列)")


def create_progress_logger(total_steps: int):
    """
    创建进度记录器

    Args:
        total_steps: 总步骤数

    Returns:
        进度记录函数
    """
    def log_progress(current_step: int, description: str = ""):
        percentage = (current_step / max(total_steps, 1)) * 100
        print(f"进度: {percentage:.1f}% ({current_step}/{total_steps}) {description}")

    return log_progress


def handle_exception(func):
    """
    异常处理装饰器

    Args:
        func: 要装饰的函数

    Returns:
        装饰后的函数
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except Exception as e:
            print(f"错误: {func.__name__} 执行失败 - {str(e)}")
            raise

    return wrapper


def format_id_set(ids: Iterable[str]) -> str:
    """把变量ID集合格式化为 `{a,b}` 形式"""
    return "{" + ",".join(ids) + "}"


def split_top_level(text: str, sep: str = ',') -> List[str]:
    """
    按分隔符拆分字符串，忽略方括号内的分隔符

    Args:
        text: 原始字符串
        sep: 分隔符

    Returns:
        拆分后的片段列表（已去除首尾空白，空串被丢弃）
    """
    parts = []
    depth = 0
    current = []
    for ch in text:
        if ch == '[':
            depth += 1
        elif ch == ']':
            depth -= 1
        if ch == sep and depth == 0:
            parts.append(''.join(current).strip())
            current = []
        else:
            current.append(ch)
    tail = ''.join(current).strip()
    if tail:
        parts.append(tail)
    return [p for p in parts if p]
