"""
output_writer.py - 确定性结果文件写出
CSV：'#' 开头的头注释、',' 分隔、17 位有效数字；JSON：键排序，_meta 记录版本与配置哈希
同一配置重复运行得到逐字节相同的文件（不写入时间戳）
"""

import json
import logging
import math
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from exceptions import ConfigError
from run_config import TOOL_VERSION

logger = logging.getLogger(__name__)

TOOL_NAME = "zitter-toolkit"


def format_value(value: Any) -> str:
    """浮点数统一用 17 位有效数字，保证 double 无损往返"""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.17g}"


def _sanitize(value: Any) -> Any:
    """JSON 不允许 NaN/inf，改为 null"""
    if isinstance(value, dict):
        return {str(k): _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_sanitize(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


class ArtifactWriter:
    """
    单一写出者：所有子命令的文件都经由它写到 output_dir

    Args:
        output_dir: 输出目录，不存在时创建
        config_hash: 配置哈希，写入每个文件的头部
        command: 子命令名
    """

    def __init__(self, output_dir: str, config_hash: str, command: str):
        self.output_dir = output_dir
        self.config_hash = config_hash
        self.command = command
        self.written: List[str] = []
        try:
            os.makedirs(output_dir, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"无法创建输出目录 {output_dir}: {e}", path="output_dir")

    def _path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def header_lines(self, extra: Optional[Dict[str, Any]] = None) -> List[str]:
        lines = [
            f"# tool: {TOOL_NAME} {TOOL_VERSION}",
            f"# config_hash: {self.config_hash}",
            f"# command: {self.command}",
        ]
        for key, value in (extra or {}).items():
            text = format_value(value) if isinstance(value, (int, float, np.number)) else str(value)
            lines.append(f"# {key}: {text}")
        return lines

    def write_csv(self, name: str, columns: Sequence[str], rows: Sequence[Sequence[Any]],
                  extra: Optional[Dict[str, Any]] = None) -> str:
        for i, row in enumerate(rows):
            if len(row) != len(columns):
                raise ValueError(f"第 {i} 行有 {len(row)} 列，表头有 {len(columns)} 列")
        path = self._path(name)
        lines = self.header_lines(extra)
        lines.append(",".join(columns))
        lines.extend(",".join(format_value(v) for v in row) for row in rows)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(lines) + "\n")
        self.written.append(path)
        logger.info("写出 %s (%d 行)", path, len(rows))
        return path

    def write_json(self, name: str, payload: Dict[str, Any]) -> str:
        path = self._path(name)
        document = {
            "_meta": {"tool": TOOL_NAME, "version": TOOL_VERSION,
                      "config_hash": self.config_hash, "command": self.command},
            **_sanitize(payload),
        }
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False) + "\n")
        self.written.append(path)
        logger.info("写出 %s", path)
        return path

    def write_text(self, name: str, text: str) -> str:
        path = self._path(name)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text if text.endswith("\n") else text + "\n")
        self.written.append(path)
        return path


def read_csv(path: str) -> Tuple[Dict[str, str], List[str], np.ndarray]:
    """读回 write_csv 的文件：(头注释字典, 列名, 数据)"""
    header: Dict[str, str] = {}
    columns: List[str] = []
    data: List[List[float]] = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(":")
                header[key.strip()] = value.strip()
            elif not columns:
                columns = line.split(",")
            elif line:
                data.append([float(v) for v in line.split(",")])
    return header, columns, np.array(data, dtype=float).reshape(len(data), len(columns))
