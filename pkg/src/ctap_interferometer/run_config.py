from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

import regex

LOG = logging.getLogger("ctap_interferometer.run_config")

# key = value（# 以降はコメント）
_LINE = regex.compile(r"^\s*(?P<key>[A-Za-z][A-Za-z0-9_-]*)\s*=\s*(?P<value>[^#]*?)\s*(?:#.*)?$")
_BLANK = regex.compile(r"^\s*(?:#.*)?$")
_LIST_SEP = regex.compile(r"[,\s]+")


@dataclass(frozen=True)
class RunConfig:
    """全サブコマンド共通の実行パラメータ（既定値 < 設定ファイル < コマンドライン）"""
    omega_max: float = 1.0
    t_max: float = 200.0
    delta_u: float = 0.0
    delta_d: float = 0.0
    delta: float = 0.0
    antisymmetric: Optional[float] = None
    system: str = "ring"
    steps: Union[int, str] = "auto"
    samples: int = 500
    eigenvectors: bool = False
    delta_min: float = -1.0
    delta_max: float = 1.0
    resolution: int = 201
    t_max_min: float = 100.0
    t_max_max: float = 2000.0
    t_max_count: int = 20
    t_max_values: Tuple[float, ...] = ()
    f_guess: float = 20.0
    fringe_count: int = 6
    fd_step: Optional[float] = None
    charge_shift: Optional[float] = None
    vs_time: bool = False
    check_convergence: bool = False
    workers: int = 1
    output: Optional[str] = None

    def validate(self) -> "RunConfig":
        """
        値の整合性を検査する

        Returns:
            self（連鎖呼び出し用）

        Raises:
            ValueError: 非有限値・範囲外の値
        """
        for name in ("omega_max", "t_max", "delta_u", "delta_d", "delta", "delta_min", "delta_max",
                     "t_max_min", "t_max_max", "f_guess"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        for name in ("antisymmetric", "fd_step", "charge_shift"):
            value = getattr(self, name)
            if value is not None and not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        for name in ("omega_max", "t_max", "t_max_min", "t_max_max", "f_guess"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if any(not (math.isfinite(t) and t > 0) for t in self.t_max_values):
            raise ValueError(f"t_max values must be positive and finite, got {self.t_max_values!r}")
        if self.fd_step is not None and self.fd_step <= 0:
            raise ValueError(f"fd_step must be positive, got {self.fd_step!r}")
        if self.delta_max <= self.delta_min:
            raise ValueError(f"delta_max ({self.delta_max}) must exceed delta_min ({self.delta_min})")
        if self.t_max_max <= self.t_max_min:
            raise ValueError(f"t_max_max ({self.t_max_max}) must exceed t_max_min ({self.t_max_min})")
        if self.resolution < 2:
            raise ValueError(f"resolution must be >= 2, got {self.resolution}")
        if self.samples < 2:
            raise ValueError(f"samples must be >= 2, got {self.samples}")
        if self.t_max_count < 2:
            raise ValueError(f"t_max_count must be >= 2, got {self.t_max_count}")
        if self.steps != "auto" and (isinstance(self.steps, str) or self.steps < 2):
            raise ValueError(f"steps must be 'auto' or an integer >= 2, got {self.steps!r}")
        if self.fringe_count < 2:
            raise ValueError(f"fringe_count must be >= 2, got {self.fringe_count}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.system not in ("ring", "chain"):
            raise ValueError(f"system must be 'ring' or 'chain', got {self.system!r}")
        return self

    def as_metadata(self) -> Dict[str, Any]:
        """CSVメタデータ用の平坦な辞書"""
        values = asdict(self)
        values["t_max_values"] = " ".join(format(t, ".12g") for t in self.t_max_values) or None
        return values


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"Not a boolean: {text!r}")


def _parse_optional_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def parse_steps(text: Union[str, int]) -> Union[int, str]:
    if isinstance(text, int):
        return text
    if text.strip().lower() == "auto":
        return "auto"
    return int(text)


def _parse_float_list(text: str) -> Tuple[float, ...]:
    return tuple(float(part) for part in _LIST_SEP.split(text.strip()) if part)


_CONVERTERS: Dict[str, Callable[[str], Any]] = {
    "omega_max": float,
    "t_max": float,
    "delta_u": float,
    "delta_d": float,
    "delta": float,
    "antisymmetric": _parse_optional_float,
    "system": str,
    "steps": parse_steps,
    "samples": int,
    "eigenvectors": _parse_bool,
    "delta_min": float,
    "delta_max": float,
    "resolution": int,
    "t_max_min": float,
    "t_max_max": float,
    "t_max_count": int,
    "t_max_values": _parse_float_list,
    "f_guess": float,
    "fringe_count": int,
    "fd_step": _parse_optional_float,
    "charge_shift": _parse_optional_float,
    "vs_time": _parse_bool,
    "check_convergence": _parse_bool,
    "workers": int,
    "output": str,
}

FIELD_NAMES = tuple(f.name for f in fields(RunConfig))


def load_config_file(path: Path) -> Dict[str, Any]:
    """
    key = value 形式の設定ファイルを読み込む

    キーは長形式フラグ名（'-' と '_' のどちらも可）。空行と # コメントは無視する。

    Args:
        path: 設定ファイルのパス

    Returns:
        フィールド名 → 変換済みの値

    Raises:
        ValueError: 構文エラー・未知のキー・変換できない値
    """
    values: Dict[str, Any] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if _BLANK.match(line):
            continue
        match = _LINE.match(line)
        if not match:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key = match.group("key").replace("-", "_")
        if key not in _CONVERTERS:
            raise ValueError(f"{path}:{lineno}: unknown key {match.group('key')!r}")
        try:
            values[key] = _CONVERTERS[key](match.group("value"))
        except ValueError as e:
            raise ValueError(f"{path}:{lineno}: bad value for {key}: {e}") from None
    LOG.debug("Config file %s: %d keys", path, len(values))
    return values


def build_config(file_values: Optional[Dict[str, Any]] = None,
                 flag_values: Optional[Dict[str, Any]] = None) -> RunConfig:
    """既定値に設定ファイル、次にコマンドラインの明示値を重ねて検証する"""
    config = RunConfig()
    merged = {**(file_values or {}), **(flag_values or {})}
    unknown = set(merged) - set(FIELD_NAMES)
    if unknown:
        raise ValueError(f"Unknown parameters: {', '.join(sorted(unknown))}")
    return replace(config, **merged).validate()
