from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Tuple, Union

# 基底順序は全モジュール共通（変更禁止）
RING_SITES: Tuple[str, ...] = ("1", "2", "3u", "3d", "4", "5")
CHAIN_SITES: Tuple[str, ...] = ("1", "2", "3", "4", "5")

SiteRef = Union[int, str]


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class PulseSchedule:
    """[0, t_max] 上の共通ピーク omega_max の sin² パルス対（ħ = 1）"""
    omega_max: float
    t_max: float

    def __post_init__(self) -> None:
        for name in ("omega_max", "t_max"):
            value = _require_finite(name, getattr(self, name))
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value!r}")
            object.__setattr__(self, name, value)

    @property
    def area(self) -> float:
        """Ω_max·t_max（プロトコルの断熱性を決める唯一の量）"""
        return self.omega_max * self.t_max

    def with_t_max(self, t_max: float) -> "PulseSchedule":
        return replace(self, t_max=t_max)


@dataclass(frozen=True)
class DetuningConfig:
    delta_u: float = 0.0    # リング: サイト3u
    delta_d: float = 0.0    # リング: サイト3d
    delta: float = 0.0      # 鎖: 中央サイト3

    def __post_init__(self) -> None:
        for name in ("delta_u", "delta_d", "delta"):
            object.__setattr__(self, name, _require_finite(name, getattr(self, name)))

    @classmethod
    def antisymmetric(cls, delta: float) -> "DetuningConfig":
        """Δu = −Δd = delta（静電アハラノフ・ボーム線）"""
        return cls(delta_u=delta, delta_d=-delta)

    @classmethod
    def chain(cls, delta: float) -> "DetuningConfig":
        return cls(delta=delta)

    def swapped(self) -> "DetuningConfig":
        return replace(self, delta_u=self.delta_d, delta_d=self.delta_u)


def site_index(site: SiteRef, system: str = "ring") -> int:
    """
    サイト指定（ラベルまたは0始まりインデックス）を基底インデックスに変換する

    Args:
        site: "1", "3u", "5" などのラベル、または整数インデックス
        system: "ring" | "chain"

    Returns:
        基底インデックス
    """
    labels = RING_SITES if system == "ring" else CHAIN_SITES
    if isinstance(site, str):
        if site not in labels:
            raise ValueError(f"Unknown site {site!r} for {system}; expected one of {labels}")
        return labels.index(site)
    if isinstance(site, bool) or not 0 <= int(site) < len(labels):
        raise ValueError(f"Site index {site!r} out of range for {system} (0..{len(labels) - 1})")
    return int(site)


class ConvergenceError(RuntimeError):
    """ステップ数を倍にすると終状態占有率が許容差を超えて変化する"""

    def __init__(self, detuning: DetuningConfig, steps: int, change: float, tolerance: float):
        self.detuning = detuning
        self.steps = steps
        self.change = change
        self.tolerance = tolerance
        super().__init__(
            f"Propagation not converged at (delta_u={detuning.delta_u:g}, delta_d={detuning.delta_d:g}, "
            f"delta={detuning.delta:g}): |rho55(2N) - rho55(N)| = {change:.3e} > {tolerance:.1e} with N={steps}"
        )

    # ワーカープロセスから親へ送るため
    def __reduce__(self):
        return (self.__class__, (self.detuning, self.steps, self.change, self.tolerance))


class SingularGapError(ArithmeticError):
    """ギャップ E₊ − E₀ が小さすぎて断熱性パラメータが定義できない"""

    def __init__(self, t: float, gap: float):
        self.t = t
        self.gap = gap
        super().__init__(f"Degenerate gap |E+ - E0| = {gap:.3e} at t = {t:g}")

    def __reduce__(self):
        return (self.__class__, (self.t, self.gap))


class FringeFitError(RuntimeError):
    """縞の抽出に失敗（極大不足、分解能不足、追跡喪失）"""


class SweepPointError(RuntimeError):
    """格子点の計算に失敗（座標 (t_max, delta_u, delta_d) 付き）"""

    def __init__(self, coordinates: Tuple[float, ...], cause: BaseException):
        self.coordinates = coordinates
        self.cause = cause
        super().__init__(f"Sweep point {coordinates} failed: {type(cause).__name__}: {cause}")

    def __reduce__(self):
        return (self.__class__, (self.coordinates, self.cause))
