from __future__ import annotations

from typing import Tuple, Union

import numpy as np

from .types import PulseSchedule

TimeLike = Union[float, np.ndarray]

# 浮動小数の丸めで t_max をわずかに超えるケースを許容する相対幅
_T_SLACK = 1e-12


def _checked_times(t: TimeLike, schedule: PulseSchedule) -> np.ndarray:
    times = np.asarray(t, dtype=float)
    slack = _T_SLACK * schedule.t_max
    if not np.all(np.isfinite(times)):
        raise ValueError("Time must be finite")
    if np.any(times < -slack) or np.any(times > schedule.t_max + slack):
        bad = times[(times < -slack) | (times > schedule.t_max + slack)].ravel()[0]
        raise ValueError(f"Time {bad!r} outside protocol window [0, {schedule.t_max!r}]")
    return np.clip(times, 0.0, schedule.t_max)


def _unwrap(values: np.ndarray, like: TimeLike):
    return float(values) if np.ndim(like) == 0 else values


def pulse_amplitudes(t: TimeLike, schedule: PulseSchedule) -> Tuple[TimeLike, TimeLike]:
    """
    時刻tにおけるトンネル結合 (Ω₁, Ω₂) を返す

    Ω₁ = Ω_max·sin²(πt/2t_max), Ω₂ = Ω_max·cos²(πt/2t_max)。
    配列を渡した場合は要素ごとに評価する。

    Args:
        t: 時刻（スカラーまたは配列）、0 ≤ t ≤ t_max
        schedule: パルススケジュール

    Returns:
        (Ω₁, Ω₂) のタプル

    Raises:
        ValueError: t がプロトコル区間外
    """
    times = _checked_times(t, schedule)
    phase = np.pi * times / (2.0 * schedule.t_max)
    omega_1 = schedule.omega_max * np.sin(phase) ** 2
    # cos² を直接評価せず補数を取り、Ω₁+Ω₂=Ω_max を丸め誤差内で保証する
    omega_2 = schedule.omega_max - omega_1
    return _unwrap(omega_1, t), _unwrap(omega_2, t)


def pulse_derivatives(t: TimeLike, schedule: PulseSchedule) -> Tuple[TimeLike, TimeLike]:
    """
    sin² パルス対の解析的時間微分 (dΩ₁/dt, dΩ₂/dt)

    dΩ₁/dt = Ω_max·(π/2t_max)·sin(πt/t_max)、dΩ₂/dt = −dΩ₁/dt
    """
    times = _checked_times(t, schedule)
    rate = schedule.omega_max * np.pi / (2.0 * schedule.t_max)
    d_omega_1 = rate * np.sin(np.pi * times / schedule.t_max)
    return _unwrap(d_omega_1, t), _unwrap(-d_omega_1, t)
