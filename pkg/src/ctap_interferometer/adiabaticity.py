from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .hamiltonian import build_chain, hamiltonian_stack, hamiltonian_time_derivative
from .spectrum import eigendecompose
from .types import DetuningConfig, PulseSchedule, SingularGapError

LOG = logging.getLogger("ctap_interferometer.adiabaticity")

GRID_POINTS = 1001
REFINE_XTOL = 1e-10
GAP_FLOOR = 1e-12

# 鎖の順位: D2-, D-, D0, D+, D2+
_D0, _DPLUS = 2, 3


@dataclass(frozen=True)
class AdiabaticityTrace:
    times: np.ndarray
    values: np.ndarray
    a_max: float
    t_at_max: float
    delta: float


def adiabaticity_at(t: float, schedule: PulseSchedule, delta: float) -> float:
    """
    5サイト鎖の断熱性パラメータ 𝒜 = |⟨D₊|∂H/∂t|D₀⟩| / |E₊−E₀|²

    Args:
        t: 時刻
        schedule: パルススケジュール
        delta: 中央サイトの離調 Δ

    Returns:
        無次元の 𝒜 ≥ 0

    Raises:
        SingularGapError: |E₊−E₀| < 1e-12·Ω_max
    """
    decomposition = eigendecompose(build_chain(t, schedule, delta))
    gap = decomposition.energy("D+") - decomposition.energy("D0")
    if abs(gap) < GAP_FLOOR * schedule.omega_max:
        raise SingularGapError(t, gap)
    d_h = hamiltonian_time_derivative(t, schedule, "chain")
    coupling = abs(np.vdot(decomposition.vector("D+"), d_h @ decomposition.vector("D0")))
    return float(coupling / gap ** 2)


def _adiabaticity_on_grid(times: np.ndarray, schedule: PulseSchedule, delta: float) -> np.ndarray:
    stack = hamiltonian_stack(times, schedule, DetuningConfig.chain(delta), "chain")
    energies, vectors = np.linalg.eigh(stack)
    gaps = energies[:, _DPLUS] - energies[:, _D0]
    tiny = np.abs(gaps) < GAP_FLOOR * schedule.omega_max
    if np.any(tiny):
        k = int(np.argmax(tiny))
        raise SingularGapError(float(times[k]), float(gaps[k]))
    d_h = hamiltonian_time_derivative(times, schedule, "chain")
    couplings = np.einsum("ki,kij,kj->k", vectors[:, :, _DPLUS], d_h, vectors[:, :, _D0])
    return np.abs(couplings) / gaps ** 2


def adiabaticity_trace(schedule: PulseSchedule, delta: float, samples: int = GRID_POINTS) -> AdiabaticityTrace:
    """[0, t_max] の等間隔格子上の 𝒜(t)"""
    if samples < 2:
        raise ValueError(f"samples must be >= 2, got {samples}")
    times = np.linspace(0.0, schedule.t_max, samples)
    values = _adiabaticity_on_grid(times, schedule, delta)
    k = int(np.argmax(values))
    return AdiabaticityTrace(times=times, values=values, a_max=float(values[k]),
                             t_at_max=float(times[k]), delta=float(delta))


def max_adiabaticity(schedule: PulseSchedule, delta: float, grid: int = GRID_POINTS,
                     xtol: float = REFINE_XTOL) -> float:
    """
    プロトコル全体での 𝒜 の最大値

    格子上の最大点を求め、隣接格子点の間を黄金分割法で精密化する。

    Args:
        schedule: パルススケジュール
        delta: 中央サイトの離調 Δ
        grid: 初期探索の格子点数
        xtol: 精密化の許容幅

    Returns:
        𝒜_max

    Raises:
        SingularGapError: |E₊ − E₀| が 1e-12·Ω_max 未満
    """
    trace = adiabaticity_trace(schedule, delta, grid)
    k = int(np.argmax(trace.values))
    best = trace.a_max
    if k == 0 or k == len(trace.times) - 1:
        LOG.warning("Adiabaticity maximum on the grid boundary (t=%g, delta=%g)", trace.times[k], delta)
        return best

    def objective(t: float) -> float:
        return -adiabaticity_at(float(np.clip(t, 0.0, schedule.t_max)), schedule, delta)

    bracket = (trace.times[k - 1], trace.times[k], trace.times[k + 1])
    try:
        result = minimize_scalar(objective, bracket=bracket, method="golden",
                                 tol=xtol, options={"maxiter": 200})
    except ValueError:
        # 格子上で平坦（3点が括弧条件を満たさない）
        result = minimize_scalar(objective, bounds=(bracket[0], bracket[2]), method="bounded",
                                 options={"xatol": xtol * schedule.t_max})
    refined = -float(result.fun)
    LOG.debug("max_adiabaticity delta=%g: grid %.12g at t=%g, refined %.12g at t=%.12g",
              delta, best, trace.times[k], refined, result.x)
    return max(best, refined)


def adiabaticity_closed_form(schedule: PulseSchedule) -> float:
    """Δ = 0 の閉形式 𝒜_max = 4π/(√3·Ω_max·t_max)"""
    return 4.0 * math.pi / (math.sqrt(3.0) * schedule.omega_max * schedule.t_max)


def adiabaticity_series(schedule: PulseSchedule, delta: float) -> float:
    """中央サイト離調 Δ についての 𝒜_max の2次級数"""
    omega, t_max = schedule.omega_max, schedule.t_max
    root3 = math.sqrt(3.0)
    return (
        4.0 * math.pi / (root3 * omega * t_max)
        + 20.0 * math.pi * delta / (3.0 * root3 * omega ** 2 * t_max)
        + 56.0 * math.pi * delta ** 2 / (9.0 * root3 * omega ** 3 * t_max)
    )


def adiabaticity_curve(schedule: PulseSchedule, deltas: Iterable[float]) -> List[Tuple[float, float, float]]:
    """
    Δ ごとの (Δ, 数値 𝒜_max, 級数 𝒜) の行を返す

    Args:
        schedule: パルススケジュール
        deltas: 評価する離調の列

    Returns:
        行タプルのリスト
    """
    rows = []
    for delta in deltas:
        delta = float(delta)
        rows.append((delta, max_adiabaticity(schedule, delta), adiabaticity_series(schedule, delta)))
    LOG.info("Adiabaticity curve: %d detunings, Omega_max*t_max=%g", len(rows), schedule.area)
    return rows
