from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .hamiltonian import CHAIN_MIDDLE, RING_DOWN, RING_UP, basis_state, hamiltonian_stack
from .types import (
    CHAIN_SITES, RING_SITES, ConvergenceError, DetuningConfig, PulseSchedule, SiteRef, site_index,
)

LOG = logging.getLogger("ctap_interferometer.evolution")

MIN_STEPS = 2000
STEPS_PER_UNIT_AREA = 40
DEFAULT_SAMPLES = 500
CONVERGENCE_TOL = 1e-8
# 自動ステップ数の倍増上限
MAX_DOUBLINGS = 6
NORM_TOL = 1e-9
# 一度に対角化するステップ数（メモリ上限）
CHUNK_STEPS = 4096

Steps = Union[int, str, None]


@dataclass(frozen=True)
class Trajectory:
    """時間依存シュレディンガー方程式の解（サンプル時刻ごとの状態）"""
    times: np.ndarray          # (samples,)
    states: np.ndarray         # (samples, n) complex
    system: str
    schedule: PulseSchedule
    detuning: DetuningConfig
    steps: int

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.states) ** 2

    @property
    def norms(self) -> np.ndarray:
        return np.sqrt(self.populations.sum(axis=1))

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def labels(self):
        return RING_SITES if self.system == "ring" else CHAIN_SITES


def default_steps(schedule: PulseSchedule) -> int:
    """N = max(2000, ceil(40·Ω_max·t_max))."""
    return max(MIN_STEPS, int(math.ceil(STEPS_PER_UNIT_AREA * schedule.area)))


def resolve_steps(steps: Steps, schedule: PulseSchedule) -> int:
    if steps is None or steps == "auto":
        return default_steps(schedule)
    if isinstance(steps, str):
        raise ValueError(f"steps must be an integer or 'auto', got {steps!r}")
    steps = int(steps)
    if steps < 2:
        raise ValueError(f"steps must be >= 2, got {steps}")
    return steps


def system_size(system: str) -> int:
    if system == "ring":
        return len(RING_SITES)
    if system == "chain":
        return len(CHAIN_SITES)
    raise ValueError(f"Unknown system {system!r}; expected 'ring' or 'chain'")


def target_site(system: str) -> int:
    """読み出しサイト |5⟩ のインデックス"""
    return system_size(system) - 1


def _checked_initial_state(psi0: Optional[np.ndarray], system: str) -> np.ndarray:
    if psi0 is None:
        return basis_state(0, system)
    psi = np.asarray(psi0, dtype=complex).reshape(-1)
    if psi.shape[0] != system_size(system):
        raise ValueError(f"Initial state has {psi.shape[0]} amplitudes; {system} needs {system_size(system)}")
    norm = float(np.linalg.norm(psi))
    if abs(norm - 1.0) > NORM_TOL:
        raise ValueError(f"Initial state must be normalized, got norm {norm!r}")
    return psi


def _step_unitaries(hamiltonians: np.ndarray, dt: float) -> np.ndarray:
    energies, vectors = np.linalg.eigh(hamiltonians)
    phases = np.exp(-1j * dt * energies)
    return (vectors * phases[:, None, :]) @ np.swapaxes(vectors, -1, -2)


def _ordered_product(unitaries: np.ndarray) -> np.ndarray:
    """U_{m-1}···U_1·U_0 を2個ずつ畳み込む（先のステップが先に作用）"""
    stack = unitaries
    while stack.shape[0] > 1:
        tail = stack[-1:] if stack.shape[0] % 2 else None
        even = stack[: stack.shape[0] - (1 if tail is not None else 0)]
        stack = even[1::2] @ even[0::2]
        if tail is not None:
            stack = np.concatenate([stack, tail])
    return stack[0]


def segment_propagator(schedule: PulseSchedule, det: DetuningConfig, system: str,
                       step_lo: int, step_hi: int, dt: float) -> np.ndarray:
    """
    ステップ区間 [step_lo, step_hi) の時間発展演算子

    各ステップでは中点時刻のハミルトニアンを一定とみなし、
    固有分解による厳密な指数関数 exp(−iHδt) を掛ける。

    Args:
        schedule: パルススケジュール
        det: 離調
        system: "ring" | "chain"
        step_lo: 開始ステップ
        step_hi: 終了ステップ（含まない）
        dt: ステップ幅

    Returns:
        (n, n) ユニタリ行列
    """
    total = np.eye(system_size(system), dtype=complex)
    for lo in range(step_lo, step_hi, CHUNK_STEPS):
        hi = min(lo + CHUNK_STEPS, step_hi)
        midpoints = np.minimum((np.arange(lo, hi) + 0.5) * dt, schedule.t_max)
        stack = hamiltonian_stack(midpoints, schedule, det, system)
        total = _ordered_product(_step_unitaries(stack, dt)) @ total
    return total


def evolve_final_state(schedule: PulseSchedule, det: DetuningConfig, steps: Steps = None,
                       psi0: Optional[np.ndarray] = None, system: str = "ring") -> np.ndarray:
    """終状態 ψ(t_max) のみを返す（掃引の1点分の計算）"""
    n_steps = resolve_steps(steps, schedule)
    psi = _checked_initial_state(psi0, system)
    dt = schedule.t_max / n_steps
    return segment_propagator(schedule, det, system, 0, n_steps, dt) @ psi


def final_transfer(schedule: PulseSchedule, det: DetuningConfig, steps: Steps = None,
                   system: str = "ring") -> float:
    """|1⟩ から出発した ρ₅₅(t_max)"""
    psi = evolve_final_state(schedule, det, steps, None, system)
    return float(abs(psi[target_site(system)]) ** 2)


def convergence_change(schedule: PulseSchedule, det: DetuningConfig, steps: Steps = None,
                       system: str = "ring") -> float:
    """ステップ倍増による収束指標 |ρ₅₅(2N) − ρ₅₅(N)|"""
    n_steps = resolve_steps(steps, schedule)
    coarse = final_transfer(schedule, det, n_steps, system)
    fine = final_transfer(schedule, det, 2 * n_steps, system)
    return abs(fine - coarse)


def converged_steps(schedule: PulseSchedule, det: DetuningConfig, steps: Steps = None,
                    system: str = "ring", tolerance: float = CONVERGENCE_TOL) -> Tuple[int, float, float]:
    """
    |ρ₅₅(2N) − ρ₅₅(N)| ≤ tolerance を満たすステップ数 N を求める

    steps が None/"auto" なら既定の N から最大 MAX_DOUBLINGS 回まで倍増する。
    明示的な N はその値だけを検査する。

    Args:
        schedule: パルススケジュール
        det: 離調
        steps: 積分ステップ数
        system: "ring" | "chain"
        tolerance: 許容差

    Returns:
        (N, ρ₅₅(N), |ρ₅₅(2N) − ρ₅₅(N)|)

    Raises:
        ConvergenceError: 倍増の上限まで許容差を満たさない
    """
    adaptive = steps is None or steps == "auto"
    n_steps = resolve_steps(steps, schedule)
    coarse = final_transfer(schedule, det, n_steps, system)
    for doubling in range(MAX_DOUBLINGS + 1 if adaptive else 1):
        fine = final_transfer(schedule, det, 2 * n_steps, system)
        change = abs(fine - coarse)
        LOG.debug("Convergence check: N=%d change=%.3e", n_steps, change)
        if change <= tolerance:
            if doubling:
                LOG.debug("Raised steps to N=%d at (%g, %g)", n_steps, det.delta_u, det.delta_d)
            return n_steps, coarse, change
        if doubling == MAX_DOUBLINGS or not adaptive:
            break
        n_steps, coarse = 2 * n_steps, fine
    raise ConvergenceError(det, n_steps, change, tolerance)


def check_convergence(schedule: PulseSchedule, det: DetuningConfig, steps: Steps = None,
                      system: str = "ring", tolerance: float = CONVERGENCE_TOL) -> float:
    """converged_steps を実行し、最後の |ρ₅₅(2N) − ρ₅₅(N)| を返す"""
    return converged_steps(schedule, det, steps, system, tolerance)[2]


def propagate(schedule: PulseSchedule, det: Optional[DetuningConfig] = None, steps: Steps = None,
              psi0: Optional[np.ndarray] = None, *, system: str = "ring",
              samples: int = DEFAULT_SAMPLES, check: bool = False,
              tolerance: float = CONVERGENCE_TOL) -> Trajectory:
    """
    パルスプロトコル全体でシュレディンガー方程式を積分する

    積分ステップ数と出力サンプル数は独立。サンプル時刻はステップ格子上に丸める。

    Args:
        schedule: パルススケジュール
        det: 離調（既定: ゼロ）
        steps: 積分ステップ数、None/"auto" で max(2000, ceil(40·Ω_max·t_max))
        psi0: 初期状態（既定: |1⟩）、正規化必須
        system: "ring"（6サイト）| "chain"（5サイト）
        samples: 出力サンプル数（≥ 2）
        check: True ならステップ倍増で収束を検査（自動ステップ数は収束するまで倍増）
        tolerance: 収束判定の許容差

    Returns:
        Trajectory

    Raises:
        ValueError: 不正な初期状態・ステップ数
        ConvergenceError: check=True かつ収束しない
    """
    det = det or DetuningConfig()
    n_steps = resolve_steps(steps, schedule)
    if samples < 2:
        raise ValueError(f"samples must be >= 2, got {samples}")
    psi = _checked_initial_state(psi0, system)
    if check:
        n_steps = converged_steps(schedule, det, steps, system, tolerance)[0]
    dt = schedule.t_max / n_steps

    marks = np.unique(np.round(np.linspace(0, n_steps, min(samples, n_steps + 1))).astype(int))
    states = np.empty((len(marks), psi.shape[0]), dtype=complex)
    states[0] = psi
    for k in range(1, len(marks)):
        psi = segment_propagator(schedule, det, system, marks[k - 1], marks[k], dt) @ psi
        states[k] = psi

    drift = abs(float(np.linalg.norm(psi)) - 1.0)
    LOG.debug("Propagated %s: N=%d, samples=%d, norm drift %.2e", system, n_steps, len(marks), drift)

    return Trajectory(
        times=marks * dt,
        states=states,
        system=system,
        schedule=schedule,
        detuning=det,
        steps=n_steps,
    )


def final_population(traj: Trajectory, site: SiteRef = "5") -> float:
    """|⟨site|ψ(t_max)⟩|²（site はラベル "5", "3u" または基底インデックス）"""
    index = site_index(site, traj.system)
    return float(abs(traj.final_state[index]) ** 2)


def middle_population(traj: Trajectory) -> np.ndarray:
    """各サンプルの中央サイト占有率（リング: ρ₃ᵤ+ρ₃d、鎖: ρ₃₃）"""
    populations = traj.populations
    if traj.system == "ring":
        return populations[:, RING_UP] + populations[:, RING_DOWN]
    return populations[:, CHAIN_MIDDLE]


def transient_middle_population(traj: Trajectory) -> float:
    """中央サイト占有率のプロトコル中の最大値"""
    return float(np.max(middle_population(traj)))


def antisymmetric_branch_amplitude(traj: Trajectory) -> np.ndarray:
    """各サンプルの |⟨3u|ψ⟩ − ⟨3d|ψ⟩|/√2（リングのみ）"""
    if traj.system != "ring":
        raise ValueError("Antisymmetric branch amplitude is defined for the ring only")
    return np.abs(traj.states[:, RING_UP] - traj.states[:, RING_DOWN]) / math.sqrt(2.0)
