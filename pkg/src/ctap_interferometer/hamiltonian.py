from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .pulses import pulse_amplitudes, pulse_derivatives
from .types import CHAIN_SITES, RING_SITES, DetuningConfig, PulseSchedule

Edge = Tuple[int, int]

# 基底: |1⟩,|2⟩,|3u⟩,|3d⟩,|4⟩,|5⟩
RING_OMEGA_1_EDGES: Tuple[Edge, ...] = ((0, 1), (2, 4), (3, 4))
RING_OMEGA_2_EDGES: Tuple[Edge, ...] = ((1, 2), (1, 3), (4, 5))
RING_UP, RING_DOWN = 2, 3

# 基底: |1⟩..|5⟩（片腕の離調を無限大にした極限）
CHAIN_OMEGA_1_EDGES: Tuple[Edge, ...] = ((0, 1), (2, 3))
CHAIN_OMEGA_2_EDGES: Tuple[Edge, ...] = ((1, 2), (3, 4))
CHAIN_MIDDLE = 2


def _adjacency(size: int, edges: Sequence[Edge]) -> np.ndarray:
    matrix = np.zeros((size, size))
    for i, j in edges:
        matrix[i, j] = matrix[j, i] = 1.0
    return matrix


_RING_A = _adjacency(len(RING_SITES), RING_OMEGA_1_EDGES)
_RING_B = _adjacency(len(RING_SITES), RING_OMEGA_2_EDGES)
_CHAIN_A = _adjacency(len(CHAIN_SITES), CHAIN_OMEGA_1_EDGES)
_CHAIN_B = _adjacency(len(CHAIN_SITES), CHAIN_OMEGA_2_EDGES)


def _frozen(matrix: np.ndarray) -> np.ndarray:
    matrix.setflags(write=False)
    return matrix


@dataclass(frozen=True)
class RingHamiltonian:
    """ある時刻の6サイト干渉計ハミルトニアン（実対称行列）"""
    matrix: np.ndarray
    t: float
    detuning: DetuningConfig

    system = "ring"
    labels = RING_SITES


@dataclass(frozen=True)
class ChainHamiltonian:
    """中央サイトに離調 Δ を持つ5サイト鎖"""
    matrix: np.ndarray
    t: float
    delta: float

    system = "chain"
    labels = CHAIN_SITES


def ring_diagonal(det: DetuningConfig) -> np.ndarray:
    diagonal = np.zeros(len(RING_SITES))
    diagonal[RING_UP] = det.delta_u
    diagonal[RING_DOWN] = det.delta_d
    return diagonal


def chain_diagonal(delta: float) -> np.ndarray:
    diagonal = np.zeros(len(CHAIN_SITES))
    diagonal[CHAIN_MIDDLE] = delta
    return diagonal


def _compose(omega_1, omega_2, a: np.ndarray, b: np.ndarray, diagonal: np.ndarray) -> np.ndarray:
    omega_1 = np.asarray(omega_1, dtype=float)
    omega_2 = np.asarray(omega_2, dtype=float)
    stack = omega_1[..., None, None] * a + omega_2[..., None, None] * b
    stack += np.diag(diagonal)
    return stack


def build_ring(t: float, schedule: PulseSchedule, det: DetuningConfig) -> RingHamiltonian:
    """
    時刻tにおける6サイト干渉計ハミルトニアンを構築する

    Ω₁ を (1,2),(3u,4),(3d,4)、Ω₂ を (2,3u),(2,3d),(4,5) に配置し、
    対角に Δu, Δd を置いてエルミート補完する。

    Args:
        t: 時刻
        schedule: パルススケジュール
        det: 離調 (Δu, Δd)

    Returns:
        RingHamiltonian
    """
    omega_1, omega_2 = pulse_amplitudes(t, schedule)
    matrix = _compose(omega_1, omega_2, _RING_A, _RING_B, ring_diagonal(det))
    return RingHamiltonian(matrix=_frozen(matrix), t=float(t), detuning=det)


def build_chain(t: float, schedule: PulseSchedule, delta: float) -> ChainHamiltonian:
    """5サイト交互鎖: Ω₁ は (1,2),(3,4)、Ω₂ は (2,3),(4,5)、Δ はサイト3"""
    omega_1, omega_2 = pulse_amplitudes(t, schedule)
    matrix = _compose(omega_1, omega_2, _CHAIN_A, _CHAIN_B, chain_diagonal(float(delta)))
    return ChainHamiltonian(matrix=_frozen(matrix), t=float(t), delta=float(delta))


def hamiltonian_stack(times: np.ndarray, schedule: PulseSchedule, det: DetuningConfig,
                      system: str = "ring") -> np.ndarray:
    """
    複数時刻のハミルトニアンを一括で構築する（形状 (len(times), n, n)）

    伝播では中点ハミルトニアンをまとめて対角化するために使う。
    """
    omega_1, omega_2 = pulse_amplitudes(np.asarray(times, dtype=float), schedule)
    if system == "ring":
        return _compose(omega_1, omega_2, _RING_A, _RING_B, ring_diagonal(det))
    if system == "chain":
        return _compose(omega_1, omega_2, _CHAIN_A, _CHAIN_B, chain_diagonal(det.delta))
    raise ValueError(f"Unknown system {system!r}; expected 'ring' or 'chain'")


def hamiltonian_time_derivative(t, schedule: PulseSchedule, system: str = "chain") -> np.ndarray:
    """
    解析的なパルス微分から ∂H/∂t を求める（離調は定数なので消える）

    スカラーの t なら (n, n)、時刻配列なら (len(t), n, n)。
    """
    d_omega_1, d_omega_2 = pulse_derivatives(t, schedule)
    if system == "chain":
        a, b = _CHAIN_A, _CHAIN_B
    elif system == "ring":
        a, b = _RING_A, _RING_B
    else:
        raise ValueError(f"Unknown system {system!r}; expected 'ring' or 'chain'")
    return _compose(d_omega_1, d_omega_2, a, b, np.zeros(a.shape[0]))


def basis_state(site: int, system: str = "ring") -> np.ndarray:
    size = len(RING_SITES) if system == "ring" else len(CHAIN_SITES)
    state = np.zeros(size, dtype=complex)
    state[site] = 1.0
    return state
