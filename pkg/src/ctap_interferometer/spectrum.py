from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .hamiltonian import RING_DOWN, RING_UP, ChainHamiltonian, RingHamiltonian, hamiltonian_stack
from .types import CHAIN_SITES, RING_SITES, DetuningConfig, PulseSchedule

LOG = logging.getLogger("ctap_interferometer.spectrum")

RING_LABELS: Tuple[str, ...] = ("D2-", "D-", "D0(-)", "D0(+)", "D+", "D2+")
CHAIN_LABELS: Tuple[str, ...] = ("D2-", "D-", "D0", "D+", "D2+")

# 中央ペアの縮退判定（‖H‖ 相対）
DEGENERACY_TOL = 1e-9
HERMITIAN_TOL = 1e-12

AnyHamiltonian = Union[RingHamiltonian, ChainHamiltonian, np.ndarray]


@dataclass(frozen=True)
class EigenDecomposition:
    """昇順の固有値、正規直交な固有ベクトル（列）、順位ラベル"""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray    # 列が固有状態（eigenvalues と同順）
    labels: Tuple[str, ...]
    system: str

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"Unknown eigenstate label {label!r}; expected one of {self.labels}") from None

    def energy(self, label: str) -> float:
        return float(self.eigenvalues[self.index(label)])

    def vector(self, label: str) -> np.ndarray:
        return self.eigenvectors[:, self.index(label)]


def _matrix_and_system(h: AnyHamiltonian) -> Tuple[np.ndarray, str]:
    if isinstance(h, (RingHamiltonian, ChainHamiltonian)):
        return np.asarray(h.matrix), h.system
    matrix = np.asarray(h)
    if matrix.shape == (len(RING_SITES), len(RING_SITES)):
        return matrix, "ring"
    if matrix.shape == (len(CHAIN_SITES), len(CHAIN_SITES)):
        return matrix, "chain"
    raise ValueError(f"Expected a 6x6 ring or 5x5 chain matrix, got shape {matrix.shape}")


def is_hermitian(matrix: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    scale = max(1.0, float(np.max(np.abs(matrix))))
    return bool(np.all(np.abs(matrix - matrix.conj().T) <= tol * scale))


def fix_phases(vectors: np.ndarray) -> np.ndarray:
    """各列の最大振幅成分を実数・正にする（絶対値の同値は先頭を採用）"""
    vectors = np.array(vectors, dtype=complex, copy=True)
    columns = np.arange(vectors.shape[1])
    pivots = vectors[np.argmax(np.abs(vectors), axis=0), columns]
    return vectors * (np.conj(pivots) / np.abs(pivots))


def _resolve_null_doublet(eigenvalues: np.ndarray, vectors: np.ndarray, scale: float) -> np.ndarray:
    """
    リングの縮退した中央の対を |3u⟩⟨3u| − |3d⟩⟨3d| を対角化する基底へ回転する

    期待値の大きい方を D0(+) とする。
    """
    lo, hi = 2, 3
    if abs(eigenvalues[hi] - eigenvalues[lo]) > DEGENERACY_TOL * scale:
        return vectors
    doublet = vectors[:, lo:hi + 1]
    asymmetry = np.zeros(vectors.shape[0])
    asymmetry[RING_UP], asymmetry[RING_DOWN] = 1.0, -1.0
    restricted = doublet.conj().T @ (asymmetry[:, None] * doublet)
    weights, rotation = scipy.linalg.eigh(restricted)
    if abs(weights[1] - weights[0]) <= DEGENERACY_TOL:
        # 摂動も縮退（例: t=0 で Ω₁=0）: 解けないのでソルバー出力のまま
        return vectors
    vectors = vectors.copy()
    vectors[:, lo:hi + 1] = doublet @ rotation
    return vectors


def eigendecompose(h: AnyHamiltonian) -> EigenDecomposition:
    """
    瞬時ハミルトニアンを固有分解し、エネルギー昇順のラベルを付ける

    Args:
        h: RingHamiltonian / ChainHamiltonian、または 6x6 / 5x5 行列

    Returns:
        EigenDecomposition（固有値昇順、位相固定済みの正規直交固有ベクトル）

    Raises:
        ValueError: エルミートでない入力
    """
    matrix, system = _matrix_and_system(h)
    if not is_hermitian(matrix):
        raise ValueError("Hamiltonian is not Hermitian")
    eigenvalues, vectors = scipy.linalg.eigh(matrix)
    vectors = vectors.astype(complex)
    scale = max(1.0, float(np.max(np.abs(eigenvalues))))
    if system == "ring":
        vectors = _resolve_null_doublet(eigenvalues, vectors, scale)
    labels = RING_LABELS if system == "ring" else CHAIN_LABELS
    return EigenDecomposition(
        eigenvalues=eigenvalues,
        eigenvectors=fix_phases(vectors),
        labels=labels,
        system=system,
    )


def overlap_with(decomposition: EigenDecomposition, label: str, vector: np.ndarray) -> float:
    """正規化された参照ベクトル v との重なり |⟨D_label|v⟩|²"""
    v = np.asarray(vector, dtype=complex)
    v = v / np.linalg.norm(v)
    return float(abs(np.vdot(decomposition.vector(label), v)) ** 2)


def eigenspectrum(schedule: PulseSchedule, det: DetuningConfig, samples: int = 201,
                  system: str = "ring") -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    [0, t_max] の等間隔時刻での固有値と固有ベクトル

    Returns:
        (times, energies (samples, n), eigenvectors (samples, n, n))
    """
    if samples < 2:
        raise ValueError(f"samples must be >= 2, got {samples}")
    times = np.linspace(0.0, schedule.t_max, samples)
    stack = hamiltonian_stack(times, schedule, det, system)
    energies = np.empty(stack.shape[:2])
    vectors = np.empty(stack.shape, dtype=complex)
    for k, matrix in enumerate(stack):
        decomposition = eigendecompose(matrix)
        energies[k] = decomposition.eigenvalues
        vectors[k] = decomposition.eigenvectors
    LOG.debug("Eigenspectrum: %d samples, system=%s", samples, system)
    return times, energies, vectors


# ---------------------------------------------------------------------------
# 解析的な参照式
# ---------------------------------------------------------------------------

def analytic_ring_eigenvalues(omega_1: float, omega_2: float) -> np.ndarray:
    """
    離調ゼロのリングの固有値（閉形式、昇順）

    E₀ = 0（二重縮退）, E± = ±√((3Ω₁²+3Ω₂²−R)/2), E₂± = ±√((3Ω₁²+3Ω₂²+R)/2),
    R = √(Ω₁⁴+14Ω₁²Ω₂²+Ω₂⁴)

    Args:
        omega_1: Ω₁ ≥ 0
        omega_2: Ω₂ ≥ 0

    Returns:
        6要素の昇順配列
    """
    if omega_1 < 0 or omega_2 < 0:
        raise ValueError("Tunnelling amplitudes must be non-negative")
    a2, b2 = omega_1 ** 2, omega_2 ** 2
    radical = math.sqrt(a2 * a2 + 14.0 * a2 * b2 + b2 * b2)
    inner = math.sqrt(max(0.0, (3.0 * (a2 + b2) - radical) / 2.0))
    outer = math.sqrt((3.0 * (a2 + b2) + radical) / 2.0)
    return np.array([-outer, -inner, 0.0, 0.0, inner, outer])


@dataclass(frozen=True)
class SeriesEigenpairs:
    """Δ の打ち切り級数による固有対（ベクトルは打ち切り後に正規化）"""
    energies: Dict[str, float]
    vectors: Dict[str, np.ndarray]
    system: str
    order: int = 1

    def sorted_energies(self) -> np.ndarray:
        return np.sort(np.array(list(self.energies.values())))


def _normalized(components: Sequence[float]) -> np.ndarray:
    v = np.asarray(components, dtype=complex)
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class RingMidpointSplit:
    energy_plus: float
    energy_minus: float
    vector_plus: np.ndarray
    vector_minus: np.ndarray
    omega_max: float = 1.0
    delta: float = 0.0

    @property
    def gap(self) -> float:
        return abs(self.energy_plus - self.energy_minus)


def ring_midpoint_split(delta: float, omega_max: float = 1.0) -> RingMidpointSplit:
    """
    Δu = −Δd = Δ での t = t_max/2 の縮退解除（Δの1次まで）

    E₀⁽±⁾ = ±Δ/√5。(|2⟩+|4⟩) の重みは固有方程式のサイト1の行から
    v₂/v₁ = E₀⁽±⁾/Ω₁（Ω₁ = Ω_max/2）。
    """
    root5 = math.sqrt(5.0)
    energy = delta / root5
    vectors = {}
    for sign in (1.0, -1.0):
        c = sign * 2.0 * delta / (root5 * omega_max)
        vectors[sign] = _normalized([
            1.0, c, 0.5 * (-1.0 - sign * root5), 0.5 * (-1.0 + sign * root5), c, 1.0,
        ])
    return RingMidpointSplit(
        energy_plus=energy, energy_minus=-energy,
        vector_plus=vectors[1.0], vector_minus=vectors[-1.0],
        omega_max=omega_max, delta=delta,
    )


def chain_boundary_states(endpoint: str, omega: float, delta: float) -> SeriesEigenpairs:
    """
    鎖の端点（t=0 または t=t_max）での固有対（Δの1次まで）

    t=0 では Ω₁=0, Ω₂=Ω。{2,3} ブロックが Δ の影響を受け、
    E₂± = ±Ω + Δ/2、|D₂±⟩ ∝ (±1 − Δ/2Ω)|2⟩ + |3⟩。
    t=t_max では鏡像で、|D₂±⟩ ∝ (±1 + Δ/2Ω)|3⟩ + |4⟩。

    注: ラベルは級数の枝に付く。Δ>0 では D₂₋ の固有値が E₋ を上回るため、
    eigendecompose の順位ラベルとは一致しない場合がある。

    Args:
        endpoint: "start" | "end"
        omega: 端点で残る結合の大きさ
        delta: 中央サイトの離調（|Δ| ≪ Ω）

    Returns:
        SeriesEigenpairs
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    x = delta / (2.0 * omega)
    s2 = 1.0 / math.sqrt(2.0)
    if endpoint == "start":
        vectors = {
            "D0": _normalized([1, 0, 0, 0, 0]),
            "D+": _normalized([0, 0, 0, s2, s2]),
            "D-": _normalized([0, 0, 0, s2, -s2]),
            "D2+": _normalized([0, 1.0 - x, 1.0, 0, 0]),
            "D2-": _normalized([0, -1.0 - x, 1.0, 0, 0]),
        }
    elif endpoint == "end":
        vectors = {
            "D0": _normalized([0, 0, 0, 0, 1]),
            "D+": _normalized([s2, s2, 0, 0, 0]),
            "D-": _normalized([s2, -s2, 0, 0, 0]),
            "D2+": _normalized([0, 0, 1.0 + x, 1.0, 0]),
            "D2-": _normalized([0, 0, -1.0 + x, 1.0, 0]),
        }
    else:
        raise ValueError(f"endpoint must be 'start' or 'end', got {endpoint!r}")
    energies = {
        "D2-": -omega + delta / 2.0,
        "D-": -omega,
        "D0": 0.0,
        "D+": omega,
        "D2+": omega + delta / 2.0,
    }
    return SeriesEigenpairs(energies=energies, vectors=vectors, system="chain", order=1)


def chain_midpoint_states(omega_max: float, delta: float) -> SeriesEigenpairs:
    """
    t = t_max/2（Ω₁ = Ω₂ = Ω_max/2）での鎖の固有対（Δの1次まで）

    E₀ = Δ/3, E± = ±Ω_max/2, E₂± = ±√3·Ω_max/2 + Δ/3
    """
    if omega_max <= 0:
        raise ValueError("omega_max must be positive")
    root3 = math.sqrt(3.0)
    c0 = 2.0 * delta / (3.0 * omega_max)
    vectors = {
        "D0": _normalized([1.0, c0, -1.0, c0, 1.0]),
        "D+": _normalized([1.0, 1.0, 0.0, -1.0, -1.0]),
        "D-": _normalized([1.0, -1.0, 0.0, 1.0, -1.0]),
    }
    for sign, label in ((1.0, "D2+"), (-1.0, "D2-")):
        side = sign * root3 + c0
        middle = 2.0 + sign * 4.0 * delta / (root3 * omega_max)
        vectors[label] = _normalized([1.0, side, middle, side, 1.0])
    energies = {
        "D2-": -root3 * omega_max / 2.0 + delta / 3.0,
        "D-": -omega_max / 2.0,
        "D0": delta / 3.0,
        "D+": omega_max / 2.0,
        "D2+": root3 * omega_max / 2.0 + delta / 3.0,
    }
    return SeriesEigenpairs(energies=energies, vectors=vectors, system="chain", order=1)
