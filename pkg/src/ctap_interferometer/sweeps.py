from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import find_peaks
from scipy.stats import linregress

from .evolution import NORM_TOL, Steps, converged_steps, final_transfer
from .types import DetuningConfig, FringeFitError, PulseSchedule, SweepPointError

LOG = logging.getLogger("ctap_interferometer.sweeps")

# 1タスクあたりの格子点数（ワーカー数に依存させない: 決定性のため）
CHUNK_POINTS = 16
FRINGE_FACTOR_GUESS = 20.0
MIN_SAMPLES_PER_FRINGE = 8
PEAK_PROMINENCE = 1e-3
FD_RELATIVE_STEP = 1e-3
FD_MIN_STEP = 1e-6
TRACK_SAMPLES = 41

Range = Tuple[float, float]
Resolution = Union[int, Tuple[int, int]]


@dataclass(frozen=True)
class SweepPoint:
    t_max: float
    delta_u: float
    delta_d: float

    def __post_init__(self):
        # numpy スカラーは float にそろえる
        for name in ("t_max", "delta_u", "delta_d"):
            object.__setattr__(self, name, float(getattr(self, name)))


@dataclass(frozen=True)
class _Chunk:
    omega_max: float
    points: Tuple[SweepPoint, ...]
    steps: Steps
    system: str
    tolerance: Optional[float]


@dataclass(frozen=True)
class PopulationMap:
    """2次元格子上の ρ₅₅（grid[i, j] は (axis1[i], axis2[j])）"""
    axis1: np.ndarray
    axis2: np.ndarray
    grid: np.ndarray
    axis1_name: str = "delta_u"
    axis2_name: str = "delta_d"


@dataclass(frozen=True)
class DetuningTrace:
    """反対称離調線 Δu = −Δd = Δ 上の ρ₅₅"""
    deltas: np.ndarray
    populations: np.ndarray
    t_max: float


@dataclass(frozen=True)
class FringeFit:
    positions: np.ndarray      # Δₙ
    indices: np.ndarray        # n
    f: float
    residuals: np.ndarray
    mean_spacing: float
    t_max: float

    @property
    def residual_max(self) -> float:
        return float(np.max(np.abs(self.residuals)))

    @property
    def relative_residual(self) -> float:
        """最大残差 / 平均縞間隔"""
        return self.residual_max / self.mean_spacing


@dataclass(frozen=True)
class SensitivityMap:
    """中心差分による ∂ρ₅₅/∂Δu（grid[i, j] は (axis1[i], axis2[j])）"""
    axis1: np.ndarray
    axis2: np.ndarray
    grid: np.ndarray
    delta_step: float
    charge_response: Optional[np.ndarray] = None


@dataclass(frozen=True)
class SensitivityScaling:
    t_max: np.ndarray
    peak: np.ndarray
    operating_points: np.ndarray
    slope: float
    intercept: float
    r_squared: float


# ---------------------------------------------------------------------------
# 並列実行エンジン
# ---------------------------------------------------------------------------

def _transfer_chunk(chunk: _Chunk) -> np.ndarray:
    out = np.empty(len(chunk.points))
    for k, point in enumerate(chunk.points):
        schedule = PulseSchedule(chunk.omega_max, point.t_max)
        det = DetuningConfig(delta_u=point.delta_u, delta_d=point.delta_d)
        try:
            if chunk.tolerance is None:
                out[k] = final_transfer(schedule, det, chunk.steps, chunk.system)
            else:
                out[k] = converged_steps(schedule, det, chunk.steps, chunk.system, chunk.tolerance)[1]
        except Exception as e:
            raise SweepPointError((point.t_max, point.delta_u, point.delta_d), e) from e
    return out


def transfer_populations(omega_max: float, points: Sequence[SweepPoint], steps: Steps = None,
                         workers: int = 1, system: str = "ring",
                         tolerance: Optional[float] = None) -> np.ndarray:
    """
    独立な格子点ごとに ρ₅₅ を計算する（データ並列）

    格子点は固定長のチャンクに分割され、結果は事前に割り当てたスロットへ書き込む。
    ワーカー数や完了順序に関係なく同一の出力になる。

    Args:
        omega_max: Ω_max
        points: 計算点（t_max, Δu, Δd）
        steps: 積分ステップ数（None/"auto" で点ごとに既定値）
        workers: プロセス数（1 ならプロセス内で逐次実行）
        system: "ring" | "chain"
        tolerance: 指定時はステップ倍増の収束検査を行い、収束した N の値を返す

    Returns:
        points と同順の ρ₅₅ 配列

    Raises:
        SweepPointError: いずれかの点で失敗（座標付き）
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    points = tuple(points)
    chunks = [
        _Chunk(omega_max, points[lo:lo + CHUNK_POINTS], steps, system, tolerance)
        for lo in range(0, len(points), CHUNK_POINTS)
    ]
    started = time.perf_counter()
    out = np.empty(len(points))
    if workers == 1 or len(chunks) <= 1:
        results = map(_transfer_chunk, chunks)
        for offset, values in zip(range(0, len(points), CHUNK_POINTS), results):
            out[offset:offset + len(values)] = values
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results = executor.map(_transfer_chunk, chunks)
            for offset, values in zip(range(0, len(points), CHUNK_POINTS), results):
                out[offset:offset + len(values)] = values
    bad = ~np.isfinite(out) | (out < -NORM_TOL) | (out > 1.0 + NORM_TOL)
    if np.any(bad):
        k = int(np.argmax(bad))
        point = points[k]
        raise SweepPointError((point.t_max, point.delta_u, point.delta_d),
                              ValueError(f"population {out[k]!r} outside [0, 1]"))
    LOG.debug("Computed %d points in %d chunks on %d worker(s) in %.2fs",
              len(points), len(chunks), workers, time.perf_counter() - started)
    return out


def _axis(bounds: Range, count: int, name: str) -> np.ndarray:
    if count < 2:
        raise ValueError(f"{name} resolution must be >= 2, got {count}")
    lo, hi = float(bounds[0]), float(bounds[1])
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise ValueError(f"{name} range must be finite and increasing, got {bounds!r}")
    return np.linspace(lo, hi, count)


def _resolution_pair(resolution: Resolution) -> Tuple[int, int]:
    if isinstance(resolution, int):
        return resolution, resolution
    return int(resolution[0]), int(resolution[1])


# ---------------------------------------------------------------------------
# 掃引
# ---------------------------------------------------------------------------

def population_map(schedule: PulseSchedule, du_range: Range = (-1.0, 1.0), dd_range: Range = (-1.0, 1.0),
                   resolution: Resolution = 201, steps: Steps = None, workers: int = 1,
                   tolerance: Optional[float] = None) -> PopulationMap:
    """(Δu, Δd) 平面の終状態 ρ₅₅（格子点ごとに |1⟩ から1回伝播）"""
    n_u, n_d = _resolution_pair(resolution)
    axis_u = _axis(du_range, n_u, "delta_u")
    axis_d = _axis(dd_range, n_d, "delta_d")
    points = [SweepPoint(schedule.t_max, du, dd) for du in axis_u for dd in axis_d]
    LOG.info("Population map: %dx%d points, Omega_max*t_max=%g, workers=%d",
             n_u, n_d, schedule.area, workers)
    values = transfer_populations(schedule.omega_max, points, steps, workers, tolerance=tolerance)
    return PopulationMap(axis1=axis_u, axis2=axis_d, grid=values.reshape(n_u, n_d))


def antidiagonal_trace(schedule: PulseSchedule, delta_range: Range = (-1.0, 1.0), resolution: int = 201,
                       steps: Steps = None, workers: int = 1,
                       tolerance: Optional[float] = None) -> DetuningTrace:
    """Δu = −Δd = Δ 上の ρ₅₅(Δ)"""
    deltas = _axis(delta_range, resolution, "delta")
    points = [SweepPoint(schedule.t_max, d, -d) for d in deltas]
    values = transfer_populations(schedule.omega_max, points, steps, workers, tolerance=tolerance)
    return DetuningTrace(deltas=deltas, populations=values, t_max=schedule.t_max)


def time_detuning_sweep(schedule: PulseSchedule, t_max_values: Iterable[float],
                        delta_range: Range = (-1.0, 1.0), resolution: int = 201,
                        steps: Steps = None, workers: int = 1,
                        tolerance: Optional[float] = None) -> PopulationMap:
    """
    反対称離調線上の (t_max, Δ) 平面の ρ₅₅（Ω_max は schedule から）
    """
    t_values = np.asarray(sorted(float(t) for t in t_max_values))
    if t_values.size < 2 or np.any(t_values <= 0):
        raise ValueError("Need at least two positive t_max values")
    deltas = _axis(delta_range, resolution, "delta")
    points = [SweepPoint(t, d, -d) for t in t_values for d in deltas]
    LOG.info("Time/detuning sweep: %d t_max x %d detunings, workers=%d", t_values.size, deltas.size, workers)
    values = transfer_populations(schedule.omega_max, points, steps, workers, tolerance=tolerance)
    return PopulationMap(axis1=t_values, axis2=deltas, grid=values.reshape(t_values.size, deltas.size),
                         axis1_name="t_max", axis2_name="delta")


def antidiagonal_of(pmap: PopulationMap, t_max: float) -> DetuningTrace:
    """軸が原点対称な正方マップから Δu = −Δd を取り出す"""
    if pmap.axis1.shape != pmap.axis2.shape or not np.allclose(pmap.axis1, -pmap.axis2[::-1]):
        raise ValueError("Antidiagonal needs equal axes symmetric about zero")
    n = pmap.axis1.size
    values = pmap.grid[np.arange(n), n - 1 - np.arange(n)]
    return DetuningTrace(deltas=pmap.axis1.copy(), populations=values, t_max=t_max)


def transpose_asymmetry(pmap: PopulationMap) -> float:
    """max |ρ₅₅(Δu,Δd) − ρ₅₅(Δd,Δu)|（同一軸の正方マップのみ）"""
    if not np.array_equal(pmap.axis1, pmap.axis2):
        raise ValueError("Transpose symmetry needs identical axes")
    return float(np.max(np.abs(pmap.grid - pmap.grid.T)))


# ---------------------------------------------------------------------------
# 縞の抽出
# ---------------------------------------------------------------------------

def _refine_peak(x: np.ndarray, y: np.ndarray, i: int) -> float:
    """3点の放物線補間で極大位置を求める（等間隔格子）"""
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    curvature = y0 - 2.0 * y1 + y2
    if curvature >= 0:
        return float(x[i])
    h = x[i + 1] - x[i]
    return float(x[i] + 0.5 * h * (y0 - y2) / curvature)


def check_fringe_resolution(spacing: float, t_max: float, f_guess: float = FRINGE_FACTOR_GUESS) -> None:
    """想定縞周期 f/t_max あたり8点未満なら FringeFitError"""
    per_fringe = (f_guess / t_max) / spacing
    if per_fringe < MIN_SAMPLES_PER_FRINGE:
        raise FringeFitError(
            f"Insufficient resolution: {per_fringe:.1f} samples per expected fringe period "
            f"(need >= {MIN_SAMPLES_PER_FRINGE}); step {spacing:g}, period {f_guess / t_max:g}"
        )


def _symmetric_trace(trace: DetuningTrace) -> Tuple[np.ndarray, np.ndarray]:
    order = np.argsort(trace.deltas)
    deltas, values = trace.deltas[order], trace.populations[order]
    if deltas[0] == 0.0:
        # 片側のみ: 偶関数として鏡像を補う
        deltas = np.concatenate([-deltas[:0:-1], deltas])
        values = np.concatenate([values[:0:-1], values])
    return deltas, values


def fit_fringes(trace: DetuningTrace, t_max: Optional[float] = None,
                f_guess: float = FRINGE_FACTOR_GUESS, prominence: float = PEAK_PROMINENCE) -> FringeFit:
    """
    反対称離調線上の透過極大 Δₙ を抽出し、Δₙ = f·n/t_max を原点を通る最小二乗で当てはめる

    Args:
        trace: antidiagonal_trace の出力（Δ ≥ 0 のみでも可。偶関数として鏡像化）
        t_max: 総時間（省略時は trace.t_max）
        f_guess: 分解能検査に使う f の見積もり
        prominence: 極大検出の最小突出度

    Returns:
        FringeFit

    Raises:
        FringeFitError: 分解能不足、または極大が2個未満
    """
    t_max = float(t_max if t_max is not None else trace.t_max)
    deltas, values = _symmetric_trace(trace)
    if deltas.size < 3:
        raise FringeFitError("Trace too short for fringe extraction")
    spacing = float(np.median(np.diff(deltas)))
    check_fringe_resolution(spacing, t_max, f_guess)
    peaks, _ = find_peaks(values, prominence=prominence)
    positions = np.array([_refine_peak(deltas, values, i) for i in peaks])
    positions = np.sort(positions[positions >= -0.5 * spacing])
    if positions.size < 2:
        raise FringeFitError(f"Found {positions.size} maxima with delta >= 0; need at least 2")
    indices = np.arange(positions.size)
    x = indices / t_max
    f = float(np.dot(x, positions) / np.dot(x, x))
    residuals = positions - f * x
    mean_spacing = float(np.mean(np.diff(positions)))
    LOG.debug("Fringe maxima at t_max=%g: %s", t_max, np.array2string(positions, precision=6))
    LOG.info("Fringe fit t_max=%g: f=%.6g from %d maxima, max residual %.3g of spacing",
             t_max, f, positions.size, float(np.max(np.abs(residuals))) / mean_spacing)
    return FringeFit(positions=positions, indices=indices, f=f, residuals=residuals,
                     mean_spacing=mean_spacing, t_max=t_max)


def fringe_time_scaling(fits: Sequence[FringeFit]) -> float:
    """log t_max に対する log Δ₁ の傾き（縞が 1/t_max に比例すれば −1）"""
    if len(fits) < 2:
        raise FringeFitError("Need fits at two or more t_max values")
    result = linregress(np.log([fit.t_max for fit in fits]), np.log([fit.positions[1] for fit in fits]))
    return float(result.slope)


# ---------------------------------------------------------------------------
# 感度
# ---------------------------------------------------------------------------

def default_fd_step(schedule: PulseSchedule, f_guess: float = FRINGE_FACTOR_GUESS) -> float:
    """差分幅 δ = 1e-3·(f/t_max)（下限 1e-6·Ω_max）"""
    return max(FD_RELATIVE_STEP * f_guess / schedule.t_max, FD_MIN_STEP * schedule.omega_max)


def _central_differences(schedule: PulseSchedule, operating_points: Sequence[Tuple[float, float]],
                         delta_step: float, steps: Steps, workers: int) -> Tuple[np.ndarray, np.ndarray]:
    points: List[SweepPoint] = []
    for du, dd in operating_points:
        points.append(SweepPoint(schedule.t_max, du + delta_step, dd))
        points.append(SweepPoint(schedule.t_max, du - delta_step, dd))
    values = transfer_populations(schedule.omega_max, points, steps, workers)
    upper, lower = values[0::2], values[1::2]
    return (upper - lower) / (2.0 * delta_step), 0.5 * (upper + lower)


def sensitivity_map(schedule: PulseSchedule, du_range: Range = (-1.0, 1.0), dd_range: Range = (-1.0, 1.0),
                    resolution: Resolution = 201, delta_step: Optional[float] = None, steps: Steps = None,
                    workers: int = 1, charge_shift: Optional[float] = None) -> SensitivityMap:
    """
    (Δu, Δd) 格子上の ∂ρ₅₅/∂Δu を中心差分 (ρ₅₅(Δu+δ) − ρ₅₅(Δu−δ))/2δ で求める

    Args:
        schedule: パルススケジュール
        du_range: Δu の範囲
        dd_range: Δd の範囲
        resolution: 格子点数（整数または (n_u, n_d)）
        delta_step: 差分幅（省略時は default_fd_step）
        steps: 積分ステップ数
        workers: 並列数
        charge_shift: 指定時は各点の有限応答 ρ₅₅(Δu+q, Δd) − ρ₅₅(Δu, Δd) も計算

    Returns:
        SensitivityMap
    """
    if delta_step is None:
        delta_step = default_fd_step(schedule)
    if not delta_step > 0:
        raise ValueError(f"Finite-difference step must be positive, got {delta_step!r}")
    n_u, n_d = _resolution_pair(resolution)
    axis_u = _axis(du_range, n_u, "delta_u")
    axis_d = _axis(dd_range, n_d, "delta_d")
    operating = [(du, dd) for du in axis_u for dd in axis_d]
    LOG.info("Sensitivity map: %dx%d points, step %g, workers=%d", n_u, n_d, delta_step, workers)
    derivative, _ = _central_differences(schedule, operating, delta_step, steps, workers)
    response = None
    if charge_shift is not None:
        points = []
        for du, dd in operating:
            points.append(SweepPoint(schedule.t_max, du + charge_shift, dd))
            points.append(SweepPoint(schedule.t_max, du, dd))
        values = transfer_populations(schedule.omega_max, points, steps, workers)
        response = (values[0::2] - values[1::2]).reshape(n_u, n_d)
    return SensitivityMap(axis1=axis_u, axis2=axis_d, grid=derivative.reshape(n_u, n_d),
                          delta_step=delta_step, charge_response=response)


def charge_response(schedule: PulseSchedule, operating_point: Tuple[float, float], shift: float,
                    steps: Steps = None) -> float:
    """近接電荷が検出側の準位を shift だけずらしたときの ρ₅₅ の変化（Δu → Δu+shift）"""
    du, dd = operating_point
    shifted = final_transfer(schedule, DetuningConfig(delta_u=du + shift, delta_d=dd), steps)
    baseline = final_transfer(schedule, DetuningConfig(delta_u=du, delta_d=dd), steps)
    return shifted - baseline


def _first_fringe_peak(schedule: PulseSchedule, f_guess: float, delta_step: Optional[float],
                       steps: Steps, workers: int) -> Tuple[float, float]:
    period = f_guess / schedule.t_max
    step = delta_step if delta_step is not None else default_fd_step(schedule, f_guess)
    deltas = np.linspace(0.0, period, TRACK_SAMPLES)
    derivative, populations = _central_differences(
        schedule, [(d, -d) for d in deltas], step, steps, workers)
    minima, _ = find_peaks(-populations)
    if minima.size == 0:
        raise FringeFitError(f"Lost first fringe at t_max={schedule.t_max:g}: no minimum in [0, {period:g}]")
    window = slice(0, int(minima[0]) + 1)
    magnitude = np.abs(derivative[window])
    k = int(np.argmax(magnitude))
    if magnitude[k] == 0.0 or not np.isfinite(magnitude[k]):
        raise FringeFitError(f"Lost first fringe at t_max={schedule.t_max:g}: zero sensitivity")
    if 0 < k < magnitude.size - 1:
        operating = _refine_peak(deltas[window], magnitude, k)
        refined, _ = _central_differences(schedule, [(operating, -operating)], step, steps, 1)
        if abs(refined[0]) >= magnitude[k]:
            return operating, float(abs(refined[0]))
    return float(deltas[k]), float(magnitude[k])


def sensitivity_vs_time(schedule: PulseSchedule, t_max_values: Iterable[float],
                        f_guess: float = FRINGE_FACTOR_GUESS, delta_step: Optional[float] = None,
                        steps: Steps = None, workers: int = 1) -> SensitivityScaling:
    """
    各 t_max で第1縞の最急点を追跡し、|∂ρ₅₅/∂Δu| のピークを線形回帰する

    Args:
        schedule: Ω_max を与えるスケジュール（t_max は上書き）
        t_max_values: 評価する総時間
        f_guess: 縞周期 f/t_max の見積もりに使う f
        delta_step: 差分幅（省略時は t_max ごとに既定値）
        steps: 積分ステップ数
        workers: 並列数

    Returns:
        SensitivityScaling（線形フィットの傾き・切片・決定係数を含む）

    Raises:
        FringeFitError: 第1縞を追跡できない
    """
    t_values = np.asarray(sorted(float(t) for t in t_max_values))
    if t_values.size < 2:
        raise ValueError("Need at least two t_max values")
    peaks, operating = [], []
    for t_max in t_values:
        point, peak = _first_fringe_peak(schedule.with_t_max(t_max), f_guess, delta_step, steps, workers)
        LOG.info("First-fringe sensitivity t_max=%g: |drho55/ddelta_u|=%.6g at delta=%.6g", t_max, peak, point)
        peaks.append(peak)
        operating.append(point)
    fit = linregress(t_values, peaks)
    return SensitivityScaling(
        t_max=t_values,
        peak=np.asarray(peaks),
        operating_points=np.asarray(operating),
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        r_squared=float(fit.rvalue ** 2),
    )
