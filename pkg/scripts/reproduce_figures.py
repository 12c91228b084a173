#!/usr/bin/env python3
"""
図データ再生成スクリプト - 主要な数値結果をCSVとして一括出力

使用方法:
    python scripts/reproduce_figures.py --outdir figures [--preset quick|full] [--workers 4]

出力:
    spectrum_D<値>.csv      瞬時固有値（Δu = −Δd = 0, 0.25, 1）
    map.csv                 (Δu, Δd) 平面の ρ₅₅
    adiabaticity.csv        鎖モデルの 𝒜_max と2次級数
    timesweep.csv           (t_max, Δ) 平面の ρ₅₅
    sensitivity.csv         ∂ρ₅₅/∂Δu の格子
    fringes.csv             縞の極大位置と f

各CSVは先頭の # メタデータだけから再生成できる。描画は行わない。
"""

import argparse
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ctap_interferometer.adiabaticity import adiabaticity_curve  # noqa: E402
from ctap_interferometer.csv_writer import CSVWriter  # noqa: E402
from ctap_interferometer.spectrum import RING_LABELS, eigenspectrum  # noqa: E402
from ctap_interferometer.sweeps import (  # noqa: E402
    antidiagonal_trace, fit_fringes, population_map, sensitivity_map, time_detuning_sweep,
)
from ctap_interferometer.types import RING_SITES, DetuningConfig, PulseSchedule  # noqa: E402

LOG = logging.getLogger("reproduce_figures")


@dataclass(frozen=True)
class Preset:
    map_t_max: float
    map_resolution: int
    spectrum_samples: int
    adiabaticity_points: int
    timesweep_t_max: List[float]
    timesweep_resolution: int
    sensitivity_t_max: float
    sensitivity_resolution: int
    fringe_t_max: float
    fringe_resolution: int
    fringe_count: int


PRESETS: Dict[str, Preset] = {
    "quick": Preset(
        map_t_max=200.0, map_resolution=11, spectrum_samples=101, adiabaticity_points=5,
        timesweep_t_max=[100.0, 200.0], timesweep_resolution=11,
        sensitivity_t_max=200.0, sensitivity_resolution=5,
        fringe_t_max=400.0, fringe_resolution=97, fringe_count=4,
    ),
    "full": Preset(
        map_t_max=1000.0, map_resolution=201, spectrum_samples=501, adiabaticity_points=101,
        timesweep_t_max=list(np.geomspace(100.0, 2000.0, 40)), timesweep_resolution=401,
        sensitivity_t_max=1000.0, sensitivity_resolution=201,
        fringe_t_max=1000.0, fringe_resolution=241, fringe_count=6,
    ),
}

SPECTRUM_DETUNINGS = (0.0, 0.25, 1.0)


def setup_logging(debug: bool = False) -> None:
    """ログ設定"""
    level = logging.DEBUG if debug else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )


def reproduce_all(outdir: Path, preset: Preset, workers: int = 1, omega_max: float = 1.0) -> Dict[str, Path]:
    """
    全データセットを計算してCSVへ書き出す

    Args:
        outdir: 出力ディレクトリ
        preset: 解像度設定
        workers: 掃引の並列数
        omega_max: Ω_max

    Returns:
        データセット名 → 出力パス
    """
    outdir.mkdir(parents=True, exist_ok=True)
    written: Dict[str, Path] = {}
    schedule = PulseSchedule(omega_max, preset.map_t_max)

    for d in SPECTRUM_DETUNINGS:
        path = outdir / f"spectrum_D{d:g}.csv"
        times, energies, vectors = eigenspectrum(schedule, DetuningConfig.antisymmetric(d), preset.spectrum_samples)
        CSVWriter("spectrum", {"omega_max": omega_max, "t_max": schedule.t_max, "antisymmetric": d}).write_spectrum(
            times, energies, vectors, RING_SITES, RING_LABELS, path)
        written[f"spectrum_D{d:g}"] = path

    pmap = population_map(schedule, resolution=preset.map_resolution, workers=workers)
    path = outdir / "map.csv"
    CSVWriter("map", {"omega_max": omega_max, "t_max": schedule.t_max,
                      "resolution": preset.map_resolution}).write_grid(
        ("delta_u", "delta_d", "rho55"), pmap.axis1, pmap.axis2, pmap.grid, path)
    written["map"] = path

    deltas = np.linspace(-0.5, 0.5, preset.adiabaticity_points)
    path = outdir / "adiabaticity.csv"
    CSVWriter("adiabaticity", {"omega_max": omega_max, "t_max": schedule.t_max}).write_adiabaticity(
        adiabaticity_curve(schedule, deltas), path)
    written["adiabaticity"] = path

    sweep = time_detuning_sweep(schedule, preset.timesweep_t_max, resolution=preset.timesweep_resolution,
                                workers=workers)
    path = outdir / "timesweep.csv"
    CSVWriter("timesweep", {"omega_max": omega_max, "resolution": preset.timesweep_resolution}).write_grid(
        ("t_max", "delta", "rho55"), sweep.axis1, sweep.axis2, sweep.grid, path)
    written["timesweep"] = path

    smap = sensitivity_map(schedule.with_t_max(preset.sensitivity_t_max),
                           resolution=preset.sensitivity_resolution, workers=workers)
    path = outdir / "sensitivity.csv"
    CSVWriter("sensitivity", {"omega_max": omega_max, "t_max": preset.sensitivity_t_max,
                              "fd_step_used": smap.delta_step}).write_grid(
        ("delta_u", "delta_d", "drho55_ddelta_u"), smap.axis1, smap.axis2, smap.grid, path)
    written["sensitivity"] = path

    fringe_schedule = schedule.with_t_max(preset.fringe_t_max)
    span = preset.fringe_count * 20.0 / preset.fringe_t_max
    trace = antidiagonal_trace(fringe_schedule, (0.0, span), preset.fringe_resolution, workers=workers)
    fit = fit_fringes(trace)
    path = outdir / "fringes.csv"
    CSVWriter("fringes", {"omega_max": omega_max, "t_max": preset.fringe_t_max}).write_fringes(
        [fit], path, extra_metadata={"fit_f": fit.f})
    written["fringes"] = path
    return written


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="Regenerate the numerical datasets as CSV files")
    parser.add_argument("--outdir", default="figures", help="Output directory (default: figures)")
    parser.add_argument("--preset", choices=sorted(PRESETS), default="quick", help="Resolution preset")
    parser.add_argument("--workers", type=int, default=1, help="Worker processes for sweeps")
    parser.add_argument("--debug", action="store_true", help="Enable debug logs")
    args = parser.parse_args(argv)

    setup_logging(args.debug)
    started = time.perf_counter()
    written = reproduce_all(Path(args.outdir), PRESETS[args.preset], args.workers)
    for name, path in written.items():
        LOG.info("%s -> %s", name, path)
    LOG.info("Done: %d datasets in %.1fs", len(written), time.perf_counter() - started)
    return 0


if __name__ == "__main__":
    sys.exit(main())
