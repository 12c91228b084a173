"""
受入テスト：干渉縞・感度スケーリングの数値再現

長時間の伝播を多数含むため slow マーカー付き（-m 'not slow' で除外）。
"""

import numpy as np
import pytest
from scipy.signal import argrelmin

from ctap_interferometer.evolution import final_transfer
from ctap_interferometer.sweeps import (
    antidiagonal_trace, fit_fringes, fringe_time_scaling, population_map, sensitivity_vs_time,
    time_detuning_sweep, transpose_asymmetry,
)
from ctap_interferometer.types import DetuningConfig, PulseSchedule

pytestmark = pytest.mark.slow

WORKERS = 4
FRINGE_TIMES = (400.0, 1000.0, 2000.0)


@pytest.fixture(scope="module")
def fringe_fits():
    fits = []
    for t_max in FRINGE_TIMES:
        span = 3.5 * 20.0 / t_max
        trace = antidiagonal_trace(PulseSchedule(1.0, t_max), (0.0, span), resolution=121, workers=WORKERS)
        fits.append(fit_fringes(trace))
    return fits


class TestFringeLaw:

    def test_factor_in_band(self, fringe_fits):
        """Δₙ = f·n/t_max の f は [15, 25]"""
        for fit in fringe_fits:
            assert 15.0 <= fit.f <= 25.0, (fit.t_max, fit.f)
            assert fit.positions.size >= 3

    def test_residuals_below_tenth_of_spacing(self, fringe_fits):
        for fit in fringe_fits:
            assert fit.relative_residual < 0.1, (fit.t_max, fit.relative_residual)

    def test_factor_consistent_across_times(self, fringe_fits):
        factors = [fit.f for fit in fringe_fits]
        assert max(factors) / min(factors) <= 1.15

    def test_spacing_scales_inversely(self, fringe_fits):
        """t_max を倍にすると Δ₁ は半分"""
        assert fringe_time_scaling(fringe_fits) == pytest.approx(-1.0, abs=0.1)


class TestMapStructure:

    def test_transpose_symmetry_at_long_time(self):
        pmap = population_map(PulseSchedule(1.0, 1000.0), (-1.0, 1.0), (-1.0, 1.0), resolution=9, workers=WORKERS)
        assert transpose_asymmetry(pmap) < 1e-9
        assert np.all((pmap.grid >= -1e-9) & (pmap.grid <= 1.0 + 1e-9))

    def test_high_fidelity_cross(self):
        """Δu=0 または Δd=0 の軸上は |Δ| ≤ 0.2 で ρ₅₅ ≥ 0.99"""
        pmap = population_map(PulseSchedule(1.0, 1000.0), (-0.2, 0.2), (0.0, 0.1), resolution=(9, 2),
                              workers=WORKERS)
        assert np.all(pmap.grid[:, 0] >= 0.99)

    def test_alternating_fringes_on_antidiagonal(self):
        """Δu = −Δd 上で ρ₅₅ ≤ 0.5 の極小が3個以上"""
        trace = antidiagonal_trace(PulseSchedule(1.0, 1000.0), (-0.06, 0.06), resolution=97, workers=WORKERS)
        np.testing.assert_allclose(trace.populations, trace.populations[::-1], atol=1e-9)
        minima = argrelmin(trace.populations)[0]
        assert np.count_nonzero(trace.populations[minima] <= 0.5) >= 3
        assert trace.populations[48] >= 0.99


class TestTimeDependence:

    @pytest.mark.parametrize("t_max", [200.0, 400.0, 1000.0])
    def test_adiabatic_limit(self, t_max):
        assert final_transfer(PulseSchedule(1.0, t_max), DetuningConfig()) >= 0.999

    def test_zero_detuning_column(self):
        sweep = time_detuning_sweep(PulseSchedule(1.0, 200.0), [200.0, 400.0], (-0.05, 0.05), resolution=3,
                                    workers=WORKERS)
        assert np.all(sweep.grid[:, 1] >= 0.99)

    def test_sensitivity_scales_linearly(self):
        """第1縞のピーク感度は t_max に線形（R² ≥ 0.99）"""
        t_values = np.geomspace(100.0, 1000.0, 5)
        scaling = sensitivity_vs_time(PulseSchedule(1.0, 100.0), t_values, workers=WORKERS)
        assert scaling.r_squared >= 0.99
        assert scaling.slope > 0
        assert np.all(np.isfinite(scaling.peak)) and np.all(scaling.peak > 0)
        assert 5.0 <= scaling.peak[-1] / scaling.peak[0] <= 15.0
