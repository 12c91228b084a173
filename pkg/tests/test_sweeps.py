import pickle

import numpy as np
import pytest

from ctap_interferometer.evolution import converged_steps, final_transfer
from ctap_interferometer.sweeps import (
    DetuningTrace, FringeFit, SweepPoint, antidiagonal_of, antidiagonal_trace, charge_response,
    check_fringe_resolution, default_fd_step, fit_fringes, fringe_time_scaling, population_map,
    sensitivity_map, time_detuning_sweep, transfer_populations, transpose_asymmetry,
)
from ctap_interferometer.types import DetuningConfig, FringeFitError, PulseSchedule, SweepPointError

SCHEDULE = PulseSchedule(1.0, 50.0)


def _synthetic_trace(f: float, t_max: float, lo: float, hi: float, count: int) -> DetuningTrace:
    """極大が Δₙ = f·n/t_max に並ぶ cos² の縞"""
    deltas = np.linspace(lo, hi, count)
    return DetuningTrace(deltas=deltas, populations=np.cos(np.pi * deltas * t_max / f) ** 2, t_max=t_max)


class TestTransferPopulations:

    def test_matches_single_propagations(self):
        points = [SweepPoint(30.0, 0.1, -0.1), SweepPoint(40.0, 0.0, 0.2)]
        values = transfer_populations(1.0, points)
        for point, value in zip(points, values):
            det = DetuningConfig(delta_u=point.delta_u, delta_d=point.delta_d)
            assert value == pytest.approx(final_transfer(PulseSchedule(1.0, point.t_max), det), abs=1e-15)

    def test_rejects_zero_workers(self):
        with pytest.raises(ValueError):
            transfer_populations(1.0, [SweepPoint(10.0, 0.0, 0.0)], workers=0)

    def test_failure_carries_coordinates(self):
        """失敗した格子点の座標付きで報告"""
        with pytest.raises(SweepPointError) as excinfo:
            transfer_populations(1.0, [SweepPoint(10.0, 0.3, -0.4)], steps=1)
        assert excinfo.value.coordinates == (10.0, 0.3, -0.4)
        assert isinstance(excinfo.value.cause, ValueError)

    def test_error_pickles(self):
        err = SweepPointError((10.0, 0.3, -0.4), ValueError("bad steps"))
        restored = pickle.loads(pickle.dumps(err))
        assert restored.coordinates == (10.0, 0.3, -0.4)
        assert str(restored) == str(err)

    def test_out_of_range_population_is_reported(self, monkeypatch):
        """ρ₅₅ が [0, 1] をノルム許容差より外れたら丸めずに失敗"""
        monkeypatch.setattr("ctap_interferometer.sweeps.final_transfer", lambda *args: 1.0 + 1e-6)
        with pytest.raises(SweepPointError) as excinfo:
            transfer_populations(1.0, [SweepPoint(10.0, 0.1, 0.0)])
        assert excinfo.value.coordinates == (10.0, 0.1, 0.0)
        assert "outside [0, 1]" in str(excinfo.value)

    def test_rounding_drift_is_kept(self, monkeypatch):
        monkeypatch.setattr("ctap_interferometer.sweeps.final_transfer", lambda *args: 1.0 + 1e-12)
        assert transfer_populations(1.0, [SweepPoint(10.0, 0.0, 0.0)])[0] == 1.0 + 1e-12


class TestPopulationMap:

    def test_bounds_and_transpose_symmetry(self):
        pmap = population_map(SCHEDULE, (-0.5, 0.5), (-0.5, 0.5), resolution=5)
        assert pmap.grid.shape == (5, 5)
        assert np.all((pmap.grid >= -1e-9) & (pmap.grid <= 1.0 + 1e-9))
        assert transpose_asymmetry(pmap) < 1e-9
        assert (pmap.axis1_name, pmap.axis2_name) == ("delta_u", "delta_d")

    def test_row_major_layout(self):
        pmap = population_map(SCHEDULE, (0.0, 0.2), (-0.3, 0.0), resolution=(2, 3))
        assert pmap.grid.shape == (2, 3)
        det = DetuningConfig(delta_u=pmap.axis1[1], delta_d=pmap.axis2[0])
        assert pmap.grid[1, 0] == pytest.approx(final_transfer(SCHEDULE, det), abs=1e-15)

    def test_worker_count_does_not_change_result(self):
        """ワーカー数によらずビット一致"""
        serial = population_map(SCHEDULE, (-0.4, 0.4), (-0.4, 0.4), resolution=5, workers=1)
        parallel = population_map(SCHEDULE, (-0.4, 0.4), (-0.4, 0.4), resolution=5, workers=2)
        np.testing.assert_array_equal(serial.grid, parallel.grid)

    @pytest.mark.parametrize("du_range,resolution", [
        ((-1.0, 1.0), 1),
        ((1.0, -1.0), 5),
        ((0.0, 0.0), 5),
        ((0.0, float("nan")), 5),
    ])
    def test_invalid_axes(self, du_range, resolution):
        with pytest.raises(ValueError):
            population_map(SCHEDULE, du_range, (-1.0, 1.0), resolution=resolution)

    def test_invalid_steps_reports_point(self):
        with pytest.raises(SweepPointError) as excinfo:
            population_map(SCHEDULE, resolution=2, steps=1)
        assert excinfo.value.coordinates[0] == 50.0

    def test_zero_detuning_row_at_moderate_time(self):
        """Ω_max·t_max = 200 の Δd=0 行: |Δu| = 0.2 は高忠実度、|Δu| = 0.1 では 0.86 まで落ちる"""
        pmap = population_map(PulseSchedule(1.0, 200.0), (-0.2, 0.2), (0.0, 0.1), resolution=(5, 2))
        row = pmap.grid[:, 0]
        np.testing.assert_allclose(row, row[::-1], atol=1e-9)
        assert row[2] >= 0.999
        assert np.all(row[[0, 4]] >= 0.99)
        assert row[1] == pytest.approx(0.8642, abs=1e-3)

    def test_convergence_tolerance_returns_converged_values(self):
        """収束検査付きの掃引は既定の N が不足する点でも失敗せず、収束した値を返す"""
        schedule = PulseSchedule(1.0, 200.0)
        det = DetuningConfig(delta_u=0.3, delta_d=-0.3)
        values = transfer_populations(1.0, [SweepPoint(200.0, 0.3, -0.3)], tolerance=1e-8)
        _, expected, _ = converged_steps(schedule, det)
        assert values[0] == expected
        assert abs(values[0] - final_transfer(schedule, det)) < 1e-6

    def test_coordinates_are_plain_floats(self):
        point = SweepPoint(np.float64(50.0), np.float64(-0.3), np.float32(0.25))
        assert all(type(value) is float for value in (point.t_max, point.delta_u, point.delta_d))
        with pytest.raises(SweepPointError) as excinfo:
            population_map(SCHEDULE, (-0.3, 0.3), resolution=2, steps=1)
        assert "np.float64" not in str(excinfo.value)
        assert "(50.0, -0.3, -1.0)" in str(excinfo.value)

    def test_transpose_asymmetry_needs_same_axes(self):
        pmap = population_map(SCHEDULE, (0.0, 0.2), (-0.3, 0.0), resolution=2)
        with pytest.raises(ValueError):
            transpose_asymmetry(pmap)


class TestAntidiagonal:

    def test_even_in_delta(self):
        trace = antidiagonal_trace(PulseSchedule(1.0, 100.0), (-0.3, 0.3), resolution=7)
        np.testing.assert_allclose(trace.populations, trace.populations[::-1], atol=1e-9)
        assert trace.populations[3] >= 0.99
        assert trace.t_max == 100.0

    def test_matches_map_antidiagonal(self):
        pmap = population_map(SCHEDULE, (-0.2, 0.2), (-0.2, 0.2), resolution=5)
        extracted = antidiagonal_of(pmap, SCHEDULE.t_max)
        direct = antidiagonal_trace(SCHEDULE, (-0.2, 0.2), resolution=5)
        np.testing.assert_allclose(extracted.deltas, direct.deltas)
        np.testing.assert_allclose(extracted.populations, direct.populations, atol=1e-9)

    def test_antidiagonal_needs_mirrored_axes(self):
        pmap = population_map(SCHEDULE, (0.0, 0.2), (0.0, 0.2), resolution=2)
        with pytest.raises(ValueError):
            antidiagonal_of(pmap, SCHEDULE.t_max)


class TestTimeDetuningSweep:

    def test_sorted_axes(self):
        pmap = time_detuning_sweep(SCHEDULE, [40.0, 20.0], (-0.1, 0.1), resolution=3)
        np.testing.assert_array_equal(pmap.axis1, [20.0, 40.0])
        assert pmap.grid.shape == (2, 3)
        assert (pmap.axis1_name, pmap.axis2_name) == ("t_max", "delta")
        det = DetuningConfig.antisymmetric(pmap.axis2[0])
        assert pmap.grid[1, 0] == pytest.approx(final_transfer(SCHEDULE.with_t_max(40.0), det), abs=1e-15)

    @pytest.mark.parametrize("t_values", [[100.0], [100.0, -5.0], []])
    def test_invalid_times(self, t_values):
        with pytest.raises(ValueError):
            time_detuning_sweep(SCHEDULE, t_values, (-0.1, 0.1), resolution=3)


class TestFitFringes:

    @pytest.mark.parametrize("f", [20.0, 17.3])
    def test_recovers_synthetic_factor(self, f):
        fit = fit_fringes(_synthetic_trace(f, 1000.0, -0.1, 0.1, 401))
        assert fit.f == pytest.approx(f, rel=1e-3)
        assert fit.positions[0] == pytest.approx(0.0, abs=1e-6)
        assert np.all(np.diff(fit.positions) > 0)
        assert fit.relative_residual < 0.01
        np.testing.assert_array_equal(fit.indices, np.arange(fit.positions.size))

    def test_one_sided_trace_is_mirrored(self):
        """Δ ≥ 0 のみのトレースでも Δ₀ = 0 を検出"""
        fit = fit_fringes(_synthetic_trace(20.0, 1000.0, 0.0, 0.1, 201))
        assert fit.positions[0] == pytest.approx(0.0, abs=1e-9)
        assert fit.f == pytest.approx(20.0, rel=1e-3)
        assert fit.positions.size == 5

    def test_explicit_t_max_overrides_trace(self):
        trace = _synthetic_trace(20.0, 1000.0, 0.0, 0.1, 201)
        fit = fit_fringes(trace, t_max=500.0)
        assert fit.t_max == 500.0
        assert fit.f == pytest.approx(10.0, rel=1e-3)

    def test_coarse_trace_rejected(self):
        """縞周期あたり8点未満は分解能不足"""
        with pytest.raises(FringeFitError):
            fit_fringes(_synthetic_trace(20.0, 1000.0, -0.1, 0.1, 41))

    def test_single_maximum_rejected(self):
        with pytest.raises(FringeFitError):
            fit_fringes(_synthetic_trace(20.0, 1000.0, -0.015, 0.015, 201))

    def test_check_resolution(self):
        check_fringe_resolution(0.02 / 8, 1000.0, 20.0)
        with pytest.raises(FringeFitError):
            check_fringe_resolution(0.02 / 7, 1000.0, 20.0)


class TestFringeTimeScaling:

    def test_inverse_scaling(self):
        fits = []
        for t_max in (500.0, 1000.0, 2000.0):
            positions = 20.0 * np.arange(3) / t_max
            fits.append(FringeFit(positions=positions, indices=np.arange(3), f=20.0,
                                  residuals=np.zeros(3), mean_spacing=20.0 / t_max, t_max=t_max))
        assert fringe_time_scaling(fits) == pytest.approx(-1.0, abs=1e-12)

    def test_needs_two_fits(self):
        with pytest.raises(FringeFitError):
            fringe_time_scaling([])


class TestSensitivity:

    def test_default_step(self):
        """δ = 1e-3·f/t_max（下限 1e-6·Ω_max）"""
        assert default_fd_step(PulseSchedule(1.0, 1000.0)) == pytest.approx(2e-5)
        assert default_fd_step(PulseSchedule(1.0, 1e9)) == 1e-6
        assert default_fd_step(PulseSchedule(3.0, 1e9)) == pytest.approx(3e-6)

    def test_matches_manual_central_difference(self):
        step = 1e-3
        smap = sensitivity_map(SCHEDULE, (0.1, 0.2), (-0.1, 0.0), resolution=2, delta_step=step)
        du, dd = smap.axis1[1], smap.axis2[0]
        upper = final_transfer(SCHEDULE, DetuningConfig(delta_u=du + step, delta_d=dd))
        lower = final_transfer(SCHEDULE, DetuningConfig(delta_u=du - step, delta_d=dd))
        assert smap.grid[1, 0] == pytest.approx((upper - lower) / (2 * step), abs=1e-9)
        assert smap.delta_step == step
        assert smap.charge_response is None

    @pytest.mark.parametrize("step", [0.0, -1e-3])
    def test_rejects_non_positive_step(self, step):
        with pytest.raises(ValueError):
            sensitivity_map(SCHEDULE, resolution=2, delta_step=step)

    def test_charge_response_column(self):
        smap = sensitivity_map(SCHEDULE, (0.0, 0.1), (-0.1, 0.0), resolution=2, delta_step=1e-3, charge_shift=0.05)
        assert smap.charge_response.shape == (2, 2)
        expected = charge_response(SCHEDULE, (smap.axis1[0], smap.axis2[1]), 0.05)
        assert smap.charge_response[0, 1] == pytest.approx(expected, abs=1e-12)

    def test_zero_shift_has_no_response(self):
        assert charge_response(SCHEDULE, (0.1, -0.1), 0.0) == 0.0

    def test_flat_at_origin(self):
        """ρ₅₅ は (Δu, Δd) → (−Δu, −Δd) で不変なので原点で ∂ρ₅₅/∂Δu = 0"""
        smap = sensitivity_map(SCHEDULE, (-0.1, 0.1), (-0.1, 0.1), resolution=3, delta_step=1e-3)
        assert smap.grid[1, 1] == pytest.approx(0.0, abs=1e-6)

    def test_sign_changes_across_fringes(self):
        """Δu = −Δd 上の感度は縞の極小・極大をまたぐたびに符号が反転する"""
        schedule = PulseSchedule(1.0, 400.0)
        # 極大 Δ₁ ≈ 19/400 と両側の極小の間に点を置く
        inner = sensitivity_map(schedule, (0.010, 0.036), (-0.036, -0.010), resolution=2)
        outer = sensitivity_map(schedule, (0.036, 0.058), (-0.058, -0.036), resolution=2)
        before_minimum = inner.grid[0, 1]
        after_minimum = inner.grid[1, 0]
        after_maximum = outer.grid[1, 0]
        assert outer.grid[0, 1] == pytest.approx(after_minimum, abs=1e-9)
        assert before_minimum < 0 < after_minimum
        assert after_maximum < 0
