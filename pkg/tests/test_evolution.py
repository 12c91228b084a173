import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctap_interferometer.evolution import (
    antisymmetric_branch_amplitude, check_convergence, convergence_change, converged_steps, default_steps,
    evolve_final_state, final_population, final_transfer, middle_population, propagate, resolve_steps,
    transient_middle_population,
)
from ctap_interferometer.types import ConvergenceError, DetuningConfig, PulseSchedule


class TestSteps:

    def test_default_steps(self):
        """N = max(2000, ceil(40·Ω_max·t_max))"""
        assert default_steps(PulseSchedule(1.0, 200.0)) == 8000
        assert default_steps(PulseSchedule(1.0, 10.0)) == 2000
        assert default_steps(PulseSchedule(2.0, 100.5)) == 8040

    def test_resolve_steps(self):
        schedule = PulseSchedule(1.0, 200.0)
        assert resolve_steps(None, schedule) == 8000
        assert resolve_steps("auto", schedule) == 8000
        assert resolve_steps(123, schedule) == 123
        for bad in (1, 0, -5, "many"):
            with pytest.raises(ValueError):
                resolve_steps(bad, schedule)


class TestPropagate:

    def test_adiabatic_transfer(self):
        """Δ=0, Ω_max·t_max=200 で |1⟩ → |5⟩"""
        traj = propagate(PulseSchedule(1.0, 200.0))
        assert traj.populations[0, 0] == 1.0
        assert np.all(traj.populations[0, 1:] == 0.0)
        assert final_population(traj, "5") >= 0.999
        assert np.max(np.abs(traj.norms - 1.0)) < 1e-9
        np.testing.assert_allclose(traj.populations.sum(axis=1), 1.0, atol=1e-9)

    def test_sudden_limit(self):
        """Ω_max·t_max ≪ 1 では |1⟩ に留まる"""
        traj = propagate(PulseSchedule(1.0, 0.01))
        assert final_population(traj, "1") >= 0.99
        assert transient_middle_population(traj) < 1e-3

    def test_sampling(self):
        schedule = PulseSchedule(1.0, 50.0)
        traj = propagate(schedule, steps=2000, samples=11)
        assert traj.states.shape == (11, 6)
        assert traj.times[0] == 0.0
        assert traj.times[-1] == pytest.approx(50.0)
        assert traj.steps == 2000
        assert traj.labels == ("1", "2", "3u", "3d", "4", "5")

    def test_samples_capped_by_steps(self):
        traj = propagate(PulseSchedule(1.0, 1.0), steps=4, samples=100)
        assert len(traj.times) == 5

    def test_final_state_only_path_is_identical(self):
        """samples=2 の最終状態は最終状態専用経路とビット一致"""
        schedule = PulseSchedule(1.0, 60.0)
        det = DetuningConfig(delta_u=0.3, delta_d=-0.2)
        traj = propagate(schedule, det, samples=2)
        np.testing.assert_array_equal(traj.final_state, evolve_final_state(schedule, det))

    def test_sampled_run_matches_final_state(self):
        schedule = PulseSchedule(1.0, 60.0)
        det = DetuningConfig(delta_u=0.1, delta_d=0.05)
        traj = propagate(schedule, det, samples=37)
        np.testing.assert_allclose(traj.final_state, evolve_final_state(schedule, det), atol=1e-10)

    @settings(max_examples=10, deadline=None)
    @given(st.floats(min_value=-1.0, max_value=1.0), st.floats(min_value=-1.0, max_value=1.0),
           st.floats(min_value=1.0, max_value=80.0))
    def test_unitarity(self, delta_u, delta_d, t_max):
        """任意パラメータでノルム保存"""
        traj = propagate(PulseSchedule(1.0, t_max), DetuningConfig(delta_u=delta_u, delta_d=delta_d), samples=20)
        assert np.max(np.abs(traj.norms - 1.0)) < 1e-9

    def test_swap_invariance(self):
        """ρ₅₅(Δu, Δd) = ρ₅₅(Δd, Δu)"""
        schedule = PulseSchedule(1.0, 80.0)
        det = DetuningConfig(delta_u=0.37, delta_d=-0.11)
        assert final_transfer(schedule, det) == pytest.approx(final_transfer(schedule, det.swapped()), abs=1e-10)

    def test_custom_initial_state(self):
        psi0 = np.zeros(6, dtype=complex)
        psi0[5] = 1.0
        traj = propagate(PulseSchedule(1.0, 0.01), psi0=psi0, samples=3)
        assert final_population(traj, 5) >= 0.99

    @pytest.mark.parametrize("psi0", [np.ones(6), np.zeros(6), np.array([1.0, 0.0, 0.0, 0.0, 0.0])])
    def test_invalid_initial_state(self, psi0):
        with pytest.raises(ValueError):
            propagate(PulseSchedule(1.0, 10.0), psi0=psi0)

    def test_invalid_samples(self):
        with pytest.raises(ValueError):
            propagate(PulseSchedule(1.0, 10.0), samples=1)

    def test_unknown_system(self):
        with pytest.raises(ValueError):
            propagate(PulseSchedule(1.0, 10.0), system="ladder")


class TestPopulations:

    def test_final_population_labels(self):
        traj = propagate(PulseSchedule(1.0, 40.0), DetuningConfig(delta_u=0.2), samples=5)
        assert final_population(traj, "5") == pytest.approx(traj.populations[-1, 5])
        assert final_population(traj, "3u") == pytest.approx(traj.populations[-1, 2])
        with pytest.raises(ValueError):
            final_population(traj, "6")

    def test_ring_transient_middle_population(self):
        """断熱極限の中点ヌル状態 (|1⟩ − ½|3u⟩ − ½|3d⟩ + |5⟩)/√2.5 → ρ₃ᵤ+ρ₃d のピーク 1/5"""
        traj = propagate(PulseSchedule(1.0, 400.0))
        assert transient_middle_population(traj) == pytest.approx(0.2, abs=0.02)
        peak_time = traj.times[int(np.argmax(middle_population(traj)))]
        assert peak_time == pytest.approx(200.0, abs=20.0)

    def test_chain_transient_middle_population(self):
        """5サイト鎖では中点の |D₀⟩ の中央重み 1/3"""
        traj = propagate(PulseSchedule(1.0, 400.0), system="chain")
        assert transient_middle_population(traj) == pytest.approx(1.0 / 3.0, abs=0.02)
        assert final_population(traj, "5") >= 0.99

    def test_symmetric_detuning_decoupling(self):
        """Δu=Δd では反対称分岐 (⟨3u|ψ⟩−⟨3d|ψ⟩)/√2 がゼロのまま"""
        traj = propagate(PulseSchedule(1.0, 200.0), DetuningConfig(delta_u=0.3, delta_d=0.3))
        assert np.max(antisymmetric_branch_amplitude(traj)) < 1e-9

    def test_branch_amplitude_ring_only(self):
        traj = propagate(PulseSchedule(1.0, 10.0), system="chain", samples=3)
        with pytest.raises(ValueError):
            antisymmetric_branch_amplitude(traj)


class TestConvergence:

    def test_change_shrinks_with_steps(self):
        """中点指数積分は2次精度: 刻みを増やすと倍増検査の差が減る"""
        schedule = PulseSchedule(1.0, 50.0)
        det = DetuningConfig(delta_u=0.1, delta_d=-0.1)
        assert convergence_change(schedule, det, 4000) < convergence_change(schedule, det, 500)

    def test_too_few_steps_raises(self):
        schedule = PulseSchedule(1.0, 200.0)
        with pytest.raises(ConvergenceError) as excinfo:
            check_convergence(schedule, DetuningConfig(), steps=2)
        assert excinfo.value.steps == 2
        assert excinfo.value.change > 1e-8

    def test_loose_tolerance_passes(self):
        change = check_convergence(PulseSchedule(1.0, 20.0), DetuningConfig(), tolerance=1.0)
        assert 0.0 <= change < 1.0

    def test_propagate_check_flag(self):
        with pytest.raises(ConvergenceError):
            propagate(PulseSchedule(1.0, 200.0), steps=2, samples=2, check=True)

    def test_default_steps_raised_until_converged(self):
        """反対称離調 (0.3, −0.3) では既定の N が不足するので倍増して 1e-8 を満たす"""
        schedule = PulseSchedule(1.0, 200.0)
        det = DetuningConfig(delta_u=0.3, delta_d=-0.3)
        assert convergence_change(schedule, det) > 1e-8
        n_steps, rho55, change = converged_steps(schedule, det)
        assert change <= 1e-8
        assert n_steps > default_steps(schedule)
        assert n_steps % default_steps(schedule) == 0
        assert rho55 == pytest.approx(final_transfer(schedule, det, n_steps), abs=1e-15)

    def test_explicit_steps_are_not_raised(self):
        schedule = PulseSchedule(1.0, 200.0)
        with pytest.raises(ConvergenceError) as excinfo:
            converged_steps(schedule, DetuningConfig(delta_u=0.3, delta_d=-0.3), steps=default_steps(schedule))
        assert excinfo.value.steps == default_steps(schedule)

    def test_propagate_check_uses_converged_steps(self):
        schedule = PulseSchedule(1.0, 50.0)
        det = DetuningConfig(delta_u=0.3, delta_d=-0.3)
        traj = propagate(schedule, det, samples=3, check=True)
        assert traj.steps > default_steps(schedule)
        assert convergence_change(schedule, det, traj.steps) <= 1e-8


class TestAdiabaticLimit:

    def test_infidelity_decreases_with_area(self):
        """Δ=0 で 1 − ρ₅₅ は Ω_max·t_max とともに単調減少"""
        losses = [1.0 - final_transfer(PulseSchedule(1.0, t), DetuningConfig()) for t in (50.0, 100.0, 200.0, 400.0)]
        assert np.all(np.diff(losses) < 0)
        assert losses[0] < 0.02
        assert losses[-1] < 1e-9
