import json

import numpy as np
import pytest

from hypext.errors import NoCoherentPulse, SimulationBlowUp, UncertifiedExtension, UnknownKind
from hypext.evolution import (
    DiagnosticsSeries,
    FieldState,
    GridSpec,
    constraint_monitor,
    dump_state,
    evolve,
    load_state,
    make_initial_data,
    max_speed,
    measure_pulse_speed,
    refinement_study,
    write_diagnostics_csv,
)
from hypext.extension import ExtensionSpec, build_extended_symbol


def laplacian_gaussian(x, amp, width, x0):
    r = x - x0
    return amp * (4 * r ** 2 / width ** 4 - 2 / width ** 2) * np.exp(-r ** 2 / width ** 2)


def pulse_run(ext, sigma=0.0, t_final=1.0, points=128):
    grid = GridSpec(1, points, 0.25, 4, t_final)
    s0 = make_initial_data("violating_pulse", ext, grid)
    return grid, s0, evolve(ext, grid, s0, damping=sigma)


class TestGridSpec:
    @pytest.mark.parametrize("kw", [{"spatial_dims": 3}, {"points": 8}, {"points": 32.5}, {"cfl": 1.0},
                                    {"fd_order": 3}, {"t_final": 0.0}])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            GridSpec(**kw)

    def test_time_step_hits_final_time(self):
        grid = GridSpec(1, 64, 0.25, 4, 1.0)
        dt, steps = grid.time_step(2.0)
        assert dt <= 0.25 * grid.h / 2.0 + 1e-15
        assert dt * steps == pytest.approx(1.0, abs=1e-14)

    def test_v_max_is_fastest_cone(self, maxwell_ext, mhd_ext):
        assert max_speed(maxwell_ext, 1) == pytest.approx(2.0)
        assert max_speed(mhd_ext, 2) == pytest.approx(1.5)


class TestInitialData:
    def test_maxwell_wave_transverse(self, maxwell_ext):
        grid = GridSpec(2, 32)
        s0 = make_initial_data("constrained_wave", maxwell_ext, grid, {"wave_vector": (1, 0)})
        mon = constraint_monitor(maxwell_ext, s0, grid)
        assert max(mon["linf"]) <= 1e-12
        assert not np.any(s0.z)

    def test_mhd_wave(self, mhd_ext):
        grid = GridSpec(2, 32)
        s0 = make_initial_data("constrained_wave", mhd_ext, grid, {"wave_vector": (1, 0)})
        assert max(constraint_monitor(mhd_ext, s0, grid)["linf"]) <= 1e-12
        assert np.max(np.abs(s0.phi)) > 0.5

    def test_pulse_matches_laplacian(self, maxwell_ext):
        grid = GridSpec(1, 128)
        s0 = make_initial_data("violating_pulse", maxwell_ext, grid, {"amplitude": 1e-3, "width": 0.3})
        mon = constraint_monitor(maxwell_ext, s0, grid)
        want = laplacian_gaussian(grid.coordinates()[0][:, 0], 1e-3, 0.3, np.pi)
        got = mon["field"][1, :, 0]
        assert np.max(np.abs(got - want)) <= 1e-2 * np.max(np.abs(want))
        assert mon["linf"][1] == pytest.approx(2e-3 / 0.3 ** 2, rel=1e-2)
        assert mon["linf"][0] <= 1e-15

    def test_pulse_2d(self, mhd_ext):
        grid = GridSpec(2, 128)
        s0 = make_initial_data("violating_pulse", mhd_ext, grid)
        x, y = grid.coordinates()
        r2 = (x - np.pi) ** 2 + (y - np.pi) ** 2
        chi = 1e-3 * np.exp(-r2 / 0.09)
        want = (4 * r2 / 0.3 ** 4 - 4 / 0.3 ** 2) * chi
        got = constraint_monitor(mhd_ext, s0, grid)["field"][0]
        assert np.max(np.abs(got - want)) <= 1e-2 * np.max(np.abs(want))

    def test_unknown_kind(self, maxwell_ext):
        with pytest.raises(UnknownKind):
            make_initial_data("shock", maxwell_ext, GridSpec())

    def test_wave_vector_validation(self, maxwell_ext):
        with pytest.raises(ValueError):
            make_initial_data("constrained_wave", maxwell_ext, GridSpec(2, 32), {"wave_vector": (0.5, 0)})

    def test_field_state_validation(self):
        with pytest.raises(ValueError):
            FieldState(np.zeros((2, 4, 1)), np.zeros((1, 5, 1)))
        with pytest.raises(SimulationBlowUp):
            FieldState(np.full((2, 4, 1), np.nan), np.zeros((1, 4, 1)))

    @pytest.mark.parametrize("order", [2, 4])
    def test_constraint_convergence(self, maxwell_ext, order):
        norms = []
        for n in (32, 64):
            grid = GridSpec(2, n, fd_order=order)
            s0 = make_initial_data("constrained_wave", maxwell_ext, grid, {"wave_vector": (1, 2)})
            norms.append(max(constraint_monitor(maxwell_ext, s0, grid)["linf"]))
        assert 0.75 * 2 ** order <= norms[0] / norms[1] <= 1.25 * 2 ** order


class TestEvolve:
    def test_constrained_wave_keeps_z(self, maxwell_ext):
        grid = GridSpec(2, 64, 0.25, 4, 2 * np.pi)
        s0 = make_initial_data("constrained_wave", maxwell_ext, grid, {"wave_vector": (1, 0)})
        series, final = evolve(maxwell_ext, grid, s0)
        assert np.max(series.max_z_linf()) <= 1e-8
        assert final.time == pytest.approx(2 * np.pi)
        assert np.all(np.diff(series.times) > 0)
        # a full period returns the wave to its initial profile
        assert np.max(np.abs(final.phi - s0.phi)) <= 1e-3

    def test_pulse_leaves_support(self, maxwell_ext):
        grid, s0, (series, final) = pulse_run(maxwell_ext, t_final=1.0)
        x = grid.coordinates()[0][:, 0]
        near = np.abs(x - np.pi) < 0.3
        before = np.abs(constraint_monitor(maxwell_ext, s0, grid)["field"][1, near, 0]).max()
        after = np.abs(constraint_monitor(maxwell_ext, final, grid)["field"][1, near, 0]).max()
        assert after < 0.05 * before
        assert series.max_z_linf()[1] > 0 and series.max_z_linf()[0] == 0

    def test_damping_reduces_violation(self, maxwell_ext):
        *_, (free, _) = pulse_run(maxwell_ext, 0.0, t_final=2.0)
        *_, (damped, _) = pulse_run(maxwell_ext, 5.0, t_final=2.0)
        assert damped.z_l2[-1][1] < free.z_l2[-1][1]

    def test_mhd_pulse_speed(self, mhd_ext):
        *_, (series, _) = pulse_run(mhd_ext, t_final=1.6)
        est = measure_pulse_speed(series)
        assert est.speed == pytest.approx(1.5, rel=0.05)
        assert est.points >= 20

    def test_maxwell_pulse_speed(self, maxwell_ext):
        *_, (series, _) = pulse_run(maxwell_ext, t_final=1.3)
        assert measure_pulse_speed(series).speed == pytest.approx(2.0, rel=0.05)

    def test_determinism(self, mhd_ext):
        *_, (a, fa) = pulse_run(mhd_ext, t_final=0.5, points=64)
        *_, (b, fb) = pulse_run(mhd_ext, t_final=0.5, points=64)
        assert a.z_l2 == b.z_l2 and a.energy == b.energy
        np.testing.assert_array_equal(a.peaks, b.peaks)
        np.testing.assert_array_equal(fa.phi, fb.phi)

    def test_energy_bounded(self, maxwell_ext):
        grid = GridSpec(2, 32, 0.25, 4, 10.0)
        s0 = make_initial_data("constrained_wave", maxwell_ext, grid, {"wave_vector": (1, 2)})
        series, _ = evolve(maxwell_ext, grid, s0)
        e = np.asarray(series.energy)
        assert np.max(e) / e[0] - 1 <= 0.01

    def test_uncertified(self, maxwell):
        ext = build_extended_symbol(maxwell, ExtensionSpec.cleaning_speeds([1.0, 2.0]))
        grid = GridSpec(1, 32, t_final=0.2)
        s0 = make_initial_data("constrained_wave", ext, grid)
        with pytest.raises(UncertifiedExtension):
            evolve(ext, grid, s0)
        series, _ = evolve(ext, grid, s0, force=True)
        assert len(series) > 1

    def test_blow_up(self, mhd_ext):
        grid = GridSpec(1, 32, t_final=0.5)
        s0 = make_initial_data("violating_pulse", mhd_ext, grid, {"amplitude": 1e200})
        with np.errstate(over="ignore", invalid="ignore"), pytest.raises(SimulationBlowUp) as info:
            evolve(mhd_ext, grid, s0)
        assert info.value.step >= 1

    def test_grid_mismatch(self, mhd_ext):
        s0 = make_initial_data("constrained_wave", mhd_ext, GridSpec(1, 32))
        with pytest.raises(ValueError):
            evolve(mhd_ext, GridSpec(1, 64), s0)


class TestMeasurements:
    @staticmethod
    def series_with_peaks(positions, times=None):
        s = DiagnosticsSeries(pulse={"center": np.pi, "width": 0.3, "length": 2 * np.pi, "h": 0.05})
        times = np.arange(len(positions)) * 0.01 if times is None else times
        for t, p in zip(times, positions):
            s.append(t, [1.0], [1.0], [0.0], [0.0], 1.0, [p])
        return s

    def test_constant_profile(self):
        est = measure_pulse_speed(self.series_with_peaks([np.pi + 1.0] * 30))
        assert abs(est.speed) <= max(est.stderr, 1e-12)

    def test_linear_motion(self):
        t = np.arange(40) * 0.02
        est = measure_pulse_speed(self.series_with_peaks(np.pi + 1.0 + 1.7 * t, t))
        assert est.speed == pytest.approx(1.7, abs=1e-12)

    def test_backwards(self):
        pos = np.pi + 1.0 + 0.01 * np.arange(30)
        pos[15] -= 0.2
        with pytest.raises(NoCoherentPulse):
            measure_pulse_speed(self.series_with_peaks(pos))

    def test_too_few_records(self):
        with pytest.raises(NoCoherentPulse):
            measure_pulse_speed(self.series_with_peaks([np.pi + 1.0] * 10))

    def test_no_pulse(self):
        with pytest.raises(NoCoherentPulse):
            measure_pulse_speed(DiagnosticsSeries())

    def test_monotone_times(self):
        s = self.series_with_peaks([1.0])
        with pytest.raises(ValueError):
            s.append(0.0, [1.0], [1.0], [0.0], [0.0], 1.0, [1.0])

    def test_refinement_order2(self, maxwell_ext):
        res = refinement_study(maxwell_ext, points=(16, 32), spatial_dims=2, fd_order=2, t_final=1.0)
        assert res.order == pytest.approx(2.0, abs=0.5)

    def test_refinement_axis_aligned(self, maxwell_ext):
        res = refinement_study(maxwell_ext, points=(16, 32), spatial_dims=1, t_final=0.5)
        assert res.max_z_linf == [0.0, 0.0]
        assert res.to_dict()["order"] is None


class TestOutput:
    def test_csv(self, maxwell_ext, tmp_path):
        *_, (series, _) = pulse_run(maxwell_ext, t_final=0.1, points=32)
        path = tmp_path / "diag.csv"
        write_diagnostics_csv(series, path)
        lines = path.read_text().splitlines()
        assert lines[0] == ("time,z1_l2,z1_linf,z2_l2,z2_linf,psi1_l2,psi2_l2,energy,"
                            "peak_pos_z1,peak_pos_z2")
        assert len(lines) == len(series) + 1
        assert float(lines[-1].split(",")[0]) == pytest.approx(0.1)

    def test_dump_round_trip(self, maxwell_ext, tmp_path):
        grid = GridSpec(2, 16)
        s0 = make_initial_data("violating_pulse", maxwell_ext, grid)
        sidecar = dump_state(s0, tmp_path / "state.bin", maxwell_ext.var_names)
        meta = json.loads(sidecar.read_text())
        assert meta["shape"] == [8, 16, 16] and meta["components"][-1] == "Z2"
        assert (tmp_path / "state.bin").stat().st_size == 8 * 16 * 16 * 8
        back = load_state(tmp_path / "state.bin")
        np.testing.assert_array_equal(back.phi, s0.phi)
        np.testing.assert_array_equal(back.z, s0.z)
