"""Tests for aggregation, the trial pool, experiments and output writers."""
import csv
import json

import numpy as np
import pytest

from app.schemas.experiment import SweepSpec
from app.schemas.scenario import GridSpec
from app.services.experiment_service import (
    SWEEP_COLUMNS,
    ExperimentServiceError,
    aggregate,
    check_failure_budget,
    run_heatmap,
    run_pattern_study,
    run_sweep,
    write_diagnostics_csv,
    write_heatmap_csv,
    write_mask_csv,
    write_metadata,
    write_sweep_csv,
)
from app.services.metrics_service import MethodResult, RisConfig, leakage
from app.services.trial_service import TrialJob, TrialRecord, draw_trial, make_backend, run_methods, trial_jobs
from worker.config import FAST_LIMITS, STRICT_LIMITS, FaultPattern, Method, SolverStatus
from worker.trial_worker import TrialWorker


def _result(value, method=Method.NAIVE, iterations=10, fallback=False, status=SolverStatus.OPTIMAL):
    return MethodResult(
        config=RisConfig(v_R=np.ones(2), method=method),
        snr=value,
        slnr=value,
        leakage=0.0,
        signal=value,
        solver_iterations=iterations,
        fallback=fallback,
        status=status,
    )


def _record(trial, value, key="0", failed=False):
    record = TrialRecord(trial=trial, key=key, fault_count=int(key), pattern=FaultPattern.UNIFORM, checksum="x")
    if failed:
        record.failures[Method.NAIVE] = "solver stalled"
    else:
        record.results[Method.NAIVE] = _result(value)
    return record


def _read_csv(path):
    with path.open(newline="") as fh:
        return list(csv.reader(fh))


class TestAggregate:
    """Tests for aggregate."""

    def test_db_of_mean(self):
        """Linear values 1 and 100 average to 10 log10(50.5) dB with a 10 dB spread."""
        rows = aggregate([_record(0, 1.0), _record(1, 100.0)], [Method.NAIVE])

        assert rows[0].mean_slnr_db == pytest.approx(10 * np.log10(50.5))
        assert rows[0].std_slnr_db == pytest.approx(10.0)
        assert rows[0].trials == 2

    def test_mean_of_db(self):
        """mean_of_db averages per-trial dB values."""
        rows = aggregate([_record(0, 1.0), _record(1, 100.0)], [Method.NAIVE], mode="mean_of_db")

        assert rows[0].mean_snr_db == pytest.approx(10.0)

    def test_failures_excluded(self):
        """Failed trials are counted and left out of the statistics."""
        rows = aggregate([_record(0, 10.0), _record(1, 0.0, failed=True)], [Method.NAIVE])

        assert rows[0].trials == 1
        assert rows[0].failures == 1
        assert rows[0].mean_slnr_db == pytest.approx(10.0)
        assert rows[0].std_slnr_db == 0.0

    def test_all_failed(self):
        """A method with no successful trial reports NaN means."""
        rows = aggregate([_record(0, 0.0, failed=True)], [Method.NAIVE])

        assert rows[0].trials == 0
        assert np.isnan(rows[0].mean_slnr_db)

    def test_key_order_and_trial_order(self):
        """Keys keep first-seen order whatever order trials arrive in."""
        records = [_record(1, 2.0, key="5"), _record(0, 1.0, key="0"), _record(0, 4.0, key="5")]

        rows = aggregate(records, [Method.NAIVE])

        assert [r.key for r in rows] == ["5", "0"]
        assert rows[0].fault_count == 5

    def test_diagnostics(self):
        """Iterations and fallbacks are averaged per method."""
        a = _record(0, 1.0)
        b = _record(1, 1.0)
        b.results[Method.NAIVE] = _result(1.0, iterations=30, fallback=True, status=SolverStatus.MAX_ITER)

        rows = aggregate([a, b], [Method.NAIVE])

        assert rows[0].mean_solver_iterations == 20.0
        assert rows[0].fallback_rate == 0.5
        assert rows[0].uncertified_rate == 0.5


class TestFailureBudget:
    """Tests for check_failure_budget."""

    def test_within_budget(self):
        """Half the runs failing is fine at a 50 % budget."""
        check_failure_budget([_record(0, 1.0), _record(1, 1.0, failed=True)], [Method.NAIVE], 0.5)

    def test_over_budget(self):
        """Exceeding the budget is a numerical failure."""
        with pytest.raises(ExperimentServiceError) as exc_info:
            check_failure_budget([_record(0, 1.0), _record(1, 1.0, failed=True)], [Method.NAIVE], 0.25)

        assert exc_info.value.exit_code == 3


class TestTrialWorker:
    """Tests for TrialWorker."""

    def test_serial_order(self, small_cfg):
        """Records come back in job order."""
        seen = []

        def runner(job: TrialJob) -> TrialRecord:
            seen.append((job.key, job.trial))
            return _record(job.trial, 1.0, key=job.key)

        work = trial_jobs(small_cfg, [0, 2], 2, FaultPattern.UNIFORM, [Method.NAIVE])
        records = TrialWorker(jobs=1, runner=runner).run(work)

        assert seen == [("0", 0), ("0", 1), ("2", 0), ("2", 1)]
        assert [(r.key, r.trial) for r in records] == seen

    def test_empty(self):
        """No jobs, no records."""
        assert TrialWorker().run([]) == []

    def test_jobs_floor(self):
        """Non-positive job counts run serially."""
        assert TrialWorker(jobs=0).jobs == 1


class TestMakeBackend:
    """Tests for make_backend."""

    def test_default_preset_reads_scenario(self, small_cfg):
        """The default preset takes its tolerances from the scenario."""
        limits = make_backend(small_cfg.model_copy(update={"sdp_tol": 1e-4, "eps_psd": 1e-5})).solver.limits

        assert (limits.gap_tol, limits.eps_psd, limits.max_iter) == (1e-4, 1e-5, small_cfg.max_sdp_iter)

    @pytest.mark.parametrize("preset,expected", [("strict", STRICT_LIMITS), ("fast", FAST_LIMITS)])
    def test_named_presets(self, small_cfg, preset, expected):
        """strict and fast replace the scenario tolerances."""
        backend = make_backend(small_cfg.model_copy(update={"solver_preset": preset, "sdp_tol": 1e-4}))

        assert backend.solver.limits is expected


class TestRunMethods:
    """Tests for run_methods on shared draws."""

    def test_baseline_on_healthy_elements(self, small_cfg, draws, backend):
        """Baseline is scored with its healthy-element phases."""
        results, failures = run_methods(small_cfg, draws, 0, [Method.BASELINE], backend)

        assert not failures
        assert results[Method.BASELINE].config.v_R.shape == (draws.part.n_bar,)

    def test_naive_dropped_when_not_requested(self, small_cfg, draws, backend):
        """Only the requested methods are reported."""
        results, _ = run_methods(small_cfg, draws, 0, [Method.BASELINE], backend)

        assert set(results) == {Method.BASELINE}

    def test_optimized_leakage_below_random(self, small_cfg, draws, backend):
        """max_slnr leaks less than uniformly random phases on at least 95 % of 100 draws."""
        results, failures = run_methods(small_cfg, draws, 0, [Method.MAX_SLNR], backend)
        rng = np.random.default_rng(7)

        optimized = leakage(results[Method.MAX_SLNR].config.v_R, draws.part)
        random_phase = np.array([
            leakage(np.exp(1j * rng.uniform(0, 2 * np.pi, draws.part.n_bar)), draws.part) for _ in range(100)
        ])

        assert not failures
        assert np.mean(optimized < random_phase) >= 0.95

    def test_draws_are_shared_across_fault_counts(self, small_cfg):
        """Channels and test points depend on the trial only."""
        a = draw_trial(small_cfg, 3, 0, FaultPattern.UNIFORM)
        b = draw_trial(small_cfg, 3, 2, FaultPattern.UNIFORM)

        np.testing.assert_array_equal(a.channels.H_bar, b.channels.H_bar)
        np.testing.assert_array_equal(a.cloud.positions, b.cloud.positions)

    def test_checksum_tracks_draws(self, small_cfg):
        """Identical draws hash identically; other trials do not."""
        a = draw_trial(small_cfg, 0, 2, FaultPattern.UNIFORM)

        assert a.checksum() == draw_trial(small_cfg, 0, 2, FaultPattern.UNIFORM).checksum()
        assert a.checksum() != draw_trial(small_cfg, 1, 2, FaultPattern.UNIFORM).checksum()


class TestRunSweep:
    """Tests for run_sweep."""

    def test_rows_per_count_and_method(self, small_cfg):
        """One aggregate row per fault count and method."""
        spec = SweepSpec(fault_counts=[0, 2], methods=[Method.BASELINE, Method.NAIVE], trials=2)

        rows = run_sweep(spec, small_cfg)

        assert [(r.fault_count, r.method) for r in rows] == [
            (0, Method.BASELINE), (0, Method.NAIVE), (2, Method.BASELINE), (2, Method.NAIVE),
        ]
        assert all(r.trials + r.failures == 2 for r in rows)

    def test_fault_count_above_n(self, small_cfg):
        """B > N is an input error."""
        with pytest.raises(ExperimentServiceError) as exc_info:
            run_sweep(SweepSpec(fault_counts=[7], trials=1), small_cfg)

        assert exc_info.value.exit_code == 2

    def test_parallel_matches_serial(self, small_cfg, tmp_path):
        """jobs=1 and jobs=2 write byte-identical sweep files."""
        spec = SweepSpec(fault_counts=[0, 2], methods=[Method.BASELINE, Method.NAIVE], trials=2)

        serial = write_sweep_csv(tmp_path / "serial.csv", run_sweep(spec, small_cfg, jobs=1))
        parallel = write_sweep_csv(tmp_path / "parallel.csv", run_sweep(spec, small_cfg, jobs=2))

        assert serial.read_bytes() == parallel.read_bytes()

    @pytest.mark.slow
    def test_all_methods(self, small_cfg):
        """Every method runs on the small scenario."""
        rows = run_sweep(SweepSpec(fault_counts=[0, 2], trials=2), small_cfg)

        assert {r.method for r in rows} == set(Method)


class TestRunHeatmap:
    """Tests for run_heatmap."""

    def test_shapes_and_anchor(self, small_cfg):
        """The map covers the grid and its UE cell matches the trial SNR."""
        result = run_heatmap(small_cfg, Method.BASELINE, 2, GridSpec(nx=3, ny=3))

        assert result.power_map.power_w.shape == (3, 3)
        assert result.mask.shape == (2, 3)
        assert result.mask.sum() == 2
        anchor = result.power_map.power_w[result.power_map.anchor]
        assert anchor == pytest.approx(result.snr * small_cfg.noise_power, rel=1e-9)

    def test_fault_count_out_of_range(self, small_cfg):
        """B > N is rejected."""
        with pytest.raises(ExperimentServiceError):
            run_heatmap(small_cfg, Method.BASELINE, 9, GridSpec(nx=2, ny=2))


@pytest.mark.slow
class TestRunPatternStudy:
    """Tests for run_pattern_study."""

    def test_one_row_per_pattern(self):
        """Each fault pattern contributes one row per method at 25 % of a 4x4 RIS."""
        from app.schemas.scenario import ScenarioConfig

        cfg = ScenarioConfig(Nx=4, Ny=4, M=2, T=3, L=32, seed=3)

        rows = run_pattern_study(cfg, [Method.BASELINE, Method.NAIVE], trials=1)

        assert [r.key for r in rows[::2]] == [p.value for p in FaultPattern]
        assert all(r.fault_count == 4 for r in rows)


class TestWriters:
    """Tests for the CSV and JSON writers."""

    def test_sweep_csv(self, tmp_path):
        """The sweep file has the fixed header and one row per record."""
        rows = aggregate([_record(0, 10.0), _record(1, 10.0)], [Method.NAIVE])

        content = _read_csv(write_sweep_csv(tmp_path / "out" / "sweep.csv", rows))

        assert content[0] == SWEEP_COLUMNS
        assert content[1][:2] == ["0", "naive"]
        assert float(content[1][2]) == pytest.approx(10.0)

    def test_pattern_csv(self, tmp_path):
        """Pattern files lead with the pattern column."""
        rows = aggregate([_record(0, 10.0)], [Method.NAIVE])

        content = _read_csv(write_sweep_csv(tmp_path / "patterns.csv", rows, by_pattern=True))

        assert content[0][0] == "pattern"
        assert content[1][0] == "uniform"

    def test_diagnostics_csv(self, tmp_path):
        """Diagnostics carry the per-method solver figures."""
        rows = aggregate([_record(0, 10.0)], [Method.NAIVE])

        content = _read_csv(write_diagnostics_csv(tmp_path / "diag.csv", rows))

        assert content[0][0] == "key"
        assert content[1][:3] == ["0", "naive", "10"]

    def test_mask_csv(self, tmp_path):
        """Mask rows are (ix, iy, faulty) with ix varying fastest."""
        content = _read_csv(write_mask_csv(tmp_path / "mask.csv", np.array([[0, 1, 0], [0, 0, 1]])))

        assert content[0] == ["ix", "iy", "faulty"]
        assert content[2] == ["1", "0", "1"]
        assert content[6] == ["2", "1", "1"]

    def test_heatmap_csv(self, small_cfg, tmp_path):
        """Heatmap rows are cell centers with power in dBm."""
        result = run_heatmap(small_cfg, Method.BASELINE, 0, GridSpec(nx=2, ny=2))

        content = _read_csv(write_heatmap_csv(tmp_path / "heatmap.csv", result.power_map))

        assert content[0] == ["x_m", "y_m", "power_dbm"]
        assert len(content) == 5

    def test_metadata(self, small_cfg, tmp_path):
        """Metadata records the command and the resolved configuration."""
        path = write_metadata(tmp_path / "metadata.json", small_cfg, {"subcommand": "sweep"})

        payload = json.loads(path.read_text())

        assert payload["command"] == {"subcommand": "sweep"}
        assert "seed = 11" in payload["config"]
        assert isinstance(payload["version"], str)
