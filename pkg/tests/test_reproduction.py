"""Reduced Monte Carlo reproductions on the reference scenario (run with -m slow)."""
import numpy as np
import pytest

from app.schemas.scenario import GridSpec, ScenarioConfig
from app.services.experiment_service import aggregate, run_heatmap, run_pattern_study
from app.services.metrics_service import snr, watts_to_dbm
from app.services.optimizer_service import naive_closed_form, naive_max_snr
from app.services.trial_service import draw_trial, make_backend, trial_jobs
from worker.config import FaultPattern, Method
from worker.trial_worker import TrialWorker

pytestmark = pytest.mark.slow

FAULT_COUNTS = (0, 10, 25)
TRIALS = 8
METHODS = list(Method)


def _linear(db):
    return 10.0 ** (db / 10.0)


@pytest.fixture(scope="module")
def reference_cfg():
    """Reference geometry: N=100, M=16, T=125."""
    return ScenarioConfig(seed=2024)


@pytest.fixture(scope="module")
def sweep_records(reference_cfg):
    work = trial_jobs(reference_cfg, FAULT_COUNTS, TRIALS, FaultPattern.UNIFORM, METHODS)
    return TrialWorker(jobs=4, worker_id="reproduction").run(work)


@pytest.fixture(scope="module")
def sweep_rows(reference_cfg, sweep_records):
    rows = aggregate(sweep_records, METHODS, reference_cfg.aggregate_mode)
    return {(r.fault_count, r.method): r for r in rows}


class TestNaiveOracle:
    """SDR naive against the rank-one closed form at N=100."""

    @pytest.mark.parametrize("trial", range(5))
    def test_within_half_percent(self, reference_cfg, trial):
        """Relaxation plus randomization is within 0.5 % of the analytic optimum at B=10."""
        part = draw_trial(reference_cfg, trial, 10, FaultPattern.UNIFORM).part
        cfg = reference_cfg

        relaxed = naive_max_snr(part, make_backend(cfg), np.random.default_rng(trial), L=cfg.L)

        closed = snr(naive_closed_form(part).v_R, part, cfg.P, cfg.noise_power)
        assert snr(relaxed.config.v_R, part, cfg.P, cfg.noise_power) >= 0.995 * closed


class TestSweepTrend:
    """SLNR and SNR trends over the number of faulty elements."""

    def test_no_failures(self, sweep_rows):
        """Every method solves every trial."""
        assert all(row.failures == 0 for row in sweep_rows.values())

    @pytest.mark.parametrize("method", METHODS)
    def test_slnr_non_increasing(self, sweep_rows, method):
        """Mean SLNR never rises with B by more than 0.3 dB."""
        means = [sweep_rows[(b, method)].mean_slnr_db for b in FAULT_COUNTS]

        assert all(later <= earlier + 0.3 for earlier, later in zip(means, means[1:]))

    def test_max_slnr_gain(self, sweep_rows):
        """At B=25 max_slnr beats baseline by at least 15 % in linear SLNR."""
        gain = _linear(sweep_rows[(25, Method.MAX_SLNR)].mean_slnr_db - sweep_rows[(25, Method.BASELINE)].mean_slnr_db)

        assert gain >= 1.15

    def test_robust_gain(self, sweep_rows):
        """At B=25 robust beats baseline by at least 8 % in linear SLNR."""
        gain = _linear(sweep_rows[(25, Method.ROBUST)].mean_slnr_db - sweep_rows[(25, Method.BASELINE)].mean_slnr_db)

        assert gain >= 1.08

    @pytest.mark.parametrize("fault_count", FAULT_COUNTS)
    def test_snr_cost(self, sweep_rows, fault_count):
        """max_slnr keeps at least 92 % of the naive SNR."""
        cost = _linear(
            sweep_rows[(fault_count, Method.MAX_SLNR)].mean_snr_db - sweep_rows[(fault_count, Method.NAIVE)].mean_snr_db
        )

        assert cost >= 0.92

    @pytest.mark.parametrize("fault_count", [10, 25])
    def test_mean_ordering(self, sweep_rows, fault_count):
        """Mean SLNR orders max_slnr, robust, baseline and naive has the best mean SNR."""
        row = {m: sweep_rows[(fault_count, m)] for m in METHODS}

        assert row[Method.MAX_SLNR].mean_slnr_db >= row[Method.ROBUST].mean_slnr_db
        assert row[Method.ROBUST].mean_slnr_db >= row[Method.BASELINE].mean_slnr_db
        assert row[Method.NAIVE].mean_snr_db >= row[Method.MAX_SLNR].mean_snr_db


class TestPerTrialOrdering:
    """Per-trial comparisons between methods on shared draws."""

    def test_naive_has_best_snr(self, sweep_records):
        """Naive SNR is at least the SNR of every other method on each trial."""
        for record in sweep_records:
            naive = record.results[Method.NAIVE].snr
            for method in (Method.BASELINE, Method.MAX_SLNR, Method.ROBUST):
                assert record.results[method].snr <= naive * (1 + 1e-4)

    def test_robust_below_max_slnr(self, sweep_records):
        """Robust SLNR does not exceed perfect-knowledge max_slnr on at least 95 % of faulty trials."""
        faulty = [r for r in sweep_records if r.fault_count > 0]

        below = [
            r.results[Method.ROBUST].slnr <= r.results[Method.MAX_SLNR].slnr * (1 + 1e-2)
            for r in faulty
        ]

        assert np.mean(below) >= 0.95


class TestPatternStudy:
    """Fault layouts at 25 % faulty elements."""

    @pytest.fixture(scope="class")
    def pattern_rows(self, reference_cfg):
        methods = [Method.BASELINE, Method.MAX_SLNR, Method.ROBUST]
        rows = run_pattern_study(reference_cfg, methods, trials=TRIALS, jobs=4)
        return {(r.key, r.method): r for r in rows}

    def test_robust_is_pattern_insensitive(self, pattern_rows):
        """Robust pattern means lie within a 10 % linear band."""
        means = [_linear(pattern_rows[(p.value, Method.ROBUST)].mean_slnr_db) for p in FaultPattern]

        assert max(means) <= 1.10 * min(means)

    @pytest.mark.parametrize("pattern", list(FaultPattern))
    def test_max_slnr_beats_baseline(self, pattern_rows, pattern):
        """max_slnr is at least baseline on every layout."""
        assert (
            pattern_rows[(pattern.value, Method.MAX_SLNR)].mean_slnr_db
            >= pattern_rows[(pattern.value, Method.BASELINE)].mean_slnr_db
        )

    @pytest.mark.parametrize("pattern", [FaultPattern.QUADRANT, FaultPattern.TOP_ROWS, FaultPattern.LEFT_COLUMNS])
    def test_clusters_hurt_baseline(self, pattern_rows, pattern):
        """Clustered faults are no better for baseline than uniform ones."""
        assert (
            pattern_rows[(pattern.value, Method.BASELINE)].mean_slnr_db
            <= pattern_rows[(FaultPattern.UNIFORM.value, Method.BASELINE)].mean_slnr_db
        )


class TestHeatmap:
    """Received power away from the UE."""

    def test_max_slnr_leaks_less_than_baseline(self, reference_cfg):
        """Off the UE cell (2 m or more away) max_slnr delivers less power than baseline on average."""
        grid = GridSpec(nx=20, ny=20)
        maps = {m: run_heatmap(reference_cfg, m, 10, grid).power_map for m in (Method.BASELINE, Method.MAX_SLNR)}
        x, y = maps[Method.BASELINE].x, maps[Method.BASELINE].y
        xx, yy = np.meshgrid(x, y)
        away = np.hypot(xx - reference_cfg.p_UE[0], yy - reference_cfg.p_UE[1]) >= 2.0

        mean_dbm = {m: float(np.mean(watts_to_dbm(pm.power_w[away]))) for m, pm in maps.items()}

        assert mean_dbm[Method.MAX_SLNR] < mean_dbm[Method.BASELINE]
