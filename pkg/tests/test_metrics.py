import numpy as np
import pytest

from diffnet import metrics
from diffnet.algorithms import AlgorithmConfig, run_batch
from diffnet.errors import InvalidInputError
from diffnet.metrics import aggregate, csv_lines, steady_state
from diffnet.problems import make_ls_problem
from diffnet.topology import build_graph, metropolis_weights


class TestAggregate:
    def test_single_run_is_identity(self):
        series = np.array([[1.0, 2.0, 3.0]])
        traj = aggregate(series)
        assert np.array_equal(traj.values, series[0])
        assert np.all(traj.stderr == 0)
        assert traj.runs == 1

    def test_two_constant_series(self):
        traj = aggregate([[2.0, 2.0], [4.0, 4.0]])
        assert np.allclose(traj.values, 3.0)
        assert np.allclose(traj.stderr, 1.0)

    def test_permutation_invariant_and_linear(self):
        rng = np.random.default_rng(0)
        series = rng.uniform(0.1, 1.0, size=(6, 20))
        a = aggregate(series)
        b = aggregate(series[::-1])
        assert np.allclose(a.values, b.values)
        scaled = aggregate(3.0 * series)
        assert np.allclose(scaled.values, 3.0 * a.values)

    def test_ragged_rejected(self):
        with pytest.raises(InvalidInputError):
            aggregate([[1.0, 2.0], [1.0]])

    def test_monte_carlo_spread_on_real_config(self):
        # 50 i.i.d. runs of a fixed least-squares setup: the steady-state
        # standard error stays below 10% of the mean
        problem = make_ls_problem(9, 5, 5, noise_samples=100_000)
        comb = metropolis_weights(build_graph("grid", 9))
        cfg = AlgorithmConfig("diffusion", 0.005, 3000)
        seeds = [np.random.SeedSequence((77, r)) for r in range(50)]
        traj = aggregate(run_batch(cfg, problem, comb, seeds).msd)
        ss = steady_state(traj)
        assert ss.std_error <= 0.1 * ss.mean


class TestSteadyState:
    def test_constant_trajectory(self):
        traj = aggregate([np.full(100, 0.25)])
        ss = steady_state(traj, 0.1)
        assert ss.mean == pytest.approx(0.25)
        assert ss.std_error == 0.0
        assert ss.stationary

    def test_decaying_trajectory_flagged(self):
        values = np.linspace(10.0, 1.0, 200)
        ss = steady_state(aggregate([values]), 0.5)
        assert not ss.stationary

    def test_window_validation(self):
        traj = aggregate([np.ones(10)])
        with pytest.raises(InvalidInputError):
            steady_state(traj, 0.6)
        with pytest.raises(InvalidInputError):
            steady_state(traj, 0.01)  # empty window over 10 iterations

    def test_white_noise_mean_tightens_with_window(self):
        rng = np.random.default_rng(3)
        values = 1.0 + 0.1 * rng.standard_normal(20_000)
        short = steady_state(aggregate([values]), 0.01)
        long = steady_state(aggregate([values]), 0.5)
        assert abs(long.mean - 1.0) <= abs(short.mean - 1.0) + 0.01
        assert abs(long.mean - 1.0) <= 0.005

    def test_db_fields(self):
        traj = aggregate([[0.1] * 50, [0.1] * 50])
        ss = steady_state(traj)
        assert ss.mean_db == pytest.approx(-10.0)
        assert ss.std_error_db == pytest.approx(0.0, abs=1e-12)


class TestCsv:
    def test_layout_and_determinism(self):
        t1 = aggregate([[1.0, 0.5, 0.25], [1.0, 0.5, 0.25]])
        t2 = aggregate([[2.0, 1.0, 0.5], [2.0, 1.0, 0.5]])
        lines = csv_lines({"diffusion": t1, "exact_diffusion": t2})
        assert lines[0] == (
            "iteration,diffusion_msd_db,diffusion_stderr_db,"
            "exact_diffusion_msd_db,exact_diffusion_stderr_db"
        )
        assert len(lines) == 4
        assert lines[1].split(",")[0] == "1"
        assert lines == csv_lines({"diffusion": t1, "exact_diffusion": t2})

    def test_values_round_trip(self):
        traj = aggregate([[0.5, 0.125]])
        lines = csv_lines({"m": traj}, include_stderr=False)
        got = [float(line.split(",")[1]) for line in lines[1:]]
        assert got == pytest.approx([10 * np.log10(0.5), 10 * np.log10(0.125)], rel=1e-15)

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(InvalidInputError):
            csv_lines({"a": aggregate([[1.0, 1.0]]), "b": aggregate([[1.0]])})
