import math

import numpy as np
import pytest

from conftest import make_run
from oracles import naive_drift, naive_stats, reference_network_n0
from wcmeanfield.meanfield import read_csv
from wcmeanfield.model import reference_params
from wcmeanfield.network import (
    BlowUpError,
    NetworkState,
    coupling_stats,
    em_step,
    integrate,
    network_drift,
    simulate,
    step_cost,
    strong_error_study,
)
from wcmeanfield.noise import NoiseStream

P4 = reference_params()
MIXED = P4.replace(group_sizes=(1, 2), x_ini=[0.2, -0.35], coupling=[[-0.3, 0.7], [0.5, -1.2]])


def random_grid(params, n, seed=0, scale=3.0):
    rng = np.random.default_rng(seed)
    return rng.normal(0, scale, (2 * n + 1, params.s_bar))


class TestCouplingStats:
    def test_all_zero_state(self):
        n = 3
        A, B = coupling_stats(MIXED, np.zeros((2 * n + 1, MIXED.s_bar)))
        np.testing.assert_allclose(A, 0.5 * (2 * n + 1) * MIXED.multiplicity)
        np.testing.assert_array_equal(B, 0.0)

    def test_against_double_loop(self):
        x = random_grid(MIXED, 2)
        A, B = coupling_stats(MIXED, x)
        oA, oB = naive_stats(x, MIXED.slot_population, 2)
        np.testing.assert_allclose(A, oA, rtol=0, atol=1e-12)
        np.testing.assert_allclose(B, oB, rtol=0, atol=1e-12)

    def test_state_wrapper(self):
        x = random_grid(MIXED, 1)
        st = NetworkState(1, x.ravel())
        for a, b in zip(coupling_stats(MIXED, st), coupling_stats(MIXED, x)):
            np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("n", [0, 1, 2, 3, 4, 5])
    def test_drift_matches_naive(self, n):
        x = random_grid(MIXED, n, seed=n)
        fast = network_drift(MIXED, x, 0.0)
        slow = naive_drift(x, MIXED.slot_population, MIXED.tau, MIXED.coupling, MIXED.input_vector(0.0))
        np.testing.assert_allclose(fast, slow, rtol=0, atol=1e-12)


class TestEMStep:
    def test_fixed_point(self):
        p = P4.replace(coupling=np.zeros((2, 2)))
        x = np.tile(p.input_vector(0.0) * p.tau, 3)
        st = NetworkState(1, x)
        new = em_step(p, st, 0.01, np.zeros(6))
        np.testing.assert_array_equal(new.values, x)
        assert new.t == pytest.approx(0.01)

    def test_relaxation_first_order(self):
        p = P4.replace(coupling=np.zeros((2, 2)), tau=2.0)
        x0 = np.array([[1.5, -1.0]])
        T = 1.0
        errs = []
        for dt in (0.02, 0.01):
            steps = round(T / dt)
            _, _, x = integrate(p, x0, dt, steps, np.zeros((steps, 2)))
            exact = p.input_vector(0.0) * 2.0 + (x0 - p.input_vector(0.0) * 2.0) * math.exp(-T / 2.0)
            errs.append(np.max(np.abs(x - exact)))
        assert errs[0] < 0.02
        assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)

    def test_validation(self):
        st = NetworkState.initial(P4, 1)
        with pytest.raises(ValueError):
            em_step(P4, st, 0.0, np.zeros(6))
        with pytest.raises(ValueError):
            NetworkState(0, [math.nan, 0.0])
        with pytest.raises(ValueError):
            NetworkState(1, np.zeros(5)).grid(P4)

    def test_blow_up(self):
        p = P4.replace(coupling=[[0.0, 50.0], [50.0, 0.0]])
        with pytest.raises(BlowUpError) as info:
            simulate(p, 2, make_run(p, T=10.0, dt=0.01))
        assert 1 <= info.value.step <= 1000
        assert info.value.t == pytest.approx(info.value.step * 0.01)


class TestSimulate:
    def test_n0_reference(self):
        p = MIXED
        run = make_run(p, T=0.5, dt=0.01, seed=9)
        ens = simulate(p, 0, run)
        keys = [(0, a, s) for a, s in p.layout(0).slot_labels()]
        assert ens.labels == keys
        normals = np.array([NoiseStream(9).normals(k, 50) for k in keys]).T
        ref = reference_network_n0(
            p.tau, p.sigma, p.coupling, p.input_vector(0.0), p.x_ini[p.slot_population],
            p.slot_population, 0.01, normals,
        )
        np.testing.assert_allclose(ens.values, ref, rtol=0, atol=1e-12)

    def test_reference_paths_finite(self):
        # maximum |X| over seeds 0..9 on [0, 50], n = 50, dt = 0.01 (first-run golden ~0.99)
        peaks = []
        for seed in range(10):
            ens = simulate(P4, 50, make_run(T=50.0, dt=0.01, seed=seed))
            assert np.all(np.isfinite(ens.values))
            peaks.append(np.max(np.abs(ens.values)))
        assert max(peaks) < 1.5

    def test_exchangeability(self):
        n, steps, dt = 3, 40, 0.01
        layout = MIXED.layout(n)
        x0 = random_grid(MIXED, n, scale=0.5)
        noise = np.random.default_rng(4).standard_normal((steps, layout.size))
        perm = np.random.default_rng(5).permutation(2 * n + 1)
        _, _, x = integrate(MIXED, x0, dt, steps, noise)
        permuted_noise = noise.reshape(steps, 2 * n + 1, -1)[:, perm].reshape(steps, -1)
        _, _, xp = integrate(MIXED, x0[perm], dt, steps, permuted_noise)
        np.testing.assert_allclose(xp, x[perm], rtol=0, atol=1e-12)

    def test_deterministic(self, tmp_path):
        run = make_run(T=1.0, dt=0.01, seed=123)
        a = simulate(P4, 4, run)
        b = simulate(P4, 4, run)
        np.testing.assert_array_equal(a.values, b.values)
        a.to_csv(tmp_path / "a.csv")
        b.to_csv(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        c = simulate(P4, 4, run.replace(seed=124))
        assert not np.array_equal(a.values, c.values)

    def test_store_subset(self):
        run = make_run(T=0.2, dt=0.01, seed=1)
        full = simulate(P4, 2, run)
        part = simulate(P4, 2, run, store_groups=[1], store_every=5)
        assert part.labels == [(1, 1, 0), (1, 2, 0)]
        np.testing.assert_array_equal(part.times, full.times[::5])
        np.testing.assert_array_equal(part.column((1, 2, 0)), full.column((1, 2, 0))[::5])

    def test_csv_round_trip(self, tmp_path):
        ens = simulate(P4, 0, make_run(T=0.5, dt=0.01, seed=2))
        ens.to_csv(tmp_path / "n.csv")
        header, data = read_csv(tmp_path / "n.csv")
        assert header == ["t", "0_1_0", "0_2_0"]
        np.testing.assert_array_equal(data[:, 1:], ens.values)
        np.testing.assert_array_equal(data[:, 0], ens.times)

    def test_initial_variance(self):
        p = P4.replace(q_ini=[0.25, 0.0])
        ens = simulate(p, 200, make_run(p, T=0.01, dt=0.01, seed=3))
        x0 = ens.values[0]
        pop1 = x0[0::2]
        assert np.all(x0[1::2] == -0.35)
        assert abs(pop1.mean() - 0.2) < 4 * 0.5 / math.sqrt(pop1.size)
        assert abs(pop1.std() - 0.5) < 0.1

    def test_population_symmetry(self):
        p = P4.replace(group_sizes=(1, 0), x_ini=[0.2, -0.35])
        ens = simulate(p, 100, make_run(p, T=2.0, dt=0.01, seed=8))
        last = ens.values[-1]
        per_slot = [last[[c for c, lab in enumerate(ens.labels) if lab[1:] == (1, s)]] for s in (-1, 0, 1)]
        means = [v.mean() for v in per_slot]
        se = max(v.std(ddof=1) for v in per_slot) / math.sqrt(per_slot[0].size)
        assert max(means) - min(means) < 4 * math.sqrt(2) * se


def test_strong_order_em():
    order, _ = strong_error_study(
        P4, 2, T=1.0, dts=(2**-4, 2**-5, 2**-6, 2**-7), ref_dt=2**-10, seeds=range(10), run=make_run()
    )
    assert abs(order - 1.0) <= 0.15


def test_linear_scaling():
    small = step_cost(P4, 2000, steps=100)
    large = step_cost(P4, 4000, steps=100)
    assert large / small <= 2.5
