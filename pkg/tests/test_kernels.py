"""Kernel correctness on both backends, plus exact cross-backend parity."""

import random

import pytest

from gdserve import _kernels_py

try:
    from gdserve import _kernels_c
    BACKENDS = [_kernels_py, _kernels_c]
    HAVE_C = True
except ImportError:
    BACKENDS = [_kernels_py]
    HAVE_C = False

BACKEND_IDS = ["python", "c"][: len(BACKENDS)]


@pytest.fixture(params=BACKENDS, ids=BACKEND_IDS)
def kern(request):
    return request.param


class TestSolveRate:
    def test_single_node_linear(self, kern):
        assert kern.solve_rate([100.0], [100.0], 50.0) == pytest.approx(0.5)

    def test_two_piece_kink(self, kern):
        # First node caps at 40 once a > 0.4; 40 + 100a = 90.
        assert kern.solve_rate([40.0, 100.0], [100.0, 100.0], 90.0) == pytest.approx(0.5)

    def test_shrinking_supply_raises_rate(self, kern):
        assert kern.solve_rate([5e6], [5e6], 2.5e6) == pytest.approx(0.50)
        assert kern.solve_rate([4e6], [4e6], 2.1e6) == pytest.approx(0.525)

    def test_no_solution_returns_one(self, kern):
        assert kern.solve_rate([10.0], [10.0], 50.0) == 1.0
        assert kern.solve_rate([], [], 5.0) == 1.0

    def test_zero_supply_nodes_skipped(self, kern):
        assert kern.solve_rate([0.0, 100.0], [0.0, 100.0], 50.0) == pytest.approx(0.5)

    def test_zero_demand(self, kern):
        assert kern.solve_rate([10.0], [10.0], 0.0) == 0.0

    def test_exact_absorption(self, kern):
        rng = random.Random(42)
        for _ in range(300):
            n = rng.randint(1, 12)
            supply = [rng.uniform(1, 200) for _ in range(n)]
            remaining = [s * rng.uniform(0, 1) for s in supply]
            total = sum(remaining)
            demand = rng.uniform(0.05, 0.999) * total
            a = kern.solve_rate(remaining, supply, demand)
            absorbed = sum(min(r, s * a) for r, s in zip(remaining, supply))
            assert abs(absorbed - demand) <= 1e-9 * max(1.0, demand)

    def test_monotone_in_demand_and_remaining(self, kern):
        rng = random.Random(43)
        for _ in range(200):
            n = rng.randint(1, 8)
            supply = [rng.uniform(1, 100) for _ in range(n)]
            remaining = [s * rng.uniform(0, 1) for s in supply]
            d = rng.uniform(1, sum(remaining) + 10)
            a1 = kern.solve_rate(remaining, supply, d)
            a2 = kern.solve_rate(remaining, supply, d * 1.1)
            assert a2 >= a1 - 1e-12
            bigger = [min(s, r * 1.2 + 0.1) for r, s in zip(remaining, supply)]
            a3 = kern.solve_rate(bigger, supply, d)
            assert a3 <= a1 + 1e-12


class TestEffectiveProbs:
    def test_no_truncation(self, kern):
        assert kern.effective_probs([0.25, 0.625]) == [0.25, 0.625]

    def test_truncation_at_unit_budget(self, kern):
        assert kern.effective_probs([1.0, 0.625]) == [1.0, 0.0]
        assert kern.effective_probs([0.7, 0.5, 0.3]) == [0.7, pytest.approx(0.3), 0.0]

    def test_sum_capped_and_entries_bounded(self, kern):
        rng = random.Random(44)
        for _ in range(300):
            rates = [rng.uniform(0, 1) for _ in range(rng.randint(0, 10))]
            effs = kern.effective_probs(rates)
            assert sum(effs) <= 1.0 + 1e-12
            for e, a in zip(effs, rates):
                assert -1e-15 <= e <= a + 1e-15


class TestDualProbs:
    def test_single_contract_full_allocation(self, kern):
        assert kern.dual_probs([0.5], [1.0]) == [pytest.approx(1.0)]

    def test_symmetric_split(self, kern):
        assert kern.dual_probs([0.5, 0.5], [0.0, 0.0]) == [
            pytest.approx(0.5), pytest.approx(0.5)]

    def test_under_demanded_leftover(self, kern):
        assert kern.dual_probs([0.3], [0.0]) == [pytest.approx(0.3)]

    def test_empty(self, kern):
        assert kern.dual_probs([], []) == []

    def test_supply_and_nonnegativity(self, kern):
        rng = random.Random(45)
        for _ in range(400):
            n = rng.randint(1, 8)
            thetas = [rng.uniform(0.05, 1.5) for _ in range(n)]
            alphas = [rng.uniform(0, 5) for _ in range(n)]
            xs = kern.dual_probs(thetas, alphas)
            assert all(x >= 0.0 for x in xs)
            assert sum(xs) <= 1.0 + 1e-9

    def test_monotone_in_own_dual(self, kern):
        rng = random.Random(46)
        for _ in range(200):
            n = rng.randint(2, 6)
            thetas = [rng.uniform(0.05, 1.0) for _ in range(n)]
            alphas = [rng.uniform(0, 4) for _ in range(n)]
            xs = kern.dual_probs(thetas, alphas)
            bumped = list(alphas)
            bumped[0] += rng.uniform(0.01, 1.0)
            ys = kern.dual_probs(thetas, bumped)
            assert ys[0] >= xs[0] - 1e-12
            for k in range(1, n):
                assert ys[k] <= xs[k] + 1e-12


class TestDrawIndex:
    def test_selects_by_cumulative(self, kern):
        probs = [0.25, 0.625]
        assert kern.draw_index(probs, 0.0) == 0
        assert kern.draw_index(probs, 0.2499) == 0
        assert kern.draw_index(probs, 0.25) == 1
        assert kern.draw_index(probs, 0.8749) == 1
        assert kern.draw_index(probs, 0.875) == -1
        assert kern.draw_index(probs, 0.999) == -1

    def test_empty_is_unallocated(self, kern):
        assert kern.draw_index([], 0.3) == -1


@pytest.mark.skipif(not HAVE_C, reason="compiled kernels unavailable")
class TestBackendParity:
    def test_solve_rate_bit_identical(self):
        rng = random.Random(47)
        for _ in range(500):
            n = rng.randint(0, 10)
            supply = [rng.choice([0.0, rng.uniform(1, 100)]) for _ in range(n)]
            remaining = [s * rng.uniform(0, 1) for s in supply]
            d = rng.uniform(0, sum(remaining) + 5) if n else rng.uniform(0, 5)
            assert _kernels_py.solve_rate(remaining, supply, d) == \
                _kernels_c.solve_rate(remaining, supply, d)

    def test_effective_probs_bit_identical(self):
        rng = random.Random(48)
        for _ in range(500):
            rates = [rng.uniform(0, 1.2) for _ in range(rng.randint(0, 10))]
            assert _kernels_py.effective_probs(rates) == \
                _kernels_c.effective_probs(rates)

    def test_dual_probs_bit_identical(self):
        rng = random.Random(49)
        for _ in range(500):
            n = rng.randint(0, 8)
            thetas = [rng.uniform(0.05, 1.5) for _ in range(n)]
            alphas = [rng.choice([0.0, rng.uniform(0, 5)]) for _ in range(n)]
            assert _kernels_py.dual_probs(thetas, alphas) == \
                _kernels_c.dual_probs(thetas, alphas)

    def test_draw_index_identical(self):
        rng = random.Random(50)
        for _ in range(500):
            probs = [rng.uniform(0, 0.3) for _ in range(rng.randint(0, 6))]
            u = rng.random()
            assert _kernels_py.draw_index(probs, u) == _kernels_c.draw_index(probs, u)
