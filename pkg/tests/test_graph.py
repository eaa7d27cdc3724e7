import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from pwit_lab import graph, levy
from pwit_lab.errors import DegenerateEnvironmentError, DomainError

TEMPERED = levy.TemperedStable(1.0, 0.5, 1.0)


@given(n=st.integers(2, 40), seed=st.integers(0, 2**32), gen=st.sampled_from(["div", "stab"]))
def test_symmetric_zero_diagonal(n, seed, gen):
    rng = np.random.default_rng(seed)
    cm = graph.generate_divisible(n, TEMPERED, 1e-4, rng) if gen == "div" else graph.generate_stable_domain(n, 0.5, rng)
    assert np.array_equal(cm.c, cm.c.T)
    assert np.all(np.diag(cm.c) == 0.0)
    assert np.all(cm.c[~np.eye(n, dtype=bool)] > 0.0)


@pytest.mark.parametrize("n", [50, 200])
def test_divisible_row_sum_mean(n, rng):
    reps = 400
    rho = np.array([graph.generate_divisible(n, TEMPERED, 1e-4, rng).rho[0] for _ in range(reps)])
    se = math.sqrt(math.gamma(1.5) / reps)
    assert abs(rho.mean() - math.sqrt(math.pi)) <= 3 * se


def test_divisible_row_sum_law_free_of_n(rng):
    a = np.array([graph.generate_divisible(50, TEMPERED, 1e-4, rng).rho[0] for _ in range(400)])
    b = np.array([graph.generate_divisible(200, TEMPERED, 1e-4, rng).rho[0] for _ in range(400)])
    d = stats.ks_2samp(a, b).statistic
    crit = 1.628 * math.sqrt((a.size + b.size) / (a.size * b.size))
    assert d < crit


def test_stable_domain_support(rng):
    n = 100
    cm = graph.generate_stable_domain(n, 0.5, rng)
    off = cm.c[np.triu_indices(n, 1)]
    assert off.min() >= n**-2.0


def test_stable_domain_tail_slope(rng):
    n, alpha = 200, 0.5
    x = np.concatenate([graph.generate_stable_domain(n, alpha, rng).c[np.triu_indices(n, 1)] for _ in range(6)])
    assert x.size >= 100_000
    # n P(c > t) against t over three decades above the scale n^(-1/alpha)
    t = n ** (-1 / alpha) * np.logspace(0.2, 3.0, 15)
    surv = np.array([np.mean(x > v) for v in t])
    slope = np.polyfit(np.log(t), np.log(n * surv), 1)[0]
    assert abs(slope + alpha) < 0.05


def test_kernel_two_vertices():
    cm = graph.ConductanceMatrix(np.array([[0.0, 3.5], [3.5, 0.0]]))
    np.testing.assert_array_equal(graph.kernel(cm).k, [[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(graph.symmetrize(cm).s, [[0.0, 1.0], [1.0, 0.0]])


def test_row_sums_and_detailed_balance(rng):
    cm = graph.generate_divisible(100, TEMPERED, 1e-6, rng)
    km = graph.kernel(cm)
    assert np.max(np.abs(km.k.sum(axis=1) - 1.0)) < 1e-12
    assert graph.detailed_balance_residual(km) < 1e-12


def test_similarity_spectrum_and_perron(rng):
    cm = graph.generate_divisible(50, TEMPERED, 1e-6, rng)
    sm, km = graph.symmetrize(cm), graph.kernel(cm)
    ws = np.linalg.eigvalsh(sm.s)
    wk = np.sort(np.linalg.eigvals(km.k).real)
    assert np.max(np.abs(ws - wk)) < 1e-8
    assert abs(ws[-1] - 1.0) < 1e-10
    # Perron vector of S is sqrt(rho)
    r = np.sqrt(sm.rho)
    np.testing.assert_allclose(sm.s @ r, r, rtol=1e-12)
    # power iteration on K^2 picks out the top pair in modulus
    x = rng.random(50)
    for _ in range(2000):
        x = km.k @ (km.k @ x)
        x /= np.linalg.norm(x)
    lam2 = x @ (km.k @ (km.k @ x)) / (x @ x)
    assert lam2 == pytest.approx(max(ws[-1] ** 2, ws[0] ** 2), rel=1e-8)


def test_zero_row_rejected():
    c = np.zeros((3, 3))
    c[0, 1] = c[1, 0] = 1.0
    with pytest.raises(DegenerateEnvironmentError):
        graph.kernel(graph.ConductanceMatrix(c))


def test_bad_inputs():
    with pytest.raises(DomainError):
        graph.generate_divisible(1, TEMPERED)
    with pytest.raises(DomainError):
        graph.generate_stable_domain(10, 1.5)
    with pytest.raises(DomainError):
        graph.ConductanceMatrix(np.zeros((2, 3)))


def test_csv_roundtrip(rng):
    cm = graph.generate_stable_domain(7, 0.5, rng)
    back = graph.load_csv(graph.dump_csv(cm))
    np.testing.assert_array_equal(back.c, cm.c)
    bad = graph.dump_csv(graph.ConductanceMatrix(cm.c + np.triu(np.ones((7, 7)), 1)))
    with pytest.raises(DomainError):
        graph.load_csv(bad)


def test_generator_is_reproducible():
    a = graph.generate_divisible(30, TEMPERED, 1e-5, np.random.default_rng(5))
    b = graph.generate_divisible(30, TEMPERED, 1e-5, np.random.default_rng(5))
    np.testing.assert_array_equal(a.c, b.c)
