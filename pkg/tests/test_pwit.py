import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from pwit_lab import levy, pwit, walk
from pwit_lab._rng import HashStream, derive_key
from pwit_lab.errors import DegenerateEnvironmentError, DomainError, ResourceError
from pwit_lab.pwit import VertexId

TEMPERED = levy.TemperedStable(1.0, 0.5, 1.0)
STABLE = levy.Stable(1.0, 0.5)

paths = st.lists(st.integers(1, 4), max_size=4).map(tuple)


# --------------------------------------------------------------------------- vertex ids


@given(p=paths)
def test_vertex_id_text_roundtrip(p):
    v = VertexId(p)
    assert VertexId.parse(str(v)) == v
    assert v.depth == len(p)
    assert v.child(3).parent() == v


def test_vertex_id_rules():
    assert str(pwit.ROOT) == "/"
    assert VertexId((2, 0)).is_dust
    with pytest.raises(DomainError):
        VertexId((0, 1))
    with pytest.raises(DomainError):
        VertexId((2, 0)).child(1)
    with pytest.raises(DomainError):
        pwit.ROOT.parent()
    with pytest.raises(DomainError):
        VertexId.parse("1/2")


# --------------------------------------------------------------------------- neighborhoods


@given(seed=st.integers(0, 2**64 - 1), order=st.permutations([(1,), (2, 1), (1, 3, 2), (3,)]))
def test_environment_independent_of_query_order(seed, order):
    a = pwit.PwitEnvironment(TEMPERED, seed)
    b = pwit.PwitEnvironment(TEMPERED, seed)
    for v in order:
        a.neighborhood(v)
    for v in reversed(order):
        na, nb = a.neighborhood(v), b.neighborhood(v)
        np.testing.assert_array_equal(na.children, nb.children)
        assert na.parent_conductance == nb.parent_conductance
        assert na.rho == a.rho_of(a.node(v))


def test_repeat_query_bit_identical():
    env = pwit.PwitEnvironment(TEMPERED, 3)
    a, b = env.neighborhood((2, 1)), env.neighborhood((2, 1))
    np.testing.assert_array_equal(a.children, b.children)
    assert a.dust_mass == b.dust_mass and a.rho == b.rho


@given(seed=st.integers(0, 2**32), p=paths.filter(bool))
def test_parent_child_consistency(seed, p):
    env = pwit.PwitEnvironment(TEMPERED, seed)
    v = VertexId(p)
    assert env.neighborhood(v.parent()).children[p[-1] - 1] == env.neighborhood(v).parent_conductance


@pytest.mark.parametrize("path", [(), (1,), (2, 5), (1, 1, 1)])
def test_children_match_numpy_stream(path):
    seed = 77
    env = pwit.PwitEnvironment(TEMPERED, seed)
    kids = env.neighborhood(path).children
    ref = levy.sample_arrivals_desc(TEMPERED, 1.0, env.cutoff, HashStream(*derive_key(seed, *path))).conductances
    assert kids.size == ref.size
    np.testing.assert_allclose(kids, ref, rtol=1e-13)


def test_neighborhood_shape():
    env = pwit.PwitEnvironment(TEMPERED, 1)
    nb = env.neighborhood(())
    assert nb.parent_conductance is None
    assert np.all(np.diff(nb.children) < 0) and nb.children[-1] >= env.cutoff
    assert nb.dust_mass == pytest.approx(levy.small_jump_mean(TEMPERED, env.cutoff))
    dust = env.neighborhood((0,))
    assert dust.parent_conductance == nb.dust_mass and dust.children.size == 0


def test_root_rho_law():
    # dust carries the mean of the dropped jumps, so rho is unbiased for ID(Pi)
    rho = np.array([pwit.PwitEnvironment(TEMPERED, s, max_nodes=4096).rho_of(0) for s in range(10_000)])
    se = math.sqrt(math.gamma(1.5) / rho.size)
    assert abs(rho.mean() - math.sqrt(math.pi)) <= 3 * se


@pytest.mark.parametrize("spec", [TEMPERED, STABLE], ids=["tempered", "stable"])
def test_max_child_law(spec):
    top = np.array([pwit.max_child_conductance(pwit.PwitEnvironment(spec, s, max_nodes=4096)) for s in range(10_000)])
    cdf = lambda x: np.exp(-np.array([levy.tail_mass(spec, v) for v in np.atleast_1d(x)]))
    assert stats.kstest(top, cdf).pvalue > 0.01


def test_max_child_free_of_cutoff():
    for s in range(50):
        a = pwit.max_child_conductance(pwit.PwitEnvironment(TEMPERED, s, cutoff=1e-2))
        b = pwit.max_child_conductance(pwit.PwitEnvironment(TEMPERED, s, cutoff=1e-5))
        assert a == pytest.approx(b, rel=1e-9)


def test_max_child_of_leaf():
    env = pwit.star_trap(5.0)
    with pytest.raises(DegenerateEnvironmentError):
        pwit.max_child_conductance(env, (2,))
    assert pwit.max_child_conductance(env, (1,)) == 5.0


# --------------------------------------------------------------------------- ratios


def test_ratio_of_equal_edges():
    env = pwit.constant_ratio_line(1.0)
    assert pwit.conductance_ratio(env, (1, 1, 1)) == 1.0
    with pytest.raises(DomainError):
        pwit.conductance_ratio(env, (1,))


@given(seed=st.integers(0, 2**32), p=st.lists(st.integers(1, 3), min_size=2, max_size=6).map(tuple))
def test_ratio_telescopes(seed, p):
    env = pwit.PwitEnvironment(TEMPERED, seed)
    prod = 1.0
    for k in range(2, len(p) + 1):
        prod *= pwit.conductance_ratio(env, p[:k])
    first = env.neighborhood(p[:1]).parent_conductance
    last = env.neighborhood(p).parent_conductance
    assert prod == pytest.approx(last / first, rel=1e-12)


def test_ratios_one_dependent():
    a2, a3, a4 = [], [], []
    for s in range(10_000):
        env = pwit.PwitEnvironment(TEMPERED, s, max_nodes=4096)
        a2.append(pwit.conductance_ratio(env, (1, 1)))
        a3.append(pwit.conductance_ratio(env, (1, 1, 1)))
        a4.append(pwit.conductance_ratio(env, (1, 1, 1, 1)))
    se = 1.0 / math.sqrt(len(a2))
    # rank correlation, robust to the heavy ratio tails
    assert abs(stats.spearmanr(a2, a4)[0]) <= 3 * se
    # neighbours share an edge and are strongly negatively dependent
    assert stats.spearmanr(a2, a3)[0] < -10 * se


# --------------------------------------------------------------------------- escape brackets


def harmonic_escape(children_fn, depth):
    """P(reach relative depth ``depth`` before the parent) from /1, by a dense linear solve."""
    verts = [(1,)]
    frontier = [(1,)]
    for _ in range(depth - 1):
        nxt = []
        for v in frontier:
            kids, _ = children_fn(v)
            nxt += [v + (k,) for k in range(1, len(kids) + 1)]
        verts += nxt
        frontier = nxt
    index = {v: i for i, v in enumerate(verts)}
    n = len(verts)
    a = np.eye(n)
    b = np.zeros(n)
    cond_in = {(1,): children_fn(())[0][0]}
    for v in verts:
        i = index[v]
        kids, dust = children_fn(v)
        rho = cond_in[v] + sum(kids) + dust
        # the dust leaf bounces straight back, a self loop of weight dust
        a[i, i] -= dust / rho
        if v[:-1] in index:
            a[i, index[v[:-1]]] -= cond_in[v] / rho
        for k, c in enumerate(kids, start=1):
            w = v + (k,)
            cond_in[w] = c
            if w in index:
                a[i, index[w]] -= c / rho
            else:
                b[i] += c / rho
    return np.linalg.solve(a, b)[0]


def random_tree(seed):
    def children(path):
        r = np.random.default_rng([seed, *path])
        k = int(r.integers(1, 4)) if len(path) < 8 else 2
        return sorted(r.uniform(0.1, 3.0, k).tolist(), reverse=True), float(r.uniform(0, 0.5))

    return children


@given(seed=st.integers(0, 2**32), depth=st.integers(1, 4))
def test_upper_bracket_matches_linear_solve(seed, depth):
    fn = random_tree(seed)
    env = pwit.SyntheticEnvironment(fn)
    lo, up = pwit.escape_prob_bracket(env, (1,), depth, prune=0.0)
    assert lo == 0.0
    assert up == pytest.approx(harmonic_escape(fn, depth), rel=1e-12, abs=1e-14)


def test_bracket_depth_zero_and_domain():
    env = pwit.PwitEnvironment(TEMPERED, 0)
    assert pwit.escape_prob_bracket(env, (1,), 0) == (0.0, 1.0)
    with pytest.raises(DomainError):
        pwit.escape_prob_bracket(env, (), 5)
    with pytest.raises(DomainError):
        pwit.escape_prob_bracket(env, (1, 0), 5)


def test_constant_ratio_upper_converges():
    line = pwit.constant_ratio_line(4.0)
    ups = [pwit.escape_prob_bracket(line, (1,), d)[1] for d in (1, 2, 5, 10, 20)]
    assert all(x >= y for x, y in zip(ups, ups[1:]))
    assert abs(ups[-1] - 0.75) < 1e-9


@pytest.mark.xfail(strict=True, reason="the truncated lower bracket is identically 0")
def test_constant_ratio_lower_converges():
    line = pwit.constant_ratio_line(4.0)
    assert abs(pwit.escape_prob_bracket(line, (1,), 20)[0] - 0.75) < 1e-3


def test_upper_bracket_monotone_on_pwit():
    env = pwit.PwitEnvironment(TEMPERED, 8)
    ups = [pwit.escape_prob_bracket(env, (1, 2), d)[1] for d in (1, 3, 6, 10)]
    assert all(x >= y - 1e-15 for x, y in zip(ups, ups[1:]))
    assert 0.0 < ups[-1] < 1.0


def test_prune_only_raises_upper():
    env = pwit.PwitEnvironment(TEMPERED, 9)
    fine = pwit.escape_prob_bracket(env, (1,), 4, prune=1e-7)[1]
    coarse = pwit.escape_prob_bracket(env, (1,), 4, prune=1e-2)[1]
    assert coarse >= fine


# --------------------------------------------------------------------------- resources


def test_node_limit_raises():
    env = pwit.PwitEnvironment(TEMPERED, 0, max_nodes=200)
    with pytest.raises(ResourceError):
        walk.run_walk(env, 100_000, 1)


def test_children_limit_raises():
    env = pwit.PwitEnvironment(STABLE, 0, cutoff=1e-4, max_children=50)
    with pytest.raises(ResourceError):
        env.neighborhood(())


def test_synthetic_validation():
    env = pwit.SyntheticEnvironment(lambda p: ([1.0, 2.0], 0.0))
    with pytest.raises(DomainError):
        env.neighborhood(())


# --------------------------------------------------------------------------- invariants


def test_sibling_streams_independent():
    a, b = [], []
    for s in range(10_000):
        env = pwit.PwitEnvironment(TEMPERED, s, max_nodes=4096)
        a.append(pwit.max_child_conductance(env, (1,)))
        b.append(pwit.max_child_conductance(env, (2,)))
    assert abs(stats.spearmanr(a, b)[0]) <= 3.0 / math.sqrt(len(a))


@pytest.mark.parametrize("seed", [1, 2])
def test_bracket_soundness(seed):
    env = pwit.PwitEnvironment(TEMPERED, seed)
    br = [pwit.escape_prob_bracket(env, (1,), d) for d in range(1, 12)]
    for (lo, up), (lo2, up2) in zip(br, br[1:]):
        assert lo <= lo2 <= up2 <= up
