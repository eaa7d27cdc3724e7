"""Quenched random walks on finite conductance matrices and PWIT environments.

Walk randomness comes from keyed SplitMix64 streams (see ``_rng``), so a
trace is a pure function of the environment seed and the walk seed. Tree
positions are node ids of the environment store; the dust leaf of node
``i`` is encoded as ``-(i + 1)`` and reported at the depth of ``i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import graph, levy
from ._backend import njit, quiet_uint64
from ._rng import derive_key, next_uniform, stream_state
from .errors import DegenerateEnvironmentError, DomainError, ResourceError
from .pwit import (
    COUNT,
    DEPTH,
    DUST,
    HIT,
    NEED_NODE,
    OK,
    PARENT,
    PCOND,
    RHO,
    START,
    BaseEnvironment,
    VertexId,
    _child_node,
    _materialize,
    as_vertex,
    escape_prob_bracket,
)

WALK_DOMAIN = 0x57414C4B  # separates walk streams from environment streams


def walk_stream(walk_seed: int, *path) -> np.ndarray:
    return stream_state(*derive_key(walk_seed, WALK_DOMAIN, *path))


# --------------------------------------------------------------------------- kernels


@njit
def _choose(cur, u, ni, nf, pc):
    """Neighbour of materialized node ``cur`` for a uniform ``u``: -1 parent, 0 dust leaf, k >= 1 child k."""
    x = u * nf[cur, RHO]
    acc = nf[cur, PCOND]
    if x < acc:
        return -1
    a = ni[cur, START]
    cnt = ni[cur, COUNT]
    for j in range(cnt):
        acc += pc[a + j]
        if x < acc:
            return j + 1
    if nf[cur, DUST] > 0.0:
        return 0
    # x rounded onto rho with no dust leaf: take the last real edge
    return cnt if cnt > 0 else -1


@njit
def _neighbor_counts(cur, draws, st, counts, ni, nf, pc):
    cnt = ni[cur, COUNT]
    for _ in range(draws):
        slot = _choose(cur, next_uniform(st), ni, nf, pc)
        if slot < 0:
            counts[0] += 1
        elif slot == 0:
            counts[cnt + 1] += 1
        else:
            counts[slot] += 1


@njit
def _walk_tree(state, st, pos, dep, steps, stop_node, stop_depth, record, ni, nk, nf, pc, pch, meta, mode, c, alpha, knots, values, slopes, cutoff, dust, max_arr):
    """Advance a tree walk in place; resumable after a storage request.

    ``state = [t, current node, in dust leaf, dust excursions]``.
    """
    t = state[0]
    cur = state[1]
    in_dust = state[2]
    nd = state[3]
    status = OK
    while t < steps:
        if in_dust == 1:
            in_dust = 0
        else:
            if meta[0] >= ni.shape[0]:
                status = NEED_NODE
                break
            status = _materialize(cur, ni, nk, nf, pc, pch, meta, mode, c, alpha, knots, values, slopes, cutoff, dust, max_arr)
            if status != OK:
                break
            slot = _choose(cur, next_uniform(st), ni, nf, pc)
            if slot > 0:
                cur = _child_node(cur, slot, ni, nk, nf, pc, pch, meta)
            elif slot < 0:
                cur = ni[cur, PARENT]
            else:
                in_dust = 1
                nd += 1
        t += 1
        if record:
            pos[t] = -(cur + 1) if in_dust == 1 else cur
            dep[t] = ni[cur, DEPTH]
        if in_dust == 0 and (cur == stop_node or ni[cur, DEPTH] == stop_depth):
            status = HIT
            break
    state[0] = t
    state[1] = cur
    state[2] = in_dust
    state[3] = nd
    return status


@njit
def _pick(row, rho_i, u):
    acc = 0.0
    last = -1
    x = u * rho_i
    for j in range(row.shape[0]):
        if row[j] > 0.0:
            acc += row[j]
            last = j
            if x < acc:
                return j
    return last


@njit
def _walk_matrix(c, rho, start, steps, st, pos):
    cur = start
    pos[0] = cur
    for t in range(steps):
        cur = _pick(c[cur], rho[cur], next_uniform(st))
        pos[t + 1] = cur
    return cur


@njit
def _occupation(c, rho, start, steps, st, counts):
    cur = start
    for _ in range(steps):
        counts[cur] += 1
        cur = _pick(c[cur], rho[cur], next_uniform(st))
    return cur


@njit
def _return_walks(c, rho, r, walks, st):
    n = c.shape[0]
    hits = 0
    for _ in range(walks):
        s = min(int(next_uniform(st) * n), n - 1)
        cur = s
        for _ in range(r):
            cur = _pick(c[cur], rho[cur], next_uniform(st))
        if cur == s:
            hits += 1
    return hits


# --------------------------------------------------------------------------- traces


@dataclass(frozen=True)
class WalkTrace:
    positions: np.ndarray
    depths: np.ndarray | None
    horizon: int
    master_seed: int | None
    walk_seed: int
    dust_excursions: int = 0
    env: object = field(default=None, repr=False, compare=False)

    def vertex(self, m: int):
        p = int(self.positions[m])
        return self.env.vertex_id(p) if isinstance(self.env, BaseEnvironment) else p


def _drive(env: BaseEnvironment, state, st, pos, dep, steps, stop_node, record, stop_depth=-1):
    while True:
        with quiet_uint64():
            status = _walk_tree(state, st, pos, dep, steps, stop_node, stop_depth, record, *env.kernel_args())
        if status in (OK, HIT):
            return status
        try:
            env.handle(status, int(state[1]))
        except ResourceError as exc:
            raise ResourceError(f"{exc} (walk stopped after {int(state[0])} of {steps} steps)") from exc


def run_walk(env, steps: int, walk_seed: int = 0, start=None) -> WalkTrace:
    """Walk of ``steps`` steps from the root (or ``start``) of a tree, or from vertex 0 of a matrix."""
    steps = int(steps)
    if steps < 1:
        raise DomainError("steps must be at least 1")
    if isinstance(env, graph.ConductanceMatrix):
        graph.kernel(env)  # rejects zero rows
        pos = np.zeros(steps + 1, dtype=np.int64)
        s0 = 0 if start is None else int(start)
        with quiet_uint64():
            _walk_matrix(env.c, env.rho, s0, steps, walk_stream(walk_seed), pos)
        return WalkTrace(pos, None, steps, None, int(walk_seed))
    node = 0 if start is None else env.node(start)
    pos = np.zeros(steps + 1, dtype=np.int64)
    dep = np.zeros(steps + 1, dtype=np.int64)
    pos[0] = node
    dep[0] = env.depth_of(node)
    state = np.array([0, node, 0, 0], dtype=np.int64)
    _drive(env, state, walk_stream(walk_seed), pos, dep, steps, -2, True)
    return WalkTrace(pos, dep, steps, getattr(env, "master_seed", None), int(walk_seed), int(state[3]), env)


def step(env, current, rng):
    """One transition from ``current``; ``rng`` needs a ``random()`` method.

    Tree vertices are VertexId (or text) and the dust leaf has child index 0.
    """
    u = float(rng.random())
    if isinstance(env, graph.ConductanceMatrix):
        i = int(current)
        if not env.rho[i] > 0:
            raise DegenerateEnvironmentError(f"vertex {i} has rho = 0")
        return int(_pick.py_func(env.c[i], env.rho[i], u))
    v = as_vertex(current)
    if v.is_dust:
        return v.parent()
    nb = env.neighborhood(v)
    x = u * nb.rho
    acc = 0.0 if nb.parent_conductance is None else nb.parent_conductance
    if x < acc:
        return v.parent()
    for k, ck in enumerate(nb.children.tolist(), start=1):
        acc += ck
        if x < acc:
            return v.child(k)
    if nb.dust_mass > 0:
        return v.child(0)
    return v.child(nb.children.size) if nb.children.size else v.parent()


def neighbor_counts(env: BaseEnvironment, v, draws: int, walk_seed: int = 0) -> np.ndarray:
    """Counts of ``draws`` independent single steps out of ``v``, ordered parent, children, dust leaf."""
    node = env.node(v)
    env.materialize(node)
    s = env.store
    counts = np.zeros(int(s.ni[node, COUNT]) + 2, dtype=np.int64)
    with quiet_uint64():
        _neighbor_counts(node, int(draws), walk_stream(walk_seed, 3), counts, s.ni, s.nf, s.pc)
    return counts


def occupation_counts(cm: graph.ConductanceMatrix, steps: int, walk_seed: int = 0, start: int = 0) -> np.ndarray:
    counts = np.zeros(cm.n, dtype=np.int64)
    graph.kernel(cm)
    with quiet_uint64():
        _occupation(cm.c, cm.rho, int(start), int(steps), walk_stream(walk_seed), counts)
    return counts


def return_frequency_mc(cm: graph.ConductanceMatrix, r: int, walks: int, walk_seed: int = 0):
    """Fraction of ``r``-step walks from a uniform start that end where they began, with binomial stderr."""
    graph.kernel(cm)
    with quiet_uint64():
        hits = _return_walks(cm.c, cm.rho, int(r), int(walks), walk_stream(walk_seed, 1))
    p = hits / walks
    return p, math.sqrt(max(p * (1.0 - p), 1.0 / walks) / walks)


# --------------------------------------------------------------------------- path statistics


def hitting_times(trace: WalkTrace, levels) -> dict:
    """First time the depth reaches each level; ``None`` when censored by the horizon."""
    d = trace.depths
    out = {}
    for n in levels:
        n = int(n)
        hit = np.flatnonzero(d >= n)
        out[n] = int(hit[0]) if hit.size else None
    return out


@dataclass(frozen=True)
class SpeedEstimate:
    point: float
    windowed_min: float


def dyadic_profile(trace: WalkTrace):
    """``(k, min depth(m)/m over m in [2^(k-1), 2^k])`` for every full window with 2^k <= horizon."""
    d = trace.depths
    kmax = int(math.floor(math.log2(trace.horizon))) if trace.horizon >= 2 else 0
    ks = np.arange(1, kmax + 1)
    ratio = d[1:] / np.arange(1, d.size)
    mins = np.array([ratio[(1 << (k - 1)) - 1 : 1 << k].min() for k in ks])
    return ks, mins


def speed_estimate(trace: WalkTrace, burn_in_fraction: float = 0.0) -> SpeedEstimate:
    """Depth gained per step after the burn-in, and the final dyadic-window minimum of depth(m)/m."""
    if not 0.0 <= burn_in_fraction < 1.0:
        raise DomainError("burn_in_fraction must lie in [0, 1)")
    h = trace.horizon
    b = int(math.floor(burn_in_fraction * h))
    if h <= b:
        raise DomainError("horizon must exceed the burn-in")
    point = (int(trace.depths[h]) - int(trace.depths[b])) / (h - b)
    _, mins = dyadic_profile(trace)
    wmin = float(mins[-1]) if mins.size else float(trace.depths[h] / h)
    return SpeedEstimate(float(point), wmin)


@dataclass(frozen=True)
class RegenerationRecord:
    times: np.ndarray
    levels: np.ndarray
    guard: int

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.times)

    def speed(self) -> float:
        """(level_last - level_first) / (time_last - time_first)."""
        if self.times.size < 2:
            return float("nan")
        return float((self.levels[-1] - self.levels[0]) / (self.times[-1] - self.times[0]))


def regeneration_times(trace: WalkTrace, guard: int | None = None) -> RegenerationRecord:
    """Times 1 <= k < horizon whose depth stays strictly below every later depth up to the horizon.

    Candidates later than ``horizon - guard`` are dropped (default guard is a
    tenth of the horizon), since the future beyond the horizon is unseen.
    """
    h = trace.horizon
    guard = h // 10 if guard is None else int(guard)
    if not 0 <= guard < h:
        raise DomainError("guard must lie in [0, horizon)")
    d = trace.depths
    suffix_min = np.minimum.accumulate(d[::-1])[::-1]
    cand = np.flatnonzero(d[:-1] < suffix_min[1:])
    cand = cand[(cand >= 1) & (cand <= h - guard)]
    return RegenerationRecord(cand.astype(np.int64), d[cand].astype(np.int64), guard)


@dataclass(frozen=True)
class VisitCounts:
    root_visits: int
    jumps_to_children: dict
    distinct_by_depth: np.ndarray

    def G(self, n: int) -> int:
        g = self.distinct_by_depth
        return int(g[min(n, g.size - 1)])


def visit_counts(trace: WalkTrace) -> VisitCounts:
    """Root visits, per-vertex jumps away from the parent, and distinct vertices up to each depth.

    Jump counts are keyed by environment node id; dust leaves are not keys
    but a jump into a dust leaf counts as a jump away from the parent.
    """
    pos = trace.positions
    ni = trace.env.store.ni
    root_visits = int(np.count_nonzero(pos == 0))
    src, dst = pos[:-1], pos[1:]
    real = src >= 0
    parent_of_src = np.where(real, ni[np.maximum(src, 0), PARENT], -3)
    away = real & (dst != parent_of_src)
    ids, counts = np.unique(src[away], return_counts=True)
    jumps = dict(zip(ids.tolist(), counts.tolist()))
    seen = np.unique(pos[pos >= 0])
    dseen = ni[seen, DEPTH]
    g = np.cumsum(np.bincount(dseen, minlength=int(trace.depths.max()) + 1))
    return VisitCounts(root_visits, jumps, g)


def transition_counts(trace: WalkTrace, node: int) -> np.ndarray:
    """Counts of moves out of ``node`` by target: parent, children 1..k, dust leaf."""
    store = trace.env.store
    cnt = int(store.ni[node, COUNT])
    a = int(store.ni[node, START])
    out = np.zeros(cnt + 2, dtype=np.int64)
    idx = np.flatnonzero(trace.positions[:-1] == node)
    for q in trace.positions[idx + 1].tolist():
        if q < 0:
            out[cnt + 1] += 1
        elif q == store.ni[node, PARENT]:
            out[0] += 1
        else:
            out[int(store.ni[q, 1])] += 1
    return out


def transition_probabilities(env: BaseEnvironment, node: int) -> np.ndarray:
    """Neighbour distribution of ``node`` in the order of :func:`transition_counts`."""
    nb = env.neighborhood_of(node)
    w = np.concatenate(([nb.parent_conductance or 0.0], nb.children, [nb.dust_mass]))
    return w / nb.rho


# --------------------------------------------------------------------------- traps


@njit
def _trap_scan(pos, ni, nf, threshold, seen, out_v, out_t, out_s):
    h = pos.shape[0]
    n_ev = 0
    for t in range(h):
        p = pos[t]
        if p < 0 or seen[p]:
            continue
        seen[p] = True
        if ni[p, DEPTH] == 0 or nf[p, PCOND] >= threshold:
            continue
        par = ni[p, PARENT]
        s = -1
        for m in range(t + 1, h):
            q = pos[m]
            if q == p or q == par or q == -(p + 1):
                continue
            if q >= 0 and ni[q, PARENT] == p:
                continue
            s = m
            break
        out_v[n_ev] = p
        out_t[n_ev] = t
        out_s[n_ev] = s
        n_ev += 1
    return n_ev


@dataclass(frozen=True)
class TrapStats:
    vertex: np.ndarray
    c_parent: np.ndarray
    c_top_child: np.ndarray
    T: np.ndarray
    S: np.ndarray
    censored: np.ndarray
    threshold: float

    @property
    def durations(self) -> np.ndarray:
        """S_v - T_v of the uncensored events."""
        ok = ~self.censored
        return self.S[ok] - self.T[ok]

    def __len__(self):
        return self.vertex.size


def trap_events(env: BaseEnvironment, trace: WalkTrace, M: float | None = None) -> TrapStats:
    """First visits to vertices with parent conductance below ``M`` and their exit times from the unit ball.

    ``S`` is the first later time at tree distance 2 from the vertex, or -1
    (censored) when that does not happen before the horizon. ``M`` defaults
    to the median of the root's largest child conductance.
    """
    if M is None:
        M = levy.median_max_conductance(env.spec)
    if not M > 0:
        raise DomainError("M must be positive")
    store = env.store
    n = store.size
    seen = np.zeros(n, dtype=np.bool_)
    cap = min(n, trace.positions.size)
    out_v = np.zeros(cap, dtype=np.int64)
    out_t = np.zeros(cap, dtype=np.int64)
    out_s = np.zeros(cap, dtype=np.int64)
    k = _trap_scan(trace.positions, store.ni, store.nf, float(M), seen, out_v, out_t, out_s)
    v, t, s = out_v[:k], out_t[:k], out_s[:k]
    for i in v.tolist():
        env.materialize(i)
    ni, nf, pc = store.ni, store.nf, store.pc
    top = np.where(ni[v, COUNT] > 0, pc[ni[v, START]], 0.0)
    return TrapStats(v, nf[v, PCOND].copy(), top, t, s, s < 0, float(M))


def survival_tail_slope(x, upper_quantile: float = 0.99, decades: float = 1.0):
    """Least-squares slope of log P(X >= t) against log t over ``decades`` below a high quantile.

    The fit uses the empirical survival function at the sorted sample points
    in ``[q / 10^decades, q]``, ``q`` the ``upper_quantile`` of the sample.
    Returns ``(slope, lower edge, upper edge, points used)``.
    """
    x = np.sort(np.asarray(x, dtype=float))
    x = x[x > 0]
    if x.size < 20:
        raise DomainError("need at least 20 positive observations")
    hi = float(np.quantile(x, upper_quantile))
    lo = hi / 10.0**decades
    surv = 1.0 - np.arange(x.size) / x.size  # P(X >= x_(i))
    keep = (x >= lo) & (x <= hi)
    ux, first = np.unique(x[keep], return_index=True)
    sv = surv[keep][first]
    if ux.size < 3:
        raise DomainError("too few distinct points in the fitted decade")
    slope = np.polyfit(np.log(ux), np.log(sv), 1)[0]
    return float(slope), lo, hi, int(ux.size)


# --------------------------------------------------------------------------- escape probability


def escape_prob_mc(env: BaseEnvironment, v, replicas: int, max_steps: int, walk_seed: int = 0, max_depth: int | None = None):
    """Fraction of walks from ``v`` that avoid its parent for ``max_steps`` steps, with binomial stderr.

    A finite horizon can only overcount escapes, so this overestimates the
    escape probability by the chance of returning after ``max_steps``. With
    ``max_depth`` a walk also counts as escaped once it is ``max_depth``
    levels below ``v``, which bounds the tree a sampled environment must
    grow and again can only overcount.
    """
    v = as_vertex(v)
    if v.depth < 1 or v.is_dust:
        raise DomainError("escape probability needs a real vertex at depth >= 1")
    node = env.node(v)
    parent = int(env.store.ni[node, PARENT])
    dummy = np.zeros(1, dtype=np.int64)
    stop_depth = -1 if max_depth is None else v.depth + int(max_depth)
    escaped = 0
    for r in range(int(replicas)):
        state = np.array([0, node, 0, 0], dtype=np.int64)
        st = walk_stream(walk_seed, 2, r)
        status = _drive(env, state, st, dummy, dummy, int(max_steps), parent, False, stop_depth)
        if status != HIT or state[1] != parent:
            escaped += 1
    p = escaped / replicas
    return p, math.sqrt(p * (1.0 - p) / replicas)


BETA_COLUMNS = ("vertex", "mc_estimate", "stderr", "bracket_lo", "bracket_hi", "depth")


def escape_table(
    env: BaseEnvironment,
    vertices,
    depth: int,
    replicas: int,
    max_steps: int,
    walk_seed: int = 0,
    max_depth: int | None = None,
):
    """Rows ``(vertex, mc_estimate, stderr, bracket_lo, bracket_hi, depth)`` for each vertex."""
    rows = []
    for i, v in enumerate(vertices):
        v = as_vertex(v)
        lo, hi = escape_prob_bracket(env, v, depth)
        p, se = escape_prob_mc(env, v, replicas, max_steps, walk_seed + i, max_depth)
        rows.append((str(v), p, se, lo, hi, int(depth)))
    return rows
