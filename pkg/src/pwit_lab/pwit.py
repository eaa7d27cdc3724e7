"""Lazily generated Poisson weighted infinite tree.

The tree lives in flat arrays. Every vertex is a row of the node table;
its child conductances occupy a contiguous slice of a shared pool, largest
first, next to a pool column holding the node id of each child once it has
been created. A vertex is materialized (children drawn) on first use, from a
SplitMix64 stream keyed by the chained hash of the master seed and the
vertex path, so the environment is a pure function of the seed.

Sub-cutoff children are represented by one virtual dust leaf per vertex
with conductance equal to the compensating small-jump mean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import levy
from ._backend import njit, quiet_uint64
from ._rng import child_key, next_exponential, root_key, stream_gamma
from .errors import DegenerateEnvironmentError, DomainError, ResourceError

DEFAULT_CUTOFF = 1e-4
DEFAULT_MAX_NODES = 4_000_000
DEFAULT_PRUNE = 1e-4

# node table columns
PARENT, SLOT, DEPTH, START, COUNT = 0, 1, 2, 3, 4
PCOND, DUST, RHO = 0, 1, 2

# kernel status codes
OK, NEED_NODE, NEED_POOL, NEED_MAT, DEGENERATE, TOO_MANY, HIT = 0, 1, 2, 3, 4, 5, 6

SYNTHETIC = -1


# --------------------------------------------------------------------------- vertex ids


@dataclass(frozen=True, order=True)
class VertexId:
    """Path of child indices from the root; index 0 names the dust leaf."""

    path: tuple = ()

    def __post_init__(self):
        path = tuple(int(k) for k in self.path)
        if any(k < 0 for k in path) or 0 in path[:-1]:
            raise DomainError(f"invalid vertex path {path}")
        object.__setattr__(self, "path", path)

    @property
    def depth(self) -> int:
        return len(self.path)

    @property
    def is_dust(self) -> bool:
        return bool(self.path) and self.path[-1] == 0

    def parent(self) -> "VertexId":
        if not self.path:
            raise DomainError("the root has no parent")
        return VertexId(self.path[:-1])

    def child(self, k: int) -> "VertexId":
        if self.is_dust:
            raise DomainError("the dust leaf has no children")
        return VertexId(self.path + (int(k),))

    def __str__(self):
        return "/" + "/".join(str(k) for k in self.path)

    @classmethod
    def parse(cls, text: str) -> "VertexId":
        text = text.strip()
        if not text.startswith("/"):
            raise DomainError(f"vertex id must start with '/', got {text!r}")
        body = text.strip("/")
        try:
            return cls(tuple(int(k) for k in body.split("/")) if body else ())
        except ValueError as exc:
            raise DomainError(f"bad vertex id {text!r}") from exc


ROOT = VertexId(())


def as_vertex(v) -> VertexId:
    if isinstance(v, VertexId):
        return v
    if isinstance(v, str):
        return VertexId.parse(v)
    return VertexId(tuple(v))


@dataclass(frozen=True)
class VertexNeighborhood:
    parent_conductance: float | None
    children: np.ndarray
    dust_mass: float

    @property
    def rho(self) -> float:
        # same left-to-right order as the kernels, so the value is bit-identical
        r = 0.0 if self.parent_conductance is None else self.parent_conductance
        for x in self.children.tolist():
            r += x
        return r + self.dust_mass


# --------------------------------------------------------------------------- kernels


@njit
def _materialize(i, ni, nk, nf, pc, pch, meta, mode, c, alpha, knots, values, slopes, cutoff, dust, max_arr):
    """Draw the children of node ``i`` into the pool (no-op when already done)."""
    if ni[i, START] >= 0:
        return OK
    if mode == SYNTHETIC:
        meta[2] = i
        return NEED_MAT
    st = np.empty(2, dtype=np.uint64)
    st[0] = nk[i, 0]
    st[1] = stream_gamma(nk[i, 1])
    start = meta[1]
    cap = pc.shape[0]
    g = 0.0
    k = 0
    r = nf[i, PCOND]
    while True:
        g += next_exponential(st)
        x = math.exp(levy.inverse_log(math.log(g), mode, c, alpha, knots, values, slopes))
        if x < cutoff:
            break
        if k >= max_arr:
            meta[2] = i
            return TOO_MANY
        if start + k >= cap:
            return NEED_POOL
        pc[start + k] = x
        pch[start + k] = -1
        r += x
        k += 1
    r += dust
    ni[i, START] = start
    ni[i, COUNT] = k
    nf[i, DUST] = dust
    nf[i, RHO] = r
    meta[1] = start + k
    if not r > 0.0:
        meta[2] = i
        return DEGENERATE
    return OK


@njit
def _child_node(i, k, ni, nk, nf, pc, pch, meta):
    """Node id of child ``k`` (1-based) of materialized node ``i``; -1 when the table is full."""
    idx = ni[i, START] + k - 1
    j = pch[idx]
    if j >= 0:
        return j
    j = meta[0]
    if j >= ni.shape[0]:
        return -1
    meta[0] = j + 1
    ni[j, PARENT] = i
    ni[j, SLOT] = k
    ni[j, DEPTH] = ni[i, DEPTH] + 1
    ni[j, START] = -1
    ni[j, COUNT] = 0
    k0, k1 = child_key(nk[i, 0], nk[i, 1], k)
    nk[j, 0] = k0
    nk[j, 1] = k1
    nf[j, PCOND] = pc[idx]
    nf[j, DUST] = 0.0
    nf[j, RHO] = np.nan
    pch[idx] = j
    return j


@njit
def _upper_bracket(v, depth, prune, work, iwork, ni, nk, nf, pc, pch, meta, mode, c, alpha, knots, values, slopes, cutoff, dust, max_arr):
    """Escape-probability recursion on the pruned subtree of ``v`` with boundary value 1.

    ``iwork[d] = (node, next child)`` and ``work[d] = (path weight, partial sum)``
    form the depth-first stack. Children whose path weight falls below
    ``prune`` and children at the horizon are assigned beta = 1; the dust
    leaf is assigned beta = 0. Returns ``(status, upper, nodes expanded)``.
    """
    st = _materialize(v, ni, nk, nf, pc, pch, meta, mode, c, alpha, knots, values, slopes, cutoff, dust, max_arr)
    if st != OK:
        return st, np.nan, 0
    sp = 0
    iwork[0, 0] = v
    iwork[0, 1] = 0
    work[0, 0] = 1.0
    work[0, 1] = 0.0
    expanded = 1
    while True:
        x = iwork[sp, 0]
        j = iwork[sp, 1]
        a = ni[x, START]
        cnt = ni[x, COUNT]
        if j < cnt:
            cxy = pc[a + j]
            wy = work[sp, 0] * cxy / nf[x, RHO]
            if sp + 1 >= depth or wy < prune:
                # children are descending, so every later sibling is cut as well
                rest = 0.0
                for jj in range(j, cnt):
                    rest += pc[a + jj]
                work[sp, 1] += rest / nf[x, PCOND]
                iwork[sp, 1] = cnt
                continue
            if meta[0] >= ni.shape[0]:
                return NEED_NODE, np.nan, expanded
            y = _child_node(x, j + 1, ni, nk, nf, pc, pch, meta)
            st = _materialize(y, ni, nk, nf, pc, pch, meta, mode, c, alpha, knots, values, slopes, cutoff, dust, max_arr)
            if st != OK:
                return st, np.nan, expanded
            iwork[sp, 1] = j + 1
            sp += 1
            iwork[sp, 0] = y
            iwork[sp, 1] = 0
            work[sp, 0] = wy
            work[sp, 1] = 0.0
            expanded += 1
        else:
            s = work[sp, 1]
            beta = s / (1.0 + s)
            if sp == 0:
                return OK, beta, expanded
            sp -= 1
            work[sp, 1] += nf[x, PCOND] / nf[iwork[sp, 0], PCOND] * beta


# --------------------------------------------------------------------------- environments


class _TreeStore:
    """Growable flat node table and child pool."""

    def __init__(self, key, max_nodes: int, node_cap: int = 1024, pool_cap: int = 1 << 16):
        self.max_nodes = int(max_nodes)
        node_cap = min(node_cap, self.max_nodes)
        self.ni = np.zeros((node_cap, 5), dtype=np.int64)
        self.nk = np.zeros((node_cap, 2), dtype=np.uint64)
        self.nf = np.zeros((node_cap, 3))
        self.pc = np.zeros(pool_cap)
        self.pch = np.full(pool_cap, -1, dtype=np.int64)
        self.meta = np.zeros(3, dtype=np.int64)
        self.ni[0] = (-1, 0, 0, -1, 0)
        self.nk[0] = key
        self.nf[0] = (0.0, 0.0, np.nan)
        self.meta[0] = 1

    @property
    def arrays(self):
        return (self.ni, self.nk, self.nf, self.pc, self.pch, self.meta)

    @property
    def size(self) -> int:
        return int(self.meta[0])

    def grow_nodes(self, depth_hint: int):
        cap = self.ni.shape[0]
        if cap >= self.max_nodes:
            raise ResourceError(
                f"PWIT node cache limit {self.max_nodes} reached while expanding depth {depth_hint}"
            )
        new = min(2 * cap, self.max_nodes)
        for name in ("ni", "nk", "nf"):
            old = getattr(self, name)
            arr = np.zeros((new, old.shape[1]), dtype=old.dtype)
            arr[:cap] = old
            setattr(self, name, arr)

    def grow_pool(self, need: int = 0):
        cap = self.pc.shape[0]
        new = max(2 * cap, cap + need)
        pc = np.zeros(new)
        pc[:cap] = self.pc
        pch = np.full(new, -1, dtype=np.int64)
        pch[:cap] = self.pch
        self.pc, self.pch = pc, pch


class BaseEnvironment:
    """Shared machinery of sampled and synthetic trees."""

    mode = SYNTHETIC
    cutoff = 0.0
    _dust = 0.0
    _levy_args: tuple

    def __init__(self, key, max_nodes: int):
        self.store = _TreeStore(key, max_nodes)
        self._levy_args = (SYNTHETIC, 0.0, 0.0, np.zeros(2), np.zeros(2), np.zeros(2), 0.0, 0.0, 1)

    # kernel protocol -------------------------------------------------------

    def kernel_args(self):
        return self.store.arrays + self._levy_args

    def handle(self, status: int, node: int = -1):
        """Resolve a kernel status by growing storage or materializing in Python."""
        s = self.store
        if status == NEED_NODE:
            s.grow_nodes(int(s.ni[node, DEPTH]) + 1 if node >= 0 else -1)
        elif status == NEED_POOL:
            s.grow_pool()
        elif status == NEED_MAT:
            self._materialize_python(int(s.meta[2]))
        elif status == DEGENERATE:
            raise DegenerateEnvironmentError(f"vertex {self.vertex_id(int(s.meta[2]))} has rho = 0")
        elif status == TOO_MANY:
            raise ResourceError(
                f"vertex {self.vertex_id(int(s.meta[2]))} exceeded {self._levy_args[-1]} children"
            )
        else:  # pragma: no cover
            raise RuntimeError(f"unexpected kernel status {status}")

    def _materialize_python(self, i: int):
        raise NotImplementedError

    def materialize(self, i: int):
        while True:
            with quiet_uint64():
                st = _materialize(i, *self.kernel_args())
            if st == OK:
                return
            self.handle(st, i)

    def child_node(self, i: int, k: int) -> int:
        self.materialize(i)
        if not 1 <= k <= self.store.ni[i, COUNT]:
            raise DomainError(f"vertex {self.vertex_id(i)} has {self.store.ni[i, COUNT]} children, asked for {k}")
        while True:
            with quiet_uint64():
                j = _child_node(i, k, *self.store.arrays)
            if j >= 0:
                return int(j)
            self.store.grow_nodes(int(self.store.ni[i, DEPTH]) + 1)

    # vertex lookups --------------------------------------------------------

    def node(self, v) -> int:
        v = as_vertex(v)
        if v.is_dust:
            raise DomainError("the dust leaf is not a tree node")
        i = 0
        for k in v.path:
            i = self.child_node(i, k)
        return i

    def vertex_id(self, i: int) -> VertexId:
        """Path of node ``i``; negative ``i`` encodes the dust leaf of node ``-i - 1``."""
        dust = i < 0
        i = -i - 1 if dust else i
        ni = self.store.ni
        path = []
        while i > 0:
            path.append(int(ni[i, SLOT]))
            i = int(ni[i, PARENT])
        path.reverse()
        if dust:
            path.append(0)
        return VertexId(tuple(path))

    def depth_of(self, i: int) -> int:
        return int(self.store.ni[i if i >= 0 else -i - 1, DEPTH])

    def neighborhood_of(self, i: int) -> VertexNeighborhood:
        self.materialize(i)
        s = self.store
        a, cnt = s.ni[i, START], s.ni[i, COUNT]
        children = s.pc[a : a + cnt].copy()
        children.setflags(write=False)
        parent = None if i == 0 else float(s.nf[i, PCOND])
        return VertexNeighborhood(parent, children, float(s.nf[i, DUST]))

    def neighborhood(self, v) -> VertexNeighborhood:
        v = as_vertex(v)
        if v.is_dust:
            return VertexNeighborhood(self.neighborhood(v.parent()).dust_mass, np.zeros(0), 0.0)
        return self.neighborhood_of(self.node(v))

    def rho_of(self, i: int) -> float:
        self.materialize(i)
        return float(self.store.nf[i, RHO])

    @property
    def size(self) -> int:
        return self.store.size


class PwitEnvironment(BaseEnvironment):
    """PWIT with child conductances drawn from ``spec`` above ``cutoff``.

    ``max_nodes`` bounds the node cache; exceeding it raises ResourceError.
    """

    def __init__(
        self,
        spec: levy.LevyMeasureSpec,
        master_seed: int,
        cutoff: float = DEFAULT_CUTOFF,
        max_nodes: int = DEFAULT_MAX_NODES,
        max_children: int = 10**6,
    ):
        if not cutoff > 0:
            raise DomainError("cutoff must be positive")
        self.spec = spec
        self.master_seed = int(master_seed)
        self.cutoff = float(cutoff)
        super().__init__(root_key(self.master_seed), max_nodes)
        m = levy.inverse_map(spec, self.cutoff)
        self._dust = levy.small_jump_mean(spec, self.cutoff)
        self._levy_args = (m.mode, m.c, m.alpha, m.knots, m.values, m.slopes, self.cutoff, self._dust, int(max_children))

    def _materialize_python(self, i):  # pragma: no cover - kernels never ask
        raise RuntimeError("sampled environments materialize inside the kernels")

    def __repr__(self):
        return f"PwitEnvironment({levy.format_spec(self.spec)!r}, seed={self.master_seed}, cutoff={self.cutoff:g})"


class SyntheticEnvironment(BaseEnvironment):
    """Tree given by a callback ``children_fn(path) -> (descending conductances, dust mass)``.

    Used for hand-built environments with known walk behaviour.
    """

    def __init__(self, children_fn: Callable[[tuple], tuple], max_nodes: int = DEFAULT_MAX_NODES):
        self.children_fn = children_fn
        super().__init__((np.uint64(0), np.uint64(0)), max_nodes)

    def _materialize_python(self, i):
        s = self.store
        path = self.vertex_id(i).path
        children, dust = self.children_fn(path)
        children = np.asarray(children, dtype=float).ravel()
        if np.any(np.diff(children) > 0) or np.any(children <= 0):
            raise DomainError(f"children at {path} must be positive and descending")
        dust = float(dust)
        if dust < 0:
            raise DomainError("dust mass must be nonnegative")
        start = int(s.meta[1])
        while start + children.size > s.pc.shape[0]:
            s.grow_pool(children.size)
        s.pc[start : start + children.size] = children
        s.pch[start : start + children.size] = -1
        r = float(s.nf[i, PCOND])
        for x in children.tolist():
            r += x
        r += dust
        s.ni[i, START] = start
        s.ni[i, COUNT] = children.size
        s.nf[i, DUST] = dust
        s.nf[i, RHO] = r
        s.meta[1] = start + children.size
        if not r > 0:
            raise DegenerateEnvironmentError(f"vertex {self.vertex_id(i)} has rho = 0")


def constant_ratio_line(a: float, max_nodes: int = DEFAULT_MAX_NODES) -> SyntheticEnvironment:
    """Half-line whose k-th edge has conductance a^k, capped before float overflow.

    Off the root the walk steps outward with probability a / (1 + a); from
    depth >= 1 it never returns to the parent with probability 1 - 1/a.
    """
    if not a > 0:
        raise DomainError("ratio must be positive")
    cap = max(1, int(300.0 * math.log(10.0) / abs(math.log(a)))) if a != 1 else 1

    def children(path):
        return [a ** min(len(path) + 1, cap)], 0.0

    return SyntheticEnvironment(children, max_nodes)


def star_trap(c_top: float, n_small: int = 3, c_small: float = 0.01) -> SyntheticEnvironment:
    """Finite star with one heavy edge.

    The root has two unit edges, to the trap vertex ``/1`` and to the leaf
    ``/2``. The trap vertex has a leaf child of conductance ``c_top`` and
    ``n_small`` leaf children of conductance ``c_small``. Tree distance 2
    from ``/1`` is first reached at ``/2``, after a geometric number of
    bounces on the heavy edge with mean of order ``c_top``.
    """

    def children(path):
        if path == ():
            return [1.0, 1.0], 0.0
        if path == (1,):
            return [c_top] + [c_small] * n_small, 0.0
        return [], 0.0

    return SyntheticEnvironment(children)


# --------------------------------------------------------------------------- operations


def neighborhood(env: BaseEnvironment, v) -> VertexNeighborhood:
    return env.neighborhood(v)


def conductance_ratio(env: BaseEnvironment, y) -> float:
    """C(parent y, y) / C(grandparent y, parent y)."""
    y = as_vertex(y)
    if y.depth < 2 or y.is_dust:
        raise DomainError("conductance ratio needs a real vertex at depth >= 2")
    i = env.node(y)
    s = env.store
    return float(s.nf[i, PCOND] / s.nf[s.ni[i, PARENT], PCOND])


def max_child_conductance(env: BaseEnvironment, v=ROOT) -> float:
    nb = env.neighborhood(v)
    if nb.children.size == 0:
        raise DegenerateEnvironmentError(f"vertex {as_vertex(v)} has no children above the cutoff")
    return float(nb.children[0])


def escape_prob_bracket(env: BaseEnvironment, v, depth: int, prune: float = DEFAULT_PRUNE):
    """``(lower, upper)`` bounds on the probability that the walk from ``v`` never hits its parent.

    The recursion runs on the subtree of ``v`` down to ``depth`` levels, with
    the dust leaf counted as returning. ``upper`` uses the value 1 at the
    horizon and at branches whose path weight drops below ``prune``; it is
    nonincreasing in ``depth``. ``lower`` uses the value 0 there, which
    propagates to 0 at every finite depth: a truncated tree cannot exclude a
    continuation that always returns.
    """
    v = as_vertex(v)
    depth = int(depth)
    if depth < 0:
        raise DomainError("depth must be nonnegative")
    if depth == 0:
        return 0.0, 1.0
    if v.depth < 1 or v.is_dust:
        raise DomainError("escape probability needs a real vertex at depth >= 1")
    i = env.node(v)
    upper = _run_upper(env, i, depth, prune)
    return 0.0, upper


def _run_upper(env: BaseEnvironment, i: int, depth: int, prune: float) -> float:
    work = np.zeros((depth + 1, 2))
    iwork = np.zeros((depth + 1, 2), dtype=np.int64)
    while True:
        with quiet_uint64():
            st, upper, _ = _upper_bracket(i, depth, float(prune), work, iwork, *env.kernel_args())
        if st == OK:
            return float(upper)
        env.handle(st, int(iwork[0, 0]) if st != NEED_NODE else i)
