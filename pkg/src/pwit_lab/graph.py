"""Random conductance matrices on the complete graph.

Two generators are provided. ``generate_divisible`` gives every edge an
ID(Pi/(n-1)) conductance so each row sum is exactly ID(Pi) at every n.
``generate_stable_domain`` uses Pareto(alpha) weights scaled by n^(-1/alpha).
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from . import levy
from .errors import DegenerateEnvironmentError, DomainError


@dataclass(frozen=True)
class ConductanceMatrix:
    c: np.ndarray
    rho: np.ndarray = field(init=False)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DomainError(f"conductance matrix must be square, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        rho = c.sum(axis=1)
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @property
    def n(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class KernelMatrix:
    k: np.ndarray
    rho: np.ndarray

    @property
    def n(self) -> int:
        return self.k.shape[0]


@dataclass(frozen=True)
class SymmetrizedMatrix:
    s: np.ndarray
    rho: np.ndarray

    @property
    def n(self) -> int:
        return self.s.shape[0]


def _check_n(n):
    if int(n) != n or n < 2:
        raise DomainError(f"need an integer n >= 2, got {n!r}")
    return int(n)


def _from_upper(n, values):
    c = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    c[iu] = values
    return c + c.T


def generate_divisible(
    n: int,
    spec: levy.LevyMeasureSpec,
    cutoff: float = levy.DEFAULT_CUTOFF,
    rng: np.random.Generator | None = None,
) -> ConductanceMatrix:
    """Complete graph with i.i.d. ID(Pi/(n-1)) edge conductances.

    All n(n-1)/2 edge batches are drawn as a single batch at intensity
    (n/2) Pi whose points are coloured uniformly over the edges, which has
    the same law as independent per-edge batches.
    """
    n = _check_n(n)
    rng = np.random.default_rng() if rng is None else rng
    pairs = n * (n - 1) // 2
    scale = 1.0 / (n - 1)
    batch = levy.sample_arrivals_desc(spec, pairs * scale, cutoff, rng)
    owner = rng.integers(0, pairs, batch.conductances.size)
    values = np.bincount(owner, weights=batch.conductances, minlength=pairs)
    values += scale * levy.small_jump_mean(spec, cutoff)
    return ConductanceMatrix(_from_upper(n, values))


def generate_stable_domain(n: int, alpha: float, rng: np.random.Generator | None = None) -> ConductanceMatrix:
    """Complete graph with n^(-1/alpha) * Pareto(alpha) conductances."""
    n = _check_n(n)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    rng = np.random.default_rng() if rng is None else rng
    pairs = n * (n - 1) // 2
    # Pareto(alpha) on [1, inf) by inversion; 1 - U avoids U = 0
    pareto = (1.0 - rng.random(pairs)) ** (-1.0 / alpha)
    return ConductanceMatrix(_from_upper(n, n ** (-1.0 / alpha) * pareto))


def _positive_rho(cm: ConductanceMatrix):
    bad = np.flatnonzero(~(cm.rho > 0.0))
    if bad.size:
        raise DegenerateEnvironmentError(f"zero row sum at vertices {bad[:10].tolist()}")
    return cm.rho


def kernel(cm: ConductanceMatrix) -> KernelMatrix:
    """Row-stochastic K = C / rho."""
    rho = _positive_rho(cm)
    return KernelMatrix(cm.c / rho[:, None], rho)


def symmetrize(cm: ConductanceMatrix) -> SymmetrizedMatrix:
    """S = D^(1/2) K D^(-1/2) = C / sqrt(rho_i rho_j)."""
    rho = _positive_rho(cm)
    r = np.sqrt(rho)
    s = cm.c / r[:, None] / r[None, :]
    # exact symmetry regardless of rounding order
    s = 0.5 * (s + s.T)
    return SymmetrizedMatrix(s, rho)


def detailed_balance_residual(km: KernelMatrix) -> float:
    """max |rho_i K_ij - rho_j K_ji| relative to max rho."""
    flow = km.rho[:, None] * km.k
    return float(np.max(np.abs(flow - flow.T)) / np.max(km.rho))


def dump_csv(cm: ConductanceMatrix) -> str:
    """Dense CSV with header ``n`` then one row of 17-digit conductances per vertex."""
    buf = io.StringIO()
    buf.write(f"{cm.n}\n")
    for row in cm.c:
        buf.write(",".join(f"{v:.17g}" for v in row))
        buf.write("\n")
    return buf.getvalue()


def load_csv(text: str) -> ConductanceMatrix:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    n = int(lines[0])
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    if len(rows) != n or any(len(r) != n for r in rows):
        raise DomainError(f"matrix dump declares n={n} but has {len(rows)} rows")
    c = np.array(rows)
    if not np.array_equal(c, c.T) or np.any(np.diag(c) != 0.0):
        raise DomainError("matrix dump is not symmetric with zero diagonal")
    return ConductanceMatrix(c)

