"""Symmetric eigensolver and empirical spectral distributions.

The eigensolver is cyclic Jacobi with a round-robin ("tournament") pair
order: each round is a set of n/2 disjoint rotations. The numba kernel
applies them one at a time; the numpy kernel applies a whole round at once
with fancy indexing. Both visit pairs in the same order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import graph, levy
from ._backend import USE_NUMBA, njit
from .errors import ConvergenceError, DomainError

DEFAULT_R_MAX = 12


@lru_cache(maxsize=32)
def round_robin(n: int):
    """Pair schedule for one Jacobi sweep: ``(p, q, offsets)``, rounds of disjoint pairs."""
    m = n + (n % 2)
    others = list(range(1, m))
    ps, qs, offsets = [], [], [0]
    for _ in range(m - 1):
        players = [0] + others
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                ps.append(min(a, b))
                qs.append(max(a, b))
        offsets.append(len(ps))
        others = others[-1:] + others[:-1]
    return (np.array(ps, dtype=np.int64), np.array(qs, dtype=np.int64), np.array(offsets, dtype=np.int64))


@njit
def _off_norm(a):
    n = a.shape[0]
    acc = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            acc += a[i, j] * a[i, j]
    return math.sqrt(2.0 * acc)


@njit
def _jacobi_scalar(a, v, ps, qs, tol, max_sweeps, want_vectors):
    """In-place cyclic Jacobi; returns sweeps used or -1 if not converged."""
    n = a.shape[0]
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += a[i, j] * a[i, j]
    total = math.sqrt(total)
    for sweep in range(max_sweeps + 1):
        if _off_norm(a) <= tol * total:
            return sweep
        if sweep == max_sweeps:
            return -1
        for idx in range(ps.shape[0]):
            p = ps[idx]
            q = qs[idx]
            apq = a[p, q]
            if apq == 0.0:
                continue
            app = a[p, p]
            aqq = a[q, q]
            theta = (aqq - app) / (2.0 * apq)
            if abs(theta) > 1e150:
                t = 0.5 / theta
            elif theta >= 0.0:
                t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
            else:
                t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
            c = 1.0 / math.sqrt(t * t + 1.0)
            s = t * c
            for k in range(n):
                if k == p or k == q:
                    continue
                akp = a[k, p]
                akq = a[k, q]
                nkp = c * akp - s * akq
                nkq = s * akp + c * akq
                a[k, p] = nkp
                a[p, k] = nkp
                a[k, q] = nkq
                a[q, k] = nkq
            a[p, p] = app - t * apq
            a[q, q] = aqq + t * apq
            a[p, q] = 0.0
            a[q, p] = 0.0
            if want_vectors:
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return -1


def _jacobi_numpy(a, v, ps, qs, offsets, tol, max_sweeps, want_vectors):
    """Vectorized twin of :func:`_jacobi_scalar`: one numpy pass per round."""
    total = math.sqrt(float(np.sum(a * a)))
    iu = np.triu_indices(a.shape[0], 1)
    for sweep in range(max_sweeps + 1):
        if math.sqrt(2.0 * float(np.sum(a[iu] ** 2))) <= tol * total:
            return sweep
        if sweep == max_sweeps:
            return -1
        for r in range(offsets.size - 1):
            p = ps[offsets[r] : offsets[r + 1]]
            q = qs[offsets[r] : offsets[r + 1]]
            apq = a[p, q]
            keep = apq != 0.0
            if not keep.all():
                p, q, apq = p[keep], q[keep], apq[keep]
            if p.size == 0:
                continue
            app = a[p, p]
            aqq = a[q, q]
            with np.errstate(divide="ignore", over="ignore"):
                theta = (aqq - app) / (2.0 * apq)
                t = np.where(
                    np.abs(theta) > 1e150,
                    0.5 / theta,
                    np.sign(theta + (theta == 0.0)) / (np.abs(theta) + np.sqrt(theta * theta + 1.0)),
                )
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            colp = a[:, p]
            colq = a[:, q]
            a[:, p] = colp * c - colq * s
            a[:, q] = colp * s + colq * c
            rowp = a[p, :]
            rowq = a[q, :]
            a[p, :] = c[:, None] * rowp - s[:, None] * rowq
            a[q, :] = s[:, None] * rowp + c[:, None] * rowq
            touched = np.concatenate((p, q))
            a[:, touched] = a[touched, :].T
            a[p, q] = 0.0
            a[q, p] = 0.0
            a[p, p] = app - t * apq
            a[q, q] = aqq + t * apq
            if want_vectors:
                vp = v[:, p]
                vq = v[:, q]
                v[:, p] = vp * c - vq * s
                v[:, q] = vp * s + vq * c
    return -1


def _as_symmetric(S):
    a = np.array(S.s if isinstance(S, graph.SymmetrizedMatrix) else S, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"need a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and np.max(np.abs(a - a.T)) > 1e-10 * scale:
        raise DomainError("matrix is not symmetric within 1e-10")
    return 0.5 * (a + a.T)


def jacobi_eigh(S, tol: float = 1e-12, max_sweeps: int = 100, vectors: bool = True, backend: str | None = None):
    """Eigenvalues (ascending) and, optionally, orthonormal eigenvectors as columns."""
    if not tol > 0:
        raise DomainError("tol must be positive")
    a = _as_symmetric(S)
    n = a.shape[0]
    v = np.eye(n) if vectors else np.zeros((1, 1))
    ps, qs, offsets = round_robin(n)
    backend = backend or ("numba" if USE_NUMBA else "numpy")
    if backend == "numba":
        sweeps = _jacobi_scalar(a, v, ps, qs, float(tol), int(max_sweeps), bool(vectors))
    elif backend == "numpy":
        sweeps = _jacobi_numpy(a, v, ps, qs, offsets, float(tol), int(max_sweeps), bool(vectors))
    elif backend == "python":
        sweeps = _jacobi_scalar.py_func(a, v, ps, qs, float(tol), int(max_sweeps), bool(vectors))
    else:
        raise DomainError(f"unknown backend {backend!r}")
    if sweeps < 0:
        raise ConvergenceError(f"Jacobi did not converge within {max_sweeps} sweeps (n={n})")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return (w[order], v[:, order]) if vectors else (w[order], None)


def jacobi_eigenvalues(S, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    return jacobi_eigh(S, tol, max_sweeps, vectors=False)[0]


def eigen_residual(S, w, v) -> float:
    """max_j ||S v_j - w_j v_j|| / ||S||_F for unit columns v_j."""
    a = np.asarray(S.s if isinstance(S, graph.SymmetrizedMatrix) else S, dtype=float)
    r = a @ v - v * w[None, :]
    return float(np.max(np.linalg.norm(r, axis=0)) / max(np.linalg.norm(a), 1e-300))


def kernel_spectrum(cm: graph.ConductanceMatrix, tol: float = 1e-12):
    """Eigenpairs of K through its similarity to S.

    Returns ``(eigenvalues, right eigenvectors of K, max relative residual ||Kx - lambda x|| / ||x||)``.
    """
    sm = graph.symmetrize(cm)
    km = graph.kernel(cm)
    w, u = jacobi_eigh(sm, tol)
    x = u / np.sqrt(sm.rho)[:, None]
    res = np.linalg.norm(km.k @ x - x * w[None, :], axis=0) / np.linalg.norm(x, axis=0)
    return w, x, float(np.max(res))


# --------------------------------------------------------------------------- ESD


@dataclass(frozen=True)
class SpectralSummary:
    eigenvalues: np.ndarray
    moments: np.ndarray

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    def cdf(self, x):
        """Right-continuous ECDF."""
        return np.searchsorted(self.eigenvalues, x, side="right") / self.n

    def moment(self, r: int) -> float:
        if r < self.moments.size:
            return float(self.moments[r])
        return float(np.mean(self.eigenvalues**r))


def esd(eigs, r_max: int = DEFAULT_R_MAX) -> SpectralSummary:
    lam = np.sort(np.asarray(eigs, dtype=float).ravel())
    if lam.size == 0:
        raise DomainError("empirical spectral distribution of an empty list")
    powers = np.cumprod(np.broadcast_to(lam, (r_max, lam.size)), axis=0)
    moments = np.concatenate(([1.0], powers.mean(axis=1)))
    lam.setflags(write=False)
    return SpectralSummary(lam, moments)


def pooled(summaries) -> SpectralSummary:
    """Equal-weight average of ESDs with a common size (their pooled eigenvalues)."""
    summaries = list(summaries)
    r_max = summaries[0].moments.size - 1
    return esd(np.concatenate([s.eigenvalues for s in summaries]), r_max)


def kolmogorov_distance(a: SpectralSummary, b: SpectralSummary) -> float:
    """sup_x |F_a(x) - F_b(x)|, evaluated on the merged jump set."""
    grid = np.union1d(a.eigenvalues, b.eigenvalues)
    return float(np.max(np.abs(a.cdf(grid) - b.cdf(grid))))


def stieltjes(summary: SpectralSummary, z: complex) -> complex:
    z = complex(z)
    if z.imag == 0.0:
        raise DomainError("Stieltjes transform needs Im z != 0")
    return complex(np.mean(1.0 / (summary.eigenvalues - z)))


def return_probability_power(K, v: int, r: int) -> float:
    """(K^r)(v, v) by repeated vector-matrix products."""
    k = np.asarray(K.k if isinstance(K, graph.KernelMatrix) else K, dtype=float)
    if not 0 <= v < k.shape[0]:
        raise DomainError(f"vertex {v} outside 0..{k.shape[0] - 1}")
    if r < 0:
        raise DomainError("r must be nonnegative")
    x = np.zeros(k.shape[0])
    x[v] = 1.0
    for _ in range(r):
        x = x @ k
    return float(x[v])


def mean_return_probability(K, r: int) -> float:
    """(1/n) trace(K^r)."""
    k = np.asarray(K.k if isinstance(K, graph.KernelMatrix) else K, dtype=float)
    return float(np.trace(np.linalg.matrix_power(k, r)) / k.shape[0])


def odd_moment_decay(
    spec: levy.LevyMeasureSpec,
    n_list,
    replicas: int,
    rng: np.random.Generator,
    orders=(1, 3, 5),
    cutoff: float = levy.DEFAULT_CUTOFF,
):
    """Rows ``(n, mean |m_r| for r in orders)`` averaged over replicas of the divisible generator."""
    n_list = [int(n) for n in n_list]
    if n_list != sorted(n_list):
        raise DomainError("n_list must be ascending")
    table = []
    for n in n_list:
        acc = np.zeros(len(orders))
        for _ in range(replicas):
            cm = graph.generate_divisible(n, spec, cutoff, rng)
            summ = esd(jacobi_eigenvalues(graph.symmetrize(cm)), max(orders))
            acc += np.abs([summ.moment(r) for r in orders])
        table.append((n, *(acc / replicas)))
    return table
