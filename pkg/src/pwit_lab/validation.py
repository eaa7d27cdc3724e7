"""Built-in validation suite: cross-checks of every module at small scale."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import graph, levy, pwit, spectrum, walk
from .experiments import ExperimentConfig, replica_rng, staged_outputs, write_csv, write_json

SPECS = (levy.Stable(1.0, 0.5), levy.TemperedStable(1.0, 0.5, 1.0), levy.GammaType(1.0, 1.0))


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""
    table: list | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "threshold": self.threshold, "passed": self.passed, "detail": self.detail}


def charpoly(a: np.ndarray) -> np.ndarray:
    """Characteristic polynomial coefficients (leading 1) by Faddeev-LeVerrier."""
    n = a.shape[0]
    coeffs = [1.0]
    m = np.zeros_like(a)
    for k in range(1, n + 1):
        m = a @ m + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(a @ m) / k)
    return np.array(coeffs)


def brute_force_regenerations(depths: np.ndarray, guard: int) -> np.ndarray:
    """O(horizon^2) reference for :func:`walk.regeneration_times`."""
    h = depths.size - 1
    out = []
    for k in range(1, min(h - guard, h - 1) + 1):
        if all(depths[k] < depths[u] for u in range(k + 1, h + 1)):
            out.append(k)
    return np.array(out, dtype=np.int64)


def _corrupt(s: np.ndarray) -> np.ndarray:
    bad = s.copy()
    bad[0, 1] *= 1.01
    return bad


# --------------------------------------------------------------------------- checks


def check_tail_roundtrip(rng):
    worst = 0.0
    for spec in SPECS:
        x = np.logspace(-5, 1, 25)
        back = np.array([levy.inverse_tail(spec, levy.tail_mass(spec, v)) for v in x])
        worst = max(worst, float(np.max(np.abs(back / x - 1.0))))
    return worst, 1e-9


def check_inverse_table(rng):
    worst = 0.0
    for spec in SPECS:
        u = np.exp(rng.uniform(-6.0, math.log(levy.tail_mass(spec, 1e-6)), 40))
        exact = np.array([levy.inverse_tail(spec, v) for v in u])
        fast = levy.inverse_tail_fast(spec, u, 1e-6)
        worst = max(worst, float(np.max(np.abs(fast / exact - 1.0))))
    return worst, 1e-7


def check_characteristic_function(rng):
    n = 10_000
    worst = 0.0
    for spec in SPECS[:2]:
        draws = levy.sample_id_many(spec, 1.0, 1e-5, rng, n)
        for theta in (0.5, 1.0, 2.0):
            phi = np.exp(levy.levy_exponent(spec, theta))
            ecf = np.mean(np.exp(1j * theta * draws))
            sigma = math.sqrt(max(1.0 - abs(phi) ** 2, 1e-12) / n)
            worst = max(worst, abs(ecf - phi) / sigma)
    return worst, 3.0


def check_max_conductance_ks(rng):
    worst_p = 1.0
    for spec in SPECS[:2]:
        tops = np.array([levy.sample_arrivals_desc(spec, 1.0, 1e-2, rng).conductances[:1].sum() for _ in range(10_000)])
        cdf = lambda x, s=spec: np.exp(-np.array([levy.tail_mass(s, v) if v > 0 else np.inf for v in np.atleast_1d(x)]))
        worst_p = min(worst_p, stats.kstest(tops, cdf).pvalue)
    # reported as 1 - p so that smaller is better, like every other check
    return 1.0 - worst_p, 0.99


def _sample_matrix(rng, n=50):
    return graph.generate_divisible(n, SPECS[1], 1e-6, rng)


def check_detailed_balance(rng, corrupt=False):
    cm = _sample_matrix(rng)
    sm = graph.symmetrize(cm)
    s = _corrupt(sm.s) if corrupt else sm.s
    r = np.sqrt(sm.rho)
    k_hat = s / r[:, None] * r[None, :]
    return graph.detailed_balance_residual(graph.KernelMatrix(k_hat, sm.rho)), 1e-12


def check_row_sums(rng):
    km = graph.kernel(_sample_matrix(rng))
    return float(np.max(np.abs(km.k.sum(axis=1) - 1.0))), 1e-12


def check_spectral_equality(rng, corrupt=False):
    cm = _sample_matrix(rng)
    sm = graph.symmetrize(cm)
    s = _corrupt(sm.s) if corrupt else sm.s
    w = spectrum.jacobi_eigenvalues(s)
    ref = np.sort(np.linalg.eigvals(graph.kernel(cm).k).real)
    return float(np.max(np.abs(w - ref))), 1e-8


def check_eigenvalue_range(rng):
    cm = _sample_matrix(rng)
    w = spectrum.jacobi_eigenvalues(graph.symmetrize(cm))
    return max(abs(w[-1] - 1.0), max(0.0, np.max(np.abs(w)) - 1.0)), 1e-10


def check_moment_identity(rng):
    cm = _sample_matrix(rng)
    summ = spectrum.esd(spectrum.jacobi_eigenvalues(graph.symmetrize(cm)))
    km = graph.kernel(cm)
    err = max(abs(spectrum.mean_return_probability(km, r) - summ.moment(r)) for r in (2, 4, 6))
    return err, 1e-8


def check_charpoly(rng):
    worst = 0.0
    for _ in range(20):
        a = rng.standard_normal((5, 5))
        a = 0.5 * (a + a.T)
        roots = np.sort(np.roots(charpoly(a)).real)
        worst = max(worst, float(np.max(np.abs(spectrum.jacobi_eigenvalues(a) - roots))))
    return worst, 1e-8


def check_escape_closed_form(rng):
    line = pwit.constant_ratio_line(4.0)
    _, upper = pwit.escape_prob_bracket(line, (1,), 20)
    return abs(upper - 0.75), 1e-9


def check_escape_mc(rng):
    """Largest violation, in standard errors, of the MC estimates against the brackets (and 0.75 on the line).

    The third return value is the table written to beta.csv.
    """
    seed = int(rng.integers(2**63))
    line = pwit.constant_ratio_line(4.0)
    est, se = walk.escape_prob_mc(line, (1,), 1000, 10_000, seed)
    worst = abs(est - 0.75) / se
    env = pwit.PwitEnvironment(SPECS[1], seed)
    vertices = [tuple(int(i) for i in rng.integers(1, 4, size=1 + k % 3)) for k in range(5)]
    rows = walk.escape_table(env, vertices, 20, 200, 10_000, seed, max_depth=30)
    for _, est, se, lo, up, _ in rows:
        se = max(se, 1.0 / 200)
        worst = max(worst, (est - up) / se, (lo - est) / se)
    return worst, 3.0, rows


def check_regeneration_bruteforce(rng):
    env = pwit.PwitEnvironment(SPECS[1], int(rng.integers(2**63)))
    trace = walk.run_walk(env, 3000, int(rng.integers(2**63)))
    rec = walk.regeneration_times(trace, 300)
    ref = brute_force_regenerations(trace.depths, 300)
    mismatch = rec.times.size != ref.size or not np.array_equal(rec.times, ref)
    return float(mismatch), 0.5


CHECKS = (
    ("tail_inverse_roundtrip", check_tail_roundtrip),
    ("inverse_table_accuracy", check_inverse_table),
    ("characteristic_function", check_characteristic_function),
    ("max_conductance_ks", check_max_conductance_ks),
    ("detailed_balance", check_detailed_balance),
    ("kernel_row_sums", check_row_sums),
    ("spectral_equality", check_spectral_equality),
    ("eigenvalue_range", check_eigenvalue_range),
    ("moment_return_identity", check_moment_identity),
    ("eigensolver_vs_charpoly", check_charpoly),
    ("escape_bracket_closed_form", check_escape_closed_form),
    ("escape_bracket_vs_mc", check_escape_mc),
    ("regeneration_bruteforce", check_regeneration_bruteforce),
)


def run_checks(master_seed: int = 0, corrupt_symmetrization: bool = False):
    """Run every check; failures (including exceptions) are recorded and the suite continues."""
    out = []
    for i, (name, fn) in enumerate(CHECKS):
        rng = replica_rng(master_seed, 0x56414C, i)
        try:
            if corrupt_symmetrization and name in ("detailed_balance", "spectral_equality"):
                res = fn(rng, corrupt=True)
            else:
                res = fn(rng)
            value, threshold = float(res[0]), res[1]
            table = res[2] if len(res) > 2 else None
            out.append(Check(name, value, threshold, bool(value <= threshold), table=table))
        except Exception as exc:  # noqa: BLE001 - a crashing check is a failed check
            out.append(Check(name, float("nan"), float("nan"), False, f"{type(exc).__name__}: {exc}"))
    return out


def run_validation_suite(cfg: ExperimentConfig, corrupt_symmetrization: bool = False):
    """Returns ``(exit status, report)``; writes report.json and the escape table beta.csv."""
    checks = run_checks(cfg.master_seed, corrupt_symmetrization)
    passed = all(c.passed for c in checks)
    report = {
        "run_id": cfg.run_id,
        "master_seed": cfg.master_seed,
        "passed": passed,
        "checks": [c.as_dict() for c in checks],
    }
    beta = next((c.table for c in checks if c.name == "escape_bracket_vs_mc" and c.table), [])
    with staged_outputs(cfg.out_dir) as tmp:
        write_json(os.path.join(tmp, "report.json"), report)
        write_csv(os.path.join(tmp, "beta.csv"), walk.BETA_COLUMNS, beta)
    return (0 if passed else 1), report
