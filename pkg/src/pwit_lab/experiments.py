"""Experiment configs, replica seeding and CSV/JSON emission.

Every replica draws its randomness from ``SeedSequence([master_seed, ...])``
keyed by its index, and results are gathered by index, so outputs do not
depend on the worker count or on completion order.
"""
from __future__ import annotations

import contextlib
import dataclasses
import hashlib
import json
import math
import os
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import graph, levy, pwit, spectrum, walk
from .errors import DomainError

EXPERIMENTS = ("spectrum", "speed", "traps", "validate")
GENERATORS = ("divisible", "stable_domain")
Q_MOMENTS = (1.5, 2.0)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    levy: str = "tempered:c=1,alpha=0.5,p=1"
    generator: str = "divisible"
    n_list: tuple = (50, 100, 200, 400)
    horizon: int = 100_000
    replicas: int = 20
    cutoff: float | None = None
    guard: int | None = None
    M: float | None = None
    r_max: int = spectrum.DEFAULT_R_MAX
    burn_in: float = 0.0
    master_seed: int = 0
    out_dir: str = "out"
    workers: int | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise DomainError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        levy.parse_spec(self.levy)
        if self.generator not in GENERATORS:
            raise DomainError(f"generator must be one of {GENERATORS}")
        n_list = tuple(int(n) for n in self.n_list)
        if not n_list or any(n < 2 for n in n_list) or list(n_list) != sorted(set(n_list)):
            raise DomainError("n_list must be strictly ascending integers >= 2")
        object.__setattr__(self, "n_list", n_list)
        for name, lo in (("horizon", 2), ("replicas", 1), ("r_max", 1)):
            if int(getattr(self, name)) < lo:
                raise DomainError(f"{name} must be at least {lo}")
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.cutoff is not None and not 0 < self.cutoff < 1:
            raise DomainError("cutoff must lie in (0, 1)")
        if self.guard is not None and not 0 <= self.guard < self.horizon:
            raise DomainError("guard must lie in [0, horizon)")
        if self.M is not None and not self.M > 0:
            raise DomainError("M must be positive")
        if not 0.0 <= self.burn_in < 1.0:
            raise DomainError("burn_in must lie in [0, 1)")
        if not 0 <= int(self.master_seed) < 2**64:
            raise DomainError("master_seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        if self.workers is not None and int(self.workers) < 1:
            raise DomainError("workers must be at least 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise DomainError(f"unknown config keys: {unknown}")
        return cls(**data)

    @property
    def spec(self) -> levy.LevyMeasureSpec:
        return levy.parse_spec(self.levy)

    @property
    def effective_cutoff(self) -> float:
        if self.cutoff is not None:
            return float(self.cutoff)
        return levy.DEFAULT_CUTOFF if self.experiment == "spectrum" else pwit.DEFAULT_CUTOFF

    def canonical(self) -> dict:
        """Fields that determine the outputs (output path and worker count excluded)."""
        d = dataclasses.asdict(self)
        d.pop("out_dir")
        d.pop("workers")
        d["n_list"] = list(d["n_list"])
        d["levy"] = levy.format_spec(self.spec)
        return d

    @property
    def run_id(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise DomainError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise DomainError(f"config {path} must hold a JSON object")
    return data


def replica_seeds(master_seed: int, *key) -> tuple:
    """Two independent 64-bit seeds for the replica identified by ``key``."""
    s = np.random.SeedSequence([int(master_seed), *[int(k) for k in key]]).generate_state(2, np.uint64)
    return int(s[0]), int(s[1])


def replica_rng(master_seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *[int(k) for k in key]]))


def run_tasks(fn, tasks, workers: int | None):
    """Map ``fn`` over ``tasks``; results come back in task order."""
    tasks = list(tasks)
    workers = (os.cpu_count() or 1) if workers is None else int(workers)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


# --------------------------------------------------------------------------- output


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path: str, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: str, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


@contextlib.contextmanager
def staged_outputs(out_dir: str):
    """Yield a scratch directory whose files are moved into ``out_dir`` only on success."""
    try:
        os.makedirs(out_dir, exist_ok=True)
        tmp = tempfile.mkdtemp(prefix=".partial-", dir=out_dir)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc.strerror}") from exc
    try:
        yield tmp
        for name in sorted(os.listdir(tmp)):
            os.replace(os.path.join(tmp, name), os.path.join(out_dir, name))
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


# --------------------------------------------------------------------------- spectrum


def _spectrum_task(args):
    cfg, n, rep = args
    rng = replica_rng(cfg.master_seed, n, rep)
    if cfg.generator == "divisible":
        cm = graph.generate_divisible(n, cfg.spec, cfg.effective_cutoff, rng)
    else:
        spec = cfg.spec
        if not hasattr(spec, "alpha"):
            raise DomainError("the stable-domain generator needs a spec with an alpha parameter")
        cm = graph.generate_stable_domain(n, spec.alpha, rng)
    return spectrum.jacobi_eigenvalues(graph.symmetrize(cm))


def run_spectrum_experiment(cfg: ExperimentConfig) -> dict:
    """ESDs over replicas for each n; writes esd.csv, moments.csv, ks.csv and summary.json."""
    tasks = [(cfg, n, rep) for n in cfg.n_list for rep in range(cfg.replicas)]
    eigs = run_tasks(_spectrum_task, tasks, cfg.workers)
    rid = cfg.run_id
    grid = np.linspace(-1.0, 1.0, 201)
    esd_rows, mom_rows, per_n = [], [], []
    pooled = {}
    for i, n in enumerate(cfg.n_list):
        block = eigs[i * cfg.replicas : (i + 1) * cfg.replicas]
        summaries = [spectrum.esd(e, cfg.r_max) for e in block]
        pooled[n] = spectrum.pooled(summaries)
        for x, f in zip(grid, pooled[n].cdf(grid)):
            esd_rows.append((rid, n, x, f))
        m = np.array([s.moments for s in summaries])
        for r in range(1, cfg.r_max + 1):
            col = m[:, r]
            se = col.std(ddof=1) / math.sqrt(col.size) if col.size > 1 else float("nan")
            mom_rows.append((rid, n, r, col.mean(), np.abs(col).mean(), se))
        all_e = np.concatenate(block)
        per_n.append(
            {
                "n": n,
                "min_eigenvalue": all_e.min(),
                "max_eigenvalue": all_e.max(),
                "odd_moment_abs_means": [
                    {"r": r, "value": np.abs(m[:, r]).mean()} for r in range(1, cfg.r_max + 1, 2)
                ],
            }
        )
    ks_rows = [
        (rid, a, b, spectrum.kolmogorov_distance(pooled[a], pooled[b]))
        for a, b in zip(cfg.n_list[:-1], cfg.n_list[1:])
    ]
    summary = {
        "run_id": rid,
        "config": cfg.canonical(),
        "per_n": per_n,
        "ks_sequence": [{"n": a, "n_next": b, "ks": d} for _, a, b, d in ks_rows],
    }
    with staged_outputs(cfg.out_dir) as tmp:
        write_csv(os.path.join(tmp, "esd.csv"), ("run_id", "n", "x", "cdf"), esd_rows)
        write_csv(
            os.path.join(tmp, "moments.csv"),
            ("run_id", "n", "r", "mean_moment", "mean_abs_moment", "stderr"),
            mom_rows,
        )
        write_csv(os.path.join(tmp, "ks.csv"), ("run_id", "n", "n_next", "ks"), ks_rows)
        write_json(os.path.join(tmp, "summary.json"), summary)
    return summary


# --------------------------------------------------------------------------- speed


def dyadic_levels(horizon: int):
    return [1 << k for k in range(1, int(math.floor(math.log2(horizon))) + 1)]


def _walk_env(cfg, rep):
    env_seed, walk_seed = replica_seeds(cfg.master_seed, rep)
    env = pwit.PwitEnvironment(cfg.spec, env_seed, cfg.effective_cutoff)
    trace = walk.run_walk(env, cfg.horizon, walk_seed)
    return env, trace


def _speed_task(args):
    cfg, rep = args
    env, trace = _walk_env(cfg, rep)
    se = walk.speed_estimate(trace, cfg.burn_in)
    ks, mins = walk.dyadic_profile(trace)
    reg = walk.regeneration_times(trace, cfg.guard)
    gaps, ends = reg.gaps, reg.times[1:]
    thirds = []
    for j in (1, 2, 3):
        sel = gaps[ends <= j * cfg.horizon / 3.0]
        thirds.append((float(sel.sum()), int(sel.size)))
    hits = walk.hitting_times(trace, dyadic_levels(cfg.horizon))
    return {
        "point": se.point,
        "windowed_min": se.windowed_min,
        "profile": dict(zip(ks.tolist(), mins.tolist())),
        "n_regens": int(reg.times.size),
        "mean_regen_gap": float(gaps.mean()) if gaps.size else float("nan"),
        "regen_speed": reg.speed(),
        "thirds": thirds,
        "hits": hits,
        "dust_excursions": trace.dust_excursions,
    }


def run_speed_experiment(cfg: ExperimentConfig) -> dict:
    """Replica walks on fresh environments; writes speed.csv, hitting.csv and summary.json."""
    res = run_tasks(_speed_task, [(cfg, rep) for rep in range(cfg.replicas)], cfg.workers)
    rid = cfg.run_id
    speed_rows = [
        (rid, rep, cfg.horizon, r["point"], r["windowed_min"], r["n_regens"], r["mean_regen_gap"])
        for rep, r in enumerate(res)
    ]
    hit_rows = []
    levels = dyadic_levels(cfg.horizon)
    for rep, r in enumerate(res):
        for n in levels:
            t = r["hits"][n]
            hit_rows.append((rid, rep, n, t, None if t is None else t / n, t is None))
    points = np.array([r["point"] for r in res])
    stderr = points.std(ddof=1) / math.sqrt(points.size) if points.size > 1 else float("nan")
    hitting = []
    for n in levels:
        x = np.array([r["hits"][n] / n for r in res if r["hits"][n] is not None])
        entry = {"n": n, "uncensored": int(x.size)}
        if x.size >= 2:
            g = x.mean()
            entry.update(mean=g, variance=x.var(ddof=1))
            entry.update({f"central_moment_q{q:g}": np.mean(np.abs(x - g) ** q) for q in Q_MOMENTS})
        hitting.append(entry)
    ks = sorted({k for r in res for k in r["profile"]})
    wmin_median = [
        {"k": k, "median": float(np.median([r["profile"][k] for r in res if k in r["profile"]]))} for k in ks
    ]
    thirds = []
    for j in range(3):
        total = sum(r["thirds"][j][0] for r in res)
        count = sum(r["thirds"][j][1] for r in res)
        thirds.append(total / count if count else float("nan"))
    summary = {
        "run_id": rid,
        "config": cfg.canonical(),
        "replicas": len(res),
        "point_mean": points.mean(),
        "point_stderr": stderr,
        "point_ci_low": points.mean() - 3.0 * stderr,
        "windowed_min_median": float(np.median([r["windowed_min"] for r in res])),
        "windowed_min_median_by_window": wmin_median,
        "regen_gap_mean_by_third": thirds,
        "regen_speed_mean": float(np.nanmean([r["regen_speed"] for r in res])),
        "hitting": hitting,
        "dust_excursions_mean": float(np.mean([r["dust_excursions"] for r in res])),
    }
    with staged_outputs(cfg.out_dir) as tmp:
        write_csv(
            os.path.join(tmp, "speed.csv"),
            ("run_id", "replicate", "horizon", "point", "windowed_min", "n_regens", "mean_regen_gap"),
            speed_rows,
        )
        write_csv(
            os.path.join(tmp, "hitting.csv"),
            ("run_id", "replicate", "level", "T", "T_over_n", "censored"),
            hit_rows,
        )
        write_json(os.path.join(tmp, "summary.json"), summary)
    return summary


# --------------------------------------------------------------------------- traps

LABEL_DEPTH = 64


def vertex_label(env: pwit.BaseEnvironment, node: int) -> str:
    """Slash path for vertices up to depth 64, else ``#depth:key`` from the vertex stream key."""
    if env.depth_of(node) <= LABEL_DEPTH:
        return str(env.vertex_id(node))
    k0, k1 = env.store.nk[node]
    return f"#{env.depth_of(node)}:{int(k0):016x}{int(k1):016x}"


def _trap_task(args):
    cfg, rep = args
    env, trace = _walk_env(cfg, rep)
    ts = walk.trap_events(env, trace, cfg.M)
    labels = [vertex_label(env, v) for v in ts.vertex.tolist()]
    return labels, ts.c_parent, ts.c_top_child, ts.T, ts.S, ts.censored, ts.threshold


def running_mean_variation(x) -> float:
    """(max - min) / final value of the running mean over the second half of ``x``."""
    x = np.asarray(x, dtype=float)
    rm = np.cumsum(x) / np.arange(1, x.size + 1)
    tail = rm[x.size // 2 :]
    return float((tail.max() - tail.min()) / rm[-1])


def run_trap_experiment(cfg: ExperimentConfig) -> dict:
    """Trap events across replica walks; writes traps.csv and summary.json."""
    res = run_tasks(_trap_task, [(cfg, rep) for rep in range(cfg.replicas)], cfg.workers)
    rid = cfg.run_id
    rows = []
    durations = []
    n_events = n_cens = 0
    for rep, (labels, cp, ct, T, S, cens, _) in enumerate(res):
        for i in range(len(labels)):
            rows.append((rid, rep, labels[i], cp[i], ct[i], T[i], None if cens[i] else S[i], cens[i]))
        durations.append((S - T)[~cens])
        n_events += len(labels)
        n_cens += int(cens.sum())
    d = np.concatenate(durations) if durations else np.zeros(0)
    summary = {
        "run_id": rid,
        "config": cfg.canonical(),
        "threshold_M": res[0][6] if res else None,
        "events": n_events,
        "uncensored": int(d.size),
        "censored_fraction": n_cens / n_events if n_events else float("nan"),
        "mean_duration": d.mean() if d.size else float("nan"),
    }
    if d.size >= 20:
        slope, lo, hi, pts = walk.survival_tail_slope(d)
        summary.update(tail_slope=slope, tail_window=[lo, hi], tail_points=pts)
        summary["running_mean_variation_last_half"] = running_mean_variation(d)
    with staged_outputs(cfg.out_dir) as tmp:
        write_csv(
            os.path.join(tmp, "traps.csv"),
            ("run_id", "replicate", "vertex", "c_parent", "c_top_child", "T_v", "S_v", "censored"),
            rows,
        )
        write_json(os.path.join(tmp, "summary.json"), summary)
    return summary


def run(cfg: ExperimentConfig) -> dict:
    if cfg.experiment == "spectrum":
        return run_spectrum_experiment(cfg)
    if cfg.experiment == "speed":
        return run_speed_experiment(cfg)
    if cfg.experiment == "traps":
        return run_trap_experiment(cfg)
    from .validation import run_validation_suite

    return run_validation_suite(cfg)[1]
