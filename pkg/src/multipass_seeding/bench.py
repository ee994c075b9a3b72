"""Repeat-experiment runner and the normalized statistics used to compare seeders.

A benchmark config is a plain mapping (read from YAML or JSON by the CLI)::

    task: kmeans            # or gmm
    methods: [EON, EGD, EGD-EGC]
    repeats: 10
    pool_rule: log
    seed: 0
    datasets:
      - {id: yeast, path: yeast.csv, k: 10, exclude_columns: [-1]}
      - {id: blobs, model: {K: 5, d: 2, separation: 2, seed: 3}, n: 2000, k: 5}
      - {id: grid0, model: grid, n: 1350, k: 27, group: grid}

Method names may carry a pool-rule override after a slash, e.g.
``EGD-EGC/sqrt``. Each (dataset, method, repeat) run draws from its own
random stream keyed by those three names, so adding a method or a dataset
never changes the results of the others.
"""

import json
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from . import datagen
from ._rng import make_rng
from .dataset import load_csv, minmax_normalize
from .gmm import em, mixture_loglik
from .gmm_seeding import local_gaussians, seed_gmm
from .kmeans import lloyd
from .seeding import parse_plan, phi_com, phi_s, seed

__all__ = [
    "RunRecord",
    "BenchReport",
    "minmax_mean",
    "minmax_global",
    "loglik_row_normalize",
    "group_means",
    "correlations",
    "paired_sign_test",
    "generate_entry",
    "load_datasets",
    "run_records",
    "aggregate",
    "run_kmeans_bench",
    "run_gmm_bench",
]

TIMING_FIELDS = ("seeding_time", "total_time")


@dataclass
class RunRecord:
    """One seeding + refinement run.

    ``objective`` is the final SSE (k-means) or log-likelihood (GMM).
    ``seeding_objective`` is phi_S of the seeds (k-means) or the initial
    log-likelihood (GMM); ``seeding_phi_com`` is phi_COM of the seeds.
    """

    method: str
    dataset: str
    repeat: int
    objective: float
    seeding_objective: float
    seeding_phi_com: float
    iterations: int
    seeding_time: float
    total_time: float
    stream: list = field(default_factory=list)

    def to_dict(self, include_timings=True):
        out = asdict(self)
        if not include_timings:
            for key in TIMING_FIELDS:
                out.pop(key)
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        for key in TIMING_FIELDS:
            data.setdefault(key, 0.0)
        return cls(**data)


# --------------------------------------------------------------------------
# statistics


def minmax_mean(values):
    """``(v - min) / (max - min)`` over per-method means; all zeros if flat."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("need at least one method")
    span = v.max() - v.min()
    if span == 0:
        return np.zeros_like(v)
    return (v - v.min()) / span


def minmax_global(raw, means):
    """Normalize method means against the hull of every raw repeat value."""
    raw = np.asarray(raw, dtype=np.float64).ravel()
    means = np.asarray(means, dtype=np.float64)
    if raw.size == 0:
        raise ValueError("need at least one repeat")
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.zeros_like(means)
    return np.clip((means - lo) / (hi - lo), 0.0, 1.0)


def loglik_row_normalize(matrix):
    """Row-wise min-max of a (datasets x methods) log-likelihood matrix.

    1 marks the best (highest) value of a row, 0 the worst; constant rows
    map to 0.
    """
    M = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    return np.vstack([minmax_mean(row) for row in M])


def group_means(normalized, groups):
    """Column means of the rows belonging to each group, in first-seen order."""
    normalized = np.atleast_2d(np.asarray(normalized, dtype=np.float64))
    out = {}
    for g in dict.fromkeys(groups):
        rows = [i for i, gi in enumerate(groups) if gi == g]
        out[g] = normalized[rows].mean(axis=0)
    return out


def correlations(x, y):
    """Pearson and Spearman (average-rank ties) correlation of paired samples."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need at least 3 paired samples")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("correlation undefined: zero variance")
    with warnings.catch_warnings():
        # spread at rounding level carries no signal, treat it like zero variance
        warnings.simplefilter("error", stats.NearConstantInputWarning)
        try:
            pearson = stats.pearsonr(x, y)[0]
        except stats.NearConstantInputWarning:
            raise ValueError("correlation undefined: near-constant input") from None
    return float(pearson), float(stats.spearmanr(x, y)[0])


def paired_sign_test(a, b):
    """One-sided sign test that ``a`` tends to be smaller than ``b``.

    Ties are dropped. Returns the p-value (1.0 when every pair ties).
    """
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    wins = int(np.sum(diff < 0))
    losses = int(np.sum(diff > 0))
    if wins + losses == 0:
        return 1.0
    return float(stats.binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue)


# --------------------------------------------------------------------------
# datasets and runs


def generate_entry(entry, master_seed):
    """Model, points and labels of a generated dataset entry.

    The model is drawn from its own stream unless the spec carries a seed;
    points come from a stream keyed by the dataset id. Noise points get
    label -1.
    """
    ds_id = str(entry["id"])
    model = entry["model"]
    if model == "grid":
        mix = datagen.grid_model()
    else:
        spec = model if isinstance(model, datagen.ModelSpec) else datagen.ModelSpec.from_dict(model)
        rng = make_rng(master_seed, "model", ds_id) if spec.seed is None else None
        mix = datagen.generate_model(spec, rng)
    n = int(entry.get("n", 2000))
    noise = int(entry.get("noise", 0))
    if not 0 <= noise < n:
        raise ValueError(f"dataset {ds_id!r}: noise must lie in [0, n)")
    rng = make_rng(master_seed, "sample", ds_id)
    X, labels = datagen.sample_dataset(mix, n - noise, rng)
    if noise:
        X = datagen.add_noise(X, noise, entry.get("expansion", 0.2), rng)
        labels = np.concatenate([labels, np.full(noise, -1, dtype=labels.dtype)])
    return mix, X, labels


def _load_one(entry, master_seed):
    ds_id = str(entry["id"])
    if "path" in entry:
        X = load_csv(
            entry["path"],
            delimiter=entry.get("delimiter", ","),
            header=entry.get("header", False),
            exclude_columns=entry.get("exclude_columns", ()),
        )
        normalize = entry.get("normalize", True)
    elif "model" in entry:
        X = generate_entry(entry, master_seed)[1]
        normalize = entry.get("normalize", False)
    elif "points" in entry:
        X = np.asarray(entry["points"], dtype=np.float64)
        normalize = entry.get("normalize", False)
    else:
        raise ValueError(f"dataset {ds_id!r} needs one of 'path', 'model' or 'points'")
    if normalize:
        X = minmax_normalize(X)
    return ds_id, X


def load_datasets(config):
    """Materialize every dataset of a config as ``{id: (X, k, group)}``."""
    out = {}
    master = int(config.get("seed", 0))
    for entry in config["datasets"]:
        ds_id, X = _load_one(entry, master)
        if ds_id in out:
            raise ValueError(f"duplicate dataset id {ds_id!r}")
        k = int(entry.get("k", config.get("k", 0)))
        if not 1 <= k <= X.shape[0]:
            raise ValueError(f"dataset {ds_id!r}: k must lie in [1, n], got {k}")
        out[ds_id] = (X, k, entry.get("group", "default"))
    return out


def _method_labels(methods):
    labels, seen = [], {}
    for m in methods:
        seen[m] = seen.get(m, 0) + 1
        labels.append(m if seen[m] == 1 else f"{m}#{seen[m]}")
    return labels


def _split_method(method, default_rule):
    name, _, rule = method.partition("/")
    return name, (rule or default_rule)


def _check_methods(methods, task, pool_rule):
    for m in methods:
        name, rule = _split_method(m, pool_rule)
        try:
            plan = parse_plan(name, rule)
        except ValueError:
            raise ValueError(f"unknown seeding method {m!r}") from None
        if task == "kmeans" and any(p.sampling != "E" or p.ranking == "L" for p in plan.passes):
            raise ValueError(f"method {m!r} needs a Gaussian mixture; use the gmm task")


def _run_kmeans(X, k, method, ds_id, repeat, master, pool_rule, tol, max_iter):
    name, rule = _split_method(method, pool_rule)
    rng = make_rng(master, ds_id, method, repeat)
    t0 = time.perf_counter()
    seeds = seed(X, k, parse_plan(name, rule), rng)
    t1 = time.perf_counter()
    res = lloyd(X, X[seeds], tol=tol, max_iter=max_iter)
    t2 = time.perf_counter()
    return RunRecord(
        method, ds_id, repeat, res.sse, phi_s(X, seeds), phi_com(X, seeds),
        res.iterations, t1 - t0, t2 - t0, [int(s) for s in seeds],
    )


def _run_gmm(X, k, method, ds_id, repeat, master, pool_rule, tol, max_iter, local_gauss=None):
    name, rule = _split_method(method, pool_rule)
    plan = parse_plan(name, rule)
    rng = make_rng(master, ds_id, method, repeat)
    uses_g = any(p.sampling == "G" for p in plan.passes)
    # the shared local Gaussians are charged to every run that needs them
    setup = local_gauss[1] if (uses_g and local_gauss is not None) else 0.0
    t0 = time.perf_counter()
    seeds, init = seed_gmm(
        X, k, plan, rng, local_gauss=local_gauss[0] if (uses_g and local_gauss) else None
    )
    t1 = time.perf_counter()
    res = em(X, init, tol=tol, max_iter=max_iter)
    t2 = time.perf_counter()
    return RunRecord(
        method, ds_id, repeat, res.loglik, mixture_loglik(init, X), phi_com(X, seeds),
        res.iterations, t1 - t0 + setup, t2 - t0 + setup, [int(s) for s in seeds],
    )


def _local_gauss_for(datasets, methods, pool_rule):
    plans = [parse_plan(*_split_method(m, pool_rule)) for m in methods]
    if not any(p.sampling == "G" for plan in plans for p in plan.passes):
        return {}
    out = {}
    for ds_id, (X, k, _) in datasets.items():
        t0 = time.perf_counter()
        lg = local_gaussians(X, k)
        out[ds_id] = (lg, time.perf_counter() - t0)
    return out


def run_records(config, datasets=None):
    """Execute every (dataset, method, repeat) run of a config, in order."""
    task = config.get("task", "kmeans")
    if task not in ("kmeans", "gmm"):
        raise ValueError(f"unknown task {task!r}")
    methods = list(config["methods"])
    pool_rule = config.get("pool_rule", "log")
    _check_methods(methods, task, pool_rule)
    repeats = int(config.get("repeats", 10))
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    master = int(config.get("seed", 0))
    datasets = load_datasets(config) if datasets is None else datasets
    if task == "kmeans":
        tol = float(config.get("tol", 1e-4))
        max_iter = int(config.get("max_iter", 50))
        runner = _run_kmeans
    else:
        tol = float(config.get("tol", 1e-4))
        max_iter = int(config.get("max_iter", 100))
        runner = _run_gmm

    extra = {}
    if task == "gmm":
        lgs = _local_gauss_for(datasets, methods, pool_rule)
        extra = {ds: {"local_gauss": lg} for ds, lg in lgs.items()}

    labels = _method_labels(methods)
    jobs = []
    for ds_id, (X, k, _) in datasets.items():
        for method in methods:
            for r in range(repeats):
                jobs.append((X, k, method, ds_id, r))
    n_jobs = int(config.get("n_jobs", 1))
    if n_jobs == 1:
        records = [
            runner(X, k, m, d, r, master, pool_rule, tol, max_iter, **extra.get(d, {}))
            for X, k, m, d, r in jobs
        ]
    else:
        records = Parallel(n_jobs=n_jobs)(
            delayed(runner)(X, k, m, d, r, master, pool_rule, tol, max_iter, **extra.get(d, {}))
            for X, k, m, d, r in jobs
        )
    # relabel duplicates: same stream, distinct column
    per_ds = len(methods) * repeats
    for i, rec in enumerate(records):
        rec.method = labels[(i % per_ds) // repeats]
    return records


# --------------------------------------------------------------------------
# aggregation


@dataclass
class BenchReport:
    """Per-(dataset, method) aggregates of a set of runs.

    Matrices are lists of rows, one row per dataset in ``datasets`` order and
    one column per method in ``methods`` order. Timing aggregates live in
    ``timings`` and are excluded from :meth:`to_dict` unless requested, so
    the default serialization is reproducible byte for byte.
    """

    task: str
    datasets: list
    methods: list
    repeats: int
    groups: list
    mean_objective: list
    std_objective: list
    mean_iterations: list
    mean_seeding_objective: list
    mmM: list
    mmG: list
    correlations: dict
    normalized_loglik: list = None
    group_means: dict = None
    timings: dict = None
    config: dict = None

    @property
    def better(self):
        return "lower" if self.task == "kmeans" else "higher"

    def to_dict(self, include_timings=False):
        out = asdict(self)
        out["objective"] = "sse" if self.task == "kmeans" else "loglik"
        out["better"] = self.better
        if not include_timings:
            out.pop("timings")
        return out

    def to_json(self, include_timings=False):
        return json.dumps(_jsonable(self.to_dict(include_timings)), indent=2, sort_keys=True)

    def to_csv_rows(self):
        """Flat rows for plotting: one per (dataset, method)."""
        rows = []
        for i, ds in enumerate(self.datasets):
            for j, m in enumerate(self.methods):
                row = {
                    "dataset": ds,
                    "group": self.groups[i],
                    "method": m,
                    "mean_objective": self.mean_objective[i][j],
                    "std_objective": self.std_objective[i][j],
                    "mean_iterations": self.mean_iterations[i][j],
                    "mmM": self.mmM[i][j],
                    "mmG": self.mmG[i][j],
                }
                if self.normalized_loglik is not None:
                    row["normalized_loglik"] = self.normalized_loglik[i][j]
                if self.timings is not None:
                    row["mean_seeding_time"] = self.timings["mean_seeding_time"][i][j]
                    row["mean_total_time"] = self.timings["mean_total_time"][i][j]
                rows.append(row)
        return rows


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _corr_or_none(x, y):
    try:
        p, s = correlations(x, y)
    except ValueError:
        return None
    return {"pearson": p, "spearman": s}


def aggregate(records, task, groups=None, config=None):
    """Fold run records into a :class:`BenchReport`.

    Raises if some (dataset, method) cell does not hold the same number of
    repeats as the others.
    """
    datasets = list(dict.fromkeys(r.dataset for r in records))
    methods = list(dict.fromkeys(r.method for r in records))
    cells = {}
    for r in records:
        cells.setdefault((r.dataset, r.method), []).append(r)
    counts = {len(v) for v in cells.values()}
    if len(cells) != len(datasets) * len(methods) or len(counts) != 1:
        raise ValueError("every (dataset, method) cell needs the same number of repeats")
    R = counts.pop()
    groups = groups or {}

    D, M = len(datasets), len(methods)
    obj = np.empty((D, M, R))
    seed_obj = np.empty((D, M, R))
    com = np.empty((D, M, R))
    iters = np.empty((D, M, R))
    t_seed = np.empty((D, M, R))
    t_total = np.empty((D, M, R))
    for i, ds in enumerate(datasets):
        for j, m in enumerate(methods):
            recs = sorted(cells[(ds, m)], key=lambda r: r.repeat)
            obj[i, j] = [r.objective for r in recs]
            seed_obj[i, j] = [r.seeding_objective for r in recs]
            com[i, j] = [r.seeding_phi_com for r in recs]
            iters[i, j] = [r.iterations for r in recs]
            t_seed[i, j] = [r.seeding_time for r in recs]
            t_total[i, j] = [r.total_time for r in recs]

    mean_obj = obj.mean(axis=2)
    mmM = np.vstack([minmax_mean(row) for row in mean_obj])
    mmG = np.vstack([minmax_global(obj[i], mean_obj[i]) for i in range(D)])
    corr = {
        ds: {
            m: {
                "seeding": _corr_or_none(seed_obj[i, j], obj[i, j]),
                "phi_com": _corr_or_none(com[i, j], obj[i, j]),
            }
            for j, m in enumerate(methods)
        }
        for i, ds in enumerate(datasets)
    }
    group_list = [groups.get(ds, "default") for ds in datasets]

    norm_ll = gmeans = None
    if task == "gmm":
        norm = loglik_row_normalize(mean_obj)
        norm_ll = norm.tolist()
        gmeans = {g: v.tolist() for g, v in group_means(norm, group_list).items()}

    ms, mt = t_seed.mean(axis=2), t_total.mean(axis=2)
    timings = {
        "mean_seeding_time": ms.tolist(),
        "mean_total_time": mt.tolist(),
        "mmM_seeding_time": np.vstack([minmax_mean(r) for r in ms]).tolist(),
        "mmM_total_time": np.vstack([minmax_mean(r) for r in mt]).tolist(),
        "mmG_seeding_time": np.vstack([minmax_global(t_seed[i], ms[i]) for i in range(D)]).tolist(),
        "mmG_total_time": np.vstack([minmax_global(t_total[i], mt[i]) for i in range(D)]).tolist(),
    }
    return BenchReport(
        task=task,
        datasets=datasets,
        methods=methods,
        repeats=R,
        groups=group_list,
        mean_objective=mean_obj.tolist(),
        std_objective=obj.std(axis=2).tolist(),
        mean_iterations=iters.mean(axis=2).tolist(),
        mean_seeding_objective=seed_obj.mean(axis=2).tolist(),
        mmM=mmM.tolist(),
        mmG=mmG.tolist(),
        correlations=corr,
        normalized_loglik=norm_ll,
        group_means=gmeans,
        timings=timings,
        config=config,
    )


def _groups_of(config):
    groups = {str(e["id"]): e.get("group", "default") for e in config["datasets"]}
    groups.update(config.get("groups", {}) or {})
    return groups


def run_kmeans_bench(config, return_records=False):
    """Seed, run Lloyd and aggregate for every dataset/method/repeat of ``config``."""
    config = dict(config, task="kmeans")
    records = run_records(config)
    report = aggregate(records, "kmeans", _groups_of(config), _public_config(config))
    return (report, records) if return_records else report


def run_gmm_bench(config, return_records=False):
    """Seed, run EM and aggregate for every dataset/method/repeat of ``config``."""
    config = dict(config, task="gmm")
    records = run_records(config)
    report = aggregate(records, "gmm", _groups_of(config), _public_config(config))
    return (report, records) if return_records else report


def _public_config(config):
    keep = ("task", "methods", "repeats", "pool_rule", "seed", "tol", "max_iter", "groups")
    out = {k: config[k] for k in keep if k in config}
    out["datasets"] = [{k: v for k, v in e.items() if k != "points"} for e in config["datasets"]]
    return out
