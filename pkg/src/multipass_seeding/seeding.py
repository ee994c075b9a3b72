"""Multipass seeding for k-means.

A seeding plan is a sequence of passes, each described by three letters
(sampling metric, pool policy, ranking metric), e.g. ``EGD-EGC``:

* sampling: ``E`` Euclidean D^2 (``A`` adaptive Mahalanobis and ``G``
  Gaussian distance are provided by :mod:`multipass_seeding.gmm_seeding`);
* pool: ``O`` one candidate, ``G`` a greedy pool;
* ranking: ``D`` seed-as-center SSE, ``C`` SSE against the centroids induced
  by the seeds, ``N`` none (only with ``O``); ``L`` log-likelihood is GMM only.

The first pass builds the seed set; every later pass revisits the seeds one
position at a time (in reverse order for a zag pass), deletes the seed,
redraws a pool against the remaining ones and keeps the best of the fresh
draws and the deleted incumbent.
"""

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import check_rng
from .dataset import check_points, sq_dists
from .kmeans import partition_cost, sse_com

__all__ = [
    "PassSpec",
    "SeedingPlan",
    "SamplingError",
    "NearestSeedCache",
    "pool_size",
    "parse_plan",
    "KMEANS_PRESETS",
    "d2_weights",
    "sample_d2",
    "sample_pool",
    "phi_s",
    "phi_com",
    "rank_candidates",
    "run_construction_pass",
    "run_reselection_pass",
    "seed",
    "local_search_pp",
    "multiswap_greedy",
    "greedy_removal",
]


class SamplingError(ValueError):
    """No point carries positive sampling weight."""


# --------------------------------------------------------------------------
# plans

_TOKEN = re.compile(r"^([EAG])([OG])([DCLN])(\d*)(?:@(zig|zag))?$")


@dataclass(frozen=True)
class PassSpec:
    """One seeding pass.

    Parameters
    ----------
    sampling : {"E", "A", "G"}
    pool : {"O", "G"}
    ranking : {"D", "C", "L", "N"}
    direction : {"zig", "zag"}, default="zig"
    pool_scale : int, default=1
        Multiplier on the plan's pool size (2 gives the ``EGD2`` baseline).
    alpha : float, default=0.5
        Mahalanobis share of adaptive sampling.
    """

    sampling: str
    pool: str
    ranking: str
    direction: str = "zig"
    pool_scale: int = 1
    alpha: float = 0.5

    def __post_init__(self):
        if self.sampling not in "EAG" or len(self.sampling) != 1:
            raise ValueError(f"unknown sampling metric {self.sampling!r}")
        if self.pool not in ("O", "G"):
            raise ValueError(f"unknown pool policy {self.pool!r}")
        if self.ranking not in ("D", "C", "L", "N"):
            raise ValueError(f"unknown ranking metric {self.ranking!r}")
        if (self.pool == "O") != (self.ranking == "N"):
            raise ValueError("a single-candidate pool goes with ranking N, and only then")
        if self.direction not in ("zig", "zag"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.pool_scale < 1:
            raise ValueError("pool_scale must be >= 1")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")

    @property
    def code(self):
        scale = str(self.pool_scale) if self.pool_scale != 1 else ""
        return f"{self.sampling}{self.pool}{self.ranking}{scale}"


@dataclass(frozen=True)
class SeedingPlan:
    """Ordered passes plus the pool-size rule shared by greedy passes.

    ``refine`` optionally appends a reselection baseline after the passes:
    ``"lspp"`` (k-means++ local search) or ``"msg"`` (greedy multi-swap).
    """

    passes: tuple
    pool_rule: str = "log"
    refine: str = None
    refine_params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.passes:
            raise ValueError("a plan needs at least one pass")
        object.__setattr__(self, "passes", tuple(self.passes))
        if self.passes[0].direction != "zig":
            raise ValueError("the construction pass must run in zig order")
        if self.refine not in (None, "lspp", "msg"):
            raise ValueError(f"unknown refinement {self.refine!r}")
        pool_size(self.pool_rule, 1)

    @property
    def name(self):
        base = "-".join(p.code for p in self.passes)
        if self.refine:
            base += "+" + self.refine.upper()
        return base


def pool_size(rule, K):
    """Greedy pool size for ``K`` seeds.

    ``log``: floor(ln K) + 2, ``sqrt``: floor(sqrt K) + 2, ``linear``:
    max(2, K), ``fixed:N``: N.
    """
    if isinstance(rule, int):
        size = rule
    elif rule == "log":
        size = int(math.floor(math.log(K))) + 2 if K >= 1 else 2
    elif rule == "sqrt":
        size = int(math.floor(math.sqrt(K))) + 2
    elif rule == "linear":
        size = max(2, K)
    elif isinstance(rule, str) and rule.startswith("fixed:"):
        try:
            size = int(rule.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad pool rule {rule!r}") from None
    else:
        raise ValueError(f"unknown pool rule {rule!r}")
    if size < 1:
        raise ValueError(f"pool size must be >= 1, got {size}")
    return size


KMEANS_PRESETS = ("EON", "EGD", "EGD2", "EON-EON", "EGD-EGD", "EGD-EGC", "LSPP", "MSG")


def parse_plan(name, pool_rule="log", alpha=0.5):
    """Build a :class:`SeedingPlan` from a preset name or a pass string.

    Passes are dash-separated three-letter codes with an optional pool
    multiplier and direction, e.g. ``"EGD-EGC"``, ``"EGD2"``,
    ``"EGD-EGD@zig"``. Passes after the first default to zag order.
    ``"LSPP"`` and ``"MSG"`` are k-means++ followed by local search or
    greedy multi-swap.
    """
    key = name.strip().upper()
    if key == "LSPP":
        return SeedingPlan((PassSpec("E", "O", "N"),), pool_rule, refine="lspp")
    if key == "MSG":
        return SeedingPlan((PassSpec("E", "O", "N"),), pool_rule, refine="msg")
    passes = []
    for i, tok in enumerate(name.strip().split("-")):
        m = _TOKEN.match(tok.strip().replace("ZIG", "zig").replace("ZAG", "zag"))
        if m is None:
            raise ValueError(f"cannot parse seeding pass {tok!r} in {name!r}")
        sampling, pool, ranking, scale, direction = m.groups()
        if direction is None:
            direction = "zig" if i == 0 else "zag"
        passes.append(
            PassSpec(sampling, pool, ranking, direction, int(scale) if scale else 1, alpha)
        )
    return SeedingPlan(tuple(passes), pool_rule)


# --------------------------------------------------------------------------
# D^2 machinery


class NearestSeedCache:
    """Per-point distance to the nearest seed of an ordered seed list.

    Adding a seed costs one distance evaluation per point; removing one
    rebuilds the cache from the remaining seeds.

    Parameters
    ----------
    X : ndarray of shape (n_samples, n_features)

    dist_fn : callable, optional
        ``dist_fn(i)`` returns the squared distance from every point to
        point ``i``. Defaults to squared Euclidean distance.
    """

    def __init__(self, X, dist_fn=None, seeds=()):
        self.X = X
        self.n = X.shape[0]
        self._dist_fn = dist_fn or self._euclidean
        self.reset(seeds)

    def _euclidean(self, i):
        diff = self.X - self.X[i]
        return np.einsum("ij,ij->i", diff, diff)

    def dist(self, i):
        return self._dist_fn(i)

    def reset(self, seeds=()):
        self.seeds = []
        self.mind = np.full(self.n, np.inf)
        self.label = np.full(self.n, -1, dtype=np.intp)
        for s in seeds:
            self.add(s)

    def add(self, i, d=None):
        """Append seed ``i``; ``d`` may carry its precomputed distances."""
        if d is None:
            d = self.dist(i)
        closer = d < self.mind
        self.mind[closer] = d[closer]
        self.label[closer] = len(self.seeds)
        self.seeds.append(int(i))

    def remove(self, pos):
        """Drop the seed at list position ``pos`` and rebuild."""
        seeds = list(self.seeds)
        del seeds[pos]
        self.reset(seeds)

    @property
    def phi(self):
        return float(np.sum(self.mind)) if self.seeds else np.inf

    def weights(self):
        if not self.seeds:
            return np.ones(self.n)
        w = self.mind.copy()
        w[self.seeds] = 0.0
        return w


def d2_weights(X, seeds):
    """Squared distance of every point to its nearest seed.

    Seeds get weight 0; with no seeds every weight is 1.
    """
    X = check_points(X)
    return NearestSeedCache(X, seeds=seeds).weights()


def sample_d2(weights, rng):
    """Draw one index with probability proportional to ``weights``."""
    weights = np.asarray(weights, dtype=np.float64)
    cum = np.cumsum(weights)
    total = cum[-1] if cum.size else 0.0
    if not total > 0:
        raise SamplingError("all sampling weights are zero")
    j = int(np.searchsorted(cum, rng.random() * total, side="right"))
    if j >= weights.size or weights[j] <= 0:
        # u * total rounded onto the last breakpoint
        j = int(np.flatnonzero(weights > 0)[-1])
    return j


def sample_pool(weights, size, rng):
    """Draw up to ``size`` distinct indices proportionally to ``weights``.

    Draws are sequential without replacement; fewer than ``size`` indices
    come back only when fewer points carry positive weight.
    """
    w = np.array(weights, dtype=np.float64)
    size = min(size, int(np.count_nonzero(w > 0)))
    if size == 0:
        raise SamplingError("all sampling weights are zero")
    out = []
    for _ in range(size):
        j = sample_d2(w, rng)
        out.append(j)
        w[j] = 0.0
    return out


def phi_s(X, seeds):
    """SSE with the seed points themselves as centers."""
    X = check_points(X)
    return NearestSeedCache(X, seeds=seeds).phi


def phi_com(X, seeds):
    """SSE of every point to the centroid of the points sharing its nearest seed."""
    return sse_com(X, seeds)


def _labels_with(cache, d, pos):
    """Labels after inserting a seed with distances ``d`` at list position ``pos``."""
    label = cache.label.copy()
    if pos < len(cache.seeds):
        label[label >= pos] += 1
    # an exact tie goes to whichever seed sits earlier in the list
    take = (d < cache.mind) | ((d == cache.mind) & (pos < label))
    label[take] = pos
    return label


# --------------------------------------------------------------------------
# engine


@dataclass
class StepRecord:
    """Diagnostics for one seed choice."""

    pass_index: int
    position: int
    candidates: list
    scores: list
    winner: int
    incumbent: int = None


class SeedingEngine:
    """Executes a :class:`SeedingPlan` on one dataset with one random stream.

    Subclasses add sampling metrics (``_weights``) and ranking metrics
    (``_score``). Set ``record=True`` to keep a :class:`StepRecord` per seed
    choice in ``trace``.
    """

    sampling_metrics = ("E",)
    ranking_metrics = ("D", "C", "N")

    def __init__(self, X, K, plan, rng, record=False):
        self.X = check_points(X)
        self.n = self.X.shape[0]
        if not 1 <= K <= self.n:
            raise ValueError(f"need 1 <= K <= n, got K={K}, n={self.n}")
        for p in plan.passes:
            if p.sampling not in self.sampling_metrics:
                raise ValueError(
                    f"sampling metric {p.sampling!r} is not available in {type(self).__name__}"
                )
            if p.ranking not in self.ranking_metrics:
                raise ValueError(
                    f"ranking metric {p.ranking!r} is not available in {type(self).__name__}"
                )
        self.K = K
        self.plan = plan
        self.rng = rng
        self.record = record
        self.trace = []
        self.cache = NearestSeedCache(self.X)

    # -- hooks -------------------------------------------------------------

    def _set_base(self, base):
        """Make ``base`` the reference seed list (used on reselection)."""
        self.cache.reset(base)

    def _add_to_base(self, i):
        self.cache.add(i)

    def _weights(self, spec):
        return self.cache.weights()

    def _score(self, spec, cand, pos):
        """Lower is better."""
        d = self.cache.dist(cand)
        if spec.ranking == "D":
            return float(np.sum(np.minimum(self.cache.mind, d)))
        if spec.ranking == "C":
            labels = _labels_with(self.cache, d, pos)
            return partition_cost(self.X, labels, len(self.cache.seeds) + 1)
        raise ValueError(f"ranking {spec.ranking!r} not handled")

    # -- driver ------------------------------------------------------------

    def _draw(self, spec, base):
        w = self._weights(spec)
        w[base] = 0.0
        if not np.any(w > 0):
            # only duplicates of the seeds remain: fall back to uniform
            w = np.ones(self.n)
            w[base] = 0.0
        if spec.pool == "O" or not base:
            return sample_pool(w, 1, self.rng)
        size = pool_size(self.plan.pool_rule, self.K) * spec.pool_scale
        return sample_pool(w, size, self.rng)

    def _choose(self, spec, candidates, pos):
        if len(candidates) == 1 or spec.ranking == "N":
            scores = []
            winner = candidates[0]
        else:
            scores = [self._score(spec, c, pos) for c in candidates]
            # first minimum: ties go to the earlier candidate
            winner = candidates[int(np.argmin(scores))]
        return winner, scores

    def construct(self, spec, pass_index=0):
        seeds = []
        self._set_base([])
        for k in range(self.K):
            cands = self._draw(spec, seeds)
            winner, scores = self._choose(spec, cands, k)
            if self.record:
                self.trace.append(StepRecord(pass_index, k, cands, scores, winner))
            seeds.append(winner)
            if k + 1 < self.K:
                self._add_to_base(winner)
        return seeds

    def reselect(self, spec, seeds, pass_index=1):
        seeds = list(seeds)
        if len(seeds) != self.K:
            raise ValueError("reselection needs a complete seed set")
        order = range(self.K) if spec.direction == "zig" else range(self.K - 1, -1, -1)
        for k in order:
            incumbent = seeds[k]
            base = seeds[:k] + seeds[k + 1:]
            self._set_base(base)
            fresh = self._draw(spec, base)
            if spec.pool == "O":
                # one fresh draw replaces the incumbent unconditionally
                cands = fresh
            else:
                cands = fresh + ([incumbent] if incumbent not in fresh else [])
            winner, scores = self._choose(spec, cands, k)
            if self.record:
                self.trace.append(StepRecord(pass_index, k, cands, scores, winner, incumbent))
            seeds[k] = winner
        return seeds

    def run(self):
        passes = self.plan.passes
        seeds = self.construct(passes[0], 0)
        for i, spec in enumerate(passes[1:], start=1):
            seeds = self.reselect(spec, seeds, i)
        return np.asarray(seeds, dtype=np.intp)


def rank_candidates(X, base, candidates, metric, position=None):
    """Pick the candidate minimizing the ranking metric of ``base + [c]``.

    Parameters
    ----------
    X : array-like of shape (n_samples, n_features)

    base : sequence of int
        Seeds already fixed (the open slot excluded).

    candidates : sequence of int
        Candidate point indices; ties go to the earliest.

    metric : {"D", "C"}
        ``D`` ranks by seed-as-center SSE, ``C`` by SSE to induced centroids.

    position : int, optional
        Slot the candidate would occupy in the seed list (defaults to the
        end). Only matters for exact distance ties under ``C``.
    """
    X = check_points(X)
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidates to rank")
    base = list(base)
    pos = len(base) if position is None else position
    engine = SeedingEngine(X, max(1, len(base) + 1), SeedingPlan((PassSpec("E", "G", "D"),)), None)
    engine._set_base(base)
    spec = PassSpec("E", "G", metric)
    return engine._choose(spec, candidates, pos)[0]


def run_construction_pass(X, spec, plan, K, rng, record=False):
    """First pass of a plan: choose ``K`` seeds from scratch."""
    plan = replace(plan, passes=(spec,))
    engine = SeedingEngine(X, K, plan, check_rng(rng), record=record)
    return np.asarray(engine.construct(spec), dtype=np.intp)


def run_reselection_pass(X, seeds, spec, plan, rng, record=False):
    """Revisit every seed position once, in ``spec.direction`` order."""
    engine = SeedingEngine(X, len(seeds), plan, check_rng(rng), record=record)
    return np.asarray(engine.reselect(spec, seeds), dtype=np.intp)


def seed(X, K, plan="EGD-EGC", random_state=None, pool_rule="log"):
    """Choose ``K`` seed points according to a plan or preset name.

    Parameters
    ----------
    X : array-like of shape (n_samples, n_features)

    K : int

    plan : str or SeedingPlan, default="EGD-EGC"

    random_state : int, Generator or None

    pool_rule : str, default="log"
        Pool-size rule when ``plan`` is a string.

    Returns
    -------
    seeds : ndarray of shape (K,)
        Distinct point indices in selection order.
    """
    X = check_points(X)
    if isinstance(plan, str):
        plan = parse_plan(plan, pool_rule)
    rng = check_rng(random_state)
    seeds = SeedingEngine(X, K, plan, rng).run()
    if plan.refine == "lspp":
        seeds = local_search_pp(X, seeds, rng=rng, **plan.refine_params)
    elif plan.refine == "msg":
        seeds = multiswap_greedy(X, seeds, rng=rng, **plan.refine_params)
    return seeds


# --------------------------------------------------------------------------
# reselection baselines


def _two_nearest(X, seeds):
    d = sq_dists(X, X[seeds])
    if len(seeds) == 1:
        return np.zeros(X.shape[0], dtype=np.intp), d[:, 0], np.full(X.shape[0], np.inf)
    part = np.argpartition(d, 1, axis=1)[:, :2]
    rows = np.arange(X.shape[0])
    a, b = d[rows, part[:, 0]], d[rows, part[:, 1]]
    first = np.where(a <= b, part[:, 0], part[:, 1])
    d1 = np.minimum(a, b)
    d2 = np.maximum(a, b)
    return first, d1, d2


def swap_costs(X, seeds, cand_dist):
    """phi_S after replacing each seed in turn by a candidate.

    ``cand_dist`` holds the squared distance of every point to the candidate.
    """
    first, d1, d2 = _two_nearest(X, seeds)
    keep = np.minimum(cand_dist, d1)
    total = np.sum(keep)
    # points whose nearest seed leaves fall back to the second-nearest
    delta = np.minimum(cand_dist, d2) - keep
    return total + np.bincount(first, weights=delta, minlength=len(seeds))


def local_search_pp(X, seeds, Z=None, rng=None):
    """k-means++ local search: ``Z`` rounds of D^2-sampled single swaps.

    Each round draws a candidate by D^2 sampling, finds the seed whose
    replacement by the candidate yields the lowest phi_S, and keeps the swap
    only if phi_S strictly decreases. ``Z`` defaults to K.
    """
    X = check_points(X)
    rng = check_rng(rng)
    seeds = np.array(seeds, dtype=np.intp)
    K = len(seeds)
    Z = K if Z is None else Z
    cache = NearestSeedCache(X, seeds=seeds)
    current = cache.phi
    for _ in range(Z):
        w = cache.weights()
        if not np.any(w > 0):
            break
        c = sample_d2(w, rng)
        costs = swap_costs(X, seeds, cache.dist(c))
        i = int(np.argmin(costs))
        if costs[i] < current:
            seeds[i] = c
            cache.reset(seeds)
            current = cache.phi
    return seeds


def greedy_removal(X, seeds):
    """Position of the seed whose removal raises phi_S the least, and that rise."""
    X = check_points(X)
    seeds = np.asarray(seeds, dtype=np.intp)
    if len(seeds) < 2:
        raise ValueError("need at least two seeds to remove one")
    first, d1, d2 = _two_nearest(X, seeds)
    rise = np.bincount(first, weights=d2 - d1, minlength=len(seeds))
    pos = int(np.argmin(rise))
    return pos, float(rise[pos])


def multiswap_greedy(X, seeds, Z=None, p=None, rng=None, accept="iteration"):
    """Greedy multi-swap local search.

    Each of ``Z`` rounds adds ``p`` D^2-sampled seeds and then removes ``p``
    seeds one at a time, always the one whose removal raises phi_S the
    least. With ``accept="iteration"`` the round's result is kept only if
    phi_S strictly decreased; ``accept="swap"`` instead runs ``p`` single
    add-then-remove swaps per round, each kept only on strict improvement.
    Defaults: ``Z = K``, ``p = floor(ln K) + 2``.
    """
    if accept not in ("iteration", "swap"):
        raise ValueError("accept must be 'iteration' or 'swap'")
    X = check_points(X)
    rng = check_rng(rng)
    seeds = [int(s) for s in seeds]
    K = len(seeds)
    Z = K if Z is None else Z
    p = pool_size("log", K) if p is None else p
    current = phi_s(X, seeds)
    rounds = [(p, 1)] if accept == "iteration" else [(1, p)]
    for _ in range(Z):
        for size, repeats in rounds:
            for _ in range(repeats):
                trial = list(seeds)
                cache = NearestSeedCache(X, seeds=trial)
                for _ in range(size):
                    w = cache.weights()
                    if not np.any(w > 0):
                        break
                    c = sample_d2(w, rng)
                    cache.add(c)
                    trial.append(c)
                while len(trial) > K:
                    pos, _ = greedy_removal(X, trial)
                    del trial[pos]
                cost = phi_s(X, trial)
                if cost < current:
                    seeds, current = trial, cost
    return np.asarray(seeds, dtype=np.intp)
