from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy import stats

from multipass_seeding import seeding
from multipass_seeding.seeding import (
    KMEANS_PRESETS,
    NearestSeedCache,
    PassSpec,
    SamplingError,
    SeedingPlan,
    d2_weights,
    greedy_removal,
    local_search_pp,
    multiswap_greedy,
    parse_plan,
    phi_com,
    phi_s,
    pool_size,
    rank_candidates,
    run_construction_pass,
    run_reselection_pass,
    sample_d2,
    sample_pool,
    seed,
)

from .oracles import d2_exact, partition_cost_loop, pool_distribution, sse_loop

points = hnp.arrays(
    np.float64, st.tuples(st.integers(4, 12), st.integers(1, 2)),
    elements=st.integers(-30, 30).map(lambda v: v / 3),
    unique=False,
)


def col(*v):
    return np.array(v, dtype=float).reshape(-1, 1)


# -- plans -------------------------------------------------------------------


@pytest.mark.parametrize(
    "rule,K,expected",
    [("log", 1, 2), ("log", 10, 4), ("log", 25, 5), ("sqrt", 10, 5), ("sqrt", 25, 7),
     ("linear", 1, 2), ("linear", 10, 10), ("fixed:7", 10, 7)],
)
def test_pool_size(rule, K, expected):
    assert pool_size(rule, K) == expected


@pytest.mark.parametrize("rule", ["cube", "fixed:x", "fixed:0"])
def test_pool_size_rejects(rule):
    with pytest.raises(ValueError):
        pool_size(rule, 5)


def test_presets_parse():
    for name in KMEANS_PRESETS:
        plan = parse_plan(name)
        assert plan.passes[0].direction == "zig"
    egc = parse_plan("EGD-EGC")
    assert [p.code for p in egc.passes] == ["EGD", "EGC"]
    assert egc.passes[1].direction == "zag"
    assert parse_plan("EGD2").passes[0].pool_scale == 2
    assert parse_plan("EGD-EGD@zig").passes[1].direction == "zig"
    assert parse_plan("LSPP").refine == "lspp"
    assert parse_plan("MSG").refine == "msg"


@pytest.mark.parametrize("bad", ["EOD", "EGN", "XGD", "EGD-", "EGD@zag"])
def test_parse_plan_rejects(bad):
    with pytest.raises(ValueError):
        parse_plan(bad)


def test_plan_invariants():
    with pytest.raises(ValueError):
        PassSpec("E", "O", "D")
    with pytest.raises(ValueError):
        SeedingPlan((PassSpec("E", "G", "D", "zag"),))


# -- D^2 machinery -------------------------------------------------------------


def test_d2_weights_examples():
    X = col(0, 1, 3)
    np.testing.assert_array_equal(d2_weights(X, []), [1, 1, 1])
    np.testing.assert_array_equal(d2_weights(X, [0]), [0, 1, 9])
    np.testing.assert_array_equal(d2_weights(X, [0, 1, 2]), [0, 0, 0])


@given(points, st.data())
def test_d2_weights_match_exact(X, data):
    X = X[:, :1]
    seeds = data.draw(st.lists(st.integers(0, len(X) - 1), max_size=4, unique=True))
    exact = d2_exact(X.ravel().tolist(), seeds)
    np.testing.assert_allclose(d2_weights(X, seeds), [float(w) for w in exact], rtol=1e-12)


def test_sample_d2_examples(rng):
    assert all(sample_d2([0, 1, 0], rng) == 1 for _ in range(100))
    with pytest.raises(SamplingError):
        sample_d2([0, 0], rng)


def test_sample_d2_chi_square(rng):
    w = np.array([1.0, 3.0])
    draws = np.array([sample_d2(w, rng) for _ in range(100_000)])
    counts = np.bincount(draws, minlength=2)
    assert stats.chisquare(counts, 100_000 * w / w.sum()).pvalue > 1e-6
    assert abs(counts[1] / 100_000 - 0.75) < 0.01


def test_sample_pool_exact_distribution(rng):
    w = [Fraction(1), Fraction(2), Fraction(0), Fraction(5)]
    exact = pool_distribution(w, 2)
    draws = {}
    N = 40_000
    for _ in range(N):
        key = tuple(sample_pool([float(v) for v in w], 2, rng))
        draws[key] = draws.get(key, 0) + 1
    keys = sorted(exact)
    assert set(draws) <= set(keys)
    obs = [draws.get(k, 0) for k in keys]
    exp = [float(exact[k]) * N for k in keys]
    assert stats.chisquare(obs, exp).pvalue > 1e-6


def test_sample_pool_shrinks_to_support(rng):
    assert sorted(sample_pool([0, 1, 1], 5, rng)) == [1, 2]


def test_nearest_seed_cache_add_remove(rng):
    X = rng.normal(size=(50, 2))
    cache = NearestSeedCache(X)
    for s in (3, 17, 40):
        cache.add(s)
    assert cache.phi == pytest.approx(sse_loop(X, X[[3, 17, 40]]))
    cache.remove(1)
    assert cache.seeds == [3, 40]
    assert cache.phi == pytest.approx(sse_loop(X, X[[3, 40]]))


# -- ranking ---------------------------------------------------------------------


def test_rank_candidates_examples():
    X = col(0, 1, 10)
    # phi_S: {0,1} leaves 81, {0,10} leaves 1
    assert rank_candidates(X, [0], [1, 2], "D") == 2
    assert rank_candidates(X, [0], [1], "D") == 1
    # one seed: phi_COM is the total variance whatever the candidate
    assert rank_candidates(X, [], [2, 1, 0], "C") == 2


@given(points, st.data())
def test_rank_candidates_match_oracles(X, data):
    n = len(X)
    base = data.draw(st.lists(st.integers(0, n - 1), max_size=3, unique=True))
    rest = [i for i in range(n) if i not in base]
    cands = data.draw(st.lists(st.sampled_from(rest), min_size=1, max_size=4, unique=True))
    s_scores = [sse_loop(X, X[base + [c]]) for c in cands]
    c_scores = [partition_cost_loop(X, base + [c]) for c in cands]
    win_d = rank_candidates(X, base, cands, "D")
    win_c = rank_candidates(X, base, cands, "C")
    assert s_scores[cands.index(win_d)] <= min(s_scores) + 1e-9
    assert c_scores[cands.index(win_c)] <= min(c_scores) + 1e-9


def test_phi_functions():
    X = col(0, 1, 10, 11)
    assert phi_s(X, [0, 2]) == 2.0
    assert phi_com(X, [0, 2]) == 1.0


# -- construction ----------------------------------------------------------------


def test_construction_k_equals_n(rng):
    X = rng.normal(size=(7, 2))
    for name in ("EON", "EGD", "EGD-EGC"):
        assert sorted(seed(X, 7, name, rng)) == list(range(7))


def test_construction_k1_uniform(rng):
    X = rng.normal(size=(5, 1))
    firsts = [seed(X, 1, "EON", rng)[0] for _ in range(20_000)]
    counts = np.bincount(firsts, minlength=5)
    assert stats.chisquare(counts).pvalue > 1e-6


def _split_probability_eon(pts):
    """Exact P(one seed per blob) for EON with K=2 on the 4-point instance."""
    total = Fraction(0)
    for first in range(4):
        w = d2_exact(pts, [first])
        for second, p in pool_distribution(w, 1).items():
            if (first < 2) != (second[0] < 2):
                total += Fraction(1, 4) * p
    return total


def test_two_blob_construction(blobs):
    exact = _split_probability_eon([0, 0.1, 100, 100.1])
    assert exact >= Fraction(99, 100)
    hits = 0
    N = 10_000
    for r in range(N):
        s = run_construction_pass(blobs, PassSpec("E", "O", "N"), parse_plan("EON"), 2,
                                  np.random.default_rng(r))
        hits += (s[0] < 2) != (s[1] < 2)
    assert hits / N >= 0.99
    # binomial 6-sigma band around the exact value
    sd = np.sqrt(float(exact) * (1 - float(exact)) / N)
    assert abs(hits / N - float(exact)) <= 6 * sd + 1e-4


def _fix_probability_zag_egd(pts, seeds, l):
    """Exact P(split fixed) for one zag EGD reselection pass (pool l + incumbent)."""
    def phi(S):
        return sum(min((Fraction(str(p)) - Fraction(str(pts[s]))) ** 2 for s in S) for p in pts)

    def step(seeds, k):
        base = seeds[:k] + seeds[k + 1:]
        w = d2_exact(pts, base)
        out = {}
        for pool, p in pool_distribution(w, l).items():
            cands = list(pool) + ([seeds[k]] if seeds[k] not in pool else [])
            scores = [phi(base[:k] + [c] + base[k:]) for c in cands]
            win = cands[scores.index(min(scores))]
            new = list(seeds)
            new[k] = win
            out[tuple(new)] = out.get(tuple(new), 0) + p
        return out

    dist = {tuple(seeds): Fraction(1)}
    for k in reversed(range(len(seeds))):
        nxt = {}
        for s, p in dist.items():
            for s2, q in step(list(s), k).items():
                nxt[s2] = nxt.get(s2, 0) + p * q
        dist = nxt
    return sum(p for s, p in dist.items() if (s[0] < 2) != (s[1] < 2))


def test_two_blob_reselection_fixes_bad_split(blobs):
    spec = PassSpec("E", "G", "D", "zag")
    plan = SeedingPlan((PassSpec("E", "G", "D"), spec))
    exact = _fix_probability_zag_egd([0, 0.1, 100, 100.1], [0, 1], pool_size("log", 2))
    assert exact >= Fraction(9, 10)
    N = 10_000
    hits = 0
    for r in range(N):
        s = run_reselection_pass(blobs, [0, 1], spec, plan, np.random.default_rng(r))
        hits += (s[0] < 2) != (s[1] < 2)
    assert hits / N >= 0.9
    sd = np.sqrt(float(exact) * (1 - float(exact)) / N)
    assert abs(hits / N - float(exact)) <= 6 * sd + 1e-4


# -- reselection -----------------------------------------------------------------


def test_eon_reselection_fixed_point(monkeypatch, rng):
    X = rng.normal(size=(30, 2))
    start = [4, 9, 22, 13]
    order = iter(reversed(start))

    def redraw_incumbent(weights, size, rng):
        s = next(order)
        assert weights[s] > 0
        return [s]

    monkeypatch.setattr(seeding, "sample_pool", redraw_incumbent)
    spec = PassSpec("E", "O", "N", "zag")
    plan = SeedingPlan((PassSpec("E", "O", "N"), spec))
    assert list(run_reselection_pass(X, start, spec, plan, rng)) == start


def test_eon_reselection_accepts_fresh_draw_unconditionally(rng):
    X = rng.normal(size=(30, 2))
    spec = PassSpec("E", "O", "N", "zag")
    plan = SeedingPlan((PassSpec("E", "O", "N"), spec))
    from multipass_seeding.seeding import SeedingEngine

    eng = SeedingEngine(X, 4, plan, rng, record=True)
    eng.reselect(spec, [0, 1, 2, 3])
    assert all(len(t.candidates) == 1 and t.winner == t.candidates[0] for t in eng.trace)


@pytest.mark.parametrize("name", ["EGD", "EGD2", "EGD-EGD", "EGD-EGC", "EGD-EGD@zig"])
def test_greedy_steps_pick_the_best_candidate(name, rng):
    from multipass_seeding.seeding import SeedingEngine

    X = rng.normal(size=(60, 2))
    plan = parse_plan(name)
    eng = SeedingEngine(X, 6, plan, rng, record=True)
    seeds = eng.run()
    assert len(set(seeds.tolist())) == 6
    snapshot = None
    for t in eng.trace:
        if t.scores:
            assert t.scores[t.candidates.index(t.winner)] == min(t.scores)
        if t.incumbent is not None:
            # incumbent last, so a reselection step never worsens its metric
            assert t.candidates[-1] == t.incumbent or t.incumbent in t.candidates[:-1]
            inc_score = t.scores[t.candidates.index(t.incumbent)]
            assert t.scores[t.candidates.index(t.winner)] <= inc_score
        snapshot = t
    assert snapshot is not None


def test_reselection_scores_are_the_declared_metrics(rng):
    from multipass_seeding.seeding import SeedingEngine

    X = rng.normal(size=(25, 2))
    plan = parse_plan("EGD-EGC")
    eng = SeedingEngine(X, 4, plan, rng, record=True)
    seeds = list(eng.construct(plan.passes[0]))
    for t in eng.trace:
        if t.scores:
            base = seeds[:t.position]
            for c, sc in zip(t.candidates, t.scores):
                assert sc == pytest.approx(sse_loop(X, X[base + [c]]))
    eng.trace.clear()
    final = eng.reselect(plan.passes[1], seeds)
    cur = list(seeds)
    for t in eng.trace:
        base = cur[:t.position] + cur[t.position + 1:]
        for c, sc in zip(t.candidates, t.scores):
            trial = base[:t.position] + [c] + base[t.position:]
            assert sc == pytest.approx(partition_cost_loop(X, trial), rel=1e-9)
        cur[t.position] = t.winner
    assert cur == list(final)


# -- whole plans -------------------------------------------------------------------


@pytest.mark.parametrize("name", KMEANS_PRESETS)
def test_presets_return_distinct_seeds(name, rng):
    X = rng.normal(size=(80, 3))
    s = seed(X, 7, name, 3)
    assert len(s) == 7 and len(set(s.tolist())) == 7
    assert s.min() >= 0 and s.max() < 80


@pytest.mark.parametrize("name", KMEANS_PRESETS)
def test_seed_deterministic(name, rng):
    X = rng.normal(size=(60, 2))
    np.testing.assert_array_equal(seed(X, 5, name, 42), seed(X, 5, name, 42))


def test_seed_with_duplicate_points():
    X = np.zeros((6, 2))
    X[3:] = 1.0
    for name in KMEANS_PRESETS:
        s = seed(X, 4, name, 0)
        assert len(set(s.tolist())) == 4


def test_seed_rejects_k_out_of_range(rng):
    X = rng.normal(size=(5, 2))
    with pytest.raises(ValueError):
        seed(X, 6, "EON", 0)
    with pytest.raises(ValueError):
        seed(X, 0, "EON", 0)


# -- baselines -------------------------------------------------------------------


def test_local_search_z0_identity(rng):
    X = rng.normal(size=(20, 2))
    assert list(local_search_pp(X, [1, 5, 7], Z=0, rng=rng)) == [1, 5, 7]


@given(points, st.integers(0, 2**31))
def test_local_search_matches_bruteforce_swap(X, s):
    n = len(X)
    K = min(3, n - 1)
    seeds = list(range(K))
    drawn = []

    real = seeding.sample_d2

    def spy(w, rng):
        j = real(w, rng)
        drawn.append(j)
        return j

    seeding.sample_d2 = spy
    try:
        out = local_search_pp(X, seeds, Z=1, rng=np.random.default_rng(s))
    finally:
        seeding.sample_d2 = real
    if not drawn:
        assert list(out) == seeds
        return
    c = drawn[0]
    costs = [sse_loop(X, X[seeds[:i] + [c] + seeds[i + 1:]]) for i in range(K)]
    i = int(np.argmin(costs))
    if costs[i] < sse_loop(X, X[seeds]) - 1e-9:
        assert phi_s(X, out) == pytest.approx(costs[i])
    else:
        assert phi_s(X, out) == pytest.approx(sse_loop(X, X[seeds]))


def test_local_search_monotone(rng):
    X = rng.normal(size=(200, 2))
    seeds = seed(X, 6, "EON", rng)
    prev = phi_s(X, seeds)
    for _ in range(10):
        seeds = local_search_pp(X, seeds, Z=1, rng=rng)
        cur = phi_s(X, seeds)
        assert cur <= prev
        prev = cur


@given(points, st.data())
def test_greedy_removal_matches_bruteforce(X, data):
    n = len(X)
    seeds = data.draw(st.lists(st.integers(0, n - 1), min_size=2, max_size=4, unique=True))
    base = sse_loop(X, X[seeds])
    rises = [sse_loop(X, X[seeds[:i] + seeds[i + 1:]]) - base for i in range(len(seeds))]
    pos, rise = greedy_removal(X, seeds)
    assert rise == pytest.approx(min(rises), abs=1e-9)
    assert rises[pos] == pytest.approx(min(rises), abs=1e-9)


def test_multiswap_z0_identity(rng):
    X = rng.normal(size=(20, 2))
    assert list(multiswap_greedy(X, [1, 5, 7], Z=0, rng=rng)) == [1, 5, 7]


@pytest.mark.parametrize("accept", ["iteration", "swap"])
def test_multiswap_monotone(accept, rng):
    X = rng.normal(size=(150, 2))
    seeds = seed(X, 5, "EON", rng)
    prev = phi_s(X, seeds)
    for _ in range(6):
        seeds = multiswap_greedy(X, seeds, Z=1, rng=rng, accept=accept)
        assert len(set(seeds.tolist())) == 5
        cur = phi_s(X, seeds)
        assert cur <= prev
        prev = cur


def test_multiswap_rejects_unknown_accept(rng):
    with pytest.raises(ValueError):
        multiswap_greedy(np.zeros((3, 1)), [0], rng=rng, accept="sometimes")
