import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from multipass_seeding import bench
from multipass_seeding.bench import (
    RunRecord,
    aggregate,
    correlations,
    group_means,
    loglik_row_normalize,
    minmax_global,
    minmax_mean,
    paired_sign_test,
)


def test_minmax_mean_examples():
    np.testing.assert_allclose(minmax_mean([3.0, 1.0, 2.0]), [1.0, 0.0, 0.5])
    np.testing.assert_array_equal(minmax_mean([4.0, 4.0]), [0.0, 0.0])
    with pytest.raises(ValueError):
        minmax_mean([])


def test_minmax_global_examples():
    raw = [[1.0, 5.0], [2.0, 3.0]]
    np.testing.assert_allclose(minmax_global(raw, [3.0, 2.5]), [0.5, 0.375])
    np.testing.assert_array_equal(minmax_global([[2.0, 2.0]], [2.0]), [0.0])


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=8))
def test_minmax_mean_range(v):
    out = minmax_mean(v)
    assert np.all((out >= 0) & (out <= 1))
    if max(v) > min(v):
        assert out[int(np.argmin(v))] == 0 and out[int(np.argmax(v))] == 1


def test_loglik_normalization_and_groups():
    ll = [[-10.0, -5.0, -7.5], [-3.0, -3.0, -3.0], [0.0, -4.0, -1.0]]
    norm = loglik_row_normalize(ll)
    np.testing.assert_allclose(norm, [[0, 1, 0.5], [0, 0, 0], [1, 0, 0.75]])
    g = group_means(norm, ["a", "b", "a"])
    assert list(g) == ["a", "b"]
    np.testing.assert_allclose(g["a"], [0.5, 0.5, 0.625])
    np.testing.assert_allclose(g["b"], [0, 0, 0])


def test_correlations():
    p, s = correlations([1, 2, 3, 4], [2, 4, 6, 8.5])
    assert s == pytest.approx(1.0)
    assert p == pytest.approx(stats.pearsonr([1, 2, 3, 4], [2, 4, 6, 8.5])[0])
    # ties get average ranks
    assert correlations([1, 1, 2], [1, 2, 3])[1] == pytest.approx(0.8660254037844387)
    with pytest.raises(ValueError):
        correlations([1, 2], [1, 2])
    with pytest.raises(ValueError):
        correlations([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError, match="near-constant"):
        correlations([-1000.0, -1000.0 * (1 + 1e-15), -1000.0], [1, 2, 3])


def test_sign_test():
    assert paired_sign_test([0, 0, 0], [0, 0, 0]) == 1.0
    # 5 wins out of 5 non-ties
    assert paired_sign_test([0] * 5 + [1], [1] * 5 + [1]) == pytest.approx(1 / 32)
    assert paired_sign_test([1] * 5, [0] * 5) == pytest.approx(1.0)


def _record(ds, m, r, obj, seed_obj=0.0):
    return RunRecord(m, ds, r, obj, seed_obj, seed_obj, 1, 0.0, 0.0, [])


def test_aggregate_counts_and_cells():
    recs = [_record("a", m, r, float(r + i)) for i, m in enumerate("XY") for r in range(3)]
    rep = aggregate(recs, "kmeans")
    assert rep.methods == ["X", "Y"] and rep.repeats == 3
    np.testing.assert_allclose(rep.mean_objective, [[1.0, 2.0]])
    np.testing.assert_allclose(rep.mmM, [[0.0, 1.0]])
    np.testing.assert_allclose(rep.mmG, [[1 / 3, 2 / 3]])
    assert rep.correlations["a"]["X"]["seeding"] is None
    with pytest.raises(ValueError):
        aggregate(recs[:-1], "kmeans")


def test_record_round_trip():
    r = RunRecord("EGD", "d", 2, 1.5, 2.5, 3.5, 4, 0.1, 0.2, [3, 1])
    assert RunRecord.from_dict(json.loads(json.dumps(r.to_dict()))) == r
    assert "total_time" not in r.to_dict(include_timings=False)


def _two_blobs(n=500, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2)) * 0.5
    X[n // 2:] += [8.0, 0.0]
    return X.tolist()


def _config(methods, repeats=4, task="kmeans", k=2):
    return {
        "task": task,
        "methods": methods,
        "repeats": repeats,
        "seed": 5,
        "datasets": [{"id": "blobs", "points": _two_blobs(), "k": k}],
    }


def test_duplicate_methods_share_streams():
    rep = bench.run_kmeans_bench(_config(["EGD", "EGD"]))
    assert rep.methods == ["EGD", "EGD#2"]
    a, b = np.asarray(rep.mean_objective)[0]
    assert a == b


def test_adding_a_method_leaves_others_unchanged():
    a = bench.run_kmeans_bench(_config(["EGD"]), return_records=True)[1]
    b = bench.run_kmeans_bench(_config(["EON", "EGD"]), return_records=True)[1]
    sa = [r.stream for r in a]
    sb = [r.stream for r in b if r.method == "EGD"]
    assert sa == sb


def test_bench_determinism():
    cfg = _config(["EON", "EGD-EGC"])
    assert bench.run_kmeans_bench(cfg).to_json() == bench.run_kmeans_bench(cfg).to_json()


def test_egd_egc_not_worse_on_blobs():
    rep = bench.run_kmeans_bench(_config(["EON", "EGD-EGC"], repeats=20))
    eon, egc = rep.mean_objective[0]
    assert egc <= eon


def test_gmm_bench_normalization():
    rep = bench.run_gmm_bench(_config(["EON", "EGD", "GGD"], repeats=2, task="gmm"))
    row = np.asarray(rep.normalized_loglik[0])
    assert row.min() == 0.0 or np.all(row == 0)
    assert rep.better == "higher"
    assert list(rep.group_means) == ["default"]


def test_bench_rejects_bad_methods():
    with pytest.raises(ValueError, match="unknown seeding method"):
        bench.run_kmeans_bench(_config(["NOPE"]))
    with pytest.raises(ValueError, match="gmm task"):
        bench.run_kmeans_bench(_config(["AGL"]))
    with pytest.raises(ValueError):
        bench.run_kmeans_bench(dict(_config(["EGD"]), repeats=0))
    with pytest.raises(ValueError):
        bench.run_kmeans_bench(_config(["EGD"], k=600))


def test_generate_entry_noise_labels():
    entry = {"id": "m", "model": {"K": 3, "d": 2, "separation": 2.0}, "n": 300, "noise": 30}
    mix, X, labels = bench.generate_entry(entry, 0)
    assert X.shape == (300, 2)
    assert np.sum(labels == -1) == 30 and np.all(labels[:270] >= 0)
    _, X2, _ = bench.generate_entry(entry, 0)
    np.testing.assert_array_equal(X, X2)
    with pytest.raises(ValueError):
        bench.generate_entry(dict(entry, noise=300), 0)
