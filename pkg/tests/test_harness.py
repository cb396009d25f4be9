import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coalesce_bench.harness import parallel
from coalesce_bench.harness import rng as R
from coalesce_bench.harness.stats import (Verdict, binomial_stats, combine_verdicts, merge,
                                          one_sided_check, summarize, within_stderr)


def test_mix64_matches_python_int_version():
    z = np.array([0, 1, 2 ** 63, 2 ** 64 - 1, 12345], dtype=np.uint64)
    expect = [R.mix64_int(int(v)) for v in z]
    assert [int(v) for v in R.mix64(z)] == expect


def test_splitmix_reference_value():
    # first output of SplitMix64 seeded with 0 is mix(GOLDEN)
    assert R.mix64_int(0x9E3779B97F4A7C15) == 0xE220A8397B1DCDAF


def test_stream_keys_distinct_and_stable():
    keys = R.stream_keys(7, np.arange(10_000, dtype=np.uint64))
    assert np.unique(keys).size == keys.size
    assert int(keys[123]) == R.stream_key(7, 123)


def test_draws_do_not_depend_on_batch_composition():
    keys = R.stream_keys(3, np.arange(100, dtype=np.uint64))
    full = R.draw_uniform(keys, 5, 2)
    part = R.draw_uniform(keys[40:60], 5, 2)
    assert np.array_equal(full[40:60], part)


def test_uniform_range_and_moments():
    keys = R.stream_keys(1, np.arange(200_000, dtype=np.uint64))
    u = R.draw_uniform(keys, 0, 0)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 4 * math.sqrt(1 / 12 / u.size)


def test_normal_pair_moments():
    keys = R.stream_keys(2, np.arange(200_000, dtype=np.uint64))
    z1, z2 = R.draw_normal_pair(keys, 0)
    n = z1.size
    assert abs(z1.mean()) < 4 / math.sqrt(n)
    assert abs(z1.var() - 1) < 4 * math.sqrt(2 / n)
    assert abs(np.mean(z1 * z2)) < 4 / math.sqrt(n)


def test_exponential_mean():
    keys = R.stream_keys(4, np.arange(200_000, dtype=np.uint64))
    e = R.draw_exponential(keys, 0)
    assert e.min() > 0
    assert abs(e.mean() - 1) < 4 / math.sqrt(e.size)


@given(st.integers(0, 2 ** 64 - 1), st.integers(0, 1000), st.integers(-10 ** 6, 10 ** 6))
@settings(max_examples=50, deadline=None)
def test_field_is_pure_function_of_site(seed, t, x):
    fk = R.field_key(R.stream_keys(seed, np.arange(2, dtype=np.uint64)))
    a = R.field_u64(fk, t, np.array([x, x]))
    b = R.field_u64(fk, t, np.array([x, x]))
    assert np.array_equal(a, b)


def test_rng_stream_reproducible():
    a = R.derive_stream(9, 4)
    b = R.derive_stream(9, 4)
    assert np.array_equal(a.u64(10), b.u64(10))
    assert not np.array_equal(R.derive_stream(9, 5).u64(10), R.derive_stream(9, 4).u64(10))


def test_summarize_exact_integers():
    x = np.array([1, 2, 3, 4, 10 ** 12], dtype=np.int64)
    s = summarize(x)
    assert s.exact
    assert s.total == sum(int(v) for v in x)
    assert s.mean == pytest.approx(float(np.mean(x)))
    assert s.stderr == pytest.approx(np.std(x, ddof=1) / math.sqrt(x.size))


@given(st.lists(st.integers(-10 ** 9, 10 ** 9), min_size=2, max_size=50),
       st.lists(st.integers(-10 ** 9, 10 ** 9), min_size=2, max_size=50))
@settings(max_examples=50, deadline=None)
def test_merge_equals_summarize_of_concatenation(a, b):
    m = merge([summarize(np.array(a)), summarize(np.array(b))])
    s = summarize(np.array(a + b))
    assert (m.n, m.total, m.total_sq) == (s.n, s.total, s.total_sq)
    assert m.mean == s.mean


def test_merge_rejects_float_aggregates():
    with pytest.raises(ValueError):
        merge([summarize(np.array([0.5, 1.5]))])


def test_binomial_stats():
    s = binomial_stats(30, 100)
    assert s.mean == 0.3
    assert s.stderr == pytest.approx(math.sqrt(0.3 * 0.7 / 100))


def test_verdicts():
    s = summarize(np.array([1.0, 2.0, 3.0, 4.0]))
    assert one_sided_check(s, 100.0) == Verdict.PASS
    assert one_sided_check(s, 0.0) == Verdict.FAIL
    assert one_sided_check(s, s.mean) == Verdict.INCONCLUSIVE
    assert one_sided_check(s, 0.0, ">=") == Verdict.PASS
    assert within_stderr(s, s.mean) == Verdict.PASS
    assert within_stderr(s, 1e6) == Verdict.FAIL
    assert combine_verdicts([Verdict.PASS, Verdict.INCONCLUSIVE]) == Verdict.INCONCLUSIVE
    assert combine_verdicts([Verdict.PASS, Verdict.FAIL, Verdict.INCONCLUSIVE]) == Verdict.FAIL


def test_chunk_bounds_cover_range():
    b = parallel.chunk_bounds(20_000, 8192)
    assert b[0][0] == 0 and b[-1][1] == 20_000
    assert all(x[1] == y[0] for x, y in zip(b, b[1:]))


@pytest.mark.parametrize("threads", [1, 3, 8])
def test_concat_chunks_is_thread_independent(threads):
    def fn(lo, hi):
        keys = R.stream_keys(11, np.arange(lo, hi, dtype=np.uint64))
        return {"u": R.draw_uniform(keys, 0)}

    a = parallel.concat_chunks(fn, 20_000, 1, chunk_size=1000)["u"]
    b = parallel.concat_chunks(fn, 20_000, threads, chunk_size=3000)["u"]
    assert np.array_equal(a, b)


def test_summarize_small_examples():
    s = summarize(np.array([5, 5, 5]))
    assert (s.mean, s.stderr) == (5, 0)
    s = summarize(np.array([0, 1]))
    assert (s.mean, s.stderr) == (0.5, 0.5)
    with pytest.raises(ValueError):
        summarize(np.array([], dtype=np.int64))


def test_derive_stream_examples():
    a = R.derive_stream(42, 0).uniform(1_000_000)
    assert np.array_equal(a, R.derive_stream(42, 0).uniform(1_000_000))
    assert not np.array_equal(a[:1000], R.derive_stream(42, 1).uniform(1000))
    assert abs(a.mean() - 0.5) < 0.002


@pytest.mark.parametrize("mean,se,expect", [(3.0, 0.1, Verdict.PASS), (5.0, 0.1, Verdict.FAIL),
                                            (3.9, 0.2, Verdict.INCONCLUSIVE)])
def test_one_sided_examples(mean, se, expect):
    from coalesce_bench.harness.stats import SummaryStats
    s = SummaryStats(100, mean, se, mean - 1.96 * se, mean + 1.96 * se)
    assert one_sided_check(s, 4.0, "<=") == expect
