from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coalesce_bench import martingale
from coalesce_bench.harness import rng as R
from coalesce_bench.harness.stats import Verdict
from coalesce_bench.martingale import MartingaleKind

even_gap = st.integers(1, 30).map(lambda k: 2 * k)


@given(even_gap, even_gap, st.sampled_from(list(MartingaleKind)))
@settings(max_examples=80, deadline=None)
def test_one_step_drifts_vanish(g1, g2, kind):
    assert martingale.exact_one_step_drift(kind, g1, g2) == Fraction(0)


def test_drift_needs_positive_even_gaps():
    with pytest.raises(ValueError):
        martingale.exact_one_step_drift("triple_product", 0, 2)
    with pytest.raises(ValueError):
        martingale.exact_one_step_drift("triple_product", 3, 2)


def test_stopped_identity():
    res = martingale.stopped_identity_check(1, 2, 30, 50_000, seed=1)
    assert res.targets == (8, 48)
    assert abs(res.product_plus_time.mean - 8) < 4 * res.product_plus_time.stderr
    assert abs(res.triple_product.mean - 48) < 4 * res.triple_product.stderr


def test_stopped_identity_at_zero_horizon_is_exact():
    res = martingale.stopped_identity_check(2, 3, 0, 100, seed=1)
    assert res.product_plus_time.mean == 24 and res.product_plus_time.stderr == 0


def test_ui_bound_small_horizon():
    ui = martingale.ui_bound_check(1, 1, 10, 200_000, seed=2)
    assert ui.bound == 8.0
    assert ui.verdict == Verdict.PASS


def test_product_variance_against_sampling():
    x, y, t = 1.0, 2.0, 0.5
    d1, d2 = martingale.brownian_gaps_at(x, y, t, R.stream_keys(0, np.arange(400_000, dtype=np.uint64)))
    emp = np.var(d1 * d2)
    assert emp == pytest.approx(martingale.product_variance(x, y, t), rel=0.03)
    assert np.cov(d1, d2)[0, 1] == pytest.approx(-t, abs=0.01)


def test_fixed_time_check():
    res = martingale.brownian_fixed_time_check(1.0, 1.0, 1.0, 100_000, seed=3)
    assert abs(res.product_plus_time.mean - 1) < 4 * res.product_plus_time.stderr
    assert abs(res.triple_product.mean - 2) < 4 * res.triple_product.stderr
    assert 0.95 < res.stderr_ratio < 1.05
