import itertools

import numpy as np
import pytest

from coalesce_bench import collision
from coalesce_bench.collision import CollisionQuery
from coalesce_bench.harness.stats import Verdict


def test_query_validation():
    with pytest.raises(ValueError):
        CollisionQuery("ssrw", (0, 1, 3))
    with pytest.raises(ValueError):
        CollisionQuery("scheidegger", (1, 3, 5))
    with pytest.raises(ValueError):
        CollisionQuery("ssrw", (2, 0, 4))
    with pytest.raises(ValueError):
        CollisionQuery("poisson", (0.0, 0.2, 1.0))
    with pytest.raises(ValueError):
        CollisionQuery("ssrw", (-2, 0, 2), reps=0)
    with pytest.raises(ValueError):
        CollisionQuery("nope", (-2, 0, 2))


def test_default_horizons():
    assert CollisionQuery("ssrw", (-2, 0, 4)).effective_horizon == 8000
    assert CollisionQuery("brownian", (-1.0, 0.0, 2.0)).effective_horizon == 8.0
    assert CollisionQuery("poisson", (0.0, 1.0, 2.0)).effective_horizon == 200.0


def test_single_replicate_equals_batch_entry():
    q = CollisionQuery("howard", (0, 3, 6), reps=50, master_seed=4)
    batch = collision.run_collisions(q)
    for r in (0, 17, 49):
        s = collision.run_first_collision(q, r)
        assert s.tau == batch["tau"][r]
        assert (s.stopped_gaps.g1, s.stopped_gaps.g2) == (batch["g1"][r], batch["g2"][r])


@pytest.mark.parametrize("model", ["ssrw", "scheidegger", "howard"])
def test_trace_reproduces_batch_engine(model):
    q = CollisionQuery(model, (-2, 0, 4), reps=40, master_seed=1)
    for r in range(0, 40, 7):
        s = collision.run_first_collision(q, r, trace=True)
        assert len(s.path) - 1 == s.tau
        last = s.path[-1]
        if not s.censored:
            assert last[0] == last[1] or last[1] == last[2]
        assert (last[1] - last[0], last[2] - last[1]) == (s.stopped_gaps.g1, s.stopped_gaps.g2)


def test_coincident_starts():
    q = CollisionQuery("scheidegger", (0, 0, 4), reps=10)
    assert (collision.run_collisions(q)["tau"] == 0).all()
    q = CollisionQuery("scheidegger", (0, 0, 4), reps=200, first_step=True)
    assert (collision.run_collisions(q)["tau"] >= 1).all()


def test_horizon_corrected_value():
    q = CollisionQuery("ssrw", (-2, 0, 2), horizon=3, reps=100, master_seed=2)
    r = collision.run_collisions(q)
    s = collision.run_first_collision(q, 5)
    assert collision.horizon_corrected_tau(s) == collision.corrected_values(r)[5]
    with pytest.raises(ValueError):
        collision.horizon_corrected_tau(collision.run_first_collision(
            CollisionQuery("howard", (0, 2, 4), reps=1), 0))


def test_corrected_estimator_is_unbiased_at_short_horizon():
    # E[tau ^ n + D1 D2] = 4ij for any n: product-plus-time martingale
    q = CollisionQuery.from_gaps("ssrw", 1, 2, horizon=5, reps=50_000, master_seed=3)
    est = collision.estimate_collision_expectation(q)
    assert est.target == 8
    assert collision.within_target(est) == Verdict.PASS
    assert est.censored_fraction > 0.2   # the correction is doing real work


def test_all_censored_is_inconclusive():
    q = CollisionQuery("howard", (0, 40, 80), horizon=1, reps=100)
    assert collision.estimate_collision_expectation(q).verdict == Verdict.INCONCLUSIVE


def test_scheidegger_mean_matches_gap_product():
    q = CollisionQuery("scheidegger", (0, 2, 4), reps=20_000, master_seed=5)
    est = collision.estimate_collision_expectation(q)
    assert est.censored_fraction < 0.01
    assert abs(est.raw.mean - 4) < 4 * est.raw.stderr


def test_howard_envelope_constants():
    env = collision.howard_lyapunov_envelope(0.5, 2)
    assert env.c1 == pytest.approx(256.0)
    assert env.c2 == pytest.approx(1.8)
    assert env(2, 3) == pytest.approx(256 + 1.8 * 6)


def test_fit_envelope_covers_upper_ends():
    gaps = [(1, 1), (2, 2), (3, 3)]
    means = [2.0, 5.0, 10.0]
    ses = [0.1, 0.1, 0.1]
    env = collision.fit_envelope(gaps, means, ses)
    for (g1, g2), m, s in zip(gaps, means, ses):
        assert env(g1, g2) >= m + 1.96 * s - 1e-12


def test_fitted_envelope_grids_must_be_disjoint():
    with pytest.raises(ValueError):
        collision.fitted_howard_envelope([(1, 1)], [(1, 1)], 10)


def test_poisson_entrance_below_bound():
    res = collision.poisson_triple_entrance(0.0, 1.0, 2.0, 5000, seed=1)
    assert res.bound == 12.0
    assert res.verdict == Verdict.PASS
    assert all(t.verdict == Verdict.PASS for t in res.tail)


def test_forest_and_jump_process_agree():
    res = collision.poisson_forest_cross_check(0.0, 0.75, 1.5, 2000, seed=2)
    assert res.verdict == Verdict.PASS


def test_max_gap_requires_positive_gaps():
    with pytest.raises(ValueError):
        collision.max_gap_at_collision(0, 1, 10)
    s = collision.max_gap_at_collision(1, 1, 2000, seed=1)
    assert s.mean >= 2


def test_corrected_mean_does_not_depend_on_horizon():
    ests = []
    for n in (1, 10, 100):
        q = CollisionQuery.from_gaps("ssrw", 1, 1, horizon=n, reps=100_000, master_seed=12)
        ests.append(collision.estimate_collision_expectation(q).corrected)
    for a, b in itertools.combinations(ests, 2):
        assert a.ci95_low <= b.ci95_high and b.ci95_low <= a.ci95_high


@pytest.mark.parametrize("model,starts", [("ssrw", (-2, 0, 4)), ("howard", (0, 2, 5)),
                                          ("scheidegger", (0, 2, 6)), ("brownian", (-1.0, 0.0, 1.0)),
                                          ("poisson", (0.0, 1.0, 1.5))])
def test_which_pair_met_is_none_iff_censored(model, starts):
    q = CollisionQuery(model, starts, horizon=20, reps=3000, master_seed=1, dt=1e-2)
    r = collision.run_collisions(q)
    assert np.array_equal(r["which"] == 0, r["censored"])
    met = ~r["censored"]
    assert np.all((r["g1"][met] == 0) == ((r["which"][met] & 1) == 1))
    assert np.all((r["g2"][met] == 0) == ((r["which"][met] & 2) == 2))


def test_fitted_howard_envelope_covers_held_out_gaps():
    train = [(1, 1), (2, 2), (1, 4), (3, 3), (2, 6)]
    res = collision.fitted_howard_envelope(train, [(5, 5)], 3000, seed=2)
    assert res.verdict == Verdict.PASS
    assert res.envelope.c2 > 0
