"""Acceptance criteria 1-11 at their stated tolerances.

Every criterion uses its own number as the master seed.
"""

import contextlib
import io
import itertools
import math
import re
import time
from fractions import Fraction

import numpy as np
import pytest

from coalesce_bench import cli, collision, counting, lyapunov, martingale
from coalesce_bench.collision import CollisionQuery
from coalesce_bench.harness import rng as R
from coalesce_bench.harness.stats import Verdict, binomial_stats, summarize
from coalesce_bench.martingale import MartingaleKind
from coalesce_bench.models import (build_poisson_forest, howard_increment_pmf,
                                   howard_increments, increment_second_moment, poisson, sigma0)


@pytest.mark.criterion(1)
def test_criterion_01_ssrw_corrected_expectation(criterion):
    start = time.perf_counter()
    rows = []
    for i, j in [(1, 1), (1, 2), (2, 3)]:
        q = CollisionQuery.from_gaps("ssrw", i, j, horizon=100, reps=100_000, master_seed=1)
        s = collision.estimate_collision_expectation(q).corrected
        rows.append((4 * i * j, s))
        criterion(f"({i},{j}) {s.mean:.4f}+-{s.stderr:.4f} vs {4 * i * j}")
    elapsed = time.perf_counter() - start
    criterion(f"{elapsed:.1f}s")
    for target, s in rows:
        assert abs(s.mean - target) <= 3 * s.stderr
        assert s.stderr < 0.02 * target
    assert elapsed < 60


@pytest.mark.criterion(2)
def test_criterion_02_raw_censored_mean(criterion):
    start = time.perf_counter()
    q = CollisionQuery.from_gaps("ssrw", 1, 1, horizon=10 ** 7, reps=100_000, master_seed=2)
    est = collision.estimate_collision_expectation(q)
    elapsed = time.perf_counter() - start
    criterion(f"raw mean {est.raw.mean:.4f} (target 4, +-5%), censored fraction "
              f"{est.censored_fraction:.2e}, {elapsed:.1f}s")
    assert abs(est.raw.mean - 4) <= 0.05 * 4
    assert est.raw.censored == int(round(est.censored_fraction * q.reps))
    assert elapsed < 300


@pytest.mark.criterion(3)
def test_criterion_03_max_gap_at_collision(criterion):
    s = collision.max_gap_at_collision(1, 2, 100_000, seed=3)
    criterion(f"{s.mean:.4f}+-{s.stderr:.4f} vs 6, censored {s.censored}")
    assert abs(s.mean - 6) <= 3 * s.stderr


@pytest.mark.criterion(4)
def test_criterion_04_exact_enumerations(criterion):
    start = time.perf_counter()
    gaps20 = [2 * k for k in range(1, 21)]
    drifts = {lyapunov.exact_drift_scheidegger(a, b) for a in gaps20 for b in gaps20}
    gaps10 = [2 * k for k in range(1, 11)]
    mart = {martingale.exact_one_step_drift(kind, a, b)
            for kind in MartingaleKind for a in gaps10 for b in gaps10}
    elapsed = time.perf_counter() - start
    criterion(f"scheidegger drifts {sorted(drifts)}, martingale drifts {sorted(mart)}, "
              f"{elapsed * 1000:.1f}ms")
    assert drifts == {Fraction(-1)}
    assert mart == {Fraction(0)}
    assert elapsed < 1


@pytest.mark.criterion(5)
def test_criterion_05_brownian_fixed_time(criterion):
    start = time.perf_counter()
    results = []
    for x, y, t in [(1.0, 1.0, 1.0), (1.0, 2.0, 0.5)]:
        res = martingale.brownian_fixed_time_check(x, y, t, 1_000_000, seed=5)
        a, b = res.product_plus_time, res.triple_product
        results.append((res, a, b))
        criterion(f"({x},{y},{t}) D1D2+t {a.mean:.4f}+-{a.stderr:.4f} vs {res.targets[0]}, "
                  f"D1D2(D1+D2) {b.mean:.4f}+-{b.stderr:.4f} vs {res.targets[1]}")
    elapsed = time.perf_counter() - start
    criterion(f"{elapsed:.1f}s")
    for res, a, b in results:
        assert abs(a.mean - res.targets[0]) <= 3 * a.stderr
        assert abs(b.mean - res.targets[1]) <= 3 * b.stderr
    assert elapsed < 30


@pytest.mark.criterion(6)
def test_criterion_06_brownian_collision(criterion):
    start = time.perf_counter()
    res = collision.brownian_collision_expectation(1.0, 1.0, 1e-4, 100_000, seed=6)
    elapsed = time.perf_counter() - start
    coarse, fine = res.table
    criterion(f"dt=1e-4 {coarse.stats.mean:.4f}+-{coarse.stats.stderr:.4f}, "
              f"dt=2.5e-5 {fine.stats.mean:.4f}+-{fine.stats.stderr:.4f}, "
              f"refinement {res.refinement_verdict.value}, {elapsed:.1f}s")
    assert 0.97 <= res.stats.mean <= 1.03
    assert res.refinement_verdict == Verdict.PASS
    assert elapsed < 600


@pytest.mark.criterion(7)
def test_criterion_07_howard_increment_law(criterion):
    for p in (0.3, 0.5, 0.7):
        inc = howard_increments(p, 1_000_000, seed=7)
        var = summarize(inc * inc, median=False)    # the increment is symmetric
        target = sigma0(p) ** 2
        pmf = howard_increment_pmf(p)
        worst = 0.0
        for k in range(-5, 6):
            b = binomial_stats(int((inc == k).sum()), inc.size)
            se = math.sqrt(pmf[k] * (1 - pmf[k]) / inc.size)
            worst = max(worst, abs(b.mean - pmf[k]) / se)
        criterion(f"p={p}: var {var.mean:.4f}+-{var.stderr:.4f} vs {target:.4f}, "
                  f"worst bin {worst:.2f} se")
        assert abs(var.mean - target) <= 3 * var.stderr
        assert worst <= 4
    assert sigma0(0.5) ** 2 == pytest.approx(10 / 9)


@pytest.mark.criterion(8)
def test_criterion_08_howard_drift_and_hit_probability(criterion):
    e2 = increment_second_moment(0.5)
    grid = [(a, b) for a in (1, 2, 3, 5, 8) for b in (1, 2, 3, 5, 8)] + [(20, 20), (50, 50)]
    curve = lyapunov.howard_drift_curve(0.5, grid, 100_000, seed=8)
    far = curve.rows[-1]
    criterion(f"(50,50) drift {far.stats.mean:.4f}+-{far.stats.stderr:.4f} vs {-e2:.4f}")
    assert far.gaps == (50, 50)
    assert abs(far.stats.mean + e2) <= 3 * far.stats.stderr
    worst_upper = max(r.stats.mean - 3 * r.stats.stderr for r in curve.rows)
    criterion(f"max drift - 3se {worst_upper:.4f} vs 4E(I^2) = {4 * e2:.4f}")
    for r in curve.rows:
        assert r.stats.mean <= 4 * e2 + 3 * r.stats.stderr
    chain = lyapunov.howard_chain(0.5, 2)
    lowest = 1.0
    for g in grid:
        if min(g) <= 2:
            hp = lyapunov.estimate_hit_prob(chain, lyapunov.state_from_gaps(*g), 100_000, seed=8)
            lowest = min(lowest, hp.mean)
            assert hp.mean >= 0.03125 - 3 * hp.stderr
    criterion(f"lowest one-step coalescence frequency {lowest:.4f} vs 0.03125")


@pytest.mark.criterion(9)
def test_criterion_09_poisson_tree(criterion):
    third = Fraction(1, 12)
    # disjoint tubes: exactly -1/12
    for g1, g2 in itertools.product([Fraction(1), Fraction(3, 2), Fraction(2), Fraction(3)], repeat=2):
        assert lyapunov.generator_V_poisson(Fraction(0), g1, g1 + g2).gv_value == -third
    # grid over [1/2, 3]^2
    grid = np.linspace(0.5, 3.0, 26)
    worst = max(float(lyapunov.generator_V_poisson(0.0, a, a + b).gv_value)
                for a in grid for b in grid)
    criterion(f"max GV on grid {worst:.6f}")
    assert worst <= -1 / 12 + 1e-9
    # Monte Carlo oracle on 20 states
    mc_fail = 0
    for a, b in itertools.product([0.5, 1.0, 1.5, 2.5], [0.5, 0.8, 1.2, 2.0, 3.0]):
        rep = lyapunov.generator_V_poisson(0.0, a, a + b, reps=100_000, seed=9)
        mc_fail += rep.mc_verdict != Verdict.PASS
    criterion(f"MC oracle disagreements {mc_fail}/20")
    assert mc_fail == 0
    # entrance time against 12 V on a 3x3 grid
    verdicts = []
    for a, b in itertools.product([0.5, 1.0, 2.0], repeat=2):
        res = collision.poisson_triple_entrance(0.0, a, a + b, 10_000, seed=9)
        verdicts.append(res.verdict)
        assert res.verdict == Verdict.PASS, (a, b, res.stats.mean, res.bound)
    criterion(f"E(tau) <= 12V on 3x3 grid: {sum(v == Verdict.PASS for v in verdicts)}/9 pass")
    ks = collision.forest_jump_ks(0.0, 0.75, 2.5, 10_000, seed=9)
    criterion(f"KS displacement p={ks.displacement_pvalue:.3f} (wait p={ks.wait_pvalue:.3f})")
    assert ks.n_forest == 10_000
    assert ks.displacement_pvalue > 0.01


@pytest.mark.criterion(10)
@pytest.mark.parametrize("model", ["scheidegger", "howard"])
def test_criterion_10_b_curves(criterion, model):
    start = time.perf_counter()
    curve = counting.b_curve(model, 3, [0.4, 0.2, 0.1, 0.05], 10_000, 1.0, 10_000, seed=10)
    elapsed = time.perf_counter() - start
    pts = ", ".join(f"eps={p.epsilon}: {p.p_hat:.4f}" + (f" (env {p.markov_envelope:.4f})"
                                                         if p.markov_envelope is not None else "")
                    for p in curve.points)
    criterion(f"{model}: {pts}; {elapsed:.1f}s")
    assert curve.monotone_verdict == Verdict.PASS
    if model == "scheidegger":
        for p in curve.points:
            assert p.p_hat <= p.markov_envelope + 3 * p.stderr
    assert elapsed < 60


@pytest.mark.criterion(11)
def test_criterion_11_invariants(criterion):
    # non-crossing: 10^4 path pairs per model
    lattice_violations = {}
    for model in ("scheidegger", "howard"):
        paths = counting.lattice_path_pairs(model, 10_000, 100, seed=11)
        lattice_violations[model] = counting.noncrossing_violations(paths)
    span = 6.0
    forest = build_poisson_forest((0.0, 10_000 * span, 0.0, 12.0), R.derive_stream(11, 0))
    starts = [(k * span + 1.5, k * span + 1.5 + 0.5 + (k % 7) * 0.4) for k in range(10_000)]
    pairs = counting.forest_path_pairs(forest, starts)
    forest_violations = 0
    for a, b in pairs:
        d = np.sign(a - b)
        forest_violations += bool(np.any(d > 0) and np.any(d < 0))
    criterion(f"non-crossing violations {lattice_violations}, poisson {forest_violations}"
              f"/{len(pairs)}")
    assert lattice_violations == {"scheidegger": 0, "howard": 0}
    assert len(pairs) == 10_000 and forest_violations == 0

    # Poisson post-jump invariant over 10^5 jumps
    rng = np.random.default_rng(11)
    n = 100_000
    gaps = rng.uniform(0.5, 3.0, size=(n, 2))
    gaps[rng.random((n, 2)) < 0.2] = 0.0
    gaps[(gaps == 0).all(axis=1), 1] = 1.0
    u = np.zeros(n)
    v = u + gaps[:, 0]
    w = v + gaps[:, 1]
    keys = R.stream_keys(11, np.arange(n, dtype=np.uint64))
    nu, nv, nw, _, _ = poisson.jump_batch(u, v, w, keys, np.uint64(0))
    g1, g2 = nv - nu, nw - nv
    bad = ~(((g1 == 0) | (g1 >= 0.5 - 1e-12)) & ((g2 == 0) | (g2 >= 0.5 - 1e-12)))
    bad |= (gaps[:, 0] == 0) & (g1 != 0)
    bad |= (gaps[:, 1] == 0) & (g2 != 0)
    criterion(f"post-jump gap violations {int(bad.sum())}/{n}")
    assert not bad.any()

    # bit-identical output across --threads 1 and --threads 8
    outputs = []
    for threads in ("1", "8"):
        doc = []
        for argv in (["collision", "--model", "ssrw", "--gaps", "2,2", "--reps", "20000"],
                     ["eta", "--model", "howard", "--reps", "9000", "--n", "400"],
                     ["brownian", "--reps", "9000", "--dt", "1e-3"]):
            buf = io.StringIO()
            with contextlib.redirect_stdout(buf):
                cli.dispatch(argv + ["--seed", "11", "--threads", threads])
            doc.append(re.sub(r'"elapsed_ms": [^,]*,', "", buf.getvalue()))
        outputs.append(doc)
    same = outputs[0] == outputs[1]
    criterion(f"threads 1 vs 8 identical: {same}")
    assert same
