"""Command-line front end: one subcommand per verification suite.

Every run prints one JSON document (or CSV table) holding a manifest and a
list of result records.  Exit codes: 0 all checks pass, 1 a check failed,
2 usage or parameter error, 3 inconclusive.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
import time
from fractions import Fraction

import numpy as np

from . import __version__
from . import collision, counting, lyapunov, martingale
from .harness.stats import (SummaryStats, Verdict, binomial_stats, combine_verdicts,
                            one_sided_check, summarize, within_stderr)
from .models import howard, lattice, poisson

EXIT_CODES = {Verdict.PASS: 0, Verdict.FAIL: 1, Verdict.INCONCLUSIVE: 3}
EXIT_USAGE = 2

CSV_COLUMNS = ["name", "params", "n", "mean", "stderr", "ci95_low", "ci95_high",
               "censored", "bound", "verdict"]

# parameters that affect scheduling or output only, never the numbers
_NOT_IN_MANIFEST = ("threads", "out", "format", "handler")


class UsageError(Exception):
    pass


# -- serialization -------------------------------------------------------------

def _fmt_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        return "null"
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def to_json(obj) -> str:
    """JSON with every float written to 17 significant digits."""
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, Fraction):
        return json.dumps(str(obj))
    if isinstance(obj, Verdict):
        return json.dumps(obj.value)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {to_json(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(to_json(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _cell(v) -> str:
    if isinstance(v, (dict, list, tuple)):
        return to_json(v)
    if isinstance(v, Verdict):
        return v.value
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return _fmt_float(float(v)).replace("null", "")
    return str(v)


def to_csv(doc: dict) -> str:
    buf = io.StringIO()
    buf.write("# manifest: " + to_json(doc["manifest"]) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in doc["results"]:
        ci = rec.get("ci95") or [None, None]
        row = dict(rec, ci95_low=ci[0], ci95_high=ci[1])
        w.writerow([_cell(row.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def record(name: str, params: dict, stats: SummaryStats | None = None, bound=None,
           verdict: Verdict | None = None, **extra) -> dict:
    rec = {"name": name, "params": params,
           "n": stats.n if stats else None,
           "mean": stats.mean if stats else None,
           "stderr": stats.stderr if stats else None,
           "ci95": [stats.ci95_low, stats.ci95_high] if stats else None,
           "censored": stats.censored if stats else None,
           "bound": bound,
           "verdict": verdict}
    rec.update(extra)
    return rec


# -- argument types ------------------------------------------------------------

def _number_list(text: str, kind=float, length: int | None = None):
    try:
        vals = [kind(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if length is not None and len(vals) != length:
        raise argparse.ArgumentTypeError(f"expected {length} values, got {text!r}")
    return vals


def _pair(text: str):
    vals = _number_list(text, float, 2)
    return tuple(int(v) if float(v).is_integer() else v for v in vals)


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}")
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _probability(text: str) -> float:
    v = _positive_float(text)
    if not v < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {v}")
    return v


# -- subcommands ---------------------------------------------------------------

def _starts(gaps) -> tuple:
    g1, g2 = gaps
    if g1 < 0 or g2 < 0:
        raise UsageError("gaps must be non-negative")
    return (-g1, 0, g2)


def cmd_collision(a) -> list:
    starts = _starts(a.gaps)
    q = collision.CollisionQuery(a.model, starts, horizon=a.horizon, reps=a.reps,
                                 master_seed=a.seed, p=a.p, dt=a.dt, first_step=a.first_step)
    est = collision.estimate_collision_expectation(q, a.threads)
    g1, g2 = q.gaps
    params = {"model": a.model, "starts": list(starts), "horizon": q.effective_horizon}
    out = []
    raw_extra = {"median": est.raw.median, "censored_fraction": est.censored_fraction}
    if a.model in ("ssrw", "brownian"):
        out.append(record("raw_mean", params, est.raw, None, None, **raw_extra))
        verdict = est.verdict or within_stderr(est.corrected, g1 * g2)
        out.append(record("horizon_corrected_mean", params, est.corrected, g1 * g2, verdict))
    elif a.model == "scheidegger":
        verdict = est.verdict or within_stderr(est.raw, g1 * g2)
        out.append(record("raw_mean", params, est.raw, g1 * g2, verdict, **raw_extra))
    elif a.model == "howard":
        env = collision.howard_lyapunov_envelope(a.p, a.r0)
        verdict = est.verdict or one_sided_check(est.raw, env(g1, g2))
        out.append(record("raw_mean", dict(params, p=a.p, r0=a.r0), est.raw, env(g1, g2),
                          verdict, **raw_extra))
    else:
        bound = 12 * poisson.lyapunov_v(*starts)
        verdict = est.verdict or one_sided_check(est.raw, bound)
        out.append(record("raw_mean", params, est.raw, bound, verdict, **raw_extra))
    return out


def cmd_brownian(a) -> list:
    x, y = a.gaps
    res = collision.brownian_collision_expectation(x, y, a.dt, a.reps, a.seed, a.horizon,
                                                   threads=a.threads)
    out = []
    for row in res.table:
        params = {"x": x, "y": y, "dt": row.dt}
        out.append(record("horizon_corrected_mean", params, row.stats, x * y,
                          within_stderr(row.stats, x * y), bias=row.bias))
    out.append(record("refinement", {"x": x, "y": y, "dt": a.dt}, None, None,
                      res.refinement_verdict))
    return out


def cmd_poisson_tree(a) -> list:
    u, v, w = _state(a.gaps)
    res = collision.poisson_triple_entrance(u, v, w, a.reps, a.seed, a.horizon,
                                            threads=a.threads)
    params = {"state": [u, v, w]}
    out = [record("entrance_mean", params, res.stats, res.bound, res.verdict,
                  censored_fraction=res.censored_fraction)]
    for tc in res.tail:
        out.append(record("tail", dict(params, n=tc.n), tc.p_hat, tc.bound, tc.verdict))
    return out


def _state(gaps) -> tuple:
    g1, g2 = (float(g) for g in gaps)
    try:
        poisson.validate_state(0.0, g1, g1 + g2)
    except ValueError as exc:
        raise UsageError(str(exc))
    return (0.0, g1, g1 + g2)


def cmd_drift(a) -> tuple[list, dict]:
    g1, g2 = (int(g) for g in a.gaps)
    params = {"model": a.model, "gaps": [g1, g2]}
    if a.exact:
        if a.model not in ("scheidegger", "ssrw"):
            raise UsageError("--exact is available for scheidegger and ssrw")
        d = lyapunov.exact_drift_scheidegger(g1, g2)
        verdict = Verdict.PASS if (d == -1 or (g1 * g2 == 0 and d == 0)) else Verdict.FAIL
        top = {"drift": str(d), "exact": True}
        return [record("exact_drift", params, None, -1, verdict, drift=str(d), exact=True)], top
    chain = lyapunov.make_chain(a.model, a.p, a.r0)
    state = lyapunov.state_from_gaps(g1, g2)
    in_m1 = bool(chain.in_M1(state[None, :])[0])
    bound = -1 + chain.b * in_m1
    if a.model == "howard":
        params.update(p=a.p, r0=a.r0)
        # V = g1 g2 / d1, so its drift is the cross-term drift of the product over d1
        row = lyapunov.howard_drift_curve(a.p, [(g1, g2)], a.reps, a.seed, a.threads).rows[0]
        e2 = howard.increment_second_moment(a.p)
        v = _scaled(row.stats, 1.0 / chain.d1)
        out = [record("drift_V", params, v, bound, one_sided_check(v, bound)),
               record("drift_product", params, row.stats, 4 * e2, row.upper_verdict, limit=-e2)]
        if in_m1:
            hp = lyapunov.estimate_hit_prob(chain, state, a.reps, a.seed, a.threads)
            out.append(record("hit_probability", params, hp, chain.p0,
                              one_sided_check(hp, chain.p0, ">=")))
        return out, {}
    stats = lyapunov.estimate_drift(chain, state, a.reps, a.seed, threads=a.threads)
    return [record("drift_V", params, stats, -1, within_stderr(stats, -1))], {}


def _scaled(stats: SummaryStats, c: float) -> SummaryStats:
    """Stats of c * X for c > 0."""
    return dataclasses.replace(stats, mean=c * stats.mean, stderr=c * stats.stderr,
                               ci95_low=c * stats.ci95_low, ci95_high=c * stats.ci95_high,
                               total=c * stats.total, total_sq=c * c * stats.total_sq,
                               median=None, exact=False)


def cmd_entrance(a) -> list:
    g1, g2 = (int(g) for g in a.gaps)
    chain = lyapunov.make_chain(a.model, a.p, a.r0)
    res = lyapunov.verify_entrance_bound(chain, lyapunov.state_from_gaps(g1, g2), a.reps,
                                         a.horizon, a.seed, a.threads)
    params = {"model": a.model, "gaps": [g1, g2], "b": chain.b, "p0": chain.p0, "d1": chain.d1}
    return [record("entrance_time", params, res.tau_stats, res.bound, res.verdict,
                   censored_fraction=res.censored_fraction)]


def cmd_martingale(a) -> list:
    out = []
    if a.model == "brownian":
        x, y = (float(g) for g in a.gaps)
        res = martingale.brownian_fixed_time_check(x, y, a.t, a.reps, a.seed, a.threads)
        params = {"x": x, "y": y, "t": a.t}
        ratio = res.stderr_ratio
        out.append(record("product_plus_time", params, res.product_plus_time, res.targets[0],
                          within_stderr(res.product_plus_time, res.targets[0]),
                          stderr_ratio=ratio))
        out.append(record("triple_product", params, res.triple_product, res.targets[1],
                          within_stderr(res.triple_product, res.targets[1])))
        return out
    g1, g2 = (int(g) for g in a.gaps)
    if g1 < 2 or g2 < 2 or g1 % 2 or g2 % 2:
        raise UsageError("walk gaps must be positive even integers")
    i, j = g1 // 2, g2 // 2
    if a.exact:
        for kind in martingale.MartingaleKind:
            d = martingale.exact_one_step_drift(kind, g1, g2)
            out.append(record(f"exact_{kind.value}", {"gaps": [g1, g2]}, None, 0,
                              Verdict.PASS if d == 0 else Verdict.FAIL, drift=str(d), exact=True))
    n = int(a.horizon) if a.horizon is not None else 50
    res = martingale.stopped_identity_check(i, j, n, a.reps, a.seed, a.threads)
    params = {"gaps": [g1, g2], "n": n}
    out.append(record("stopped_product_plus_time", params, res.product_plus_time, res.targets[0],
                      within_stderr(res.product_plus_time, res.targets[0])))
    out.append(record("stopped_triple_product", params, res.triple_product, res.targets[1],
                      within_stderr(res.triple_product, res.targets[1])))
    ui = martingale.ui_bound_check(i, j, n, a.reps, a.seed, a.threads)
    out.append(record("ui_bound", params, ui.stats, ui.bound, ui.verdict,
                      control_variate_mean=ui.control_variate.mean))
    return out


def cmd_eta(a) -> list:
    if a.model not in counting.ETA_MODELS:
        raise UsageError(f"eta supports {counting.ETA_MODELS}")
    eps = sorted(a.epsilons, reverse=True)
    curve = counting.b_curve(a.model, a.k, eps, a.n, a.t, a.reps, a.seed, a.p, a.threads)
    out = []
    for pt in curve.points:
        params = {"model": a.model, "k": a.k, "epsilon": pt.epsilon, "n": a.n, "t": a.t,
                  "sites": pt.n_sites}
        st = SummaryStats(a.reps, pt.p_hat, pt.stderr, pt.p_hat - 1.96 * pt.stderr,
                          pt.p_hat + 1.96 * pt.stderr)
        out.append(record("p_eta_ge_k", params, st, pt.markov_envelope, pt.envelope_verdict,
                          ratio=pt.ratio, ratio_stderr=pt.ratio_stderr))
    out.append(record("monotone_decay", {"model": a.model, "k": a.k, "epsilons": eps},
                      None, None, curve.monotone_verdict))
    return out


def cmd_generator(a) -> list:
    u, v, w = _state(a.gaps)
    if u == v or v == w:
        raise UsageError("generator is evaluated off the absorbed set")
    rep = lyapunov.generator_V_poisson(u, v, w, a.reps, a.seed)
    params = {"state": [u, v, w], "tube_length": rep.tube_length}
    verdicts = [Verdict.PASS if rep.gv_value <= -1 / 12 + 1e-9 else Verdict.FAIL, rep.mc_verdict]
    return [record("generator", params, rep.mc_estimate, -1 / 12, combine_verdicts(verdicts),
                   gv_value=float(rep.gv_value), cross_terms=[float(c) for c in rep.cross_terms])]


def cmd_forest(a) -> list:
    u, v, w = _state(a.gaps)
    res = collision.forest_jump_ks(u, v, w, a.reps, a.seed)
    params = {"state": [u, v, w], "n_forest": res.n_forest, "n_jump": res.n_jump}
    verdict = lambda pv: Verdict.PASS if pv > 0.01 else Verdict.FAIL  # noqa: E731
    return [record("ks_displacement", params, None, 0.01, res.verdict,
                   ks_pvalue=res.displacement_pvalue),
            record("ks_wait", params, None, 0.01, verdict(res.wait_pvalue),
                   ks_pvalue=res.wait_pvalue)]


def cmd_pmf(a) -> list:
    pmf = howard.howard_increment_pmf(a.p, a.kmax)
    e2 = howard.increment_second_moment(a.p)
    params = {"p": a.p, "kmax": pmf.kmax}
    out = [record("second_moment_series", params, None, e2,
                  Verdict.PASS if abs(pmf.second_moment() - e2) <= 1e-9 else Verdict.FAIL,
                  value=pmf.second_moment(), residual=pmf.residual,
                  prob=[[int(k), float(q)] for k, q in zip(pmf.support, pmf.prob) if abs(k) <= 10])]
    inc = lattice.howard_increments(a.p, a.reps, a.seed)
    st = summarize(inc * inc, median=False)
    out.append(record("empirical_second_moment", params, st, e2, within_stderr(st, e2)))
    for k in range(-5, 6):
        b = binomial_stats(int((inc == k).sum()), a.reps)
        out.append(record("bin", dict(params, k=k), b, pmf[k], within_stderr(b, pmf[k], 4.0)))
    return out


# -- parser --------------------------------------------------------------------

_HELP_EPILOG = (
    "Output: JSON {manifest, results: [{name, params, n, mean, stderr, ci95, censored, "
    "bound, verdict, ...}]} or CSV whose first line is '# manifest: {...}' followed by "
    "columns " + ",".join(CSV_COLUMNS) + ".  Exit codes: 0 pass, 1 fail, 2 usage error, "
    "3 inconclusive."
)


def _common(p: argparse.ArgumentParser, reps: int = 10_000, gaps=None, model=None,
            models=None):
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--reps", type=_positive_int, default=reps)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", default=None, help="write to PATH instead of standard output")
    p.add_argument("--threads", type=_positive_int, default=1)
    if gaps is not None:
        p.add_argument("--gaps", type=_pair, default=gaps)
    if models is not None:
        p.add_argument("--model", choices=models, default=model)
    p.add_argument("--p", type=_probability, default=0.5)
    p.add_argument("--r0", type=_positive_int, default=2)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coalesce-bench", epilog=_HELP_EPILOG,
                                     description="Collision, drift and counting checks for "
                                                 "coalescing paths.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("collision", help="first-collision time of three paths", epilog=_HELP_EPILOG)
    _common(p, gaps=(2, 2), model="ssrw", models=collision.MODELS)
    p.add_argument("--horizon", type=_positive_float, default=None)
    p.add_argument("--dt", type=_positive_float, default=1e-4)
    p.add_argument("--first-step", action="store_true",
                   help="count only collisions at n >= 1 (coincident starts)")
    p.set_defaults(handler=cmd_collision)

    p = sub.add_parser("brownian", help="Brownian collision time with dt refinement",
                       epilog=_HELP_EPILOG)
    _common(p, gaps=(1.0, 1.0))
    p.add_argument("--dt", type=_positive_float, default=1e-4)
    p.add_argument("--horizon", type=_positive_float, default=None)
    p.set_defaults(handler=cmd_brownian)

    p = sub.add_parser("poisson-tree", help="Poisson-tree entrance time against 12 V",
                       epilog=_HELP_EPILOG)
    _common(p, gaps=(0.5, 0.5))
    p.add_argument("--horizon", type=_positive_float, default=None)
    p.set_defaults(handler=cmd_poisson_tree)

    p = sub.add_parser("drift", help="one-step drift of the Lyapunov function", epilog=_HELP_EPILOG)
    _common(p, gaps=(2, 2), model="scheidegger", models=("scheidegger", "howard", "ssrw"))
    p.add_argument("--exact", action="store_true")
    p.set_defaults(handler=cmd_drift)

    p = sub.add_parser("entrance", help="entrance time against V + b / p0", epilog=_HELP_EPILOG)
    _common(p, gaps=(2, 2), model="howard", models=("scheidegger", "howard", "ssrw"))
    p.add_argument("--horizon", type=_positive_int, default=None)
    p.set_defaults(handler=cmd_entrance)

    p = sub.add_parser("martingale", help="product martingale identities", epilog=_HELP_EPILOG)
    _common(p, gaps=(2, 2), model="ssrw", models=("ssrw", "brownian"))
    p.add_argument("--exact", action="store_true")
    p.add_argument("--horizon", type=int, default=None, help="stopping horizon n (walks)")
    p.add_argument("--t", type=_positive_float, default=1.0, help="fixed time (brownian)")
    p.set_defaults(handler=cmd_martingale)

    p = sub.add_parser("eta", help="counting-statistic decay curves", epilog=_HELP_EPILOG)
    _common(p, model="scheidegger", models=counting.ETA_MODELS)
    p.add_argument("--epsilons", type=_number_list, default=[0.4, 0.2, 0.1, 0.05])
    p.add_argument("--n", type=_positive_int, default=10_000)
    p.add_argument("--t", type=_positive_float, default=1.0)
    p.add_argument("--k", type=int, choices=(2, 3), default=3)
    p.set_defaults(handler=cmd_eta)

    p = sub.add_parser("generator", help="Poisson-tree generator applied to V", epilog=_HELP_EPILOG)
    _common(p, gaps=(0.75, 1.75))
    p.set_defaults(handler=cmd_generator)

    p = sub.add_parser("forest", help="forest builder against the jump process (KS tests)",
                       epilog=_HELP_EPILOG)
    _common(p, gaps=(0.75, 1.75))
    p.set_defaults(handler=cmd_forest)

    p = sub.add_parser("pmf", help="Howard increment law", epilog=_HELP_EPILOG)
    _common(p, reps=1_000_000)
    p.add_argument("--kmax", type=_positive_int, default=None)
    p.set_defaults(handler=cmd_pmf)
    return parser


def _manifest(args, elapsed_ms: float, verdict: Verdict) -> dict:
    params = {k: v for k, v in sorted(vars(args).items())
              if k not in _NOT_IN_MANIFEST and k != "subcommand"}
    return {"subcommand": args.subcommand, "params": params, "master_seed": args.seed,
            "version": __version__, "elapsed_ms": elapsed_ms, "verdict": verdict}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    start = time.perf_counter()
    try:
        out = args.handler(args)
    except (UsageError, ValueError) as exc:
        print(f"{parser.prog} {args.subcommand}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    records, top = out if isinstance(out, tuple) else (out, {})
    verdicts = [r["verdict"] for r in records if r["verdict"] is not None]
    verdict = combine_verdicts(verdicts)
    elapsed = (time.perf_counter() - start) * 1000.0
    doc = dict(top)
    doc["manifest"] = _manifest(args, elapsed, verdict)
    doc["results"] = records
    text = to_json(doc) + "\n" if args.format == "json" else to_csv(doc)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_CODES[verdict]


def main() -> None:
    sys.exit(dispatch())
