"""Acceptance criteria 1-11, one PASS/FAIL line each (also repeated in the terminal summary)."""
import time
from dataclasses import replace

import numpy as np

from cart.checks import (check_contraction, check_envelope, check_gradients, check_kkt,
                         check_lagrangian_structure, check_lyapunov, check_sdc)
from cart.cli import run_suite, suite
from cart.scenario import canned, canned_names
from cart.sim import make_plan, resolve_states, run_scenario

from conftest import record


def _timed(fn, *a, **k):
    t0 = time.perf_counter()
    out = fn(*a, **k)
    return out, time.perf_counter() - t0


def test_criterion_01_kkt_equivalence():
    rep, secs = _timed(check_kkt, 10_000)
    ok = rep.passed and secs < 5.0
    record(1, ok, f"max filter-vs-QP deviation {rep.worst:.2e} (<= 1e-12) over 10^4 instances, {secs:.2f}s (< 5s)")
    assert rep.passed, rep.details
    assert secs < 5.0


def test_criterion_02_gradient_oracle():
    rep = check_gradients(100)
    d = rep.details
    record(2, rep.passed, f"grad rel err {d['gradient_rel_err']:.2e} (<= 1e-6), "
                          f"v_d rate rel err {d['rate_rel_err']:.2e} (<= 1e-5)")
    assert rep.passed, d


def test_criterion_03_lagrangian_structure():
    rep = check_lagrangian_structure(1000)
    record(3, rep.passed, f"max |z^T (M_dot - 2C) z| {rep.worst:.2e} (<= 1e-8) on {sorted(rep.details)}")
    assert rep.passed, rep.details


def test_criterion_04_sdc_identity():
    rep = check_sdc(1000)
    d = rep.details
    record(4, rep.passed, f"quadratic example {d['nonlinear_example']:.2e} (<= 1e-10), "
                          f"worst other {max(v for k, v in d.items() if k != 'nonlinear_example'):.2e} (<= 1e-8)")
    assert rep.passed, d


def test_criterion_05_contraction_along_closed_loop():
    rep = check_contraction()
    record(5, rep.passed, f"max eigenvalue of the contraction residual {rep.worst:.3e} (<= 1e-4) "
                          f"over {rep.details['samples']} ticks")
    assert rep.passed


def test_criterion_06_lyapunov_decrease():
    rep = check_lyapunov()
    parts = ", ".join(f"{k} cushions {[f'{c:.1e}' for c in v['cushions']]}" for k, v in rep.details.items())
    record(6, rep.passed, f"worst cushion ratio per dt halving {rep.worst:.2f} (<= 0.7); {parts}")
    assert rep.passed, rep.details


def test_criterion_07_forward_invariance():
    worst = {}
    for name in canned_names():
        spec = canned(name, ['policy.kind="cart_safety_only"', "disturbance.d_bar=0.0",
                             "disturbance.gamma_bar=0.0"])
        worst[name] = min(run_scenario(spec.replace(seed=s), 0).min_h for s in range(20))
    ok = all(v > 0 for v in worst.values())
    record(7, ok, "min_h over 20 seeds: " + ", ".join(f"{k} {v:.3f}" for k, v in worst.items()))
    assert ok, worst


def test_criterion_08_envelope():
    rep, secs = _timed(check_envelope, 500)
    ok = rep.passed and secs < 60
    record(8, ok, f"max mean|s| / bound {rep.worst:.3f} (<= 1.1), "
                  f"max P_hat - (D_E/D_s + 3 sigma) {rep.details['worst_prob_excess']:.3f} (<= 0), {secs:.1f}s")
    assert rep.passed, rep.details
    assert secs < 60


def _violations(name, seeds=range(10)):
    runs = [run_scenario(canned(name).replace(seed=s), 0) for s in seeds]
    return runs, sum(r.collided for r in runs)


def test_criterion_09_nonlinear_regimes():
    t0 = time.perf_counter()
    a_runs, a_bad = _violations("nonlinear_small")
    b_runs, b_bad = _violations("nonlinear_large")
    c_runs, c_bad = _violations("nonlinear_large_cart")
    c_goal = sum(r.success for r in c_runs)
    secs = time.perf_counter() - t0
    ok_a, ok_b, ok_c = a_bad == 0, b_bad >= 7, c_bad == 0 and c_goal == 10
    record(9, ok_a and ok_b and ok_c and secs < 120,
           f"(a) {10 - a_bad}/10 safe; (b) {b_bad}/10 violating (need >= 7), "
           f"min_h {min(r.min_h for r in b_runs):.3f}; (c) {10 - c_bad}/10 safe, {c_goal}/10 at goal; {secs:.0f}s")
    assert ok_a, "safety filter violated at the small disturbance"
    assert ok_c, "cart_full violated or missed the goal at the large disturbance"
    assert secs < 120
    assert ok_b, f"only {b_bad}/10 safety-filter-only runs violate at the large disturbance"


def test_criterion_10_leo_table_orderings():
    t0 = time.perf_counter()
    s = suite("leo_table", n_runs=50)
    s.variants = {k: v for k, v in s.variants.items() if k != "safety-filter/small"}
    _, summ = run_suite(s)
    secs = time.perf_counter() - t0
    g, c, q = summ["global"], summ["cart/large"], summ["clf-cbf/large"]
    ok_s = c.success_rate >= 0.95 > q.success_rate
    ok_j = g.mean_J < c.mean_J < q.mean_J
    record(10, ok_s and ok_j and secs < 600,
           f"success cart {c.success_rate:.2f} clf-cbf {q.success_rate:.2f}; "
           f"J global {g.mean_J:.3f} < cart {c.mean_J:.3f} < clf-cbf {q.mean_J:.3f}; {secs:.0f}s")
    assert ok_s and ok_j
    assert secs < 600


def test_criterion_11_robustness_source_separation():
    base = canned("spacecraft_grid")
    runs = range(4)
    plans = {r: make_plan(base, base.plant(), *resolve_states(base, r), base.safety) for r in runs}
    track = []
    for kr in (0.5, 1.0, 2.0):
        spec = base.replace(robust=replace(base.robust, k_r=kr))
        track.append(np.mean([np.nanmean(run_scenario(spec, r, plan=plans[r]).tracking_error) for r in runs]))
    margin = []
    for ah in (0.5, 1.0, 2.0):
        pol = replace(base.policy, kind="clf_cbf_qp", qp_params=replace(base.policy.qp_params, alpha_h=ah))
        spec = base.replace(policy=pol)
        margin.append(np.mean([np.mean(run_scenario(spec, r, plan=plans[r]).min_h_series) for r in runs]))
    ok_k = track[0] > track[1] > track[2]
    ok_a = margin[0] < margin[1] < margin[2]
    record(11, ok_k and ok_a,
           f"tracking error vs k_r {np.round(track, 5).tolist()} (must decrease: {ok_k}); "
           f"time-avg min_h vs alpha_h {np.round(margin, 4).tolist()} (must increase: {ok_a})")
    assert ok_k, track
    assert ok_a, margin
