"""
Acceptance suite.  Every test prints one ``PASS``/``FAIL`` line for its
criterion (shown even under output capture) and then asserts it.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import math
import sys
import time

import numpy as np
import pytest

from conftest import random_feeder, two_bus_feeder
from pcdsse.cost import CostSnapshot, gradient, hessian, huber, value
from pcdsse.fopc import ConvergenceError, FopcConfig, certify, min_corrections, tau0
from pcdsse.harness import compare, load_scenario, load_sweep, run_scenario
from pcdsse.harness.compare import COST_MATCH
from pcdsse.harness.synthetic import drifting_problem, tracking_errors
from pcdsse.linmodel import evaluate, injection_from_u, linearize, v_to_z
from pcdsse.netmodel import (
    ComplexInjection,
    build_network,
    injection_from_powers,
    load_network,
    pf_residual,
    solve_power_flow,
)
from pcdsse.sensing import synthesize_profile

from test_netmodel import scalar_residual


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail, budget=None, started=None):
        took = ""
        if started is not None:
            took = f" [{time.perf_counter() - started:.1f} s"
            took += f" / budget {budget} s]" if budget else "]"
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}{took}")
        assert ok, detail
    return emit


def test_criterion_01_huber_branches(report):
    t0 = time.perf_counter()
    lin = 1.0 * 1.0 - 0.5 * 1.0
    ok = (huber(2.0, 1.0) == 1.5 and huber(1.0, 1.0) == 0.5 == lin
          and huber(np.nextafter(1.0, 2.0), 1.0) == pytest.approx(0.5, abs=1e-15)
          and huber(0.0, 1.0) == 0.0)
    report(1, ok, f"H(2;1)={huber(2.0, 1.0)}, H(1;1)={huber(1.0, 1.0)}, H(0)={huber(0.0, 1.0)}",
           1, t0)


def _random_snapshot(rng):
    n, m, k = int(rng.integers(3, 9)), int(rng.integers(2, 10)), int(rng.integers(0, 4))
    k = min(k, n)
    return CostSnapshot(G_v=rng.standard_normal((m, n)), m_v=rng.standard_normal(m),
                        y_v=rng.standard_normal(m), u_rows=np.sort(rng.choice(n, k, replace=False)),
                        y_u=rng.standard_normal(k), n=n, wv=float(rng.uniform(0.5, 5)),
                        delta=0.3, a=float(rng.uniform(0.05, 1)),
                        u_prior=rng.standard_normal(n))


def test_criterion_02_derivative_oracles(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    h = 1e-6
    g_worst = h_worst = 0.0
    count = 0
    while count < 1000:
        snap = _random_snapshot(rng)
        u = rng.standard_normal(snap.n)
        r = snap.y_u - u[snap.u_rows]
        if np.any(np.abs(np.abs(r) - snap.delta) < 1e-3):
            continue
        count += 1
        E = np.eye(snap.n)
        g = gradient(snap, u)
        fd = np.array([(value(snap, u + h * e) - value(snap, u - h * e)) / (2 * h) for e in E])
        g_worst = max(g_worst, np.linalg.norm(fd - g) / np.linalg.norm(g))
        H = hessian(snap, u)
        fdh = np.array([(gradient(snap, u + h * e) - gradient(snap, u - h * e)) / (2 * h)
                        for e in E]).T
        h_worst = max(h_worst, np.linalg.norm(fdh - H) / np.linalg.norm(H))
    report(2, g_worst <= 1e-6 and h_worst <= 1e-5,
           f"gradient rel err {g_worst:.2e} (<=1e-6), Hessian rel err {h_worst:.2e} (<=1e-5) "
           f"over {count} points", 10, t0)


def test_criterion_03_linearization(report):
    t0 = time.perf_counter()
    net = load_network("bundled:feeder12")
    rng = np.random.default_rng(3)
    anchor = net.w * (1 + 0.03 * rng.standard_normal(net.n_phases))
    zero_err = np.max(np.abs(evaluate(linearize(net, anchor), np.zeros(net.n_states))
                             - v_to_z(net.w)))
    u = synthesize_profile(net, 1, 6.0, seed=3).u(0, net.n_wye)
    inj = injection_from_u(net, u)
    v = solve_power_flow(net, inj, tol=1e-10)
    res = np.max(np.abs(pf_residual(net, v, inj)))
    anchor_err = np.max(np.abs(evaluate(linearize(net, v), u) - v_to_z(v)))
    base = linearize(net, net.w)
    big = 2.5 * u
    errs = []
    for eps in (0.4, 0.2, 0.1, 0.05):
        ve = solve_power_flow(net, injection_from_u(net, eps * big), tol=1e-12)
        errs.append(np.linalg.norm(evaluate(base, eps * big) - v_to_z(ve)))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    ok = (zero_err <= 1e-12 and res <= 1e-10 and anchor_err <= 1e-8
          and np.all(np.abs(ratios - 4) <= 1.0))
    report(3, ok, f"evaluate(0) err {zero_err:.1e}, anchor err {anchor_err:.1e}, "
                  f"halving ratios {np.round(ratios, 3).tolist()}", 10, t0)


def test_criterion_04_power_flow(report):
    t0 = time.perf_counter()
    z = 0.1 + 0.2j
    net = build_network(two_bus_feeder(z))
    root_err = 0.0
    for s in (-0.5 - 0.2j, -1.0 - 0.4j, 0.3 + 0.1j):
        v = solve_power_flow(net, ComplexInjection(np.array([s]), np.zeros(0)), tol=1e-14)
        c = s / np.conj(1 / z)
        b = -c.imag
        a = (1 + math.sqrt(1 - 4 * (b * b - c.real))) / 2
        root_err = max(root_err, abs(v[0] - (a + 1j * b)))
    rng = np.random.default_rng(4)
    loop_err = 0.0
    for _ in range(20):
        net4 = build_network(random_feeder(rng, 4))
        v = net4.w * (1 + 0.02 * (rng.standard_normal(net4.n_phases)
                                  + 1j * rng.standard_normal(net4.n_phases)))
        p = -0.05 * rng.uniform(0.2, 1, net4.n_wye + net4.n_delta)
        inj = injection_from_powers(net4, p, 0.3 * p)
        loop_err = max(loop_err, np.max(np.abs(pf_residual(net4, v, inj)
                                               - scalar_residual(net4, v, inj))))
    report(4, root_err <= 1e-10 and loop_err <= 1e-13,
           f"2-bus root err {root_err:.1e} (<=1e-10), residual vs scalar loops "
           f"{loop_err:.1e} (<=1e-13)", 10, t0)


def test_criterion_05_certificate_arithmetic(report):
    t0 = time.perf_counter()
    mc = min_corrections(0.8, 0.8, 4)
    t3, t2 = tau0(0.8, 0.8, 4, 3, 0.0), tau0(0.8, 0.8, 4, 2, 0.0)
    ok = mc == 3 and abs(t3 - 0.9314) <= 1e-4 and t2 > 1
    report(5, ok, f"min_C={mc}, tau0(C=3)={t3:.5f}, tau0(C=2)={t2:.4f}", 1, t0)


def test_criterion_06_contraction(report):
    t0 = time.perf_counter()
    prob = drifting_problem(eigs=(0.5, 2, 3, 4, 5), a=0.5, steps=400, h=0.1)
    b = prob.bounds
    step = 1 / b.L
    cfg = FopcConfig(P=1, C=10, alpha=step, beta=step, gamma=0.0, h=prob.h)
    cert = certify(cfg, b)
    e = tracking_errors(prob, cfg, u0=np.full(5, 50.0))
    floor = e[len(e) // 2:].mean()
    above = e > 10 * floor
    pairs = above[:-1] & above[1:]
    worst = float(np.max(e[1:][pairs] / e[:-1][pairs]))
    half = drifting_problem(eigs=(0.5, 2, 3, 4, 5), a=0.5, steps=800, h=0.05)
    e_half = tracking_errors(half, FopcConfig(P=1, C=10, alpha=step, beta=step, gamma=0.0,
                                              h=half.h))
    h_ratio = e_half[len(e_half) // 2:].mean() / floor
    ok = cert.valid and pairs.sum() >= 5 and worst <= cert.tau0 + 0.05 and 0.35 <= h_ratio <= 0.7
    report(6, ok, f"tau0={cert.tau0:.4f} valid={cert.valid}, worst ratio {worst:.3f} over "
                  f"{int(pairs.sum())} steps, h/2 floor ratio {h_ratio:.3f}", 60, t0)


def test_criterion_07_prediction_benefit(report):
    t0 = time.perf_counter()
    table = compare("fixed_C", load_scenario("bundled:feeder12"),
                    load_sweep("bundled:sweep_fixed_C"))
    trk = {r.overrides["P"]: r.tracking for r in table.rows}
    ok = trk[10] <= trk[5] <= trk[0] and trk[5] <= 0.9 * trk[0]
    report(7, ok, f"tracking P=0 {trk[0]:.4e}, P=5 {trk[5]:.4e}, P=10 {trk[10]:.4e}, "
                  f"P5/P0={trk[5] / trk[0]:.3f}", 120, t0)


def test_criterion_08_fixed_time(report):
    t0 = time.perf_counter()
    table = compare("fixed_time", load_scenario("bundled:feeder12"),
                    load_sweep("bundled:sweep_fixed_time"))
    rows = {(r.overrides["P"], r.overrides["C"]): r for r in table.rows}
    pc, gd = rows[(8, 3)], rows[(0, 6)]
    ratio = max(pc.step_ms, gd.step_ms) / min(pc.step_ms, gd.step_ms)
    wins = pc.tracking <= gd.tracking
    report(8, wins and ratio <= COST_MATCH,
           f"tracking (8,3) {pc.tracking:.4e} vs (0,6) {gd.tracking:.4e}; step cost "
           f"{pc.step_ms:.4f} vs {gd.step_ms:.4f} ms, ratio {ratio:.3f} (<= {COST_MATCH})",
           120, t0)


def test_criterion_09_robustness(report):
    t0 = time.perf_counter()
    base = load_scenario("bundled:feeder12_outliers")
    pairs = []
    for seed in (0, 1, 2):
        hub = run_scenario(base.replace(seed=seed), write=False).summary
        ls = run_scenario(base.replace(seed=seed, delta=math.inf), write=False).summary
        pairs.append((hub["steady_state"]["v_rmse"], ls["steady_state"]["v_rmse"]))
    ok = all(h <= l for h, l in pairs)
    report(9, ok, "v_rmse Huber vs LS per seed: "
                  + ", ".join(f"{h:.3e} <= {l:.3e}" if h <= l else f"{h:.3e} > {l:.3e}"
                              for h, l in pairs), 60, t0)


def test_criterion_10_pmu_sweep(report):
    t0 = time.perf_counter()
    table = compare("pmu_sweep", load_scenario("bundled:feeder12"), load_sweep("bundled:sweep_pmu"))
    rows = sorted(table.rows, key=lambda r: len(r.overrides["pmu_nodes"]))
    verr = [r.v_err for r in rows]
    mono = all(b <= a for a, b in zip(verr, verr[1:]))
    small = all(r.v_err <= 0.1 * r.u_err for r in rows if len(r.overrides["pmu_nodes"]) >= 3)
    report(10, mono and small,
           "v_err " + ", ".join(f"{len(r.overrides['pmu_nodes'])} PMU {r.v_err:.3e} "
                                f"(u_err {r.u_err:.3e})" for r in rows), 120, t0)


def test_criterion_11_performance(report):
    t0 = time.perf_counter()
    s = load_scenario("bundled:feeder12").replace(P=8, C=3, steps=400)
    summary = run_scenario(s, write=False).summary
    med = summary["timing"]["step_ms_median"]
    report(11, med <= 10.0 and summary["n_states"] >= 30,
           f"median predict+correct {med:.4f} ms on {summary['n_states']} states (<= 10 ms)",
           60, t0)


def test_criterion_12_determinism(report, tmp_path):
    t0 = time.perf_counter()
    s = load_scenario("bundled:feeder4_smoke")
    a = run_scenario(s, out=tmp_path / "a").out_dir / "errors.csv"
    b = run_scenario(s, out=tmp_path / "b").out_dir / "errors.csv"
    rerun = load_scenario(tmp_path / "a" / "scenario.json")
    c = run_scenario(rerun, out=tmp_path / "c").out_dir / "errors.csv"
    same = a.read_bytes() == b.read_bytes() == c.read_bytes()
    report(12, same, f"errors.csv byte-identical across 3 runs ({a.stat().st_size} bytes)",
           30, t0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
