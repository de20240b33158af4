"""
Side-by-side comparisons of scenario variants.

``fixed_C`` sweeps ``P`` at a fixed number of corrections, ``fixed_time``
pits ``(P, C)`` pairs of similar per-step cost against each other and
``pmu_sweep`` varies the instrumented nodes.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..fopc import DdseProblem, FopcEstimator
from .runner import frames, run_scenario, setup
from .scenario import Scenario

MODES = {"fixed_C": {"P"}, "fixed_time": {"P", "C"}, "pmu_sweep": {"pmu_nodes"}}
# largest accepted ratio between the per-step costs of fixed-time variants
COST_MATCH = 1.2


@dataclass
class CompareRow:
    label: str
    overrides: dict
    tracking: float
    u_err: float
    v_err: float
    v_rmse: float
    step_ms: float
    cost_ratio: float | None = None


@dataclass
class CompareTable:
    mode: str
    rows: list
    verdict: bool | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "verdict": self.verdict, "notes": self.notes,
                "rows": [vars(r) for r in self.rows]}

    def to_text(self) -> str:
        head = f"{'variant':<24}{'tracking':>12}{'u_err':>12}{'v_err':>12}{'step_ms':>10}"
        if self.mode == "fixed_time":
            head += f"{'cost':>8}"
        lines = [f"mode: {self.mode}", head]
        for r in self.rows:
            line = (f"{r.label:<24}{r.tracking:>12.4e}{r.u_err:>12.4e}"
                    f"{r.v_err:>12.4e}{r.step_ms:>10.4f}")
            if self.mode == "fixed_time":
                line += f"{r.cost_ratio:>8.3f}"
            lines.append(line)
        lines.extend(self.notes)
        if self.verdict is not None:
            lines.append(f"verdict: {'PASS' if self.verdict else 'FAIL'}")
        return "\n".join(lines)


def _label(overrides: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in overrides.items()) or "base"


def _check_variants(mode: str, variants: list):
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {sorted(MODES)}")
    if not variants:
        raise ValueError("compare needs at least one variant")
    for v in variants:
        extra = set(v) - MODES[mode]
        if extra:
            raise ValueError(f"{mode} variants may only set {sorted(MODES[mode])}, got {sorted(extra)}")


def measure_step_cost(scenarios: list, repeats: int = 3) -> list:
    """Median per-step predict+correct time (ms) of each scenario.

    Measurement streams are simulated up front.  The estimators then advance
    in lockstep, one frame each in turn, so slow drifts in machine speed hit
    every variant alike; the median over ``repeats`` replays of the per-run
    medians is reported.
    """
    prepared = []
    for s in scenarios:
        st = setup(s)
        prepared.append((st, [f for f, _ in frames(s, st)]))
    n = min(len(fr) for _, fr in prepared)
    runs = [[] for _ in scenarios]
    for _ in range(repeats):
        ests = [FopcEstimator(DdseProblem(st.net, st.selection, st.params), st.cfg)
                for st, _ in prepared]
        ts = np.empty((len(ests), n))
        for j in range(n):
            for i, est in enumerate(ests):
                state = est.step(prepared[i][1][j])
                ts[i, j] = state.pred_s + state.corr_s
        for i in range(len(ests)):
            runs[i].append(float(np.median(ts[i])))
    return [1e3 * float(np.median(r)) for r in runs]


def _run(s: Scenario):
    return run_scenario(s, write=False).summary


def compare(mode: str, base: Scenario, variants: list, repeats: int = 3, jobs: int = 1,
            out: str | Path | None = None) -> CompareTable:
    _check_variants(mode, variants)
    scen = [base.replace(name=f"{base.name}[{_label(v)}]", out=None, **v) for v in variants]
    if jobs > 1 and len(scen) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(_run, scen))
    else:
        summaries = [_run(s) for s in scen]
    rows = []
    for v, sm in zip(variants, summaries):
        ss = sm["steady_state"]
        rows.append(CompareRow(_label(v), dict(v), ss["tracking"], ss["u_err"], ss["v_err"],
                               ss["v_rmse"], sm["timing"]["step_ms_mean"]))
    table = CompareTable(mode, rows)
    if mode == "fixed_time":
        t0 = time.perf_counter()
        costs = measure_step_cost(scen, repeats)
        lo = min(costs)
        for r, c in zip(rows, costs):
            r.step_ms, r.cost_ratio = c, c / lo
        table.notes.append(f"cost measured over {repeats} lockstep replays "
                           f"({time.perf_counter() - t0:.1f} s)")
    if len(rows) > 1:
        table.verdict = _verdict(mode, base, variants, rows, table.notes)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "compare.json", "w") as fh:
            json.dump(table.to_dict(), fh, indent=2)
            fh.write("\n")
    return table


def _verdict(mode, base, variants, rows, notes) -> bool:
    if mode == "fixed_C":
        order = sorted(range(len(rows)), key=lambda i: variants[i].get("P", base.P))
        trk = [rows[i].tracking for i in order]
        return all(b <= a for a, b in zip(trk, trk[1:]))
    if mode == "fixed_time":
        ratios = [r.cost_ratio for r in rows]
        matched = max(ratios) <= COST_MATCH
        notes.append(f"per-step costs {'match' if matched else 'do NOT match'} within "
                     f"{COST_MATCH - 1:.0%} (max ratio {max(ratios):.3f})")
        best_p = max(range(len(rows)), key=lambda i: variants[i].get("P", base.P))
        wins = all(rows[best_p].tracking <= r.tracking for r in rows)
        return bool(matched and wins)
    # pmu_sweep
    order = sorted(range(len(rows)), key=lambda i: len(variants[i].get("pmu_nodes", base.pmu_nodes)))
    verr = [rows[i].v_err for i in order]
    for i in order:
        n = len(variants[i].get("pmu_nodes", base.pmu_nodes))
        if n >= 3:
            ok = rows[i].v_err <= 0.1 * rows[i].u_err
            notes.append(f"{rows[i].label}: v_err {'<=' if ok else '>'} 0.1 u_err")
    return all(b <= a for a, b in zip(verr, verr[1:]))
