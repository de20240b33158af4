"""
Scenario runner: ground truth, measurement stream, estimator, batch oracle.

Per step ``k`` the true voltage solves the AC power flow at the true loads,
the frame is sampled from it, the estimator consumes the frame and the
instantaneous optimum ``u*`` of the same objective is solved to convergence.
Relative errors use instantaneous norms.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..cost import CostParams, bounds, build_snapshot, time_grad
from ..fopc import DdseProblem, FopcConfig, FopcEstimator, batch_solve, certify
from ..linmodel import linearize
from ..netmodel import NetworkModel, load_network
from ..sensing import (
    LoadProfile,
    Selection,
    SelectionSets,
    build_selection,
    read_profile_csv,
    simulate,
    synthesize_profile,
)
from .scenario import Scenario, feeder_path, scenario_hash

logger = logging.getLogger(__name__)

ERROR_COLUMNS = ("k", "t", "tracking", "u_err", "v_err")
# relative tolerance of the batch oracle
ORACLE_TOL = 1e-9


@dataclass
class Setup:
    net: NetworkModel
    profile: LoadProfile
    selection: Selection
    params: CostParams
    cfg: FopcConfig
    bounds0: object


@dataclass
class RunResult:
    scenario: Scenario
    records: list
    summary: dict
    out_dir: Path | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records], dtype=float)


def build_profile(s: Scenario, net: NetworkModel) -> LoadProfile:
    spec = dict(s.profile)
    kind = spec.pop("kind", "synthetic")
    if kind == "csv":
        prof = read_profile_csv(spec["path"], h=s.h, pf=spec.get("pf", 0.95))
        if prof.p.shape[1] != net.n_wye + net.n_delta:
            raise ValueError(f"profile has {prof.p.shape[1]} columns, feeder has "
                             f"{net.n_wye + net.n_delta} load connections")
        return prof
    spec.setdefault("seed", s.seed)
    return synthesize_profile(net, s.steps, s.h, **spec)


def setup(s: Scenario) -> Setup:
    """Network, profile, selection and resolved estimator configuration."""
    net = load_network(feeder_path(s))
    profile = build_profile(s, net)
    selection = build_selection(net, SelectionSets(s.pmu_nodes, s.metered_wye, s.metered_delta))
    params = CostParams(wv=s.wv, delta=s.delta, a=s.reg_a)
    # stepsizes "auto": 1/L of the first objective at the zero-load anchor
    frame0 = next(simulate(net, profile, selection, s.sigma_v, s.window, s.h, s.seed, 1))[0]
    b0 = bounds(build_snapshot(linearize(net, net.w), selection, frame0, params))
    alpha = 1.0 / b0.L if s.alpha == "auto" else float(s.alpha)
    beta = 1.0 / b0.L if s.beta == "auto" else float(s.beta)
    cfg = FopcConfig(P=s.P, C=s.C, alpha=alpha, beta=beta, gamma=s.gamma, h=s.h)
    return Setup(net, profile, selection, params, cfg, b0)


def frames(s: Scenario, st: Setup):
    return simulate(st.net, st.profile, st.selection, s.sigma_v, s.window, s.h, s.seed,
                    s.steps, sigma_u=s.sigma_u, outlier_frac=s.outlier_frac,
                    outlier_scale=s.outlier_scale)


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    nb = float(np.linalg.norm(b))
    d = float(np.linalg.norm(a - b))
    return d / nb if nb > 0 else d


def steady_state(values) -> float:
    """Mean over the final half of the horizon."""
    values = np.asarray(values, dtype=float)
    return float(values[len(values) // 2:].mean())


def run_scenario(s: Scenario, out: str | Path | None = None, write: bool = True) -> RunResult:
    """Run ``s`` and, when an output directory is known, write its artifacts.

    Files: ``errors.csv`` (k, t, tracking, u_err, v_err), ``run.jsonl`` (one
    record per step with timings and the step's certificate), ``summary.json``
    and ``scenario.json`` (the resolved scenario, enough to re-run).
    """
    st = setup(s)
    est = FopcEstimator(DdseProblem(st.net, st.selection, st.params), st.cfg)
    records = []
    u_star = None
    warned = False
    c0 = 0.0
    first_cert = None
    for frame, truth in frames(s, st):
        state = est.step(frame)
        snap = state.snap_prev
        u_star = batch_solve(snap, u_star, tol=ORACLE_TOL, method="newton")
        if s.oracle:
            state = est.override(u_star)
        cert = certify(st.cfg, bounds(snap))
        if first_cert is None:
            first_cert = cert
        if not cert.valid and not warned:
            logger.warning("certificate INVALID at k=%d (tau0=%.4g); estimates carry no "
                           "tracking guarantee", frame.k, cert.tau0)
            warned = True
        if state.snap_prev2 is not None:
            c0 = max(c0, float(np.linalg.norm(time_grad(snap, state.snap_prev2, u_star))) / s.h)
        dz = state.z_hat - truth.z
        records.append({
            "k": int(frame.k),
            "t": float(frame.t),
            "tracking_err": _rel(state.u_hat, u_star),
            "u_err": _rel(state.u_hat, truth.u),
            "v_err": _rel(state.z_hat, truth.z),
            "v_rmse": float(np.sqrt(np.mean(dz * dz))),
            "pred_ms": 1e3 * state.pred_s,
            "corr_ms": 1e3 * state.corr_s,
            "fallback": bool(state.fallback),
            "cert": cert.to_dict(),
        })
    summary = summarize(s, st, records, first_cert, c0)
    result = RunResult(s, records, summary)
    out = out if out is not None else s.out
    if write and out is not None:
        result.out_dir = write_artifacts(result, out)
    return result


def summarize(s: Scenario, st: Setup, records: list, cert, c0: float) -> dict:
    col = {k: np.array([r[k] for r in records], dtype=float)
           for k in ("tracking_err", "u_err", "v_err", "v_rmse", "pred_ms", "corr_ms")}
    half = len(records) // 2
    step_ms = col["pred_ms"] + col["corr_ms"]
    return {
        "name": s.name,
        "scenario_hash": scenario_hash(s),
        "steps": len(records),
        "n_states": st.selection.n_states,
        "steady_state": {
            "tracking": steady_state(col["tracking_err"]),
            "u_err": steady_state(col["u_err"]),
            "v_err": steady_state(col["v_err"]),
            "v_rmse": float(np.sqrt(np.mean(col["v_rmse"][half:] ** 2))),
        },
        "timing": {
            "pred_ms_median": float(np.median(col["pred_ms"])),
            "corr_ms_median": float(np.median(col["corr_ms"])),
            "step_ms_median": float(np.median(step_ms)),
            "step_ms_mean": float(step_ms.mean()),
        },
        "stepsizes": {"alpha": st.cfg.alpha, "beta": st.cfg.beta},
        "bounds": {"nu": st.bounds0.nu, "L": st.bounds0.L, "nu_floor": st.bounds0.nu_floor},
        "certificate": {**cert.to_dict(), "min_C": _finite(cert.min_C),
                        "tau0_floor": cert.tau0_floor},
        "certificate_valid_fraction": float(np.mean([r["cert"]["valid"] for r in records])),
        "fallbacks": int(sum(r["fallback"] for r in records)),
        "C0_estimate": c0,
    }


def _finite(x):
    return x if math.isfinite(x) else None


def _fmt(x: float) -> str:
    return repr(float(x))


def write_artifacts(result: RunResult, out: str | Path) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "errors.csv", "w", newline="") as fh:
        fh.write(",".join(ERROR_COLUMNS) + "\n")
        for r in result.records:
            fh.write(f"{r['k']},{_fmt(r['t'])},{_fmt(r['tracking_err'])},"
                     f"{_fmt(r['u_err'])},{_fmt(r['v_err'])}\n")
    with open(out / "run.jsonl", "w") as fh:
        for r in result.records:
            fh.write(json.dumps(r) + "\n")
    with open(out / "summary.json", "w") as fh:
        json.dump(result.summary, fh, indent=2)
        fh.write("\n")
    with open(out / "scenario.json", "w") as fh:
        json.dump(result.scenario.to_dict(), fh, indent=2)
        fh.write("\n")
    return out
