"""
First-order prediction-correction tracking of the time-varying estimate.

Every step ``k``

* predicts ``u(k|k-1)`` with ``P`` gradient steps on the quadratic model of
  ``f(k-1)`` built at ``u(k-1)``, shifted by the observed drift of the
  gradient (no Hessian inverse is formed);
* re-linearizes the power flow at the predicted voltage and builds ``f(k)``
  from the new frame;
* corrects with ``C`` plain gradient steps on ``f(k)``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import cost
from .cost import ConvexityBounds, CostParams, CostSnapshot, build_snapshot
from .linmodel import LinearPowerFlowModel, evaluate, linearize, z_to_v
from .netmodel import NetworkModel, PowerFlowError
from .sensing import MeasurementFrame, Selection

logger = logging.getLogger(__name__)

# predicted phase voltages below this magnitude (per unit) are degenerate
DEGENERATE_V = 1e-6


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class FopcConfig:
    P: int = 5
    C: int = 5
    alpha: float = 1e-3
    beta: float = 1e-3
    gamma: float = 0.9
    h: float = 6.0

    def __post_init__(self):
        if self.P < 0:
            raise ValueError("P must be >= 0")
        if self.C < 1:
            raise ValueError("C must be >= 1")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("stepsizes must be positive")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if not self.h > 0:
            raise ValueError("h must be positive")


@dataclass(frozen=True)
class ConvergenceCertificate:
    rho_P: float
    rho_C: float
    tau0: float
    valid: bool
    min_C: float
    tau0_floor: float | None = None

    def to_dict(self) -> dict:
        return {"rho_P": self.rho_P, "rho_C": self.rho_C, "tau0": self.tau0,
                "valid": self.valid}


def contraction(step: float, nu: float, L: float) -> float:
    return max(abs(1 - step * nu), abs(1 - step * L))


def tau0(rho_P: float, rho_C: float, P: int, C: int, gamma: float,
         L: float = 1.0, nu: float = 1.0) -> float:
    """Linear rate of the tracking error.

    ``rho_C^C [rho_P^P + (rho_P^P + 1)(1 - gamma + 2 gamma L / nu)]``
    """
    rp = rho_P ** P
    return rho_C ** C * (rp + (rp + 1) * (1 - gamma + gamma * 2 * L / nu))


def min_corrections(rho_P: float, rho_C: float, P: int) -> float:
    """Smallest ``C`` that makes the rate below one when ``gamma = 0``."""
    if rho_C >= 1:
        return math.inf
    if rho_C == 0:
        return 1
    return math.ceil(-math.log(2 * rho_P ** P + 1) / math.log(rho_C))


def certify(cfg: FopcConfig, b: ConvexityBounds) -> ConvergenceCertificate:
    """Evaluate the tracking guarantee for ``cfg`` under the bounds ``b``.

    Never raises: an unsatisfied condition gives ``valid=False``.
    """
    rho_P = contraction(cfg.alpha, b.nu, b.L)
    rho_C = contraction(cfg.beta, b.nu, b.L)
    t0 = tau0(rho_P, rho_C, cfg.P, cfg.C, cfg.gamma, b.L, b.nu)
    # the same rate under the regularizer-only curvature bound
    t0_floor = None
    if b.nu_floor is not None and 0 < b.nu_floor < b.nu:
        t0_floor = tau0(contraction(cfg.alpha, b.nu_floor, b.L),
                        contraction(cfg.beta, b.nu_floor, b.L),
                        cfg.P, cfg.C, cfg.gamma, b.L, b.nu_floor)
    elif b.nu_floor == b.nu:
        t0_floor = t0
    valid = cfg.alpha < 2 / b.L and cfg.beta < 2 / b.L and t0 < 1
    return ConvergenceCertificate(rho_P, rho_C, t0, bool(valid),
                                  min_corrections(rho_P, rho_C, cfg.P), t0_floor)


# -- generic prediction / correction on snapshots ---------------------------


def predict_u(u_hat: np.ndarray, snap_prev: CostSnapshot | None,
              snap_prev2: CostSnapshot | None, cfg: FopcConfig) -> np.ndarray:
    """``P`` gradient steps on the prediction model of ``snap_prev`` at ``u_hat``.

    Hessian and gradients are evaluated once at ``u_hat`` and reused.
    """
    if cfg.P == 0 or snap_prev is None:
        return u_hat.copy()
    Hm, shift = cost.prediction_terms(snap_prev, snap_prev2, u_hat, cfg.gamma)
    # frozen affine map d <- T d + c on d = u_bar - u_hat, T = I - alpha H and
    # c = -alpha shift; pairs of steps are applied at once through T^2
    T = Hm
    T *= -cfg.alpha
    T.flat[::u_hat.size + 1] += 1.0
    c = shift
    c *= -cfg.alpha
    c2 = T.dot(c)
    c2 += c
    d = c2 if cfg.P % 2 == 0 else c
    if cfg.P > 2:
        T2 = T.dot(T)
        for _ in range((cfg.P - 1) // 2):
            d = T2.dot(d)
            d += c2
    return u_hat + d


def correct(u_pred: np.ndarray, snap_k: CostSnapshot, cfg: FopcConfig) -> np.ndarray:
    """``C`` gradient steps with stepsize ``beta`` on ``snap_k``."""
    u = u_pred.copy()
    for _ in range(cfg.C):
        u -= cfg.beta * cost.gradient(snap_k, u)
    return u


def batch_solve(snap: CostSnapshot, u_init=None, tol: float = 1e-9,
                max_iter: int = 100_000, method: str = "gradient",
                L: float | None = None) -> np.ndarray:
    """Minimize ``snap`` to convergence.

    Stops when ``||grad f(u)|| <= tol (1 + ||u||)``.  ``method="gradient"``
    runs gradient descent with stepsize ``1/L``; ``method="newton"`` takes
    damped (semismooth) Newton steps, which terminate in a handful of
    iterations on these piecewise-quadratic objectives.

    Raises
    ------
    ConvergenceError
        When ``max_iter`` is exhausted; the message carries the gradient norm.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    u = np.zeros(snap.n) if u_init is None else np.array(u_init, dtype=float)
    g = cost.gradient(snap, u)
    if np.linalg.norm(g) <= tol * (1 + np.linalg.norm(u)):
        return u
    if method == "gradient":
        if L is None:
            L = cost.bounds(snap, estimate_nu=False).L
        for _ in range(max_iter):
            u -= g / L
            g = cost.gradient(snap, u)
            if np.linalg.norm(g) <= tol * (1 + np.linalg.norm(u)):
                return u
    elif method == "newton":
        f = cost.value(snap, u)
        for _ in range(max_iter):
            d = -np.linalg.solve(cost.hessian(snap, u), g)
            t, slope = 1.0, g @ d
            while True:
                u_new = u + t * d
                f_new = cost.value(snap, u_new)
                if f_new <= f + 1e-4 * t * slope or t < 1e-12:
                    break
                t *= 0.5
            u, f = u_new, f_new
            g = cost.gradient(snap, u)
            if np.linalg.norm(g) <= tol * (1 + np.linalg.norm(u)):
                return u
    else:
        raise ValueError(f"unknown method {method!r}")
    raise ConvergenceError(
        f"batch solve stopped after {max_iter} iterations, |grad|={np.linalg.norm(g):.3e}")


def track(snapshots, cfg: FopcConfig, u0=None):
    """Run prediction-correction over a sequence of snapshots.

    Yields the corrected estimate after each snapshot.  Useful for problems
    that are not tied to a power-flow model.
    """
    u_hat = None
    prev = prev2 = None
    for snap in snapshots:
        if u_hat is None:
            u_pred = np.zeros(snap.n) if u0 is None else np.array(u0, dtype=float)
        else:
            u_pred = predict_u(u_hat, prev, prev2, cfg)
        u_hat = correct(u_pred, snap, cfg)
        prev2, prev = prev, snap
        yield u_hat


# -- state estimation loop ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class DdseProblem:
    """Everything the estimator needs besides the tuning of ``FopcConfig``."""

    net: NetworkModel
    selection: Selection
    params: CostParams = field(default_factory=CostParams)


@dataclass(frozen=True, eq=False)
class FopcState:
    k: int
    u_hat: np.ndarray | None
    z_hat: np.ndarray | None
    u_pred: np.ndarray | None = None
    z_pred: np.ndarray | None = None
    model: LinearPowerFlowModel | None = None
    snap_prev: CostSnapshot | None = None
    snap_prev2: CostSnapshot | None = None
    pred_s: float = 0.0
    corr_s: float = 0.0
    fallback: bool = False


def initial_state(problem: DdseProblem, u0=None) -> FopcState:
    """State before the first frame (``k = -1``)."""
    n = problem.selection.n_states
    u0 = np.zeros(n) if u0 is None else np.array(u0, dtype=float)
    return FopcState(k=-1, u_hat=u0, z_hat=None)


def predict(state: FopcState, problem: DdseProblem, cfg: FopcConfig):
    """Prediction for step ``state.k + 1``: ``(u_pred, z_pred)``.

    Before the first frame the prediction is the initial state with the
    zero-load voltage.
    """
    if state.k < 0:
        m = np.concatenate([problem.net.w.real, problem.net.w.imag])
        return state.u_hat.copy(), m
    u_pred = predict_u(state.u_hat, state.snap_prev, state.snap_prev2, cfg)
    return u_pred, evaluate(state.model, u_pred)


def refresh_model(net: NetworkModel, z_pred, selection: Selection | None = None,
                  fallback: LinearPowerFlowModel | None = None):
    """Re-linearize at the predicted voltage.

    Returns ``(model, G_v, fell_back)``.  A predicted voltage with a
    near-zero phase magnitude keeps the ``fallback`` model instead.
    """
    v = z_to_v(z_pred)
    degenerate = (np.any(np.abs(v[net.wye_idx]) < DEGENERATE_V)
                  or np.any(np.abs(net.H @ v) < DEGENERATE_V))
    fell_back = False
    if degenerate:
        if fallback is None:
            raise PowerFlowError("predicted voltage is degenerate and no previous anchor exists")
        logger.warning("degenerate predicted voltage; keeping the previous linearization anchor")
        model, fell_back = fallback, True
    else:
        model = linearize(net, v)
    G_v = model.M[selection.v_rows] if selection is not None else model.M
    return model, G_v, fell_back


def step(state: FopcState, frame: MeasurementFrame, problem: DdseProblem,
         cfg: FopcConfig) -> FopcState:
    """Consume one frame and return the updated estimator state."""
    if frame.k != state.k + 1:
        raise ValueError(f"expected frame k={state.k + 1}, got k={frame.k}")
    t0 = time.perf_counter()
    u_pred, z_pred = predict(state, problem, cfg)
    t1 = time.perf_counter()
    model, _, fell_back = refresh_model(problem.net, z_pred, problem.selection, state.model)
    snap = build_snapshot(model, problem.selection, frame, problem.params)
    t2 = time.perf_counter()
    u_hat = correct(u_pred, snap, cfg)
    z_hat = evaluate(model, u_hat)
    t3 = time.perf_counter()
    return FopcState(
        k=frame.k,
        u_hat=u_hat,
        z_hat=z_hat,
        u_pred=u_pred,
        z_pred=z_pred,
        model=model,
        snap_prev=snap,
        snap_prev2=state.snap_prev,
        pred_s=t1 - t0,
        corr_s=t3 - t2,
        fallback=fell_back,
    )


class FopcEstimator:
    """Stateful convenience wrapper around :func:`step`."""

    def __init__(self, problem: DdseProblem, cfg: FopcConfig, u0=None):
        self.problem = problem
        self.cfg = cfg
        self.state = initial_state(problem, u0)

    def step(self, frame: MeasurementFrame) -> FopcState:
        self.state = step(self.state, frame, self.problem, self.cfg)
        return self.state

    def override(self, u_hat) -> FopcState:
        """Replace the current estimate (and its voltage readout)."""
        u_hat = np.array(u_hat, dtype=float)
        self.state = replace(self.state, u_hat=u_hat, z_hat=evaluate(self.state.model, u_hat))
        return self.state
