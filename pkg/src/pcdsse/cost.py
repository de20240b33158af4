"""
Time-``k`` estimation objective.

    f(u) = (w_v/2) ||y_v - G_v u - m_v||^2
           + sum Huber(y_uY - J_Y u_Y) + sum Huber(y_udelta - J_delta u_delta)
           + (a/2) ||u - u_prior||^2

with exact value, gradient and Hessian oracles.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_WV = 1e3
DEFAULT_DELTA = 8e-4


def huber(eps, delta: float):
    """Huber penalty, quadratic on ``[-delta, delta]`` and linear outside."""
    a = np.abs(np.asarray(eps, dtype=float))
    # with c = min(|eps|, delta) both branches read c |eps| - c^2 / 2
    c = np.minimum(a, delta)
    out = c * a - 0.5 * c * c
    return out if out.ndim else float(out)


def huber_grad(eps, delta: float):
    out = np.clip(np.asarray(eps, dtype=float), -delta, delta)
    return out if out.ndim else float(out)


def huber_curv(eps, delta: float):
    # 1 on the closed interval [-delta, delta]
    out = (np.abs(np.asarray(eps, dtype=float)) <= delta).astype(float)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CostParams:
    wv: float = DEFAULT_WV
    delta: float = DEFAULT_DELTA
    a: float = 1.0
    u_prior: np.ndarray | None = None

    def __post_init__(self):
        if not self.wv > 0:
            raise ValueError("voltage weight must be positive")
        if not self.delta > 0:
            raise ValueError("Huber threshold must be positive")
        if not self.a >= 0:
            raise ValueError("regularizer weight must be non-negative")


@dataclass(frozen=True, eq=False)
class CostSnapshot:
    """Frozen objective of one time step.

    ``u_rows`` holds the metered entries of the full state (wye rows first,
    then delta rows shifted by ``2 N_Y``); ``y_u`` are their measurements.
    """

    G_v: np.ndarray
    m_v: np.ndarray
    y_v: np.ndarray
    u_rows: np.ndarray
    y_u: np.ndarray
    n: int
    wv: float = DEFAULT_WV
    delta: float = DEFAULT_DELTA
    a: float = 1.0
    u_prior: np.ndarray | None = None
    n_uY: int | None = None

    def __post_init__(self):
        if not (self.wv > 0 and self.delta > 0 and self.a >= 0):
            raise ValueError("w_v and delta must be positive and a non-negative")
        if self.G_v.shape != (self.y_v.size, self.n) or self.m_v.shape != self.y_v.shape:
            raise ValueError("voltage block dimensions are inconsistent")
        if self.u_rows.shape != self.y_u.shape:
            raise ValueError("power measurement dimensions are inconsistent")
        if self.u_prior is not None and np.shape(self.u_prior) != (self.n,):
            raise ValueError("prior has the wrong dimension")
        # scaled data reused by every gradient evaluation; the Gram matrix is
        # deliberately not cached so the Hessian stays a one-shot computation
        sw = np.sqrt(self.wv)
        mask = np.zeros(self.n)
        mask[self.u_rows] = 1.0
        y_full = np.zeros(self.n)
        y_full[self.u_rows] = self.y_u
        object.__setattr__(self, "_Gs", sw * self.G_v)
        object.__setattr__(self, "_GsT", np.ascontiguousarray(sw * self.G_v.T))
        object.__setattr__(self, "_cs", sw * (self.m_v - self.y_v))
        object.__setattr__(self, "_mask", mask)
        object.__setattr__(self, "_metered", mask > 0)
        object.__setattr__(self, "_y_full", y_full)
        object.__setattr__(self, "_ap", self.a * self.prior)

    @property
    def prior(self) -> np.ndarray:
        return np.zeros(self.n) if self.u_prior is None else self.u_prior

    @property
    def J_u(self) -> np.ndarray:
        return np.eye(self.n)[self.u_rows]

    @property
    def J_Y(self) -> np.ndarray:
        nY = self.n if self.n_uY is None else self.n_uY
        return np.eye(nY)[self.u_rows[self.u_rows < nY]]

    @property
    def J_delta(self) -> np.ndarray:
        nY = self.n if self.n_uY is None else self.n_uY
        return np.eye(self.n - nY)[self.u_rows[self.u_rows >= nY] - nY]

    def _check(self, u):
        if type(u) is not np.ndarray or u.dtype != float:
            u = np.asarray(u, dtype=float)
        if u.shape != (self.n,):
            raise ValueError(f"state has shape {u.shape}, expected ({self.n},)")
        return u

    def value(self, u) -> float:
        return value(self, u)

    def gradient(self, u) -> np.ndarray:
        return gradient(self, u)

    def hessian(self, u) -> np.ndarray:
        return hessian(self, u)


def build_snapshot(model, selection, frame, params: CostParams) -> CostSnapshot:
    """Objective of one frame under a linear model and measurement selection."""
    G_v = model.M[selection.v_rows]
    return CostSnapshot(
        G_v=G_v,
        m_v=model.m[selection.v_rows],
        y_v=np.asarray(frame.y_v, dtype=float),
        u_rows=selection.u_rows,
        y_u=np.concatenate([frame.y_uY, frame.y_udelta]).astype(float),
        n=selection.n_states,
        wv=params.wv,
        delta=params.delta,
        a=params.a,
        u_prior=params.u_prior,
        n_uY=selection.n_uY,
    )


def value(snap: CostSnapshot, u) -> float:
    u = snap._check(u)
    rv = snap.y_v - snap.G_v @ u - snap.m_v
    ru = snap.y_u - u[snap.u_rows]
    d = u - snap.prior
    return float(0.5 * snap.wv * rv @ rv
                 + np.sum(huber(ru, snap.delta))
                 + 0.5 * snap.a * d @ d)


def _huber_residual(snap: CostSnapshot, u: np.ndarray) -> np.ndarray:
    # measured-minus-state on metered rows, zero elsewhere
    r = snap._y_full - u
    r *= snap._mask
    return r


def gradient(snap: CostSnapshot, u) -> np.ndarray:
    u = snap._check(u)
    rv = snap._Gs.dot(u)
    rv += snap._cs
    g = snap._GsT.dot(rv)
    g += snap.a * u
    if snap.u_prior is not None:
        g -= snap._ap
    r = _huber_residual(snap, u)
    np.minimum(r, snap.delta, out=r)
    np.maximum(r, -snap.delta, out=r)
    g -= r
    return g


def hessian(snap: CostSnapshot, u) -> np.ndarray:
    u = snap._check(u)
    curv = np.abs(_huber_residual(snap, u)) <= snap.delta
    curv &= snap._metered
    Hm = snap._GsT.dot(snap._Gs)
    Hm.flat[::snap.n + 1] += snap.a + curv
    return Hm


def prediction_terms(snap_prev: CostSnapshot, snap_prev2: CostSnapshot | None,
                     u, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Hessian of ``snap_prev`` at ``u`` and the prediction shift.

    The shift is ``gamma grad f_prev(u) + time_grad``.  Both gradients share
    the regularizer, which therefore cancels in the time difference; the
    evaluation is inlined because it sits on the per-step hot path.
    """
    u = snap_prev._check(u)
    delta = snap_prev.delta
    rv = snap_prev._Gs.dot(u)
    rv += snap_prev._cs
    shift = snap_prev._GsT.dot(rv)
    r = snap_prev._y_full - u
    r *= snap_prev._mask
    curv = np.abs(r) <= delta
    curv &= snap_prev._metered
    np.minimum(r, delta, out=r)
    np.maximum(r, -delta, out=r)
    shift -= r
    if snap_prev2 is None:
        shift += snap_prev.a * u
        if snap_prev.u_prior is not None:
            shift -= snap_prev._ap
        shift *= gamma
    else:
        if snap_prev2.a != snap_prev.a or snap_prev2.u_prior is not snap_prev.u_prior:
            return snap_prev.hessian(u), (
                gamma * snap_prev.gradient(u)
                + time_grad(snap_prev, snap_prev2, u))
        shift *= 1.0 + gamma
        rv = snap_prev2._Gs.dot(u)
        rv += snap_prev2._cs
        shift -= snap_prev2._GsT.dot(rv)
        r = snap_prev2._y_full - u
        r *= snap_prev2._mask
        np.minimum(r, snap_prev2.delta, out=r)
        np.maximum(r, -snap_prev2.delta, out=r)
        shift += r
        shift += (gamma * snap_prev.a) * u
        if snap_prev.u_prior is not None:
            shift -= gamma * snap_prev._ap
    Hm = snap_prev._GsT.dot(snap_prev._Gs)
    Hm.flat[::snap_prev.n + 1] += snap_prev.a + curv
    return Hm, shift


def time_grad(snap_k: CostSnapshot, snap_km1: CostSnapshot | None, u) -> np.ndarray:
    """Backward-difference surrogate of ``h`` times the time derivative of the gradient."""
    if snap_km1 is None:
        return np.zeros(snap_k.n)
    if snap_km1.n != snap_k.n:
        raise ValueError("snapshots have different dimensions")
    return gradient(snap_k, u) - gradient(snap_km1, u)


@dataclass(frozen=True)
class ConvexityBounds:
    """Strong convexity ``nu`` and smoothness ``L`` of the objective.

    ``nu_floor`` is the regularizer weight alone, the bound that holds
    without looking at the voltage block; ``converged`` is False when the
    power iteration for ``L`` hit its cap.
    """

    nu: float
    L: float
    nu_floor: float | None = None
    converged: bool = True

    def __post_init__(self):
        if not 0 < self.nu <= self.L:
            raise ValueError(f"need 0 < nu <= L, got nu={self.nu}, L={self.L}")


def power_iteration(A: np.ndarray, tol: float = 1e-6, max_iter: int = 1000,
                    seed: int = 0) -> tuple[float, bool]:
    """Largest eigenvalue of a symmetric PSD matrix.

    Returns the estimate ``||A x|| / ||x||`` and whether the relative change
    dropped below ``tol`` before ``max_iter`` iterations.
    """
    n = A.shape[0]
    if n == 0:
        return 0.0, True
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = A @ x
        lam_new = float(np.linalg.norm(y))
        if lam_new == 0.0:
            return 0.0, True
        x = y / lam_new
        if abs(lam_new - lam) <= tol * lam_new:
            return lam_new, True
        lam = lam_new
    return lam, False


def bounds(snap: CostSnapshot, estimate_nu: bool = True, tol: float = 1e-6,
           max_iter: int = 1000) -> ConvexityBounds:
    """Uniform curvature bounds of ``snap``.

    ``L = a + w_v lambda_max(G_v^T G_v) + 1`` (Huber curvature is at most one
    and the metered wye and delta rows are disjoint; the one is dropped when
    nothing is metered) and ``nu = a + w_v lambda_min(G_v^T G_v)``, or the
    conservative ``nu = a`` when ``estimate_nu`` is False.  Without a
    regularizer the eigenvalue is always computed; a ``ValueError`` signals
    that no positive ``nu`` is available.
    """
    GtG = snap.G_v.T @ snap.G_v
    lam_max, ok = power_iteration(GtG, tol, max_iter)
    if not ok:
        logger.warning("power iteration did not converge; L=%.4g is a running estimate", lam_max)
    nu = snap.a
    if (estimate_nu or snap.a == 0) and GtG.size:
        nu += snap.wv * max(float(np.linalg.eigvalsh(GtG)[0]), 0.0)
    if not nu > 0:
        raise ValueError("objective is not strongly convex (a = 0 and rank-deficient G_v)")
    huber_max = 1.0 if snap.u_rows.size else 0.0
    return ConvexityBounds(nu, snap.a + snap.wv * lam_max + huber_max, snap.a, ok)
