"""
Smoothly drifting quadratic objectives with a prescribed spectrum.

They exercise the tracking guarantees away from power-flow modelling: the
Hessian is ``w_v G^T G + a I`` with eigenvalues chosen by the caller and the
optimizer moves along a sinusoid, so ``u*`` is known in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cost import CostSnapshot, bounds
from ..fopc import FopcConfig, track


@dataclass
class DriftingProblem:
    snapshots: list
    u_star: np.ndarray
    hessian: np.ndarray
    h: float

    @property
    def bounds(self):
        return bounds(self.snapshots[0])


def drifting_problem(eigs=(1.0, 2.0, 3.0, 4.0, 5.0), a: float = 0.5, steps: int = 400,
                     h: float = 0.1, omega: float = 0.5, amp: float = 1.0, seed: int = 0,
                     direction: str | None = None, wv: float = 1.0) -> DriftingProblem:
    """Quadratic objectives sampled every ``h`` from a continuous drift.

    Parameters
    ----------
    eigs : sequence of float
        Hessian eigenvalues, each at least ``a``.
    direction : {None, "slowest"}
        ``"slowest"`` moves the measured state along the eigenvector of the
        smallest eigenvalue only; otherwise every coordinate drifts with its
        own phase.
    """
    eigs = np.asarray(eigs, dtype=float)
    if np.any(eigs < a):
        raise ValueError("eigenvalues must be at least a")
    n = eigs.size
    rng = np.random.default_rng(seed)
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    G = np.sqrt((eigs - a) / wv)[:, None] * V.T
    Hm = wv * G.T @ G + a * np.eye(n)
    t = h * np.arange(steps)
    if direction == "slowest":
        if eigs.min() <= a:
            raise ValueError("the slowest eigenvalue must exceed a, or the data never see the drift")
        u_true = amp * np.sin(omega * t)[:, None] * V[:, np.argmin(eigs)]
    elif direction is None:
        phase = rng.uniform(0, 2 * np.pi, n)
        u_true = amp * np.sin(omega * t[:, None] + phase) @ V.T
    else:
        raise ValueError(f"unknown direction {direction!r}")
    snaps, u_star = [], []
    empty = np.zeros(0, dtype=int)
    for k in range(steps):
        y = G @ u_true[k]
        snaps.append(CostSnapshot(G_v=G, m_v=np.zeros(n), y_v=y, u_rows=empty,
                                  y_u=np.zeros(0), n=n, wv=wv, a=a))
        u_star.append(np.linalg.solve(Hm, wv * G.T @ y))
    return DriftingProblem(snaps, np.array(u_star), Hm, h)


def tracking_errors(problem: DriftingProblem, cfg: FopcConfig, u0=None) -> np.ndarray:
    """``||u_hat(k) - u*(k)||`` along the whole horizon."""
    est = np.array(list(track(problem.snapshots, cfg, u0)))
    return np.linalg.norm(est - problem.u_star, axis=1)
