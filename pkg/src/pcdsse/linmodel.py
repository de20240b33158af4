"""
Linearized power flow ``z = M_Y u_Y + M_delta u_delta + m``.

``z`` stacks the real and imaginary parts of the phase voltages and ``u``
stacks ``[p_Y; q_Y; p_delta; q_delta]``.  The model is exact at zero load and
at its anchor whenever the anchor voltage solves the AC equations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netmodel import (
    ComplexInjection,
    NetworkModel,
    PowerFlowError,
    encode_complex,
)


@dataclass(frozen=True, eq=False)
class LinearPowerFlowModel:
    M_Y: np.ndarray
    M_delta: np.ndarray
    m: np.ndarray
    anchor_v: np.ndarray

    @property
    def M(self) -> np.ndarray:
        return np.hstack([self.M_Y, self.M_delta])

    @property
    def n_states(self) -> int:
        return self.M_Y.shape[1] + self.M_delta.shape[1]

    def evaluate(self, u) -> np.ndarray:
        return evaluate(self, u)

    def to_dict(self) -> dict:
        return {
            "M_Y": self.M_Y.tolist(),
            "M_delta": self.M_delta.tolist(),
            "m": self.m.tolist(),
            "anchor_v": encode_complex(self.anchor_v),
        }


def v_to_z(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.concatenate([v.real, v.imag])


def z_to_v(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    n = z.size // 2
    return z[:n] + 1j * z[n:]


def u_from_injection(inj: ComplexInjection) -> np.ndarray:
    return np.concatenate([inj.s_Y.real, inj.s_Y.imag, inj.s_delta.real, inj.s_delta.imag])


def injection_from_u(net: NetworkModel, u) -> ComplexInjection:
    u = np.asarray(u, dtype=float)
    nY, nD = net.n_wye, net.n_delta
    if u.shape != (2 * (nY + nD),):
        raise ValueError(f"state has shape {u.shape}, expected ({2 * (nY + nD)},)")
    sY = u[:nY] + 1j * u[nY:2 * nY]
    sD = u[2 * nY:2 * nY + nD] + 1j * u[2 * nY + nD:]
    return ComplexInjection(sY, sD)


def _real_block(A: np.ndarray) -> np.ndarray:
    # v = A conj(s) = A (p - jq)
    return np.block([[A.real, A.imag], [A.imag, -A.real]])


def linearize(net: NetworkModel, anchor_v) -> LinearPowerFlowModel:
    """Fixed-point linearization of the AC power flow around ``anchor_v``.

    With ``A = Y_LL^-1 diag(conj(v))^-1`` restricted to the wye phases and
    ``B = Y_LL^-1 H^T diag(conj(H v))^-1`` the voltage is approximated by
    ``w + A conj(s_Y) + B conj(s_delta)``.  Only the diagonal scalings change
    with the anchor; the columns of ``Y_LL^-1`` are cached on the network.
    """
    v = np.asarray(anchor_v, dtype=complex)
    if v.shape != (net.n_phases,):
        raise ValueError(f"anchor has shape {v.shape}, expected ({net.n_phases},)")
    vY = v[net.wye_idx]
    vD = net.H @ v
    if np.any(vY == 0) or np.any(vD == 0):
        raise PowerFlowError("anchor voltage is zero across a loaded connection")
    A = net._Z_Y / np.conj(vY)
    B = net._Z_delta / np.conj(vD)
    m = np.concatenate([net.w.real, net.w.imag])
    return LinearPowerFlowModel(_real_block(A), _real_block(B), m, v.copy())


def evaluate(model: LinearPowerFlowModel, u) -> np.ndarray:
    """Rectangular voltage ``[Re v; Im v]`` predicted for the state ``u``."""
    u = np.asarray(u, dtype=float)
    nY = model.M_Y.shape[1]
    if u.shape != (model.n_states,):
        raise ValueError(f"state has shape {u.shape}, expected ({model.n_states},)")
    z = model.M_Y.dot(u[:nY])
    z += model.M_delta.dot(u[nY:])
    z += model.m
    return z
