"""
Multiphase feeder model and nonlinear AC power flow.

The network is described by the slack-eliminated admittance blocks
``Y_LL`` and ``Y_L0``, the phase-to-phase incidence matrix ``H`` of the
delta connections and the slack phasors ``v0``.  All quantities are in
per-unit.  Injections follow the generator convention: a consuming load has
negative active power.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import linalg as sla

logger = logging.getLogger(__name__)

PHASES = ("a", "b", "c")
SLACK_ID = 0

# cyclic phase pairs of a delta connection
_DELTA_PAIRS = (("a", "b"), ("b", "c"), ("c", "a"))


class FeederError(ValueError):
    """Invalid feeder description."""


class PowerFlowError(RuntimeError):
    """The AC power flow could not be evaluated or solved."""


@dataclass(frozen=True)
class PhaseIndex:
    node: int
    phase: str
    flat: int


@dataclass(frozen=True)
class ComplexInjection:
    """Net complex power injections of the wye and delta connections."""

    s_Y: np.ndarray
    s_delta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "s_Y", np.asarray(self.s_Y, dtype=complex).ravel())
        object.__setattr__(self, "s_delta", np.asarray(self.s_delta, dtype=complex).ravel())

    @classmethod
    def zeros(cls, net: "NetworkModel") -> "ComplexInjection":
        return cls(np.zeros(net.n_wye, complex), np.zeros(net.n_delta, complex))


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Immutable electrical model of a multiphase feeder.

    Attributes
    ----------
    phases : tuple of PhaseIndex
        Non-slack phases in node-major, phase-minor order.
    Y_LL, Y_L0 : ndarray
        Slack-eliminated admittance blocks, ``N_phi x N_phi`` and
        ``N_phi x 3``.
    H : ndarray
        ``N_delta x N_phi`` incidence of the delta connections; every row has
        one ``+1`` and one ``-1``.
    v0 : ndarray
        Slack voltage phasors of phases a, b, c.
    wye_idx : ndarray
        Flat phase index of every wye connection, in state order.
    delta_conn : tuple
        ``(node, (phase_from, phase_to))`` of every delta connection, aligned
        with the rows of ``H``.
    w : ndarray
        Zero-load voltage profile, the solution of ``Y_LL w = -Y_L0 v0``.
    """

    phases: tuple
    Y_LL: np.ndarray
    Y_L0: np.ndarray
    H: np.ndarray
    v0: np.ndarray
    wye_idx: np.ndarray
    delta_conn: tuple
    w: np.ndarray
    name: str = ""
    base: Mapping = field(default_factory=dict)
    _lu: tuple = field(default=None, repr=False)
    # columns of Y_LL^-1 feeding the wye phases, and Y_LL^-1 H^T
    _Z_Y: np.ndarray = field(default=None, repr=False)
    _Z_delta: np.ndarray = field(default=None, repr=False)

    @property
    def n_phases(self) -> int:
        return len(self.phases)

    @property
    def n_wye(self) -> int:
        return len(self.wye_idx)

    @property
    def n_delta(self) -> int:
        return self.H.shape[0]

    @property
    def n_states(self) -> int:
        return 2 * (self.n_wye + self.n_delta)

    @property
    def wye_conn(self) -> tuple:
        return tuple((self.phases[i].node, self.phases[i].phase) for i in self.wye_idx)

    @property
    def nodes(self) -> tuple:
        return tuple(dict.fromkeys(p.node for p in self.phases))

    def node_phase_index(self, node: int) -> np.ndarray:
        return np.array([p.flat for p in self.phases if p.node == node], dtype=int)

    def solve_YLL(self, rhs: np.ndarray) -> np.ndarray:
        """Apply ``Y_LL^-1`` using the factorization computed at build time."""
        return sla.lu_solve(self._lu, rhs)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "phases": [[p.node, p.phase] for p in self.phases],
            "Y_LL": encode_complex(self.Y_LL),
            "Y_L0": encode_complex(self.Y_L0),
            "H": self.H.tolist(),
            "v0": encode_complex(self.v0),
            "w": encode_complex(self.w),
            "wye_idx": self.wye_idx.tolist(),
        }


# -- complex (de)serialization ---------------------------------------------


def encode_complex(x):
    """Encode a complex scalar or array as nested ``{"re", "im"}`` objects."""
    if np.ndim(x) == 0:
        x = complex(x)
        return {"re": x.real, "im": x.imag}
    return [encode_complex(e) for e in x]


def decode_complex(obj):
    if isinstance(obj, Mapping):
        return complex(float(obj.get("re", 0.0)), float(obj.get("im", 0.0)))
    if isinstance(obj, (int, float)):
        return complex(obj)
    return np.array([decode_complex(e) for e in obj], dtype=complex)


# -- construction ------------------------------------------------------------


def _phase_list(phases) -> list:
    if isinstance(phases, str):
        phases = list(phases)
    phases = [str(p).lower() for p in phases]
    bad = [p for p in phases if p not in PHASES]
    if bad:
        raise FeederError(f"unknown phase(s) {bad}")
    if len(set(phases)) != len(phases):
        raise FeederError(f"repeated phase in {phases}")
    return sorted(phases, key=PHASES.index)


def _delta_pairs(phases: Sequence[str]) -> list:
    ph = set(phases)
    if len(ph) < 2:
        raise FeederError("a delta connection needs at least two phases")
    if len(ph) == 3:
        return list(_DELTA_PAIRS)
    return [pair for pair in _DELTA_PAIRS if set(pair) == ph]


def build_network(feeder: Mapping | str | Path) -> NetworkModel:
    """Assemble a :class:`NetworkModel` from a feeder description.

    Parameters
    ----------
    feeder : dict or path
        Parsed feeder document or a path to its JSON file.  The slack bus is
        node ``0``; it may be listed among the nodes but always carries the
        three phases.

    Raises
    ------
    FeederError
        On duplicate nodes, unknown or missing phases, a disconnected graph
        or a singular ``Y_LL``.
    """
    if not isinstance(feeder, Mapping):
        with open(feeder) as fh:
            feeder = json.load(fh)

    v0 = decode_complex(feeder["slack"])
    if np.shape(v0) != (3,):
        raise FeederError("slack must list three phasors")

    node_phases: dict = {}
    for nd in feeder.get("nodes", []):
        nid = int(nd["id"])
        if nid in node_phases:
            raise FeederError(f"duplicate node id {nid}")
        phs = _phase_list(nd.get("phases", "abc"))
        if nid == SLACK_ID and phs != list(PHASES):
            raise FeederError("the slack node must be three-phase")
        node_phases[nid] = phs
    node_phases.setdefault(SLACK_ID, list(PHASES))

    load_nodes = sorted(n for n in node_phases if n != SLACK_ID)
    if not load_nodes:
        raise FeederError("feeder has no non-slack nodes")

    phases = []
    flat = {}
    for nid in load_nodes:
        for ph in node_phases[nid]:
            flat[(nid, ph)] = len(phases)
            phases.append(PhaseIndex(nid, ph, len(phases)))
    n = len(phases)

    def index(nid, ph):
        if nid == SLACK_ID:
            return None, PHASES.index(ph)
        return flat[(nid, ph)], None

    lines = feeder.get("lines", [])
    if not lines:
        raise FeederError("feeder has no lines (disconnected)")

    Y_full = np.zeros((n + 3, n + 3), dtype=complex)
    adjacency = {nid: set() for nid in node_phases}

    def full_index(nid, ph):
        i, s = index(nid, ph)
        return s if i is None else 3 + i

    for ln in lines:
        a, b = int(ln["from"]), int(ln["to"])
        for nid in (a, b):
            if nid not in node_phases:
                raise FeederError(f"line references unknown node {nid}")
        if a == b:
            raise FeederError(f"line loops on node {a}")
        lphs = _phase_list(ln["phases"]) if "phases" in ln else list(node_phases[b])
        for nid in (a, b):
            missing = [p for p in lphs if p not in node_phases[nid]]
            if missing:
                raise FeederError(f"line {a}-{b} uses phase(s) {missing} absent at node {nid}")
        z = np.atleast_2d(decode_complex(ln["z"]))
        if z.shape != (len(lphs), len(lphs)):
            raise FeederError(f"line {a}-{b}: impedance must be {len(lphs)}x{len(lphs)}")
        try:
            y = np.linalg.inv(z)
        except np.linalg.LinAlgError as exc:
            raise FeederError(f"line {a}-{b}: singular impedance matrix") from exc
        ia = [full_index(a, p) for p in lphs]
        ib = [full_index(b, p) for p in lphs]
        Y_full[np.ix_(ia, ia)] += y
        Y_full[np.ix_(ib, ib)] += y
        Y_full[np.ix_(ia, ib)] -= y
        Y_full[np.ix_(ib, ia)] -= y
        adjacency[a].add(b)
        adjacency[b].add(a)

    seen, stack = {SLACK_ID}, [SLACK_ID]
    while stack:
        for nb in adjacency[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    if len(seen) != len(node_phases):
        raise FeederError(f"nodes {sorted(set(node_phases) - seen)} are not connected to the slack")

    Y_LL = Y_full[3:, 3:].copy()
    Y_L0 = Y_full[3:, :3].copy()

    wye_idx, delta_conn, h_rows = [], [], []
    for ld in feeder.get("loads", []):
        nid = int(ld["node"])
        if nid == SLACK_ID:
            raise FeederError("loads cannot sit on the slack bus")
        if nid not in node_phases:
            raise FeederError(f"load references unknown node {nid}")
        lphs = _phase_list(ld.get("phases", node_phases[nid]))
        missing = [p for p in lphs if p not in node_phases[nid]]
        if missing:
            raise FeederError(f"load at node {nid} uses phase(s) {missing} the node lacks")
        conn = ld.get("connection", "wye").lower()
        if conn == "wye":
            for ph in lphs:
                wye_idx.append(flat[(nid, ph)])
        elif conn == "delta":
            for pa, pb in _delta_pairs(lphs):
                delta_conn.append((nid, (pa, pb)))
                row = np.zeros(n)
                row[flat[(nid, pa)]] = 1.0
                row[flat[(nid, pb)]] = -1.0
                h_rows.append(row)
        else:
            raise FeederError(f"unknown connection type {conn!r}")
    if len(set(wye_idx)) != len(wye_idx):
        raise FeederError("more than one wye load on the same phase")
    if len(set(delta_conn)) != len(delta_conn):
        raise FeederError("more than one delta load on the same phase pair")

    H = np.array(h_rows, dtype=float).reshape(len(h_rows), n)
    wye_idx = np.array(wye_idx, dtype=int)

    lu = sla.lu_factor(Y_LL, check_finite=True)
    if np.min(np.abs(np.diag(lu[0]))) <= 1e-12 * np.max(np.abs(np.diag(lu[0]))):
        raise FeederError("Y_LL is singular")
    w = sla.lu_solve(lu, -Y_L0 @ v0)
    Y_inv = sla.lu_solve(lu, np.eye(n, dtype=complex))
    Z_Y = Y_inv[:, wye_idx]
    Z_delta = Y_inv @ H.T

    for arr in (Y_LL, Y_L0, H, v0, w, wye_idx, Z_Y, Z_delta):
        arr.setflags(write=False)

    return NetworkModel(
        phases=tuple(phases),
        Y_LL=Y_LL,
        Y_L0=Y_L0,
        H=H,
        v0=v0,
        wye_idx=wye_idx,
        delta_conn=tuple(delta_conn),
        w=w,
        name=str(feeder.get("name", "")),
        base=dict(feeder.get("base", {})),
        _lu=lu,
        _Z_Y=Z_Y,
        _Z_delta=Z_delta,
    )


def bundled_feeder(name: str) -> Path:
    """Path of one of the feeders shipped with the package."""
    path = Path(__file__).with_name("feeders") / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(f"no bundled feeder named {name!r}")
    return path


def load_network(ref: str | Path) -> NetworkModel:
    """Build a network from a path or a ``bundled:<name>`` reference."""
    ref = str(ref)
    if ref.startswith("bundled:"):
        return build_network(bundled_feeder(ref.split(":", 1)[1]))
    return build_network(ref)


# -- power flow --------------------------------------------------------------


def _check_injection(net: NetworkModel, inj: ComplexInjection):
    if inj.s_Y.shape != (net.n_wye,) or inj.s_delta.shape != (net.n_delta,):
        raise ValueError(
            f"injection sizes {inj.s_Y.shape}/{inj.s_delta.shape} do not match "
            f"network ({net.n_wye} wye, {net.n_delta} delta)"
        )


def _loaded_voltages(net: NetworkModel, v: np.ndarray):
    vY = v[net.wye_idx]
    vD = net.H @ v
    if np.any(vY == 0) or np.any(vD == 0):
        raise PowerFlowError("zero voltage across a loaded connection")
    return vY, vD


def pf_residual(net: NetworkModel, v, inj: ComplexInjection) -> np.ndarray:
    """Defect of the multiphase AC power-flow equations at ``v``.

    The net current ``i = Y_L0 v0 + Y_LL v`` and the conjugate delta currents
    ``conj(i_delta) = s_delta / (H v)`` are substituted into the nodal power
    balance, giving ``diag(v) conj(i) - s_Y - diag(H^T conj(i_delta)) v``.
    """
    v = np.asarray(v, dtype=complex)
    _check_injection(net, inj)
    _, vD = _loaded_voltages(net, v)
    i = net.Y_L0 @ net.v0 + net.Y_LL @ v
    sY = np.zeros(net.n_phases, dtype=complex)
    sY[net.wye_idx] = inj.s_Y
    iD_conj = inj.s_delta / vD
    return v * np.conj(i) - sY - (net.H.T @ iD_conj) * v


def solve_power_flow(net: NetworkModel, inj: ComplexInjection, v_init=None,
                     tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Solve the AC power flow by fixed-point iteration.

    Each sweep applies
    ``v <- w + Y_LL^-1 [conj(s_Y) / conj(v) + H^T conj(s_delta) / conj(H v)]``
    and stops once the max-norm of :func:`pf_residual` is at most ``tol``.

    Raises
    ------
    PowerFlowError
        If the iteration does not reach ``tol`` within ``max_iter`` sweeps,
        produces non-finite voltages, or hits a zero voltage.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    _check_injection(net, inj)
    v = np.array(net.w if v_init is None else v_init, dtype=complex)
    sY_conj = np.conj(inj.s_Y)
    sD_conj = np.conj(inj.s_delta)
    res_norm = np.inf
    for it in range(1, max_iter + 1):
        vY, vD = _loaded_voltages(net, v)
        rhs = np.zeros(net.n_phases, dtype=complex)
        rhs[net.wye_idx] = sY_conj / np.conj(vY)
        if net.n_delta:
            rhs += net.H.T @ (sD_conj / np.conj(vD))
        v = net.w + net.solve_YLL(rhs)
        if not np.all(np.isfinite(v)):
            raise PowerFlowError(f"power flow diverged at sweep {it}")
        res_norm = np.max(np.abs(pf_residual(net, v, inj)), initial=0.0)
        if res_norm <= tol:
            logger.debug("power flow converged in %d sweeps (residual %.2e)", it, res_norm)
            return v
    raise PowerFlowError(
        f"power flow did not converge in {max_iter} sweeps (residual {res_norm:.3e}); "
        "loading is probably outside the contraction region"
    )


def injection_from_powers(net: NetworkModel, p, q) -> ComplexInjection:
    """Split per-connection ``p + jq`` (wye first, then delta) into an injection."""
    s = np.asarray(p, dtype=float) + 1j * np.asarray(q, dtype=float)
    return ComplexInjection(s[: net.n_wye], s[net.n_wye:])


def iter_phase_labels(net: NetworkModel) -> Iterable[str]:
    for p in net.phases:
        yield f"{p.node}.{p.phase}"
