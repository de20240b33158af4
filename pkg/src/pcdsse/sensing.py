"""
Measurement selection, synthetic load profiles and the measurement stream.

Voltage phasors are sampled every step at the PMU nodes with additive
rectangular noise.  Load powers come from slow meters: each sample is the
average of the true profile over its averaging window, so the averaging
itself is the measurement error.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .linmodel import u_from_injection, v_to_z
from .netmodel import NetworkModel, injection_from_powers, solve_power_flow


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class SelectionSets:
    """Instrumented nodes.  ``None`` for a metered set means every load."""

    pmu_nodes: tuple = ()
    metered_wye: tuple | None = None
    metered_delta: tuple | None = None

    def __post_init__(self):
        for name in ("pmu_nodes", "metered_wye", "metered_delta"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(int(n) for n in val))


@dataclass(frozen=True, eq=False)
class Selection:
    """Row-selection operators stored as index arrays.

    ``v_rows`` picks rows of ``z`` (real parts first, then imaginary parts);
    ``uY_rows`` and ``udelta_rows`` pick entries of ``u_Y`` and ``u_delta``.
    """

    v_rows: np.ndarray
    uY_rows: np.ndarray
    udelta_rows: np.ndarray
    n_z: int
    n_uY: int
    n_udelta: int

    @property
    def n_states(self) -> int:
        return self.n_uY + self.n_udelta

    @property
    def J_v(self) -> np.ndarray:
        return np.eye(self.n_z)[self.v_rows]

    @property
    def J_Y(self) -> np.ndarray:
        return np.eye(self.n_uY)[self.uY_rows]

    @property
    def J_delta(self) -> np.ndarray:
        return np.eye(self.n_udelta)[self.udelta_rows]

    @property
    def u_rows(self) -> np.ndarray:
        """Metered entries as indices into the full state ``u``."""
        return np.concatenate([self.uY_rows, self.n_uY + self.udelta_rows])


def build_selection(net: NetworkModel, sets: SelectionSets) -> Selection:
    nodes = set(net.nodes)
    for n in sets.pmu_nodes:
        if n not in nodes:
            raise SelectionError(f"PMU node {n} is not in the network")
    phase_idx = [p.flat for p in net.phases if p.node in set(sets.pmu_nodes)]
    v_rows = np.array(phase_idx + [net.n_phases + i for i in phase_idx], dtype=int)

    wye_nodes = [net.phases[i].node for i in net.wye_idx]
    delta_nodes = [nd for nd, _ in net.delta_conn]

    def pick(conn_nodes, wanted, kind):
        if wanted is None:
            return list(range(len(conn_nodes)))
        for n in wanted:
            if n not in nodes:
                raise SelectionError(f"metered node {n} is not in the network")
            if n not in conn_nodes:
                raise SelectionError(f"node {n} has no {kind} load to meter")
        return [j for j, nd in enumerate(conn_nodes) if nd in set(wanted)]

    jY = pick(wye_nodes, sets.metered_wye, "wye")
    jD = pick(delta_nodes, sets.metered_delta, "delta")
    nY, nD = net.n_wye, net.n_delta
    uY_rows = np.array(jY + [nY + j for j in jY], dtype=int)
    uD_rows = np.array(jD + [nD + j for j in jD], dtype=int)
    return Selection(v_rows, uY_rows, uD_rows, 2 * net.n_phases, 2 * nY, 2 * nD)


# -- load profiles ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LoadProfile:
    """Per-connection net injections sampled every ``h`` seconds.

    ``p`` and ``q`` have one row per sample and one column per connection,
    wye connections first, then delta connections.  Consuming loads have
    negative values.
    """

    t: np.ndarray
    p: np.ndarray
    q: np.ndarray
    h: float
    pf: float = 0.95

    def __len__(self):
        return len(self.t)

    def u(self, k: int, n_wye: int) -> np.ndarray:
        p, q = self.p[k], self.q[k]
        return np.concatenate([p[:n_wye], q[:n_wye], p[n_wye:], q[n_wye:]])

    def u_all(self, n_wye: int) -> np.ndarray:
        p, q = self.p, self.q
        return np.hstack([p[:, :n_wye], q[:, :n_wye], p[:, n_wye:], q[:, n_wye:]])


def reactive_from_active(p, pf: float):
    return np.asarray(p) * math.tan(math.acos(pf))


def synthesize_profile(net: NetworkModel, steps: int, h: float, scale: float = 0.08,
                       seed: int = 0, pf: float = 0.95, slow_amp: float = 0.1,
                       fast_amp: float = 0.02, noise_tc: float = 60.0,
                       period: float = 14400.0) -> LoadProfile:
    """Seeded synthetic consumption: slow sinusoids plus smoothed noise.

    Every connection gets a base level drawn in ``[0.5, 1.5] * scale`` (per
    unit), a slow sinusoid of relative amplitude ``slow_amp`` and period
    around ``period``, a faster sinusoid, and first-order filtered gaussian
    noise with time constant ``noise_tc`` seconds.  Reactive power follows
    from the constant power factor.
    """
    rng = np.random.default_rng(seed)
    n = net.n_wye + net.n_delta
    t = h * np.arange(steps)
    base = scale * rng.uniform(0.5, 1.5, n)
    periods = period * rng.uniform(0.7, 1.3, n)
    phase = rng.uniform(0, 2 * np.pi, (2, n))
    shape = (1.0
             + slow_amp * np.sin(2 * np.pi * t[:, None] / periods + phase[0])
             + 0.5 * slow_amp * np.sin(2 * np.pi * 3.1 * t[:, None] / periods + phase[1]))
    a = math.exp(-h / noise_tc)
    white = rng.standard_normal((steps, n)) * fast_amp * math.sqrt(1 - a * a)
    ar = np.zeros((steps, n))
    acc = rng.standard_normal(n) * fast_amp
    for k in range(steps):
        acc = a * acc + white[k]
        ar[k] = acc
    p = -base * np.maximum(shape + ar, 0.05)
    return LoadProfile(t, p, reactive_from_active(p, pf), float(h), pf)


def read_profile_csv(path, h: float | None = None, pf: float = 0.95) -> LoadProfile:
    """Read a CSV with a ``t`` column and one active-injection column per connection."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], np.array(rows[1:], dtype=float)
    if header[0].strip().lower() != "t":
        raise ValueError("first CSV column must be 't'")
    t, p = data[:, 0], data[:, 1:]
    if h is None:
        h = float(t[1] - t[0]) if len(t) > 1 else 1.0
    return LoadProfile(t, p, reactive_from_active(p, pf), float(h), pf)


def downsample_average(profile: LoadProfile, window: float) -> LoadProfile:
    """Replace every sample by the mean of its averaging window.

    Windows are aligned with ``t = 0`` (sample ``k`` belongs to window
    ``floor(k h / window)``); a trailing partial window is averaged over the
    samples it has.
    """
    ratio = window / profile.h
    r = int(round(ratio))
    if r < 1 or abs(ratio - r) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"window {window} is not an integer multiple of h={profile.h}")
    if r == 1:
        return profile
    out = []
    for arr in (profile.p, profile.q):
        res = np.empty_like(arr)
        for s in range(0, len(arr), r):
            res[s:s + r] = arr[s:s + r].mean(axis=0)
        out.append(res)
    return LoadProfile(profile.t, out[0], out[1], profile.h, profile.pf)


# -- measurement frames --------------------------------------------------


@dataclass(frozen=True, eq=False)
class MeasurementFrame:
    k: int
    t: float
    y_v: np.ndarray
    y_uY: np.ndarray
    y_udelta: np.ndarray
    sigma_v: float = 0.0
    sigma_u: float = 0.0

    def __eq__(self, other):
        if not isinstance(other, MeasurementFrame):
            return NotImplemented
        return (self.k == other.k and self.t == other.t
                and self.sigma_v == other.sigma_v and self.sigma_u == other.sigma_u
                and all(np.array_equal(a, b) for a, b in
                        ((self.y_v, other.y_v), (self.y_uY, other.y_uY),
                         (self.y_udelta, other.y_udelta))))

    def to_record(self) -> dict:
        return {"k": int(self.k), "t": float(self.t), "y_v": self.y_v.tolist(),
                "y_uY": self.y_uY.tolist(), "y_uD": self.y_udelta.tolist()}


@dataclass(frozen=True, eq=False)
class GroundTruth:
    k: int
    v: np.ndarray
    u: np.ndarray

    @property
    def z(self) -> np.ndarray:
        return v_to_z(self.v)


@dataclass
class SensingParams:
    sigma_v: float = 1e-5
    window: float = 600.0
    sigma_u: float = 0.0
    # fraction of (window, metered entry) pairs replaced by gross errors
    outlier_frac: float = 0.0
    # gross error size, in multiples of the RMS averaging deviation
    outlier_scale: float = 10.0
    pf_tol: float = 1e-10


def simulate(net: NetworkModel, profile: LoadProfile, selection: Selection,
             sigma_v: float, window: float, h: float, seed: int, steps: int,
             sigma_u: float = 0.0, outlier_frac: float = 0.0,
             outlier_scale: float = 10.0, pf_tol: float = 1e-10,
             ) -> Iterator[tuple[MeasurementFrame, GroundTruth]]:
    """Yield ``(frame, truth)`` for ``k = 0 .. steps-1``.

    The ground-truth voltage of each step solves the AC power flow at the
    true injections (warm-started from the previous step).
    """
    if len(profile) < steps:
        raise ValueError(f"profile has {len(profile)} samples, {steps} steps requested")
    if abs(profile.h - h) > 1e-12 * h:
        raise ValueError(f"profile resolution {profile.h} differs from h={h}")
    rng = np.random.default_rng(seed)
    nY = net.n_wye
    truth_u = profile.u_all(nY)[:steps]
    meas_u = downsample_average(profile, window).u_all(nY)[:steps]
    rows = selection.u_rows

    if outlier_frac > 0 and rows.size:
        r = int(round(window / h))
        dev = np.sqrt(np.mean((meas_u[:, rows] - truth_u[:, rows]) ** 2))
        n_win = -(-steps // r)
        hit = rng.random((n_win, rows.size)) < outlier_frac
        sign = rng.choice([-1.0, 1.0], size=(n_win, rows.size))
        gross = np.repeat(hit * sign * outlier_scale * dev, r, axis=0)[:steps]
        meas_u = meas_u.copy()
        meas_u[:, rows] += gross

    v = net.w
    for k in range(steps):
        inj = injection_from_powers(net, profile.p[k], profile.q[k])
        v = solve_power_flow(net, inj, v, tol=pf_tol)
        u_true = u_from_injection(inj)
        z = v_to_z(v)
        y_v = z[selection.v_rows]
        if sigma_v > 0:
            y_v = y_v + rng.normal(0.0, sigma_v, y_v.shape)
        y_u = meas_u[k, rows]
        if sigma_u > 0:
            y_u = y_u + rng.normal(0.0, sigma_u, y_u.shape)
        nYm = selection.uY_rows.size
        frame = MeasurementFrame(k, float(profile.t[k]), y_v, y_u[:nYm], y_u[nYm:],
                                 float(sigma_v), float(sigma_u))
        yield frame, GroundTruth(k, v, u_true)


def simulate_stream(net, profile, selection, sigma_v, window, h, seed, steps,
                    **kwargs) -> list:
    """Measurement frames only; see :func:`simulate`."""
    return [f for f, _ in simulate(net, profile, selection, sigma_v, window, h,
                                   seed, steps, **kwargs)]


# -- JSON-lines stream -----------------------------------------------------


def serialize_stream(frames: Iterable[MeasurementFrame]) -> str:
    return "".join(json.dumps(f.to_record()) + "\n" for f in frames)


def parse_stream(text: str, sigma_v: float = 0.0, sigma_u: float = 0.0) -> list:
    frames = []
    last_k = None
    for line in text.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        k = int(rec["k"])
        if last_k is not None and k <= last_k:
            raise ValueError(f"frame k={k} does not follow k={last_k}")
        last_k = k
        frames.append(MeasurementFrame(
            k, float(rec["t"]),
            np.array(rec["y_v"], dtype=float),
            np.array(rec["y_uY"], dtype=float),
            np.array(rec["y_uD"], dtype=float),
            sigma_v, sigma_u))
    return frames


def write_stream(path, frames: Sequence[MeasurementFrame]):
    with open(path, "w") as fh:
        fh.write(serialize_stream(frames))


def read_stream(path, sigma_v: float = 0.0, sigma_u: float = 0.0) -> list:
    with open(path) as fh:
        return parse_stream(fh.read(), sigma_v, sigma_u)
