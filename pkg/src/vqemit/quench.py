"""Real-time quench protocols and emission observables."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import ModelError, ModelParams, site_ops
from .mps import MPS, left_environments, overlap, right_environments, transfer_left
from .spectrum import EigenRecord, parity_operator, qubit_population, spatial_profile
from .mps import expect_product
from .tebd import BondHamiltonian, TrotterEvolver

log = logging.getLogger(__name__)


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class Numerics:
    n_max: int = 5
    d_max: int = 20
    svd_tol: float = 1e-10
    dt: float = 0.05
    trotter_order: int = 2
    energy_tol: float = 1e-7
    seed: int = 0

    def as_dict(self) -> dict:
        return dict(
            n_max=self.n_max, d_max=self.d_max, svd_tol=self.svd_tol, dt=self.dt,
            trotter_order=self.trotter_order, energy_tol=self.energy_tol, seed=self.seed,
        )


@dataclass(frozen=True)
class QuenchSchedule:
    """Piecewise-constant ``g(t)`` and ``delta(t)``; segment ``i`` runs until the next start."""

    segments: tuple
    t_end: float
    dt: float

    def __post_init__(self):
        segs = tuple((float(t), float(g), float(d)) for t, g, d in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ScheduleError("schedule needs at least one segment")
        if segs[0][0] != 0.0:
            raise ScheduleError(f"first segment must start at t=0, got {segs[0][0]}")
        starts = [s[0] for s in segs] + [self.t_end]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ScheduleError("segment start times must increase and precede t_end")
        if not self.dt > 0:
            raise ScheduleError(f"dt must be positive, got {self.dt}")
        for a, b in zip(starts, starts[1:]):
            n = (b - a) / self.dt
            if abs(n - round(n)) > 1e-6:
                raise ScheduleError(f"segment [{a}, {b}] is not a multiple of dt={self.dt}")
        for t, g, d in segs:
            if g < 0 or d < 0:
                raise ScheduleError(f"segment at t={t} has negative g or delta")

    def validate_for(self, params: ModelParams, strict_dt: bool = True) -> None:
        if strict_dt:
            limit = min(0.1 / params.j_hop, 0.1 / params.omega)
            if self.dt > limit + 1e-15:
                raise ScheduleError(f"dt={self.dt} exceeds min(0.1/J, 0.1/omega) = {limit}")

    def intervals(self):
        """``(t_start, t_stop, g, delta, n_steps)`` per segment."""
        starts = [s[0] for s in self.segments] + [self.t_end]
        for (t0, g, d), t1 in zip(self.segments, starts[1:]):
            yield t0, t1, g, d, int(round((t1 - t0) / self.dt))

    def segment_at(self, t: float) -> int:
        idx = 0
        for i, (t0, _, _) in enumerate(self.segments):
            if t + 1e-12 >= t0:
                idx = i
        return idx

    def as_dict(self) -> dict:
        return {"segments": [list(s) for s in self.segments], "t_end": self.t_end, "dt": self.dt}


def coupling_protocol(g: float, delta: float, t_off: float, t_end: float, dt: float) -> QuenchSchedule:
    """Vacuum start, ``g`` switched on at 0 and off at ``t_off``."""
    return QuenchSchedule(((0.0, g, delta), (t_off, 0.0, delta)), t_end, dt)


def detuning_protocol(g: float, delta_far: float, delta_on: float, t_off: float, t_end: float,
                      dt: float) -> QuenchSchedule:
    """Constant ``g``; the gap jumps ``delta_far -> delta_on`` at 0 and back at ``t_off``."""
    return QuenchSchedule(((0.0, g, delta_on), (t_off, g, delta_far)), t_end, dt)


@dataclass
class TimeSeries:
    times: np.ndarray
    n_x: np.ndarray
    p_qb: np.ndarray
    energy: np.ndarray
    parity: np.ndarray
    norm_correction: np.ndarray
    step_correction: np.ndarray
    discarded: np.ndarray
    max_bond: np.ndarray
    segment: np.ndarray
    channel_weights: list = field(default_factory=list)
    states: dict = field(default_factory=dict, repr=False)
    saturation_time: float | None = None
    segment_start_energy: list = field(default_factory=list)

    @property
    def total_photons(self) -> np.ndarray:
        return self.n_x.sum(axis=1)


def _segment_params(params: ModelParams, g: float, delta: float) -> ModelParams:
    return params.replace(g=g, delta=delta)


def evolve(
    initial: MPS,
    schedule: QuenchSchedule,
    params: ModelParams,
    numerics: Numerics,
    sample_every: int = 10,
    snapshot_times=(),
    snapshot_fn=None,
    keep_states=(),
    strict_dt: bool = True,
    saturation_threshold: float = 1e-8,
) -> TimeSeries:
    """Trotterized evolution through every segment of ``schedule``.

    Observables are sampled every ``sample_every`` steps and at segment
    boundaries (a boundary sample belongs to the segment that ends there;
    ``segment_start_energy`` holds ``<H>`` of each new segment at its start).
    ``snapshot_fn(t, state, segment_params)`` is called at each of
    ``snapshot_times`` and its return value appended to ``channel_weights``;
    copies of the state at ``keep_states`` times are stored in ``states``.
    """
    schedule.validate_for(params, strict_dt)
    if abs(initial.norm() - 1.0) > 1e-8:
        raise ScheduleError("initial state must be normalized")
    if abs(schedule.dt - numerics.dt) > 1e-15 and numerics.dt != schedule.dt:
        log.debug("schedule dt %.3g overrides numerics dt %.3g", schedule.dt, numerics.dt)
    state = initial.copy()
    state.d_max = numerics.d_max
    n_max = numerics.n_max
    dt = schedule.dt
    pi_op = parity_operator(params, n_max)

    marks = {}
    for t in snapshot_times:
        marks.setdefault(int(round(t / dt)), set()).add("snap")
    for t in keep_states:
        marks.setdefault(int(round(t / dt)), set()).add("keep")

    rows = {k: [] for k in ("t", "nx", "pqb", "e", "par", "norm", "stepn", "disc", "bond", "seg")}
    out = TimeSeries(*(np.empty(0) for _ in range(10)))
    kept_norm = 1.0  # product of (1 - correction) since t = 0
    pending_step = 0.0
    pending_disc = 0.0

    def sample(step, ham, seg_idx, seg_params):
        nonlocal pending_step, pending_disc
        t = step * dt
        rows["t"].append(t)
        rows["nx"].append(spatial_profile(state, params, n_max))
        rows["pqb"].append(qubit_population(state, params, n_max))
        rows["e"].append(ham.energy(state))
        rows["par"].append(expect_product(state, pi_op).real)
        rows["norm"].append(1.0 - kept_norm)
        rows["stepn"].append(pending_step)
        rows["disc"].append(pending_disc)
        rows["bond"].append(max(state.bond_dims))
        rows["seg"].append(seg_idx)
        pending_step = 0.0
        pending_disc = 0.0

    def handle_marks(step, seg_params):
        tags = marks.get(step, ())
        t = step * dt
        if "keep" in tags:
            out.states[round(t, 12)] = state.copy()
        if "snap" in tags and snapshot_fn is not None:
            out.channel_weights.append(snapshot_fn(t, state, seg_params))

    step = 0
    for seg_idx, (t0, t1, g, delta, n_steps) in enumerate(schedule.intervals()):
        seg_params = _segment_params(params, g, delta)
        ham = BondHamiltonian(seg_params, n_max)
        ev = TrotterEvolver(ham, dt, False, numerics.trotter_order, numerics.d_max, numerics.svd_tol)
        out.segment_start_energy.append(ham.energy(state))
        if seg_idx == 0:
            sample(step, ham, seg_idx, seg_params)
            handle_marks(step, seg_params)
        end = step + n_steps
        while step < end:
            stops = [end, (step // sample_every + 1) * sample_every]
            stops += [m for m in marks if step < m <= end]
            nxt = min(stops)
            rep = ev.run(state, nxt - step)
            kept_norm *= float(np.prod([1.0 - c for c in rep.norm_corrections]))
            pending_step = max(pending_step, max(abs(c) for c in rep.norm_corrections))
            pending_disc += rep.discarded
            per_step = rep.discarded / (nxt - step)
            if (out.saturation_time is None and per_step > saturation_threshold
                    and max(state.bond_dims) >= numerics.d_max):
                out.saturation_time = nxt * dt
                log.warning("bond dimension saturated with discarded weight %.2e at t=%.4g",
                            per_step, nxt * dt)
            step = nxt
            if step % sample_every == 0 or step == end:
                sample(step, ham, seg_idx, seg_params)
            handle_marks(step, seg_params)

    out.times = np.array(rows["t"])
    out.n_x = np.array(rows["nx"])
    out.p_qb = np.array(rows["pqb"])
    out.energy = np.array(rows["e"])
    out.parity = np.array(rows["par"])
    out.norm_correction = np.array(rows["norm"])
    out.step_correction = np.array(rows["stepn"])
    out.discarded = np.array(rows["disc"])
    out.max_bond = np.array(rows["bond"])
    out.segment = np.array(rows["seg"])
    return out


# ---------------------------------------------------------------------------
# channel decomposition


@dataclass
class ChannelRecord:
    t: float
    c00: complex
    c02: complex
    n1: np.ndarray
    n2: np.ndarray
    one_photon_weight: float
    two_photon_weight: float
    deficit: float
    pair_factor: float = 2.0

    def as_dict(self) -> dict:
        return {
            "t": self.t,
            "c00": [self.c00.real, self.c00.imag],
            "c02": [self.c02.real, self.c02.imag],
            "abs2_c00": abs(self.c00) ** 2,
            "abs2_c02": abs(self.c02) ** 2,
            "sum_n1": float(self.n1.sum()),
            "sum_n2": float(self.n2.sum()),
            "one_photon_weight": self.one_photon_weight,
            "two_photon_weight": self.two_photon_weight,
            "deficit": self.deficit,
            "pair_factor": self.pair_factor,
        }


def _same_model(a: ModelParams, b: ModelParams) -> bool:
    return all(
        math.isclose(getattr(a, k), getattr(b, k), rel_tol=0, abs_tol=1e-12)
        for k in ("omega", "j_hop", "delta", "g")
    ) and a.n_sites == b.n_sites and a.qubit_site == b.qubit_site


def single_photon_amplitudes(bra: MPS, ket: MPS, adag_ops) -> np.ndarray:
    """``<bra| a_x^dag |ket>`` for every site."""
    left = left_environments(bra, ket)
    right = right_environments(bra, ket)
    amps = np.empty(bra.n_sites, dtype=complex)
    for x in range(bra.n_sites):
        env = transfer_left(left[x], bra.tensors[x], ket.tensors[x], adag_ops[x])
        amps[x] = np.sum(env * right[x + 1])
    return amps


def pair_amplitudes(bra: MPS, ket: MPS, adag_ops) -> np.ndarray:
    """Symmetric matrix ``<bra| a_x^dag a_y^dag |ket>``."""
    n = bra.n_sites
    left = left_environments(bra, ket)
    right = right_environments(bra, ket)
    amps = np.zeros((n, n), dtype=complex)
    for x in range(n):
        bx, kx = bra.tensors[x], ket.tensors[x]
        double = transfer_left(left[x], bx, kx, adag_ops[x] @ adag_ops[x])
        amps[x, x] = np.sum(double * right[x + 1])
        env = transfer_left(left[x], bx, kx, adag_ops[x])
        for y in range(x + 1, n):
            by, ky = bra.tensors[y], ket.tensors[y]
            val = transfer_left(env, by, ky, adag_ops[y])
            amps[x, y] = amps[y, x] = np.sum(val * right[y + 1])
            env = transfer_left(env, by, ky)
    return amps


def channel_decomposition(
    state_t: MPS,
    gs: EigenRecord,
    e1: EigenRecord,
    e2: EigenRecord,
    params: ModelParams | None = None,
    t: float = float("nan"),
    pair_factor: float = 2.0,
) -> ChannelRecord:
    """Project ``state_t`` on the bound-state channels of the current Hamiltonian.

    ``n1[x] = |<psi| a_x^dag |E1>|^2`` and
    ``n2[x] = pair_factor * sum_y |<psi| a_x^dag a_y^dag |GS>|^2``.
    The two-photon channel weight is ``sum_{x,y} |<psi| a_x^dag a_y^dag |GS>|^2 / 2``.
    """
    ref = gs.params
    for rec in (e1, e2):
        if rec.params is not None and ref is not None and not _same_model(rec.params, ref):
            raise ModelError("eigenstates were computed for different Hamiltonians")
    if params is not None and ref is not None and not _same_model(params, ref):
        raise ModelError(
            f"eigenstates belong to g={ref.g}, delta={ref.delta}; state evolves with g={params.g}, delta={params.delta}"
        )
    model = ref if ref is not None else params
    adag = [site_ops(model, gs.n_max, x)["adag"] for x in range(model.n_sites)]
    c00 = overlap(gs.state, state_t)
    c02 = overlap(e2.state, state_t)
    a1 = single_photon_amplitudes(state_t, e1.state, adag)
    a2 = pair_amplitudes(state_t, gs.state, adag)
    n1 = np.abs(a1) ** 2
    abs2 = np.abs(a2) ** 2
    n2 = pair_factor * abs2.sum(axis=1)
    w1 = float(n1.sum())
    w2 = 0.5 * float(abs2.sum())
    deficit = 1.0 - (abs(c00) ** 2 + abs(c02) ** 2 + w1 + w2)
    return ChannelRecord(t, c00, c02, n1, n2, w1, w2, deficit, pair_factor)


# ---------------------------------------------------------------------------
# analysis helpers


class WindowError(ValueError):
    pass


def qubit_series_checks(
    series: TimeSeries,
    gs: EigenRecord,
    e2: EigenRecord,
    t_off: float,
    t_settle: float,
    min_periods: float = 3.0,
    freeze_tol: float = 1e-6,
) -> dict:
    """Dominant angular frequency of ``P_qb`` on ``(t_settle, t_off)`` and its post-quench variance."""
    expected = e2.energy - gs.energy
    t = series.times
    win = (t > t_settle) & (t < t_off)
    span = t[win][-1] - t[win][0] if win.sum() > 1 else 0.0
    min_span = min_periods * 2 * math.pi / abs(expected) if expected != 0 else math.inf
    if span < min_span:
        raise WindowError(
            f"window of length {span:.3g} too short; need at least {min_span:.3g} "
            f"({min_periods} periods of E2 - E_GS)"
        )
    tw = t[win]
    pw = series.p_qb[win] - series.p_qb[win].mean()
    # Hann-tapered periodogram on a fine grid
    taper = np.hanning(tw.size)
    dtw = tw[1] - tw[0]
    omegas = np.linspace(0.2 * abs(expected), min(5 * abs(expected), math.pi / dtw), 4000)
    power = np.abs(np.exp(-1j * np.outer(omegas, tw)) @ (pw * taper)) ** 2
    peak = float(omegas[np.argmax(power)])
    resolution = 2 * math.pi / span
    post = series.p_qb[t > t_off]
    post_var = float(np.var(post)) if post.size else float("nan")
    return {
        "dominant_frequency": peak,
        "expected_frequency": expected,
        "resolution": resolution,
        "frequency_match": abs(peak - expected) <= resolution,
        "window": [float(tw[0]), float(tw[-1])],
        "post_quench_variance": post_var,
        "frozen": post_var < freeze_tol,
        "amplitude": float(np.std(pw)),
    }


def segment_drifts(series: TimeSeries) -> np.ndarray:
    """``<H>`` at the end of each segment minus ``<H>`` at its start (same Hamiltonian)."""
    out = []
    for k, e0 in enumerate(series.segment_start_energy):
        idx = np.flatnonzero(series.segment == k)
        out.append(series.energy[idx[-1]] - e0 if idx.size else np.nan)
    return np.array(out)


def outside_core(n_x: np.ndarray, center: int, radius: int) -> np.ndarray:
    """Photon number farther than ``radius`` sites from ``center`` (per row for 2D input)."""
    dist = np.abs(np.arange(n_x.shape[-1]) - center)
    return n_x[..., dist > radius].sum(axis=-1)


def light_cone_leakage(series: TimeSeries, center: int, v_max: float, margin: int = 10,
                       t_start: float = 0.0) -> np.ndarray:
    """Photons outside ``|x - center| > v_max (t - t_start) + margin`` for every sample with ``t >= t_start``."""
    dist = np.abs(np.arange(series.n_x.shape[1]) - center)
    out = []
    for t, row in zip(series.times, series.n_x):
        if t < t_start:
            continue
        out.append(row[dist > v_max * (t - t_start) + margin].sum())
    return np.array(out)


def front_centroid(n_x: np.ndarray, center: int, radius: int) -> float:
    """Mean distance from ``center`` of the photons beyond ``radius``."""
    dist = np.abs(np.arange(n_x.size) - center)
    mask = dist > radius
    w = n_x[mask]
    return float((w * dist[mask]).sum() / w.sum()) if w.sum() > 0 else 0.0
