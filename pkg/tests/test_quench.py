import math

import numpy as np
import pytest
import scipy.linalg as sla

from conftest import dense_op
from vqemit.model import ModelError, ModelParams, dense_hamiltonian, site_ops
from vqemit.mps import product_state, single_excitation_state
from vqemit.quench import (
    Numerics,
    QuenchSchedule,
    ScheduleError,
    WindowError,
    channel_decomposition,
    coupling_protocol,
    detuning_protocol,
    evolve,
    front_centroid,
    light_cone_leakage,
    outside_core,
    pair_amplitudes,
    qubit_series_checks,
    segment_drifts,
    single_photon_amplitudes,
)
from vqemit.spectrum import bound_states

P = ModelParams(n_sites=4, g=0.4)
NM = 2
NUM = Numerics(n_max=NM, d_max=32, svd_tol=1e-12, dt=0.05)


@pytest.fixture(scope="module")
def eigs():
    return bound_states(P, NM, d_max=32)


def test_schedule_validation():
    s = coupling_protocol(0.5, 0.3, 1.0, 2.0, 0.05)
    assert [seg[1] for seg in s.segments] == [0.5, 0.0]
    assert [iv[4] for iv in s.intervals()] == [20, 20]
    assert s.segment_at(0.5) == 0 and s.segment_at(1.0) == 1
    d = detuning_protocol(0.5, 10.0, 0.3, 1.0, 2.0, 0.05)
    assert [seg[2] for seg in d.segments] == [0.3, 10.0]
    assert s.as_dict()["t_end"] == 2.0
    with pytest.raises(ScheduleError):
        QuenchSchedule(((0.1, 0.5, 0.3),), 1.0, 0.05)
    with pytest.raises(ScheduleError):
        QuenchSchedule(((0.0, 0.5, 0.3), (0.5, 0.0, 0.3), (0.4, 0.1, 0.3)), 1.0, 0.05)
    with pytest.raises(ScheduleError):
        QuenchSchedule(((0.0, 0.5, 0.3),), 1.0, 0.0)
    with pytest.raises(ScheduleError):
        QuenchSchedule(((0.0, 0.5, 0.3), (0.33, 0.0, 0.3)), 1.0, 0.05)
    with pytest.raises(ScheduleError):
        QuenchSchedule((), 1.0, 0.05)
    with pytest.raises(ScheduleError):
        QuenchSchedule(((0.0, -0.1, 0.3),), 1.0, 0.05)
    with pytest.raises(ScheduleError):
        QuenchSchedule(((0.0, 0.1, 0.3),), 1.0, 0.2).validate_for(P)


def test_unnormalized_initial_rejected():
    s = product_state(P, NM)
    s.tensors[0] = 2 * s.tensors[0]
    with pytest.raises(ScheduleError):
        evolve(s, QuenchSchedule(((0.0, 0.1, 0.3),), 0.5, 0.05), P, NUM)


def test_zero_coupling_is_trivial():
    sched = QuenchSchedule(((0.0, 0.0, 0.3),), 1.0, 0.05)
    ser = evolve(product_state(P, NM), sched, P, NUM, sample_every=5)
    assert ser.times.size == 5
    assert np.all(ser.n_x == 0) and np.all(ser.p_qb == 0) and np.all(ser.energy == 0)
    assert np.all(ser.parity == 1.0)


def test_matches_exact_piecewise_evolution():
    sched = coupling_protocol(0.4, 0.3, 0.5, 1.0, 0.01)
    ser = evolve(product_state(P, NM), sched, P, NUM.__class__(n_max=NM, d_max=64, svd_tol=0.0, dt=0.01),
                 sample_every=25, keep_states=[1.0])
    h_on = dense_hamiltonian(P, NM)
    h_off = dense_hamiltonian(P.replace(g=0.0), NM)
    v = product_state(P, NM).to_dense()
    v = sla.expm(-0.5j * h_off) @ (sla.expm(-0.5j * h_on) @ v)
    assert np.isclose(abs(np.vdot(v, ser.states[1.0].to_dense())), 1.0, atol=1e-4)
    n_exact = [np.vdot(v, dense_op(P, NM, x, "n") @ v).real for x in range(4)]
    assert np.allclose(ser.n_x[-1], n_exact, atol=1e-4)
    # energy is constant within each segment and the last segment conserves photons
    seg1 = ser.energy[ser.segment == 1]
    assert np.ptp(seg1) < 1e-4
    assert np.ptp(ser.total_photons[ser.segment == 1]) < 1e-4
    assert np.max(np.abs(ser.parity - 1)) < 1e-10
    assert ser.p_qb[-1] == pytest.approx(ser.p_qb[ser.segment == 1][0], abs=1e-10)


def test_samples_include_segment_boundaries():
    sched = coupling_protocol(0.4, 0.3, 0.35, 0.6, 0.05)
    ser = evolve(product_state(P, NM), sched, P, NUM, sample_every=4)
    assert np.isclose(ser.times, 0.35).any() and np.isclose(ser.times[-1], 0.6)
    assert np.all(np.diff(ser.times) > 0)


def test_saturation_warning(caplog):
    p = ModelParams(n_sites=8, g=0.5)
    num = Numerics(n_max=2, d_max=2, dt=0.05)
    with caplog.at_level("WARNING"):
        ser = evolve(product_state(p, 2), QuenchSchedule(((0.0, 0.5, 0.3),), 2.0, 0.05), p, num)
    assert ser.saturation_time is not None
    assert "saturated" in caplog.text


def test_photon_amplitudes_match_dense(eigs, rng):
    psi = single_excitation_state(P, NM, rng.standard_normal(4), qubit_amp=0.3, d_max=32)
    adag = [site_ops(P, NM, x)["adag"] for x in range(4)]
    e1 = eigs["E1"].state
    a1 = single_photon_amplitudes(psi, e1, adag)
    vp, v1 = psi.to_dense(), e1.to_dense()
    ref = [np.vdot(vp, dense_op(P, NM, x, "adag") @ v1) for x in range(4)]
    assert np.allclose(a1, ref)
    gs = eigs["GS"].state
    a2 = pair_amplitudes(psi, gs, adag)
    vg = gs.to_dense()
    for x in range(4):
        for y in range(4):
            op = dense_op(P, NM, x, "adag") @ dense_op(P, NM, y, "adag")
            assert np.isclose(a2[x, y], np.vdot(vp, op @ vg))


def test_ground_state_decomposition(eigs):
    rec = channel_decomposition(eigs["GS"].state, eigs["GS"], eigs["E1"], eigs["E2"], P)
    assert abs(rec.c00) == pytest.approx(1.0, abs=1e-8)
    assert abs(rec.c02) < 1e-6
    # at g > 0 the photon channels overlap the dressed ground state near the qubit
    assert rec.deficit == pytest.approx(-(rec.one_photon_weight + rec.two_photon_weight), abs=1e-8)
    assert rec.as_dict()["pair_factor"] == 2.0


def test_vacuum_decomposition_is_trivial():
    p0 = P.replace(g=0.0)
    e = bound_states(p0, NM, d_max=16)
    rec = channel_decomposition(e["GS"].state, e["GS"], e["E1"], e["E2"], p0)
    assert abs(rec.c00) == pytest.approx(1.0, abs=1e-12)
    assert abs(rec.c02) < 1e-12
    assert np.all(rec.n1 == 0) and np.all(rec.n2 == 0)
    assert abs(rec.deficit) < 1e-12


def test_pair_factor_scaling(eigs):
    a = channel_decomposition(eigs["E2"].state, eigs["GS"], eigs["E1"], eigs["E2"], P, pair_factor=2.0)
    b = channel_decomposition(eigs["E2"].state, eigs["GS"], eigs["E1"], eigs["E2"], P, pair_factor=1.0)
    assert np.allclose(a.n2, 2 * b.n2)
    assert a.two_photon_weight == b.two_photon_weight


def test_decomposition_param_mismatch(eigs):
    with pytest.raises(ModelError):
        channel_decomposition(eigs["GS"].state, eigs["GS"], eigs["E1"], eigs["E2"], P.replace(g=0.0))
    other = bound_states(P.replace(g=0.1), NM, d_max=16)
    with pytest.raises(ModelError):
        channel_decomposition(eigs["GS"].state, eigs["GS"], other["E1"], eigs["E2"], P)


def _fake_series(times, p_qb):
    from vqemit.quench import TimeSeries

    z = np.zeros_like(times)
    return TimeSeries(times, np.zeros((times.size, 4)), p_qb, z, z + 1, z, z, z, z, z)


def test_qubit_checks(eigs):
    w = eigs["E2"].energy - eigs["GS"].energy
    t = np.arange(0, 120, 0.1)
    p = np.where(t < 90, 0.3 + 0.05 * np.cos(w * t), 0.3)
    out = qubit_series_checks(_fake_series(t, p), eigs["GS"], eigs["E2"], t_off=90.0, t_settle=2.0)
    assert out["frequency_match"] and out["frozen"]
    assert abs(out["dominant_frequency"] - w) <= out["resolution"]
    p2 = 0.3 + 0.05 * np.cos(w * t)
    out2 = qubit_series_checks(_fake_series(t, p2), eigs["GS"], eigs["E2"], t_off=90.0, t_settle=2.0)
    assert not out2["frozen"]
    with pytest.raises(WindowError, match="at least"):
        qubit_series_checks(_fake_series(t, p), eigs["GS"], eigs["E2"], t_off=20.0, t_settle=2.0)


def test_core_and_light_cone_helpers():
    nx = np.zeros((2, 21))
    nx[0, 10] = 1.0
    nx[1, [2, 18]] = 0.5
    assert np.allclose(outside_core(nx, 10, 3), [0.0, 1.0])
    assert front_centroid(nx[1], 10, 3) == pytest.approx(8.0)
    assert front_centroid(nx[0], 10, 3) == 0.0
    ser = _fake_series(np.array([0.0, 1.0]), np.zeros(2))
    ser.n_x = nx
    leak = light_cone_leakage(ser, 10, v_max=1.0, margin=3)
    # at t=1 the cone reaches distance 4; photons at distance 8 leak
    assert np.allclose(leak, [0.0, 1.0])


def test_segment_drifts():
    p = ModelParams(n_sites=4, g=0.4)
    sched = coupling_protocol(0.4, 0.3, 1.0, 2.0, 0.05)
    ser = evolve(product_state(p, 2), sched, p, Numerics(n_max=2), sample_every=7)
    d = segment_drifts(ser)
    assert d.shape == (2,)
    # the segment-1 end sample uses the segment-1 Hamiltonian
    end0 = np.flatnonzero(ser.segment == 0)[-1]
    assert ser.times[end0] == pytest.approx(1.0)
    assert d[0] == pytest.approx(ser.energy[end0] - ser.segment_start_energy[0])
    assert np.all(np.abs(d) < 1e-2)
