import numpy as np
import pytest

from conftest import dense_op
from vqemit.model import ModelParams, dense_hamiltonian
from vqemit.mps import expect_product, product_state, single_excitation_state
from vqemit.oracle import ed_sector_spectra, ed_sector_states, parity_labels
from vqemit.spectrum import (
    EigensolverError,
    bound_states,
    counting_operator,
    find_eigenstate,
    initial_state,
    orthogonalize,
    parity_operator,
    photon_histogram,
    project_parity,
    qubit_population,
    spatial_profile,
)
from vqemit.tebd import BondHamiltonian

P = ModelParams(n_sites=4, g=0.3)
NM = 2


@pytest.fixture(scope="module")
def records():
    return bound_states(P, NM, d_max=20)


def test_parity_operator_dense():
    s = single_excitation_state(P, NM, [0.2, 0.1, 0.9, 0.3], qubit_amp=0.4)
    assert np.isclose(expect_product(s, parity_operator(P, NM)), -1.0)
    assert np.isclose(expect_product(product_state(P, NM), parity_operator(P, NM)), 1.0)


def test_counting_operator_phase():
    s = product_state(P, NM, spec=[1, 0, 2, 0], qubit=1)
    val = expect_product(s, counting_operator(P, NM, 0.7))
    # three photons; the qubit excitation is not counted
    assert np.isclose(val, np.exp(3j * 0.7))


def test_histogram_of_basis_states():
    s = product_state(P, NM, spec=[1, 0, 2, 0], qubit=1)
    h = photon_histogram(s, P, NM, n_cut=8)
    assert np.isclose(h[3], 1.0) and np.isclose(h.sum(), 1.0)


def test_histogram_matches_dense(records):
    rec = records["GS"]
    v = rec.state.to_dense()
    photons = sum(np.diag(dense_op(P, NM, x, "n")) for x in range(4))
    ref = np.bincount(photons.astype(int), weights=np.abs(v) ** 2, minlength=9)[:9]
    assert np.allclose(rec.histogram, ref, atol=1e-10)
    assert abs(rec.histogram.sum() - 1.0) < 1e-8 and rec.histogram.min() >= -1e-10


def test_profiles_and_qubit_population(records):
    rec = records["E1"]
    v = rec.state.to_dense()
    for x in range(4):
        assert np.isclose(rec.n_x_profile[x], np.vdot(v, dense_op(P, NM, x, "n") @ v).real)
    q = P.qubit_site
    assert np.isclose(rec.p_qb, np.vdot(v, dense_op(P, NM, q, "sp_sm") @ v).real)
    assert np.isclose(qubit_population(rec.state, P, NM), rec.p_qb)
    assert np.allclose(spatial_profile(rec.state, P, NM), rec.n_x_profile)


def test_sector_energies_match_ed(records):
    ed = ed_sector_spectra(P, NM)
    assert abs(records["GS"].energy - ed[1][0]) < 1e-6
    assert abs(records["E1"].energy - ed[-1][0]) < 1e-6
    assert abs(records["E2"].energy - ed[1][1]) < 1e-6
    assert records["GS"].parity == 1 and records["E1"].parity == -1
    assert abs(records["E1"].parity_expectation + 1) < 1e-10


def test_states_match_ed(records):
    ed = ed_sector_states(P, NM)
    assert abs(np.vdot(ed[1][1][:, 0], records["GS"].state.to_dense())) > 1 - 1e-6
    assert abs(np.vdot(ed[-1][1][:, 0], records["E1"].state.to_dense())) > 1 - 1e-6


def test_energy_trace_decreases(records):
    trace = np.array([e for _, e in records["GS"].energy_trace])
    assert np.all(np.diff(trace) < 1e-8)
    summary = records["GS"].summary()
    assert summary["label"] == "GS" and len(summary["histogram"]) == 9


def test_project_parity(rng):
    s = single_excitation_state(P, NM, rng.standard_normal(4), qubit_amp=0.2)
    mixed = orthogonalize(s, [], 20, 1e-12)
    from vqemit.mps import add, compress

    mix = add(product_state(P, NM), s, 0.6, 0.8)
    compress(mix, 20, 1e-12)
    mix.normalize()
    even = project_parity(mix, parity_operator(P, NM), 1, 20, 1e-12)
    assert np.isclose(expect_product(even, parity_operator(P, NM)), 1.0)
    assert np.allclose(np.abs(even.to_dense()), np.abs(product_state(P, NM).to_dense()))
    with pytest.raises(EigensolverError):
        project_parity(mixed, parity_operator(P, NM), 1, 20, 1e-12)


def test_orthogonalize_collapse():
    s = product_state(P, NM)
    with pytest.raises(EigensolverError):
        orthogonalize(s, [s.copy()], 20, 1e-12)


def test_initial_states_have_requested_parity():
    pi = parity_operator(P, NM)
    for sector, excited in ((1, False), (1, True), (-1, False)):
        s = initial_state(P, NM, sector, 20, seed=3, excited=excited)
        assert np.isclose(expect_product(s, pi).real, sector)
    ex = initial_state(P, NM, 1, 20, excited=True)
    assert abs(np.vdot(product_state(P, NM).to_dense(), ex.to_dense())) < 1e-12


def test_excited_search_at_zero_coupling():
    p = ModelParams(n_sites=4, g=0.0)
    recs = bound_states(p, NM, d_max=20)
    ed = ed_sector_spectra(p, NM)
    assert abs(recs["GS"].energy) < 1e-12
    assert abs(recs["E2"].energy - ed[1][1]) < 1e-6


def test_bad_sector():
    with pytest.raises(ValueError):
        find_eigenstate(P, NM, sector=0)


def test_seed_determinism():
    a = find_eigenstate(P, NM, 20, -1, seed=5)
    b = find_eigenstate(P, NM, 20, -1, seed=5)
    assert a.energy == b.energy
    assert all(np.array_equal(x, y) for x, y in zip(a.state.tensors, b.state.tensors))


def test_parity_labels_consistent_with_operator():
    h = dense_hamiltonian(P, NM)
    par = parity_labels(P, NM)
    assert set(np.unique(par)) == {-1, 1}
    assert np.allclose(h[np.ix_(par == 1, par == -1)], 0.0)


@pytest.mark.parametrize("delta, expected", [(0.3, True), (0.1, False)])
def test_in_band_flag(delta, expected):
    # at g = 0 the odd minimum is the bare qubit; the band starts at omega - 2J = 0.2
    recs = bound_states(ModelParams(n_sites=4, g=0.0, delta=delta), 2, 8)
    assert recs["E1"].energy - recs["GS"].energy == pytest.approx(delta, abs=1e-6)
    assert recs["E1"].in_band is expected
    assert recs["E1"].summary()["in_band"] is expected
