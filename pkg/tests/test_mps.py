import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_op, embed
from vqemit.model import ModelParams, site_ops
from vqemit.mps import (
    MPS,
    MpsError,
    ProductOperator,
    add,
    apply_product_operator,
    apply_two_site_gate,
    compress,
    dumps_mps,
    expect_local,
    expect_product,
    load_mps,
    loads_mps,
    local_expectations,
    overlap,
    overlap_with_insertion,
    product_state,
    save_mps,
    single_excitation_state,
    truncation_rank,
)


def random_mps(rng, dims, bond=3, complex_=True):
    n = len(dims)
    bonds = [1] + [bond] * (n - 1) + [1]
    tensors = []
    for x, d in enumerate(dims):
        t = rng.standard_normal((bonds[x], d, bonds[x + 1]))
        if complex_:
            t = t + 1j * rng.standard_normal(t.shape)
        tensors.append(t)
    state = MPS(tensors, d_max=64)
    state.canonicalize(0)
    state.normalize()
    return state


P = ModelParams(n_sites=4, g=0.3)
DIMS = [3, 3, 6, 3]  # n_max = 2, qubit on site 2


def test_product_state_dense():
    s = product_state(P, 2, spec=[1, 0, 2, 0], qubit=1)
    v = s.to_dense()
    idx = np.ravel_multi_index((1, 0, 2 + 3, 0), DIMS)
    assert v[idx] == 1.0 and np.count_nonzero(v) == 1
    with pytest.raises(MpsError):
        product_state(P, 2, spec=[3, 0, 0, 0])
    with pytest.raises(MpsError):
        product_state(P, 2, qubit=2)


def test_single_excitation_state():
    amps = np.array([0.1, -0.4, 0.7, 0.2])
    s = single_excitation_state(P, 2, amps, qubit_amp=0.5)
    assert max(s.bond_dims) <= 2
    v = s.to_dense()
    vac = product_state(P, 2).to_dense()
    expect = sum(amps[x] * dense_op(P, 2, x, "adag") @ vac for x in range(4))
    # sigma^+ raises the fused index by n_max + 1 = 3
    sigma_plus = embed(P, 2, 2, np.eye(6, k=-3))
    expect = expect + 0.5 * sigma_plus @ vac
    expect /= np.linalg.norm(expect)
    assert np.isclose(abs(np.vdot(expect, v)), 1.0)


def test_bad_construction():
    with pytest.raises(MpsError):
        MPS([np.ones((2, 2, 1))])
    with pytest.raises(MpsError):
        MPS([np.ones((1, 2, 2)), np.ones((3, 2, 1))])


def test_canonical_forms(rng):
    s = random_mps(rng, DIMS)
    v = s.to_dense()
    for c in range(4):
        s.canonicalize(c)
        assert s.is_canonical()
        assert np.allclose(s.to_dense(), v)
    s.move_center(1)
    assert s.center == 1 and s.is_canonical()
    assert np.isclose(s.norm(), 1.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), bond=st.integers(1, 5))
def test_overlap_matches_dense(seed, bond):
    rng = np.random.default_rng(seed)
    a, b = random_mps(rng, DIMS, bond), random_mps(rng, DIMS, bond)
    assert np.isclose(overlap(a, b), np.vdot(a.to_dense(), b.to_dense()))


def test_insertions_and_expectations(rng):
    a, b = random_mps(rng, DIMS), random_mps(rng, DIMS)
    va, vb = a.to_dense(), b.to_dense()
    ad0, a3 = site_ops(P, 2, 0)["adag"], site_ops(P, 2, 3)["a"]
    got = overlap_with_insertion(a, b, [(0, ad0), (3, a3)])
    ref = np.vdot(va, embed(P, 2, 0, ad0) @ embed(P, 2, 3, a3) @ vb)
    assert np.isclose(got, ref)
    # two insertions on one site compose as op1 @ op2
    got = overlap_with_insertion(a, b, [(1, ad0), (1, ad0)])
    assert np.isclose(got, np.vdot(va, embed(P, 2, 1, ad0 @ ad0) @ vb))
    with pytest.raises(MpsError):
        overlap_with_insertion(a, b, [(0, ad0)] * 3)
    nops = [site_ops(P, 2, x)["n"] for x in range(4)]
    vals = local_expectations(a, nops)
    for x in range(4):
        ref = np.vdot(va, embed(P, 2, x, nops[x]) @ va).real
        assert np.isclose(vals[x], ref)
        assert np.isclose(expect_local(a, x, nops[x]), ref)


def test_two_site_gate_exact(rng):
    s = random_mps(rng, DIMS)
    v = s.to_dense()
    g = rng.standard_normal((18, 18)) + 1j * rng.standard_normal((18, 18))
    disc = apply_two_site_gate(s, g, (1, 2), d_max=64, svd_tol=0.0)
    assert disc == 0.0 and s.center == 2 and s.is_canonical()
    full = np.kron(np.kron(np.eye(3), g), np.eye(3))
    assert np.allclose(s.to_dense(), full @ v)
    with pytest.raises(MpsError):
        apply_two_site_gate(s, g, (0, 2))
    with pytest.raises(MpsError):
        apply_two_site_gate(s, np.eye(4), (0, 1))


def test_truncation_rank():
    s = np.array([1.0, 0.1, 1e-3, 1e-6])
    keep, disc = truncation_rank(s, 10, 0.0)
    assert keep == 4 and disc == 0.0
    # relative weight of the last value is ~1e-12, below the tolerance
    keep, disc = truncation_rank(s, 10, 1e-10)
    assert keep == 3 and np.isclose(disc, 1e-12 / np.sum(s**2))
    keep, disc = truncation_rank(s, 2, 1e-10)
    assert keep == 2 and np.isclose(disc, (1e-6 + 1e-12) / np.sum(s**2))
    keep, _ = truncation_rank(s, 10, 1e-5)
    assert keep == 2
    assert truncation_rank(np.zeros(3), 4, 1e-10) == (1, 0.0)


def test_truncated_gate_discarded_weight(rng):
    s = random_mps(rng, DIMS, bond=4)
    g = np.linalg.qr(rng.standard_normal((18, 18)))[0]
    ref = np.kron(np.kron(np.eye(3), g), np.eye(3)) @ s.to_dense()
    disc = apply_two_site_gate(s, g, (1, 2), d_max=2, svd_tol=1e-12)
    assert disc > 0 and s.bond_dims[2] == 2
    # for an orthonormal gate the discarded weight is the missing norm
    assert np.isclose(1 - s.norm() ** 2, disc, atol=1e-12)
    assert np.isclose(abs(np.vdot(ref, s.to_dense())), s.norm() ** 2, atol=1e-10)


def test_add_and_compress(rng):
    a, b = random_mps(rng, DIMS, 2), random_mps(rng, DIMS, 2)
    c = add(a, b, 0.3, -1.2j)
    ref = 0.3 * a.to_dense() - 1.2j * b.to_dense()
    assert np.allclose(c.to_dense(), ref)
    assert compress(c, 64, 0.0) < 1e-14
    assert np.allclose(c.to_dense(), ref) and c.center == 0 and c.is_canonical()
    d = add(a, a, 1.0, 1.0)
    compress(d, 64, 1e-12)
    assert max(d.bond_dims) <= 2


def test_product_operator(rng):
    s = random_mps(rng, DIMS)
    ops = [None, np.diag([1.0, -1.0, 1.0]), None, np.diag([2.0, 0.5, 1.0])]
    out = apply_product_operator(s, ProductOperator(ops))
    full = np.kron(np.kron(np.kron(np.eye(3), ops[1]), np.eye(6)), ops[3])
    assert np.allclose(out.to_dense(), full @ s.to_dense())
    assert out.center is None  # non-unitary factor loses canonical form
    v = s.to_dense()
    assert np.isclose(expect_product(s, ProductOperator(ops)), np.vdot(v, full @ v))
    with pytest.raises(MpsError):
        apply_product_operator(s, ProductOperator(ops[:3]))


def test_checkpoint_roundtrip(tmp_path, rng):
    s = random_mps(rng, DIMS)
    s.truncation_log = 1.5e-9
    blob = dumps_mps(s)
    assert blob[:6] == b"VQMPS\0"
    r = loads_mps(blob)
    assert r.center == s.center and r.d_max == s.d_max and r.truncation_log == s.truncation_log
    assert all(np.array_equal(x, y) for x, y in zip(r.tensors, s.tensors))
    save_mps(tmp_path / "s.vqmps", s)
    assert np.allclose(load_mps(tmp_path / "s.vqmps").to_dense(), s.to_dense())
    with pytest.raises(MpsError):
        loads_mps(b"junk" + blob)
    with pytest.raises(MpsError):
        loads_mps(blob + b"\0")


def test_to_dense_cap():
    s = product_state(ModelParams(n_sites=40), 3)
    with pytest.raises(MpsError):
        s.to_dense()
