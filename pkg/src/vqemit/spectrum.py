"""Parity-resolved eigenstates by projected imaginary-time evolution, and their diagnostics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, local_dims, site_ops
from .mps import (
    MPS,
    MpsError,
    ProductOperator,
    add,
    apply_product_operator,
    compress,
    expect_local,
    expect_product,
    local_expectations,
    overlap,
    product_state,
    single_excitation_state,
)
from .tebd import BondHamiltonian, TrotterEvolver

log = logging.getLogger(__name__)

DEFAULT_DT_SCHEDULE = (0.1, 0.03, 0.01, 0.003, 0.001)


class EigensolverError(RuntimeError):
    pass


@dataclass
class EigenRecord:
    label: str
    energy: float
    parity: int
    state: MPS = field(repr=False)
    n_x_profile: np.ndarray = field(repr=False)
    histogram: np.ndarray = field(repr=False)
    parity_expectation: float = 1.0
    p_qb: float = 0.0
    params: ModelParams | None = None
    n_max: int = 0
    imag_time: float = 0.0
    steps: int = 0
    energy_trace: list = field(default_factory=list, repr=False)
    in_band: bool = False

    def summary(self) -> dict:
        return {
            "label": self.label,
            "energy": self.energy,
            "parity": self.parity,
            "parity_expectation": self.parity_expectation,
            "p_qb": self.p_qb,
            "histogram": [float(v) for v in self.histogram],
            "imag_time": self.imag_time,
            "steps": self.steps,
            "max_bond": max(self.state.bond_dims),
            "in_band": self.in_band,
            "truncation": self.state.truncation_log,
        }


def _photon_phase_ops(params: ModelParams, n_max: int, phase_of_n) -> list[np.ndarray]:
    nb = n_max + 1
    base = phase_of_n(np.arange(nb))
    ops = []
    for x in range(params.n_sites):
        ops.append(np.diag(np.tile(base, 2) if x == params.qubit_site else base))
    return ops


def parity_operator(params: ModelParams, n_max: int) -> ProductOperator:
    """``(-1)^(sigma^+ sigma^- + sum_x n_x)`` as a product of local phases."""
    ops = _photon_phase_ops(params, n_max, lambda n: (-1.0) ** n)
    nb = n_max + 1
    q = params.qubit_site
    ops[q] = np.diag(np.concatenate([(-1.0) ** np.arange(nb), -((-1.0) ** np.arange(nb))]))
    return ProductOperator(ops)


def counting_operator(params: ModelParams, n_max: int, theta: float) -> ProductOperator:
    """``exp(i theta sum_x n_x)``; the qubit is not counted."""
    return ProductOperator(_photon_phase_ops(params, n_max, lambda n: np.exp(1j * theta * n)))


def photon_histogram(state: MPS, params: ModelParams, n_max: int, n_cut: int = 8) -> np.ndarray:
    """Photon-number distribution ``P(0..n_cut)`` from the counting characteristic function."""
    m = n_cut + 1
    chars = np.array(
        [expect_product(state, counting_operator(params, n_max, 2 * math.pi * j / m)) for j in range(m)]
    )
    n = np.arange(m)
    probs = (np.exp(-2j * math.pi * np.outer(n, np.arange(m)) / m) @ chars) / m
    if np.max(np.abs(probs.imag)) > 1e-10:
        log.warning("photon histogram has imaginary parts up to %.2e", np.max(np.abs(probs.imag)))
    probs = probs.real
    probs[(probs < 0) & (probs > -1e-10)] = 0.0
    if probs[-1] > 1e-3:
        log.warning("photon histogram aliased: P(n_cut=%d) = %.3e; raise n_cut", n_cut, probs[-1])
    return probs


def spatial_profile(state: MPS, params: ModelParams, n_max: int) -> np.ndarray:
    """``<a_x^dag a_x>`` on every site."""
    ops = [site_ops(params, n_max, x)["n"] for x in range(params.n_sites)]
    return local_expectations(state, ops).real


def qubit_population(state: MPS, params: ModelParams, n_max: int) -> float:
    q = params.qubit_site
    return expect_local(state, q, site_ops(params, n_max, q)["sp_sm"]).real


def project_parity(state: MPS, parity_op: ProductOperator, sector: int, d_max: int, svd_tol: float) -> MPS:
    """``(1 + sector * Pi) / 2 |psi>``, compressed and normalized."""
    flipped = apply_product_operator(state, parity_op)
    out = add(state, flipped, 0.5, 0.5 * sector)
    compress(out, d_max, svd_tol)
    nrm = out.norm()
    if nrm < 1e-12:
        raise EigensolverError(
            "parity projection annihilated the state; restart from a randomized initial state"
        )
    out.normalize()
    return out


def orthogonalize(state: MPS, against, d_max: int, svd_tol: float) -> MPS:
    """Gram-Schmidt removal of the components along ``against`` (normalized states)."""
    out = state
    for phi in against:
        c = overlap(phi, out)
        if abs(c) < 1e-15:
            continue
        out = add(out, phi, 1.0, -c)
        compress(out, d_max, svd_tol)
        if out.norm() < 1e-12:
            raise EigensolverError("state collapsed onto an excluded eigenstate; restart from a new start")
        out.normalize()
    return out


def initial_state(params: ModelParams, n_max: int, sector: int, d_max: int, seed: int = 0,
                  noise: float = 0.05, excited: bool = False) -> MPS:
    """Starting point of the imaginary-time search.

    Even sector: the vacuum, or for ``excited`` the odd start with one more
    photon on the qubit site (two excitations, orthogonal to the vacuum).
    Odd sector: a photon on the qubit site plus seeded noise.
    """
    if sector == 1 and not excited:
        return product_state(params, n_max, d_max=d_max)
    rng = np.random.default_rng(seed)
    amps = noise * rng.standard_normal(params.n_sites)
    amps[params.qubit_site] += 1.0
    odd = single_excitation_state(params, n_max, amps, 1.0 if excited else noise * rng.standard_normal(),
                                  d_max=d_max)
    if sector == -1:
        return odd
    ops = [None] * params.n_sites
    ops[params.qubit_site] = site_ops(params, n_max, params.qubit_site)["adag"]
    out = apply_product_operator(odd, ProductOperator(ops))
    out.canonicalize(0)
    out.normalize()
    return out


def find_eigenstate(
    params: ModelParams,
    n_max: int,
    d_max: int = 20,
    sector: int = 1,
    orthogonal_to=(),
    dt_schedule=DEFAULT_DT_SCHEDULE,
    energy_tol: float = 1e-7,
    initial: MPS | None = None,
    seed: int = 0,
    svd_tol: float = 1e-10,
    check_every: int = 10,
    max_steps_per_stage: int = 4000,
    label: str | None = None,
    n_cut: int = 8,
) -> EigenRecord:
    """Lowest eigenstate in a parity sector, orthogonal to ``orthogonal_to``.

    Each stage of ``dt_schedule`` runs imaginary-time steps until the energy
    decrease per unit imaginary time drops below ``energy_tol``. After every
    step the state is projected on the parity sector (when it has drifted),
    orthogonalized and renormalized.
    """
    if sector not in (1, -1):
        raise ValueError(f"sector must be +1 or -1, got {sector}")
    orthogonal_to = list(orthogonal_to)
    for phi in orthogonal_to:
        if abs(phi.norm() - 1.0) > 1e-8:
            raise ValueError("orthogonal_to states must be normalized")
    ham = BondHamiltonian(params, n_max)
    pi_op = parity_operator(params, n_max)
    if initial is not None:
        state = initial.copy()
    else:
        state = initial_state(params, n_max, sector, d_max, seed, excited=bool(orthogonal_to))
    if initial is not None and not np.iscomplexobj(state.tensors[0]):
        state = state.astype(float)
    state.canonicalize(0)
    state.normalize()
    if abs(expect_product(state, pi_op).real - sector) > 1e-12:
        state = project_parity(state, pi_op, sector, d_max, svd_tol)
    state = orthogonalize(state, orthogonal_to, d_max, svd_tol)

    e_prev = ham.energy(state)
    trace = [(0.0, e_prev)]
    tau = 0.0
    steps = 0
    for dt in dt_schedule:
        ev = TrotterEvolver(ham, dt, imaginary=True, d_max=d_max, svd_tol=svd_tol)
        block = 1 if orthogonal_to else check_every
        for _ in range(max(1, max_steps_per_stage // check_every)):
            for _ in range(check_every // block):
                ev.run(state, block)
                pexp = expect_product(state, pi_op).real
                if abs(pexp - sector) > 1e-10:
                    state = project_parity(state, pi_op, sector, d_max, svd_tol)
                if orthogonal_to:
                    state = orthogonalize(state, orthogonal_to, d_max, svd_tol)
            steps += check_every
            tau += check_every * dt
            e = ham.energy(state)
            trace.append((tau, e))
            rate = (e_prev - e) / (check_every * dt)
            if rate < -1e-8:
                log.warning(
                    "energy rose by %.2e during imaginary time (truncation %.2e)",
                    e - e_prev, state.truncation_log,
                )
            e_prev = e
            if abs(rate) < energy_tol:
                break
    e = ham.energy(state)
    pexp = expect_product(state, pi_op).real
    return EigenRecord(
        label=label or ("GS" if sector == 1 and not orthogonal_to else f"sector{sector:+d}"),
        energy=e,
        parity=sector,
        state=state,
        n_x_profile=spatial_profile(state, params, n_max),
        histogram=photon_histogram(state, params, n_max, n_cut),
        parity_expectation=pexp,
        p_qb=qubit_population(state, params, n_max),
        params=params,
        n_max=n_max,
        imag_time=tau,
        steps=steps,
        energy_trace=trace,
    )


def bound_states(params: ModelParams, n_max: int, d_max: int = 20, seed: int = 0, **kwargs) -> dict[str, EigenRecord]:
    """``GS`` and ``E2`` (even, orthogonalized) and ``E1`` (odd)."""
    gs = find_eigenstate(params, n_max, d_max, 1, label="GS", seed=seed, **kwargs)
    e1 = find_eigenstate(params, n_max, d_max, -1, label="E1", seed=seed, **kwargs)
    e2 = find_eigenstate(params, n_max, d_max, 1, orthogonal_to=[gs.state], label="E2", seed=seed, **kwargs)
    # band edges: one free photon costs at least omega - 2J on top of the lower state
    edge = params.omega - 2 * params.j_hop
    e1.in_band = bool(e1.energy >= gs.energy + edge)
    e2.in_band = bool(e2.energy >= e1.energy + edge)
    for rec in (e1, e2):
        if rec.in_band:
            log.warning("%s at %.6g lies in the one-photon continuum (g=%.3g)", rec.label, rec.energy, params.g)
    return {"GS": gs, "E1": e1, "E2": e2}
