"""Variational polaron ansatz: self-consistent solution and derived quantities.

The ansatz displaces every photon mode by ``-sigma_x f_k``. Minimizing the
vacuum energy of the displaced frame gives the coupled equations

    f_k = g_k / (delta_r + omega_k),      delta_r = delta * exp(-2 sum_k f_k^2).

Modes are either the periodic momentum grid (``boundary="periodic"``) or the
standing waves of the open chain used by the MPS code (``boundary="open"``),
so that the polaron energies can be compared to the exact finite model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import _kernels
from .model import ModelError, ModelParams, coupling_gk, dispersion, momentum_grid


class PolaronConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class ModeSet:
    """Single-photon modes: energies, couplings to the qubit and real-space shapes.

    ``shapes[x, m]`` is the amplitude of mode ``m`` on site ``x`` (complex for
    plane waves).
    """

    omega_k: np.ndarray
    g_k: np.ndarray
    shapes: np.ndarray = field(repr=False)
    boundary: str = "periodic"


def photon_modes(params: ModelParams, boundary: str = "periodic") -> ModeSet:
    n = params.n_sites
    x = np.arange(n)
    if boundary == "periodic":
        k = momentum_grid(n)
        rel = x - params.qubit_site
        shapes = np.exp(1j * np.outer(rel, k)) / math.sqrt(n)
        return ModeSet(dispersion(params, k), coupling_gk(params), shapes, boundary)
    if boundary == "open":
        q = np.arange(1, n + 1)
        shapes = math.sqrt(2.0 / (n + 1)) * np.sin(np.outer(x + 1, q) * math.pi / (n + 1))
        omega_q = params.omega - 2 * params.j_hop * np.cos(q * math.pi / (n + 1))
        g_q = params.g * shapes[params.qubit_site]
        return ModeSet(omega_q, g_q, shapes, boundary)
    raise ModelError(f"unknown boundary {boundary!r}")


@dataclass(frozen=True)
class PolaronSolution:
    f_k: np.ndarray
    delta_r: float
    e_gs: float
    params: ModelParams
    iterations: int
    residual: float
    modes: ModeSet = field(repr=False)


def _ground_energy(delta, delta_r, omega_k, g_k, f_k):
    return 0.5 * (delta - delta_r) + float(np.sum(omega_k * f_k**2 - 2.0 * g_k * f_k))


def solve_polaron(
    params: ModelParams,
    tol: float = 1e-13,
    max_iter: int = 10_000,
    damping: float = 0.5,
    boundary: str = "periodic",
) -> PolaronSolution:
    """Damped fixed-point iteration for ``delta_r``, starting from ``delta``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    modes = photon_modes(params, boundary)
    om, gk = modes.omega_k, modes.g_k
    delta = params.delta

    def update(dr):
        f = gk / (dr + om)
        return delta * math.exp(-2.0 * float(np.sum(f * f))), f

    dr = delta
    residual = math.inf
    for it in range(1, max_iter + 1):
        target, f = update(dr)
        residual = abs(dr - target)
        if residual <= tol:
            break
        dr = (1.0 - damping) * dr + damping * target
    else:
        raise PolaronConvergenceError(
            f"polaron iteration did not converge in {max_iter} steps (residual {residual:.3e})",
            residual,
        )
    f = gk / (dr + om)
    return PolaronSolution(
        f_k=f,
        delta_r=dr,
        e_gs=_ground_energy(delta, dr, om, gk, f),
        params=params,
        iterations=it,
        residual=residual,
        modes=modes,
    )


def excited_probability(sol: PolaronSolution) -> float:
    if sol.params.delta == 0:
        raise ModelError("excited-state probability is singular for delta = 0")
    return 0.5 * (1.0 - sol.delta_r / sol.params.delta)


def fidelity_to_bare(sol: PolaronSolution) -> float:
    return math.exp(-float(np.sum(sol.f_k**2)))


def polaron_fx(sol: PolaronSolution) -> np.ndarray:
    """Real-space displacements ``f_x`` for every site (complex).

    With periodic modes this is the unitary DFT of ``f_k`` centred on the qubit
    site; with open modes it is the standing-wave transform.
    """
    return (sol.modes.shapes @ sol.f_k).astype(complex)


# ---------------------------------------------------------------------------
# excitation-number sectors of the transformed Hamiltonian


def projected_sector_matrix(sol: PolaronSolution, n_exc: int) -> np.ndarray:
    """Dense block of the polaron Hamiltonian with ``n_exc`` excitations.

    Energies are absolute: the vacuum of the transformed frame sits at
    ``sol.e_gs``. Sector 1 basis: ``|1;0>`` then ``|0;1_k>``. Sector 2 basis:
    ``|1;1_k>`` then ``|0;1_k 1_p>`` (``k <= p``).
    """
    om, f, dr = sol.modes.omega_k, sol.f_k, sol.delta_r
    if n_exc == 1:
        n = om.size
        h = np.empty((n + 1, n + 1))
        h[0, 0] = dr
        h[0, 1:] = h[1:, 0] = -2.0 * dr * f
        h[1:, 1:] = np.diag(om) + 2.0 * dr * np.outer(f, f)
    elif n_exc == 2:
        h = _kernels.pair_sector_dense(om, f, dr)
    else:
        raise ValueError(f"n_exc must be 1 or 2, got {n_exc}")
    h = h + sol.e_gs * np.eye(h.shape[0])
    return h


def _pair_sector_operator(sol: PolaronSolution) -> spla.LinearOperator:
    om, f, dr = sol.modes.omega_k, sol.f_k, sol.delta_r
    n = om.size
    k, p = _kernels.pair_index(n)
    v = _kernels.pair_vectors(f)
    vt = v.T.tocsr()
    top_diag = dr + om + sol.e_gs
    pair_diag = om[k] + om[p] + sol.e_gs

    def matvec(x):
        x = np.asarray(x).ravel()
        c, b = x[:n], x[n:]
        vb = v @ b
        out_c = top_diag * c - 2.0 * dr * f * (f @ c) - 2.0 * dr * vb
        out_b = pair_diag * b + 2.0 * dr * (vt @ vb) - 2.0 * dr * (vt @ c)
        return np.concatenate([out_c, out_b])

    dim = n + k.size
    return spla.LinearOperator((dim, dim), matvec=matvec, dtype=float)


DENSE_SECTOR_LIMIT = 2500


def sector_ground_energy(sol: PolaronSolution, n_exc: int) -> float:
    """Lowest eigenvalue of a sector; matrix-free Lanczos for large two-excitation blocks."""
    n = sol.modes.omega_k.size
    if n_exc == 2 and n + n * (n + 1) // 2 > DENSE_SECTOR_LIMIT:
        op = _pair_sector_operator(sol)
        # deterministic start vector: uniform two-photon amplitude
        v0 = np.ones(op.shape[0])
        vals = spla.eigsh(op, k=1, which="SA", v0=v0, tol=1e-12)[0]
        return float(vals[0])
    return float(np.linalg.eigvalsh(projected_sector_matrix(sol, n_exc))[0])


def bound_state_energies(sol: PolaronSolution) -> tuple[float, float]:
    """``(E1, E2)``: minima of the one- and two-excitation sectors."""
    return sector_ground_energy(sol, 1), sector_ground_energy(sol, 2)


def polaron_record(sol: PolaronSolution) -> dict:
    """Flat summary row used by the sweep writer."""
    e1, e2 = bound_state_energies(sol)
    return {
        "g": sol.params.g,
        "delta_r": sol.delta_r,
        "p_e": excited_probability(sol) if sol.params.delta > 0 else float("nan"),
        "e_gs": sol.e_gs,
        "e1": e1,
        "e2": e2,
        "fidelity": fidelity_to_bare(sol),
    }
