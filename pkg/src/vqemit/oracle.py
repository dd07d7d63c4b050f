"""Exact-diagonalization references for small chains."""

from __future__ import annotations

import numpy as np
import scipy.sparse.linalg as spla

from .model import ModelParams, basis_occupations, dense_hamiltonian, sparse_hamiltonian


def parity_labels(params: ModelParams, n_max: int) -> np.ndarray:
    photons, qubit = basis_occupations(params, n_max)
    return 1 - 2 * ((photons.sum(axis=1) + qubit) % 2)


def ed_sector_spectra(params: ModelParams, n_max: int, n_levels: int = 3) -> dict[int, np.ndarray]:
    """Lowest eigenvalues of the even (+1) and odd (-1) parity blocks."""
    h = dense_hamiltonian(params, n_max)
    par = parity_labels(params, n_max)
    out = {}
    for sector in (1, -1):
        idx = np.flatnonzero(par == sector)
        out[sector] = np.linalg.eigvalsh(h[np.ix_(idx, idx)])[:n_levels]
    return out


def ed_sector_states(params: ModelParams, n_max: int, n_levels: int = 2) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Eigenpairs of each parity block embedded back into the full basis."""
    h = dense_hamiltonian(params, n_max)
    par = parity_labels(params, n_max)
    out = {}
    for sector in (1, -1):
        idx = np.flatnonzero(par == sector)
        w, v = np.linalg.eigh(h[np.ix_(idx, idx)])
        full = np.zeros((h.shape[0], n_levels))
        full[idx] = v[:, :n_levels]
        out[sector] = (w[:n_levels], full)
    return out


def ed_ground_energy(params: ModelParams, n_max: int) -> float:
    """Ground energy by sparse Lanczos (works beyond the dense cap)."""
    h = sparse_hamiltonian(params, n_max)
    v0 = np.ones(h.shape[0])
    return float(spla.eigsh(h, k=1, which="SA", v0=v0, tol=1e-12)[0][0])
