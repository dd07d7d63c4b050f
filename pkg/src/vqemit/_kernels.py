"""Loop kernels with numba and numpy implementations.

``*_loop`` functions are written as explicit loops and compiled by
:func:`optional_njit`; ``*_numpy`` twins are vectorized. Public wrappers pick
one according to :func:`vqemit._accel.use_numba`.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import optional_njit, use_numba


# ---------------------------------------------------------------------------
# Fock-space Hamiltonian (ED oracle)


@optional_njit(cache=True)
def _fock_coo_loop(n_sites, n_max, qubit_site, omega, j_hop, delta, g):
    nb = n_max + 1
    dims = np.full(n_sites, nb, dtype=np.int64)
    dims[qubit_site] = 2 * nb
    strides = np.ones(n_sites, dtype=np.int64)
    for s in range(n_sites - 2, -1, -1):
        strides[s] = strides[s + 1] * dims[s + 1]
    dim = strides[0] * dims[0]

    # diagonal + 2 hops per bond + 2 coupling moves per state
    cap = dim * (1 + 2 * (n_sites - 1) + 2)
    rows = np.empty(cap, dtype=np.int64)
    cols = np.empty(cap, dtype=np.int64)
    vals = np.empty(cap, dtype=np.float64)
    occ = np.empty(n_sites, dtype=np.int64)
    nnz = 0
    for idx in range(dim):
        rem = idx
        for s in range(n_sites):
            occ[s] = rem // strides[s]
            rem -= occ[s] * strides[s]
        sigma = occ[qubit_site] // nb
        occ[qubit_site] = occ[qubit_site] % nb

        diag = delta * sigma
        for s in range(n_sites):
            diag += omega * occ[s]
        rows[nnz] = idx
        cols[nnz] = idx
        vals[nnz] = diag
        nnz += 1

        for s in range(n_sites - 1):
            # a_s^dag a_{s+1}: moves one photon from s+1 to s
            if occ[s + 1] > 0 and occ[s] < n_max:
                amp = -j_hop * math.sqrt(occ[s + 1] * (occ[s] + 1.0))
                rows[nnz] = idx + strides[s] - strides[s + 1]
                cols[nnz] = idx
                vals[nnz] = amp
                nnz += 1
            if occ[s] > 0 and occ[s + 1] < n_max:
                amp = -j_hop * math.sqrt(occ[s] * (occ[s + 1] + 1.0))
                rows[nnz] = idx - strides[s] + strides[s + 1]
                cols[nnz] = idx
                vals[nnz] = amp
                nnz += 1

        if g != 0.0:
            n0 = occ[qubit_site]
            flip = (1 - 2 * sigma) * nb  # sigma 0 -> 1 adds nb to the fused digit
            base = idx + flip * strides[qubit_site]
            if n0 < n_max:
                rows[nnz] = base + strides[qubit_site]
                cols[nnz] = idx
                vals[nnz] = g * math.sqrt(n0 + 1.0)
                nnz += 1
            if n0 > 0:
                rows[nnz] = base - strides[qubit_site]
                cols[nnz] = idx
                vals[nnz] = g * math.sqrt(1.0 * n0)
                nnz += 1
    return rows[:nnz], cols[:nnz], vals[:nnz]


def fock_hamiltonian_coo(n_sites, n_max, qubit_site, omega, j_hop, delta, g):
    """COO triplets of the truncated Fock-space Hamiltonian (compiled loop)."""
    return _fock_coo_loop(
        int(n_sites), int(n_max), int(qubit_site),
        float(omega), float(j_hop), float(delta), float(g),
    )


# ---------------------------------------------------------------------------
# two-excitation sector of the polaron Hamiltonian


def pair_index(n_modes: int) -> tuple[np.ndarray, np.ndarray]:
    """Mode pairs ``(k, p)`` with ``k <= p`` in lexicographic order."""
    k, p = np.triu_indices(n_modes)
    return k, p


@optional_njit(cache=True)
def _pair_sector_loop(omega_k, f, delta_r):
    n = omega_k.shape[0]
    npair = n * (n + 1) // 2
    dim = n + npair
    h = np.zeros((dim, dim))
    kk = np.empty(npair, dtype=np.int64)
    pp = np.empty(npair, dtype=np.int64)
    c = 0
    for k in range(n):
        for p in range(k, n):
            kk[c] = k
            pp[c] = p
            c += 1
    # qubit excited + one photon
    for a in range(n):
        h[a, a] = delta_r + omega_k[a]
        for b in range(n):
            h[a, b] -= 2.0 * delta_r * f[a] * f[b]
    # v(P) = F|P>: two nonzeros (or one on the diagonal pair)
    for i in range(npair):
        k = kk[i]
        p = pp[i]
        h[n + i, n + i] += omega_k[k] + omega_k[p]
        if k == p:
            w = math.sqrt(2.0) * f[k]
            h[k, n + i] -= 2.0 * delta_r * w
            h[n + i, k] -= 2.0 * delta_r * w
        else:
            h[p, n + i] -= 2.0 * delta_r * f[k]
            h[n + i, p] -= 2.0 * delta_r * f[k]
            h[k, n + i] -= 2.0 * delta_r * f[p]
            h[n + i, k] -= 2.0 * delta_r * f[p]
    for i in range(npair):
        ki = kk[i]
        pi = pp[i]
        for j in range(i, npair):
            kj = kk[j]
            pj = pp[j]
            # v(i) . v(j)
            s = 0.0
            if ki == pi:
                if kj == pj:
                    if ki == kj:
                        s = 2.0 * f[ki] * f[kj]
                else:
                    if ki == kj:
                        s += math.sqrt(2.0) * f[ki] * f[pj]
                    if ki == pj:
                        s += math.sqrt(2.0) * f[ki] * f[kj]
            elif kj == pj:
                if kj == ki:
                    s += math.sqrt(2.0) * f[kj] * f[pi]
                if kj == pi:
                    s += math.sqrt(2.0) * f[kj] * f[ki]
            else:
                if pi == pj:
                    s += f[ki] * f[kj]
                if pi == kj:
                    s += f[ki] * f[pj]
                if ki == pj:
                    s += f[pi] * f[kj]
                if ki == kj:
                    s += f[pi] * f[pj]
            if s != 0.0:
                h[n + i, n + j] += 2.0 * delta_r * s
                if j != i:
                    h[n + j, n + i] += 2.0 * delta_r * s
    return h


def pair_vectors(f: np.ndarray):
    """Sparse ``(N, N_pairs)`` matrix whose columns are ``F|k p>`` in the one-photon basis."""
    import scipy.sparse as sp

    n = f.shape[0]
    k, p = pair_index(n)
    diag = k == p
    rows = np.concatenate([p[~diag], k[~diag], k[diag]])
    cols_all = np.arange(k.size)
    cols = np.concatenate([cols_all[~diag], cols_all[~diag], cols_all[diag]])
    vals = np.concatenate([f[k[~diag]], f[p[~diag]], math.sqrt(2.0) * f[k[diag]]])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, k.size))


def _pair_sector_numpy(omega_k, f, delta_r):
    n = omega_k.shape[0]
    k, p = pair_index(n)
    v = pair_vectors(f).toarray()
    top = np.diag(delta_r + omega_k) - 2.0 * delta_r * np.outer(f, f)
    bottom = np.diag(omega_k[k] + omega_k[p]) + 2.0 * delta_r * (v.T @ v)
    off = -2.0 * delta_r * v
    return np.block([[top, off], [off.T, bottom]])


def pair_sector_dense(omega_k, f, delta_r) -> np.ndarray:
    """Dense two-excitation block (without the constant offset).

    Basis: ``|1; 1_k>`` for every mode, then normalized two-photon states
    ``|0; 1_k 1_p>`` with ``k <= p`` in :func:`pair_index` order.
    """
    omega_k = np.ascontiguousarray(omega_k, dtype=np.float64)
    f = np.ascontiguousarray(f, dtype=np.float64)
    if use_numba():
        return _pair_sector_loop(omega_k, f, float(delta_r))
    return _pair_sector_numpy(omega_k, f, float(delta_r))
