"""Cavity-array spin-boson model: parameters, band structure and Hamiltonian terms.

Position-space conventions used throughout the package:

* sites are indexed ``0 .. N-1`` along an open chain;
* the two-level system is fused with the cavity at ``qubit_site`` into one
  local space of dimension ``2 (n_max + 1)`` with index ``sigma * (n_max + 1) + n``
  (``sigma = 0`` is the qubit ground state);
* the qubit energy is ``delta * sigma^+ sigma^-`` so the decoupled vacuum sits at 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels
from ._accel import use_numba


class ModelError(ValueError):
    """Invalid model parameters or an impossible Hamiltonian request."""


@dataclass(frozen=True)
class ModelParams:
    omega: float = 1.0
    j_hop: float = 0.4
    n_sites: int = 400
    delta: float = 0.3
    g: float = 0.5
    qubit_site: int | None = None

    def __post_init__(self):
        if not self.j_hop > 0:
            raise ModelError(f"j_hop must be > 0, got {self.j_hop}")
        if self.n_sites < 4 and self.n_sites != 2:
            raise ModelError(f"n_sites must be >= 4, got {self.n_sites}")
        if self.n_sites % 2:
            raise ModelError(f"n_sites must be even, got {self.n_sites}")
        if not self.omega - 2 * self.j_hop > 0:
            raise ModelError(
                f"band bottom omega - 2 j_hop must be > 0, got {self.omega - 2 * self.j_hop}"
            )
        if self.g < 0:
            raise ModelError(f"g must be >= 0, got {self.g}")
        if self.delta < 0:
            raise ModelError(f"delta must be >= 0, got {self.delta}")
        if self.qubit_site is None:
            object.__setattr__(self, "qubit_site", self.n_sites // 2)
        elif not 0 <= self.qubit_site < self.n_sites:
            raise ModelError(f"qubit_site {self.qubit_site} outside 0..{self.n_sites - 1}")

    def replace(self, **changes) -> "ModelParams":
        values = dict(
            omega=self.omega,
            j_hop=self.j_hop,
            n_sites=self.n_sites,
            delta=self.delta,
            g=self.g,
            qubit_site=self.qubit_site,
        )
        values.update(changes)
        return ModelParams(**values)

    def as_dict(self) -> dict:
        return dict(
            omega=self.omega,
            j_hop=self.j_hop,
            n_sites=self.n_sites,
            delta=self.delta,
            g=self.g,
            qubit_site=self.qubit_site,
        )


@dataclass(frozen=True)
class BandInfo:
    gap_bottom: float
    band_top: float
    v_max: float
    momenta: np.ndarray = field(repr=False)


def momentum_grid(n_sites: int) -> np.ndarray:
    """``N`` uniformly spaced momenta in ``[-pi, pi)``."""
    return 2 * np.pi * np.arange(-(n_sites // 2), n_sites - n_sites // 2) / n_sites


def band_info(params: ModelParams) -> BandInfo:
    return BandInfo(
        gap_bottom=params.omega - 2 * params.j_hop,
        band_top=params.omega + 2 * params.j_hop,
        v_max=2 * params.j_hop,
        momenta=momentum_grid(params.n_sites),
    )


def dispersion(params: ModelParams, k):
    """Photon energy ``omega - 2 J cos k``; vectorizes over ``k``."""
    return params.omega - 2 * params.j_hop * np.cos(k)


def coupling_gk(params: ModelParams) -> np.ndarray:
    """Momentum-space couplings ``g / sqrt(N)`` for every momentum of the grid."""
    return np.full(params.n_sites, params.g / math.sqrt(params.n_sites))


def decay_time_tau(params: ModelParams) -> float | None:
    """Golden-rule lifetime ``J sin(k0) / g^2`` with ``omega_{k0} = delta``.

    Returns ``None`` when the qubit gap lies outside the open band, where the
    lifetime is undefined; callers then use ``1/J`` as the time unit.
    """
    if params.g == 0:
        raise ModelError("infinite lifetime: g = 0")
    lo = params.omega - 2 * params.j_hop
    hi = params.omega + 2 * params.j_hop
    if not lo < params.delta < hi:
        return None
    k0 = math.acos((params.omega - params.delta) / (2 * params.j_hop))
    return params.j_hop * math.sin(k0) / params.g**2


def time_unit(params: ModelParams) -> float:
    """``tau`` when defined, else ``1/J``."""
    tau = decay_time_tau(params) if params.g > 0 else None
    return tau if tau is not None else 1.0 / params.j_hop


# ---------------------------------------------------------------------------
# local operators


def boson_ops(n_max: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Truncated ``(a, a^dagger, n)`` on ``n_max + 1`` levels."""
    if n_max < 0:
        raise ModelError(f"n_max must be >= 0, got {n_max}")
    a = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1)
    return a, a.T.copy(), np.diag(np.arange(n_max + 1, dtype=float))


def local_dims(params: ModelParams, n_max: int) -> list[int]:
    dims = [n_max + 1] * params.n_sites
    dims[params.qubit_site] = 2 * (n_max + 1)
    return dims


def site_ops(params: ModelParams, n_max: int, site: int) -> dict[str, np.ndarray]:
    """Named local operators acting on ``site`` (fused with the qubit if needed).

    Keys: ``a``, ``adag``, ``n``, ``id``; the qubit site also carries
    ``sp_sm`` (sigma^+ sigma^-), ``sx`` and ``sz``.
    """
    a, adag, n = boson_ops(n_max)
    eye_b = np.eye(n_max + 1)
    if site != params.qubit_site:
        return {"a": a, "adag": adag, "n": n, "id": eye_b}
    i2 = np.eye(2)
    return {
        "a": np.kron(i2, a),
        "adag": np.kron(i2, adag),
        "n": np.kron(i2, n),
        "id": np.eye(2 * (n_max + 1)),
        "sp_sm": np.kron(np.diag([0.0, 1.0]), eye_b),
        "sx": np.kron(np.array([[0.0, 1.0], [1.0, 0.0]]), eye_b),
        "sz": np.kron(np.diag([-1.0, 1.0]), eye_b),
    }


@dataclass(frozen=True)
class LocalTerm:
    """A one- or two-site Hamiltonian term; two-site terms act on ``(i, i+1)``."""

    sites: tuple[int, ...]
    matrix: np.ndarray = field(repr=False)
    label: str = ""


def local_terms(params: ModelParams, n_max: int) -> list[LocalTerm]:
    """One-site and nearest-neighbour terms whose sum is the full Hamiltonian."""
    if n_max < 1:
        raise ModelError(f"n_max must be >= 1 for a photon field, got {n_max}")
    return _terms(params, n_max)


def _terms(params: ModelParams, n_max: int) -> list[LocalTerm]:
    terms = []
    for x in range(params.n_sites):
        ops = site_ops(params, n_max, x)
        h = params.omega * ops["n"]
        label = "cavity"
        if x == params.qubit_site:
            h = h + params.delta * ops["sp_sm"]
            label = "cavity+qubit"
            if params.g != 0:
                h = h + params.g * ops["sx"] @ (ops["a"] + ops["adag"])
                label = "cavity+qubit+coupling"
        terms.append(LocalTerm((x,), h, label))
    for x in range(params.n_sites - 1):
        left = site_ops(params, n_max, x)
        right = site_ops(params, n_max, x + 1)
        hop = -params.j_hop * (
            np.kron(left["adag"], right["a"]) + np.kron(left["a"], right["adag"])
        )
        terms.append(LocalTerm((x, x + 1), hop, "hopping"))
    return terms


def bond_hamiltonians(params: ModelParams, n_max: int) -> list[np.ndarray]:
    """Two-site operators ``h_b`` on bonds ``(b, b+1)`` with ``sum_b h_b = H``.

    One-site terms are shared equally between the two bonds touching a site;
    the chain ends give their whole on-site term to their only bond.
    """
    n = params.n_sites
    dims = local_dims(params, n_max)
    bonds = [np.zeros((dims[b] * dims[b + 1],) * 2) for b in range(n - 1)]
    for term in _terms(params, n_max):
        if len(term.sites) == 2:
            bonds[term.sites[0]] += term.matrix
            continue
        (x,) = term.sites
        shares = []
        if x > 0:
            shares.append((x - 1, "right"))
        if x < n - 1:
            shares.append((x, "left"))
        w = 1.0 / len(shares)
        for b, side in shares:
            if side == "left":
                bonds[b] += w * np.kron(term.matrix, np.eye(dims[b + 1]))
            else:
                bonds[b] += w * np.kron(np.eye(dims[b]), term.matrix)
    return bonds


# ---------------------------------------------------------------------------
# exact diagonalization oracle

DENSE_DIM_CAP = 8000
SPARSE_DIM_CAP = 2_000_000


def hilbert_dim(params: ModelParams, n_max: int) -> int:
    return 2 * (n_max + 1) ** params.n_sites


def sparse_hamiltonian(params: ModelParams, n_max: int, max_dim: int = SPARSE_DIM_CAP) -> sp.csr_matrix:
    """Full Hamiltonian on the truncated Fock space as a CSR matrix.

    Basis ordering matches a full MPS contraction: site 0 is the most
    significant digit. Uses the compiled Fock-space kernel when numba is on and
    a Kronecker-product assembly of :func:`local_terms` otherwise.
    """
    dim = hilbert_dim(params, n_max)
    if dim > max_dim:
        raise ModelError(f"Hilbert space dimension {dim} exceeds cap {max_dim}")
    if use_numba():
        rows, cols, vals = _kernels.fock_hamiltonian_coo(
            params.n_sites, n_max, params.qubit_site,
            params.omega, params.j_hop, params.delta, params.g,
        )
        h = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
        h.sum_duplicates()
        return h
    return _kron_hamiltonian(params, n_max)


def _kron_hamiltonian(params: ModelParams, n_max: int) -> sp.csr_matrix:
    dims = local_dims(params, n_max)
    dim = int(np.prod(dims))
    h = sp.csr_matrix((dim, dim))
    for term in _terms(params, n_max):
        first = term.sites[0]
        last = term.sites[-1]
        left = int(np.prod(dims[:first]))
        right = int(np.prod(dims[last + 1:]))
        op = sp.kron(sp.identity(left), sp.csr_matrix(term.matrix))
        op = sp.kron(op, sp.identity(right))
        h = h + op
    return h.tocsr()


def dense_hamiltonian(params: ModelParams, n_max: int, max_dim: int = DENSE_DIM_CAP) -> np.ndarray:
    """Dense Hermitian matrix of the truncated Hamiltonian (small systems only)."""
    dim = hilbert_dim(params, n_max)
    if dim > max_dim:
        raise ModelError(
            f"dense Hamiltonian needs dimension {dim} ({dim * dim * 8 / 1e9:.2f} GB), cap is {max_dim}"
        )
    return sparse_hamiltonian(params, n_max).toarray()


def basis_occupations(params: ModelParams, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Per basis state: photon counts per site ``(dim, N)`` and qubit excitation ``(dim,)``."""
    dims = local_dims(params, n_max)
    dim = int(np.prod(dims))
    idx = np.arange(dim)
    digits = np.empty((dim, len(dims)), dtype=np.int64)
    for site in range(len(dims) - 1, -1, -1):
        digits[:, site] = idx % dims[site]
        idx //= dims[site]
    q = params.qubit_site
    qubit = digits[:, q] // (n_max + 1)
    photons = digits.copy()
    photons[:, q] = digits[:, q] % (n_max + 1)
    return photons, qubit
