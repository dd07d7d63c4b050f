"""Finite matrix product states with a movable orthogonality center.

Tensors are stored as ``(left bond, physical, right bond)`` arrays. The state
keeps track of its orthogonality center when it has one; every operation that
moves or destroys it updates ``center`` accordingly.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .model import ModelParams, local_dims


class MpsError(ValueError):
    pass


class MPS:
    def __init__(self, tensors, center: int | None = None, d_max: int = 20, truncation_log: float = 0.0):
        self.tensors = [np.asarray(t) for t in tensors]
        self.center = center
        self.d_max = d_max
        self.truncation_log = truncation_log
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise MpsError("boundary bonds must have dimension 1")
        for i in range(len(self.tensors) - 1):
            if self.tensors[i].shape[2] != self.tensors[i + 1].shape[0]:
                raise MpsError(f"bond mismatch between sites {i} and {i + 1}")

    def __len__(self):
        return len(self.tensors)

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def local_dims(self) -> list[int]:
        return [t.shape[1] for t in self.tensors]

    @property
    def bond_dims(self) -> list[int]:
        return [1] + [t.shape[2] for t in self.tensors]

    @property
    def dtype(self):
        return np.result_type(*self.tensors)

    def copy(self) -> "MPS":
        return MPS([t.copy() for t in self.tensors], self.center, self.d_max, self.truncation_log)

    def astype(self, dtype) -> "MPS":
        return MPS([t.astype(dtype) for t in self.tensors], self.center, self.d_max, self.truncation_log)

    # -- canonical form --------------------------------------------------

    def _shift_right(self, i: int) -> None:
        a = self.tensors[i]
        dl, d, dr = a.shape
        q, r = np.linalg.qr(a.reshape(dl * d, dr))
        self.tensors[i] = q.reshape(dl, d, q.shape[1])
        self.tensors[i + 1] = np.tensordot(r, self.tensors[i + 1], axes=(1, 0))

    def _shift_left(self, i: int) -> None:
        a = self.tensors[i]
        dl, d, dr = a.shape
        q, r = np.linalg.qr(a.reshape(dl, d * dr).T)
        self.tensors[i] = q.T.reshape(q.shape[1], d, dr)
        self.tensors[i - 1] = np.tensordot(self.tensors[i - 1], r.T, axes=(2, 0))

    def canonicalize(self, center: int = 0) -> "MPS":
        """Bring the state into mixed canonical form around ``center`` (in place)."""
        for i in range(center):
            self._shift_right(i)
        for i in range(self.n_sites - 1, center, -1):
            self._shift_left(i)
        self.center = center
        return self

    def move_center(self, target: int) -> None:
        if self.center is None:
            self.canonicalize(target)
            return
        while self.center < target:
            self._shift_right(self.center)
            self.center += 1
        while self.center > target:
            self._shift_left(self.center)
            self.center -= 1

    def is_canonical(self, tol: float = 1e-10) -> bool:
        """Check left/right isometry of every tensor relative to ``center``."""
        if self.center is None:
            return False
        for i, a in enumerate(self.tensors):
            if i < self.center:
                m = a.reshape(-1, a.shape[2])
            elif i > self.center:
                m = a.reshape(a.shape[0], -1).T
            else:
                continue
            gram = m.conj().T @ m
            if np.max(np.abs(gram - np.eye(gram.shape[0]))) > tol:
                return False
        return True

    # -- norm --------------------------------------------------------------

    def norm(self) -> float:
        if self.center is not None:
            return float(np.linalg.norm(self.tensors[self.center]))
        return float(np.sqrt(abs(overlap(self, self))))

    def normalize(self) -> float:
        """Scale to unit norm; returns the norm before scaling."""
        nrm = self.norm()
        if nrm == 0:
            raise MpsError("cannot normalize a zero state")
        site = self.center if self.center is not None else 0
        self.tensors[site] = self.tensors[site] / nrm
        return nrm

    def to_dense(self, max_dim: int = 1 << 22) -> np.ndarray:
        """Full state vector (site 0 most significant); small systems only."""
        dim = math.prod(self.local_dims)
        if dim > max_dim:
            raise MpsError(f"dense vector of dimension {dim} exceeds cap {max_dim}")
        psi = self.tensors[0].reshape(self.tensors[0].shape[1], -1)
        for a in self.tensors[1:]:
            psi = np.tensordot(psi, a, axes=(1, 0)).reshape(-1, a.shape[2])
        return psi.reshape(-1)


# ---------------------------------------------------------------------------
# construction


def product_state(params: ModelParams, n_max: int, spec=None, qubit: int = 0, d_max: int = 20) -> MPS:
    """Bond-dimension-1 basis state.

    ``spec`` gives the photon number of every site (``None`` = vacuum) and
    ``qubit`` the qubit excitation (0 or 1).
    """
    dims = local_dims(params, n_max)
    occ = [0] * params.n_sites if spec is None else list(spec)
    if len(occ) != params.n_sites:
        raise MpsError(f"spec has {len(occ)} entries, expected {params.n_sites}")
    if qubit not in (0, 1):
        raise MpsError(f"qubit index must be 0 or 1, got {qubit}")
    tensors = []
    for x, n in enumerate(occ):
        if not 0 <= n <= n_max:
            raise MpsError(f"photon number {n} at site {x} outside 0..{n_max}")
        idx = n + (qubit * (n_max + 1) if x == params.qubit_site else 0)
        t = np.zeros((1, dims[x], 1))
        t[0, idx, 0] = 1.0
        tensors.append(t)
    return MPS(tensors, center=0, d_max=d_max)


def single_excitation_state(params: ModelParams, n_max: int, photon_amps, qubit_amp: float = 0.0, d_max: int = 20) -> MPS:
    """Exact bond-dimension-2 MPS of ``(qubit_amp sigma^+ + sum_x c_x a_x^dag)|0;0>``, normalized."""
    dims = local_dims(params, n_max)
    c = np.asarray(photon_amps, dtype=float)
    n = params.n_sites
    tensors = []
    for x in range(n):
        t = np.zeros((2, dims[x], 2))
        # channel 0: excitation not yet placed; channel 1: already placed
        t[0, 0, 0] = 1.0
        t[1, 0, 1] = 1.0
        t[0, 1, 1] = c[x]
        if x == params.qubit_site:
            t[0, n_max + 1, 1] = qubit_amp
        tensors.append(t)
    tensors[0] = tensors[0][:1]
    tensors[-1] = tensors[-1][:, :, 1:]
    state = MPS(tensors, d_max=d_max)
    state.canonicalize(0)
    state.normalize()
    return state


# ---------------------------------------------------------------------------
# two-site gates


def _svd(m):
    try:
        return np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")


def truncation_rank(s: np.ndarray, d_max: int, svd_tol: float) -> tuple[int, float]:
    """Number of singular values kept and the relative discarded weight."""
    w = s * s
    total = float(w.sum())
    if total == 0:
        return 1, 0.0
    tails = np.cumsum(w[::-1])[::-1] / total  # tails[j] = weight of s[j:]
    keep = int(np.count_nonzero(tails > svd_tol))
    keep = max(1, min(keep, d_max, s.size))
    discarded = float(tails[keep]) if keep < s.size else 0.0
    return keep, discarded


def apply_two_site_gate(
    state: MPS,
    gate: np.ndarray,
    site_pair: tuple[int, int],
    d_max: int | None = None,
    svd_tol: float = 1e-10,
    direction: str = "right",
    normalize: bool = False,
) -> float:
    """Apply ``gate`` to adjacent sites in place and truncate; returns the discarded weight.

    The orthogonality center ends on the right site for ``direction="right"``
    and on the left site otherwise.
    """
    i, j = site_pair
    if j != i + 1:
        raise MpsError(f"gate sites must be adjacent (i, i+1), got {site_pair}")
    d_max = state.d_max if d_max is None else d_max
    d1, d2 = state.tensors[i].shape[1], state.tensors[j].shape[1]
    if gate.shape != (d1 * d2, d1 * d2):
        raise MpsError(f"gate shape {gate.shape} does not match local dims ({d1}, {d2})")
    if state.center not in (i, j):
        state.move_center(i)
    a, b = state.tensors[i], state.tensors[j]
    theta = np.tensordot(a, b, axes=(2, 0))  # (l, s1, s2, r)
    g4 = gate.reshape(d1, d2, d1, d2)
    theta = np.tensordot(g4, theta, axes=([2, 3], [1, 2]))  # (s1, s2, l, r)
    dl, dr = theta.shape[2], theta.shape[3]
    theta = theta.transpose(2, 0, 1, 3).reshape(dl * d1, d2 * dr)
    u, s, vh = _svd(theta)
    keep, discarded = truncation_rank(s, d_max, svd_tol)
    u, s, vh = u[:, :keep], s[:keep], vh[:keep]
    if normalize:
        s = s / np.linalg.norm(s)
    if direction == "right":
        state.tensors[i] = u.reshape(dl, d1, keep)
        state.tensors[j] = (s[:, None] * vh).reshape(keep, d2, dr)
        state.center = j
    else:
        state.tensors[i] = (u * s[None, :]).reshape(dl, d1, keep)
        state.tensors[j] = vh.reshape(keep, d2, dr)
        state.center = i
    state.truncation_log += discarded
    return discarded


# ---------------------------------------------------------------------------
# contractions


def _check_structure(bra: MPS, ket: MPS) -> None:
    if bra.local_dims != ket.local_dims:
        raise MpsError("bra and ket have different site structure")


def transfer_left(env, bra_t, ket_t, op=None):
    """Grow a left environment ``(bra bond, ket bond)`` by one site."""
    t = np.tensordot(env, ket_t, axes=(1, 0))  # (a, s, d)
    if op is not None:
        t = np.tensordot(op, t, axes=(1, 1)).transpose(1, 0, 2)
    return np.tensordot(bra_t.conj(), t, axes=([0, 1], [0, 1]))


def transfer_right(env, bra_t, ket_t, op=None):
    """Grow a right environment ``(bra bond, ket bond)`` by one site."""
    t = np.tensordot(ket_t, env, axes=(2, 1))  # (c, s, b)
    if op is not None:
        t = np.tensordot(op, t, axes=(1, 1)).transpose(1, 0, 2)
    return np.tensordot(bra_t.conj(), t, axes=([1, 2], [1, 2]))


def left_environments(bra: MPS, ket: MPS) -> list[np.ndarray]:
    """``envs[i]`` contracts sites ``< i``; ``envs[N]`` is the full overlap."""
    envs = [np.ones((1, 1))]
    for b, k in zip(bra.tensors, ket.tensors):
        envs.append(transfer_left(envs[-1], b, k))
    return envs


def right_environments(bra: MPS, ket: MPS) -> list[np.ndarray]:
    """``envs[i]`` contracts sites ``>= i``; ``envs[0]`` is the full overlap."""
    n = bra.n_sites
    envs = [None] * (n + 1)
    envs[n] = np.ones((1, 1))
    for i in range(n - 1, -1, -1):
        envs[i] = transfer_right(envs[i + 1], bra.tensors[i], ket.tensors[i])
    return envs


def overlap(bra: MPS, ket: MPS) -> complex:
    """``<bra|ket>``."""
    _check_structure(bra, ket)
    env = np.ones((1, 1))
    for b, k in zip(bra.tensors, ket.tensors):
        env = transfer_left(env, b, k)
    return complex(env[0, 0])


def overlap_with_insertion(bra: MPS, ket: MPS, insertions) -> complex:
    """``<bra| O_1 O_2 |ket>`` for at most two single-site operators.

    Operators sharing a site are composed as ``O_1 @ O_2``.
    """
    _check_structure(bra, ket)
    insertions = list(insertions)
    if len(insertions) > 2:
        raise MpsError("at most two insertions are supported")
    ops: dict[int, np.ndarray] = {}
    for site, op in insertions:
        op = np.asarray(op)
        if op.shape != (ket.local_dims[site],) * 2:
            raise MpsError(f"operator shape {op.shape} does not match site {site}")
        ops[site] = ops[site] @ op if site in ops else op
    env = np.ones((1, 1))
    for x, (b, k) in enumerate(zip(bra.tensors, ket.tensors)):
        env = transfer_left(env, b, k, ops.get(x))
    return complex(env[0, 0])


def expect_local(state: MPS, site: int, op: np.ndarray) -> complex:
    """Normalized ``<op>`` on one site."""
    op = np.asarray(op)
    if op.shape != (state.local_dims[site],) * 2:
        raise MpsError(f"operator shape {op.shape} does not match site {site}")
    if state.center is not None:
        # isometries on either side of [lo, hi] contract to identity
        lo, hi = min(site, state.center), max(site, state.center)
        env = np.eye(state.tensors[lo].shape[0])
        for x in range(lo, hi + 1):
            t = state.tensors[x]
            env = transfer_left(env, t, t, op if x == site else None)
        val = np.trace(env)
        return complex(val / state.norm() ** 2)
    return overlap_with_insertion(state, state, [(site, op)]) / overlap(state, state)


def local_expectations(state: MPS, ops) -> np.ndarray:
    """Normalized ``<O_x>`` for a list of per-site operators (``None`` skips a site)."""
    left = left_environments(state, state)
    right = right_environments(state, state)
    nrm = left[-1][0, 0].real
    out = np.zeros(state.n_sites, dtype=complex)
    for x, op in enumerate(ops):
        if op is None:
            continue
        t = state.tensors[x]
        env = transfer_left(left[x], t, t, op)
        out[x] = np.sum(env * right[x + 1])
    return out / nrm


# ---------------------------------------------------------------------------
# product operators, sums and compression


@dataclass
class ProductOperator:
    """Tensor product of single-site operators; ``None`` entries are identities."""

    ops: list = field(default_factory=list)

    def __len__(self):
        return len(self.ops)


def apply_product_operator(state: MPS, op: ProductOperator) -> MPS:
    if len(op) != state.n_sites:
        raise MpsError(f"operator has {len(op)} sites, state has {state.n_sites}")
    tensors = []
    unitary = True
    for x, (t, o) in enumerate(zip(state.tensors, op.ops)):
        if o is None:
            tensors.append(t.copy())
            continue
        o = np.asarray(o)
        if o.shape != (t.shape[1],) * 2:
            raise MpsError(f"operator shape {o.shape} does not match site {x}")
        unitary = unitary and np.allclose(o.conj().T @ o, np.eye(o.shape[0]))
        tensors.append(np.tensordot(o, t, axes=(1, 1)).transpose(1, 0, 2))
    return MPS(tensors, state.center if unitary else None, state.d_max, state.truncation_log)


def expect_product(state: MPS, op: ProductOperator) -> complex:
    """Normalized ``<psi| op |psi>``."""
    env = np.ones((1, 1))
    nenv = np.ones((1, 1))
    for t, o in zip(state.tensors, op.ops):
        env = transfer_left(env, t, t, o)
        nenv = transfer_left(nenv, t, t)
    return complex(env[0, 0] / nenv[0, 0])


def add(a: MPS, b: MPS, alpha: complex = 1.0, beta: complex = 1.0) -> MPS:
    """``alpha |a> + beta |b>`` with direct-sum bonds (not compressed)."""
    _check_structure(a, b)
    n = a.n_sites
    dtype = np.result_type(a.dtype, b.dtype, np.asarray(alpha).dtype, np.asarray(beta).dtype)
    tensors = []
    for x, (ta, tb) in enumerate(zip(a.tensors, b.tensors)):
        if x == 0:
            ta, tb = alpha * ta, beta * tb
        la, d, ra = ta.shape
        lb, _, rb = tb.shape
        if n == 1:
            t = ta + tb
        elif x == 0:
            t = np.concatenate([ta, tb], axis=2)
        elif x == n - 1:
            t = np.concatenate([ta, tb], axis=0)
        else:
            t = np.zeros((la + lb, d, ra + rb), dtype=dtype)
            t[:la, :, :ra] = ta
            t[la:, :, ra:] = tb
        tensors.append(t.astype(dtype, copy=False))
    return MPS(tensors, None, max(a.d_max, b.d_max), a.truncation_log + b.truncation_log)


def compress(state: MPS, d_max: int | None = None, svd_tol: float = 1e-10) -> float:
    """SVD-truncate every bond in place; center ends on site 0. Returns total discarded weight."""
    d_max = state.d_max if d_max is None else d_max
    state.canonicalize(state.n_sites - 1)
    total = 0.0
    for i in range(state.n_sites - 1, 0, -1):
        a = state.tensors[i]
        dl, d, dr = a.shape
        u, s, vh = _svd(a.reshape(dl, d * dr))
        keep, discarded = truncation_rank(s, d_max, svd_tol)
        state.tensors[i] = vh[:keep].reshape(keep, d, dr)
        us = u[:, :keep] * s[None, :keep]
        state.tensors[i - 1] = np.tensordot(state.tensors[i - 1], us, axes=(2, 0))
        total += discarded
    state.center = 0
    state.truncation_log += total
    return total


# ---------------------------------------------------------------------------
# checkpoints
#
# Layout (little endian):
#   magic  b"VQMPS\0"   6 bytes
#   version            u32   (currently 1)
#   n_sites            u32
#   d_max              u32
#   center             i32   (-1 when not canonical)
#   truncation_log     f64
#   local dims         u32 * n_sites
#   bond dims          u32 * (n_sites + 1)
#   tensors            per site, C-order (left, phys, right), complex128 as
#                      interleaved (real, imag) float64 pairs

CHECKPOINT_MAGIC = b"VQMPS\0"
CHECKPOINT_VERSION = 1


def dumps_mps(state: MPS) -> bytes:
    buf = io.BytesIO()
    n = state.n_sites
    center = -1 if state.center is None else state.center
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<IIIid", CHECKPOINT_VERSION, n, state.d_max, center, state.truncation_log))
    buf.write(np.asarray(state.local_dims, dtype="<u4").tobytes())
    buf.write(np.asarray(state.bond_dims, dtype="<u4").tobytes())
    for t in state.tensors:
        buf.write(np.ascontiguousarray(t, dtype="<c16").tobytes())
    return buf.getvalue()


def loads_mps(data: bytes) -> MPS:
    if data[:6] != CHECKPOINT_MAGIC:
        raise MpsError("not an MPS checkpoint")
    off = 6
    version, n, d_max, center, trunc = struct.unpack_from("<IIIid", data, off)
    off += struct.calcsize("<IIIid")
    if version != CHECKPOINT_VERSION:
        raise MpsError(f"unsupported checkpoint version {version}")
    dims = np.frombuffer(data, dtype="<u4", count=n, offset=off).astype(int)
    off += 4 * n
    bonds = np.frombuffer(data, dtype="<u4", count=n + 1, offset=off).astype(int)
    off += 4 * (n + 1)
    tensors = []
    for x in range(n):
        count = bonds[x] * dims[x] * bonds[x + 1]
        t = np.frombuffer(data, dtype="<c16", count=count, offset=off)
        off += 16 * count
        tensors.append(t.reshape(bonds[x], dims[x], bonds[x + 1]).astype(complex))
    if off != len(data):
        raise MpsError("trailing bytes in checkpoint")
    return MPS(tensors, None if center < 0 else center, d_max, trunc)


def save_mps(path, state: MPS) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps_mps(state))
    tmp.replace(path)


def load_mps(path) -> MPS:
    return loads_mps(Path(path).read_bytes())
