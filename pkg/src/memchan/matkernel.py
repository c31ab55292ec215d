"""Dense complex linear algebra shared by every other module.

Conventions
-----------
Composite spaces are flattened left-factor-major: in ``tensor(a, b)`` the
index of ``a`` is the slow one. Every module relies on this ordering, so
``partial_trace`` and the channel wiring use the same convention.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. Density
matrices are square, Hermitian, positive semidefinite and unit trace to
within ``HERM_TOL``.
"""

from __future__ import annotations

from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from memchan import _kernels

HERM_TOL = 1e-9


class DimensionError(ValueError):
    """Raised when operand dimensions do not fit together."""


def as_cmatrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got array of shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def tensor(*mats) -> np.ndarray:
    """Kronecker product, left factor major."""
    if not mats:
        return np.ones((1, 1), dtype=np.complex128)
    return reduce(np.kron, (np.asarray(m, dtype=np.complex128) for m in mats))


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def partial_trace(a, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out every tensor factor of ``a`` whose index is not in ``keep``.

    ``dims`` lists the factor dimensions in left-to-right order. The kept
    factors stay in their original order.
    """
    a = np.asarray(a, dtype=np.complex128)
    dims = [int(d) for d in dims]
    if any(d < 1 for d in dims):
        raise DimensionError("factor dimensions must be positive")
    total = int(np.prod(dims))
    if a.shape != (total, total):
        raise DimensionError(f"matrix shape {a.shape} does not match dims {dims}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise DimensionError(f"keep indices {keep} out of range for {len(dims)} factors")

    # Fast bipartite path for the common "trace a contiguous tail/head" case.
    if keep == list(range(len(keep))):
        d_keep = int(np.prod([dims[k] for k in keep])) if keep else 1
        return _kernels.ptrace_keep(a, d_keep, total // d_keep, True)
    if keep == list(range(len(dims) - len(keep), len(dims))):
        d_keep = int(np.prod([dims[k] for k in keep]))
        return _kernels.ptrace_keep(a, d_keep, total // d_keep, False)

    n = len(dims)
    t = a.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    if 2 * n > len(letters):
        raise DimensionError("too many tensor factors")
    row = list(letters[:n])
    col = list(letters[n:2 * n])
    for k in range(n):
        if k not in keep:
            col[k] = row[k]
    out = "".join(row[k] for k in keep) + "".join(col[k] for k in keep)
    res = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    d_keep = int(np.prod([dims[k] for k in keep])) if keep else 1
    return res.reshape(d_keep, d_keep)


def permute_factors(a, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors of a square matrix: new factor i is old factor perm[i]."""
    dims = list(dims)
    n = len(dims)
    t = np.asarray(a).reshape(dims + dims)
    axes = list(perm) + [n + p for p in perm]
    d = int(np.prod(dims))
    return t.transpose(axes).reshape(d, d)


def trace_norm(a) -> float:
    return float(np.sum(np.linalg.svd(np.asarray(a, dtype=np.complex128), compute_uv=False)))


def operator_norm(a) -> float:
    s = np.linalg.svd(np.asarray(a, dtype=np.complex128), compute_uv=False)
    return float(s[0]) if s.size else 0.0


def is_hermitian(a, tol: float = HERM_TOL) -> bool:
    a = np.asarray(a)
    return a.shape[0] == a.shape[1] and np.max(np.abs(a - a.conj().T), initial=0.0) <= tol


def hermitian_part(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    return 0.5 * (a + a.conj().T)


def eig_hermitian(a, tol: float = HERM_TOL):
    """Eigenvalues in descending order and matching unit eigenvectors (columns).

    Each eigenvector is rephased so its first component of non-negligible
    magnitude is real and positive.
    """
    a = as_cmatrix(a)
    if not is_hermitian(a, tol):
        raise ValueError("eig_hermitian requires a Hermitian matrix")
    w, v = np.linalg.eigh(hermitian_part(a))
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    for k in range(v.shape[1]):
        col = v[:, k]
        idx = int(np.argmax(np.abs(col) > 1e-12))
        ph = col[idx] / abs(col[idx])
        v[:, k] = col / ph
    return w, v


def svd(a):
    """Thin SVD ``a = U diag(s) V^dagger``; returns (U, s, V)."""
    u, s, vh = np.linalg.svd(as_cmatrix(a), full_matrices=False)
    return u, s, vh.conj().T


def sqrtm_psd(a) -> np.ndarray:
    w, v = np.linalg.eigh(hermitian_part(a))
    w = np.sqrt(np.clip(w, 0.0, None))
    return (v * w) @ v.conj().T


def check_density(rho, tol: float = HERM_TOL) -> np.ndarray:
    """Validate and return ``rho`` as a density matrix."""
    rho = as_cmatrix(rho)
    if rho.shape[0] != rho.shape[1]:
        raise DimensionError("density matrix must be square")
    if not is_hermitian(rho, tol):
        raise ValueError("density matrix is not Hermitian")
    w = np.linalg.eigvalsh(hermitian_part(rho))
    if w[0] < -tol:
        raise ValueError(f"density matrix has negative eigenvalue {w[0]:.3e}")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ValueError(f"density matrix trace {np.trace(rho).real} != 1")
    return rho


def purify(rho) -> np.ndarray:
    """Unit vector psi on H (x) H whose first-factor reduction is ``rho``.

    Built as sum_k sqrt(l_k) |v_k> (x) |k>, so a pure input |v><v| maps to
    |v>|0> up to the ordering of the eigenbasis.
    """
    rho = check_density(rho)
    d = rho.shape[0]
    w, v = eig_hermitian(rho)
    w = np.clip(w, 0.0, None)
    psi = np.zeros(d * d, dtype=np.complex128)
    for k in range(d):
        if w[k] > 0:
            psi += np.sqrt(w[k]) * np.kron(v[:, k], np.eye(d)[k])
    return psi / np.linalg.norm(psi)


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=np.complex128)
    v[index] = 1.0
    return v


def proj(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.complex128).ravel()
    return np.outer(v, v.conj())


def maximally_mixed(d: int) -> np.ndarray:
    return np.eye(d, dtype=np.complex128) / d


def max_entangled(d: int) -> np.ndarray:
    """Normalized vector sum_i |ii> / sqrt(d)."""
    return np.eye(d, dtype=np.complex128).reshape(-1) / np.sqrt(d)


# random sampling helpers used by tests and restarts

def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_isometry(d_in: int, d_out: int, rng: np.random.Generator) -> np.ndarray:
    if d_out < d_in:
        raise DimensionError("isometry needs d_out >= d_in")
    return random_unitary(d_out, rng)[:, :d_in]


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_pure(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return 0.5 * (g + g.conj().T)


def hermitian_unit_basis(d: int) -> list[np.ndarray]:
    """Hermitian basis of d x d matrices, each element of operator norm one.

    Diagonal units |j><j|, and for j < k the pairs |j><k| + |k><j| and
    i(|j><k| - |k><j|).
    """
    basis = []
    for j in range(d):
        e = np.zeros((d, d), dtype=np.complex128)
        e[j, j] = 1.0
        basis.append(e)
    for j in range(d):
        for k in range(j + 1, d):
            x = np.zeros((d, d), dtype=np.complex128)
            x[j, k] = x[k, j] = 1.0
            y = np.zeros((d, d), dtype=np.complex128)
            y[j, k] = 1j
            y[k, j] = -1j
            basis.extend([x, y])
    return basis
