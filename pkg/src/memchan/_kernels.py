"""Hot numeric kernels with a numba path and a pure-numpy path.

The backend is chosen once at import time from ``MEMCHAN_KERNELS``
(``numba`` or ``numpy``). When unset, numba is used if it imports.
Both paths implement the same contracts and are tested against each other.
"""

from __future__ import annotations

import os

import numpy as np

_REQUESTED = os.environ.get("MEMCHAN_KERNELS", "").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

if _REQUESTED not in ("", "numba", "numpy"):
    raise ValueError(f"MEMCHAN_KERNELS must be 'numba' or 'numpy', got {_REQUESTED!r}")

BACKEND = "numba" if (HAVE_NUMBA and _REQUESTED != "numpy") else "numpy"


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def kraus_apply_numpy(kraus, rho):
    """sum_k K rho K^dagger for a stacked (r, d_out, d_in) Kraus array."""
    tmp = kraus @ rho
    return np.einsum("kij,klj->il", tmp, kraus.conj())


def kraus_adjoint_apply_numpy(kraus, x):
    """sum_k K^dagger x K."""
    tmp = x @ kraus
    return np.einsum("kji,kjl->il", kraus.conj(), tmp)


def ptrace_keep_numpy(a, d_keep, d_rest, keep_left):
    """Trace out one side of a bipartite square matrix."""
    if keep_left:
        t = a.reshape(d_keep, d_rest, d_keep, d_rest)
        return np.einsum("ajbj->ab", t)
    t = a.reshape(d_rest, d_keep, d_rest, d_keep)
    return np.einsum("jajb->ab", t)


def psd_project_numpy(a):
    w, v = np.linalg.eigh(a)
    w = np.clip(w, 0.0, None)
    return (v * w) @ v.conj().T


def entropy_bits_numpy(evals, floor):
    out = 0.0
    for lam in evals:
        if lam > floor:
            out -= lam * np.log2(lam)
    return out


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def kraus_apply_numba(kraus, rho):
        r, d_out, d_in = kraus.shape
        out = np.zeros((d_out, d_out), dtype=np.complex128)
        for k in range(r):
            kk = np.ascontiguousarray(kraus[k])
            tmp = kk @ rho
            out += tmp @ kk.conj().T
        return out

    @numba.njit(cache=True)
    def kraus_adjoint_apply_numba(kraus, x):
        r, d_out, d_in = kraus.shape
        out = np.zeros((d_in, d_in), dtype=np.complex128)
        for k in range(r):
            kk = np.ascontiguousarray(kraus[k])
            out += np.ascontiguousarray(kk.conj().T) @ (x @ kk)
        return out

    @numba.njit(cache=True)
    def ptrace_keep_numba(a, d_keep, d_rest, keep_left):
        out = np.zeros((d_keep, d_keep), dtype=np.complex128)
        if keep_left:
            for i in range(d_keep):
                for j in range(d_keep):
                    s = 0j
                    for k in range(d_rest):
                        s += a[i * d_rest + k, j * d_rest + k]
                    out[i, j] = s
        else:
            for i in range(d_keep):
                for j in range(d_keep):
                    s = 0j
                    for k in range(d_rest):
                        s += a[k * d_keep + i, k * d_keep + j]
                    out[i, j] = s
        return out

    @numba.njit(cache=True)
    def psd_project_numba(a):
        w, v = np.linalg.eigh(a)
        n = w.shape[0]
        vw = v.copy()
        for k in range(n):
            s = w[k] if w[k] > 0.0 else 0.0
            for i in range(n):
                vw[i, k] *= s
        return vw @ np.ascontiguousarray(v.conj().T)

    @numba.njit(cache=True)
    def entropy_bits_numba(evals, floor):
        out = 0.0
        for lam in evals:
            if lam > floor:
                out -= lam * np.log2(lam)
        return out


def _select(name):
    if BACKEND == "numba":
        return globals()[name + "_numba"]
    return globals()[name + "_numpy"]


def kraus_apply(kraus: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return _select("kraus_apply")(
        np.ascontiguousarray(kraus, dtype=np.complex128),
        np.ascontiguousarray(rho, dtype=np.complex128),
    )


def kraus_adjoint_apply(kraus: np.ndarray, x: np.ndarray) -> np.ndarray:
    return _select("kraus_adjoint_apply")(
        np.ascontiguousarray(kraus, dtype=np.complex128),
        np.ascontiguousarray(x, dtype=np.complex128),
    )


def ptrace_keep(a: np.ndarray, d_keep: int, d_rest: int, keep_left: bool) -> np.ndarray:
    return _select("ptrace_keep")(
        np.ascontiguousarray(a, dtype=np.complex128), int(d_keep), int(d_rest), bool(keep_left)
    )


def psd_project(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.complex128)
    a = 0.5 * (a + a.conj().T)
    # entries far below machine precision (they pile up in iterative solvers)
    # make the LAPACK eigensolver fail to converge, so flush them
    a[np.abs(a) < 1e-15 * np.abs(a).max(initial=0.0)] = 0.0
    return _select("psd_project")(a)


def entropy_bits(evals: np.ndarray, floor: float = 1e-15) -> float:
    return float(_select("entropy_bits")(np.ascontiguousarray(evals, dtype=np.float64), float(floor)))
