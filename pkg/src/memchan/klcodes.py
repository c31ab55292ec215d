"""Knill-Laflamme codes: verification, an eigenvalue-pairing constructor and recovery.

A subspace with orthonormal basis ``|alpha>`` is correctable for Kraus
operators ``t_i`` when ``<alpha| t_i^dag t_j |beta> = omega_ij delta_ab``.
The constructor enforces this one Hermitian operator at a time. Given the
current code space and a Hermitian ``H``, it centres the spectrum of the
compressed operator at its median ``omega``, keeps eigenvectors sitting at
``omega`` unchanged, and merges each eigenvector above ``omega`` with one
below it into a vector on which ``H - omega`` has zero expectation. Each
operator therefore costs at most a factor two in dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from memchan.channel import Channel, MemoryChannel, compose, fix_memory_input, prune_kraus
from memchan.matkernel import DimensionError, hermitian_part

ORTHO_TOL = 1e-10


class KLViolation(ValueError):
    """The supplied basis does not satisfy the Knill-Laflamme conditions."""


def _as_basis(basis) -> np.ndarray:
    """Columns are the basis vectors."""
    if isinstance(basis, np.ndarray) and basis.ndim == 2:
        b = np.asarray(basis, dtype=np.complex128)
    else:
        vecs = [np.asarray(v, dtype=np.complex128).ravel() for v in basis]
        if not vecs:
            raise ValueError("empty code basis")
        if len({v.size for v in vecs}) != 1:
            raise DimensionError("basis vectors have different dimensions")
        b = np.stack(vecs, axis=1)
    return b


def _check_orthonormal(b: np.ndarray, tol: float = ORTHO_TOL) -> float:
    err = float(np.abs(b.conj().T @ b - np.eye(b.shape[1])).max(initial=0.0))
    if err > tol:
        raise ValueError(f"code basis is not orthonormal (error {err:.2e})")
    return err


@dataclass(frozen=True)
class KLCode:
    code_basis: np.ndarray  # (d, m), orthonormal columns
    omega: np.ndarray  # (K, K)

    def __post_init__(self):
        b = _as_basis(self.code_basis)
        if b.shape[1]:
            _check_orthonormal(b)
        b.setflags(write=False)
        object.__setattr__(self, "code_basis", b)

    @property
    def dim(self) -> int:
        return self.code_basis.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self.code_basis @ self.code_basis.conj().T


def _stack_kraus(kraus) -> np.ndarray:
    if isinstance(kraus, Channel):
        return kraus.kraus
    k = np.asarray(kraus, dtype=np.complex128)
    return k[None] if k.ndim == 2 else k


def kl_verify(kraus, basis, tol: float = 1e-8) -> tuple[bool, np.ndarray, float]:
    """Check the Knill-Laflamme conditions on ``basis``.

    Returns ``(holds, omega, max_residual)`` where ``omega`` holds the mean
    diagonal values and the residual is the largest off-diagonal entry or
    deviation of a diagonal entry from its mean.
    """
    k = _stack_kraus(kraus)
    b = _as_basis(basis)
    if b.shape[0] != k.shape[2]:
        raise DimensionError(f"basis dimension {b.shape[0]} does not match Kraus domain {k.shape[2]}")
    _check_orthonormal(b)
    kb = np.einsum("kab,bm->kam", k, b)  # t_i |alpha>
    blocks = np.einsum("iam,jan->ijmn", kb.conj(), kb)  # <alpha| t_i^dag t_j |beta>
    m = b.shape[1]
    diag = np.einsum("ijmm->ijm", blocks)
    omega = diag.mean(axis=2)
    off = blocks * (1 - np.eye(m))[None, None]
    resid = max(float(np.abs(off).max(initial=0.0)), float(np.abs(diag - omega[..., None]).max(initial=0.0)))
    return resid <= tol, omega, resid


def hermitian_kl_operators(kraus) -> list[tuple[str, np.ndarray]]:
    """The K^2 Hermitian operators spanning all ``t_i^dag t_j``.

    ``tau_ii`` for each i, and for i < j the pair ``tau + tau^dag`` and
    ``i (tau^dag - tau)`` with ``tau = t_i^dag t_j``; labels are returned
    alongside in ascending lexical order.
    """
    k = _stack_kraus(kraus)
    ops = []
    for i in range(k.shape[0]):
        for j in range(i, k.shape[0]):
            tau = k[i].conj().T @ k[j]
            if i == j:
                ops.append((f"tau{i}{i}", hermitian_part(tau)))
            else:
                ops.append((f"tau{i}{j}+", tau + tau.conj().T))
                ops.append((f"tau{i}{j}-", 1j * (tau.conj().T - tau)))
    return ops


@dataclass(frozen=True)
class PairingStep:
    label: str
    dim_before: int
    dim_after: int
    omega: float
    residual: float
    halved: bool


@dataclass(frozen=True)
class PairingResult:
    code: KLCode
    steps: tuple[PairingStep, ...]
    guaranteed_floor: int
    diagnostic: str = ""

    @property
    def halvings(self) -> int:
        return sum(1 for s in self.steps if s.halved)

    @property
    def max_step_residual(self) -> float:
        return max((s.residual for s in self.steps), default=0.0)


def _pair_step(h: np.ndarray, v: np.ndarray, zero_tol: float):
    """One centring and pairing step for Hermitian ``h`` on code space ``v``."""
    hr = hermitian_part(v.conj().T @ h @ v)
    m = hr.shape[0]
    mu, e = np.linalg.eigh(hr)
    scale = max(1.0, float(np.abs(mu).max(initial=0.0)))
    if mu[-1] - mu[0] <= zero_tol * scale:
        return v, float(np.mean(mu)), False
    omega = float(np.median(mu))
    mu = mu - omega
    zero = np.abs(mu) <= zero_tol * scale
    pos = [a for a in range(m) if mu[a] > 0 and not zero[a]]
    neg = [a for a in range(m) if mu[a] < 0 and not zero[a]]
    # pair from the outside in: largest with most negative
    pos = pos[::-1]
    cols = [e[:, a] for a in range(m) if zero[a]]
    for a, b in zip(pos, neg):
        ratio = mu[a] / -mu[b]
        cols.append((e[:, a] + np.sqrt(ratio) * e[:, b]) / np.sqrt(1.0 + ratio))
    coeff = np.stack(cols, axis=1) if cols else np.zeros((m, 0), dtype=np.complex128)
    return v @ coeff, omega, True


def pairing_construct(kraus, order: str = "lexical", seed: int | None = None,
                      zero_tol: float = 1e-12) -> PairingResult:
    """Build a code satisfying the Knill-Laflamme conditions by repeated pairing.

    ``order`` is ``"lexical"`` (ascending ``(i, j)``) or ``"shuffle"`` (a
    seed-driven permutation of the operator list). Per-step residuals
    ``max |<phi_a| H - omega |phi_b>|`` over the new basis are recorded.
    """
    k = _stack_kraus(kraus)
    d = k.shape[2]
    n_k = k.shape[0]
    ops = hermitian_kl_operators(k)
    if order == "shuffle":
        rng = np.random.default_rng(seed)
        ops = [ops[i] for i in rng.permutation(len(ops))]
    elif order != "lexical":
        raise ValueError("order must be 'lexical' or 'shuffle'")
    v = np.eye(d, dtype=np.complex128)
    steps = []
    diagnostic = ""
    for label, h in ops:
        before = v.shape[1]
        if before == 0:
            break
        v, omega, halved = _pair_step(h, v, zero_tol)
        # orthonormality can drift slightly; re-orthonormalize without rotating the span
        if v.shape[1]:
            q, r = np.linalg.qr(v)
            v = q * np.sign(np.diag(r).real + (np.diag(r).real == 0))
        hc = v.conj().T @ (h - omega * np.eye(d)) @ v
        resid = float(np.abs(hc).max(initial=0.0))
        steps.append(PairingStep(label, before, v.shape[1], omega, resid, halved))
    floor = d // 2 ** (n_k * n_k)
    if v.shape[1] == 0:
        diagnostic = "code dimension reached zero"
        omega = np.zeros((n_k, n_k), dtype=np.complex128)
    else:
        _, omega, _ = kl_verify(k, v, tol=np.inf)
    return PairingResult(KLCode(v, omega), tuple(steps), floor, diagnostic)


def recovery_channel(kraus, code: KLCode, tol: float = 1e-6) -> Channel:
    """Recovery map ``R`` (output space -> input space) with ``R o S`` the identity on the code."""
    k = _stack_kraus(kraus)
    holds, omega, resid = kl_verify(k, code.code_basis, tol=tol)
    if not holds:
        raise KLViolation(f"Knill-Laflamme residual {resid:.2e} exceeds {tol:.0e}")
    d_in, d_out = k.shape[2], k.shape[1]
    dvals, u = np.linalg.eigh(hermitian_part(omega))
    p = code.projector
    # F_k = sum_i u_ik t_i satisfy P F_k^dag F_l P = d_k delta_kl P
    f = np.einsum("ik,iab->kab", u, k)
    ops = []
    for dk, fk in zip(dvals, f):
        if dk > 1e-12:
            ops.append(p @ fk.conj().T / np.sqrt(dk))
    ops = np.array(ops) if ops else np.zeros((0, d_in, d_out), dtype=np.complex128)
    # complete to a trace preserving map on the orthogonal complement of the ranges
    s = np.einsum("kab,kac->bc", ops.conj(), ops) if len(ops) else np.zeros((d_out, d_out))
    w, vecs = np.linalg.eigh(hermitian_part(np.eye(d_out) - s))
    c0 = code.code_basis[:, 0]
    extra = [np.sqrt(max(wj, 0.0)) * np.outer(c0, vecs[:, j].conj()) for j, wj in enumerate(w) if wj > 1e-12]
    allops = list(ops) + extra
    return prune_kraus(Channel(d_out, d_in, np.array(allops)))


def entanglement_fidelity(ch: Channel, basis) -> float:
    """``sum_k |tr(Q^dag M_k Q)|^2 / m^2`` for the code isometry ``Q``."""
    q = _as_basis(basis)
    m = q.shape[1]
    tr = np.einsum("am,kab,bm->k", q.conj(), ch.kraus, q)
    return float(np.sum(np.abs(tr) ** 2) / m ** 2)


@dataclass(frozen=True)
class RateDemo:
    n: int
    code_dim: int
    guaranteed_floor: int
    fidelity: float
    n_kraus: int
    halvings: int

    @property
    def rate(self) -> float:
        return float(np.log2(self.code_dim) / self.n) if self.code_dim else 0.0


def pure_channel_rate_demo(mc: MemoryChannel, mu, n: int, max_dim: int | None = None) -> RateDemo:
    """Code for ``n`` uses of a pure memory channel started in memory state ``mu``.

    The block channel has at most ``dM**2`` Kraus operators for every ``n``,
    so the guaranteed dimension is ``floor(dA**n / 2**(dM**4))``.
    """
    if not mc.is_pure:
        raise ValueError("pure_channel_rate_demo needs a memory channel with a single Kraus operator")
    block = fix_memory_input(mc, mu, n, max_dim=max_dim, prune=True)
    res = pairing_construct(block.kraus)
    floor = mc.dA ** n // 2 ** (mc.dM ** 4)
    fid = 0.0
    if res.code.dim:
        rec = recovery_channel(block.kraus, res.code)
        fid = entanglement_fidelity(compose(rec, block), res.code.code_basis)
    return RateDemo(n, res.code.dim, floor, fid, block.n_kraus, res.halvings)
