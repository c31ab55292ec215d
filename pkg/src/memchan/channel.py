"""Channels, memory channels and the operations that build them.

A :class:`Channel` stores its Kraus operators as a stacked array of shape
``(r, d_out, d_in)``. The same list serves both pictures::

    schrodinger:  rho -> sum_k K rho K^dagger
    heisenberg:   X   -> sum_k K^dagger X K

A :class:`MemoryChannel` wraps a channel from ``M (x) A`` to ``B (x) M``.
Memory is always the leftmost input factor and the rightmost output
factor, so the n-fold concatenation is the channel::

    M (x) A_1 (x) ... (x) A_n  ->  B_1 (x) ... (x) B_n (x) M

where the memory leaving step k enters step k+1.

The Choi matrix convention is ``J = sum_ij |i><j| (x) S(|i><j|)`` (input
factor first, unnormalized), so ``tr_out J = 1`` for trace preserving maps
and ``choi(identity_channel(d))`` is ``d`` times the maximally entangled
projector.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from memchan import _kernels
from memchan.matkernel import (
    DimensionError,
    check_density,
    eig_hermitian,
    hermitian_part,
    ket,
    maximally_mixed,
    random_isometry,
)

DEFAULT_MAX_DIM = 4096
KRAUS_PRUNE_TOL = 1e-12


class DimensionCeilingError(DimensionError):
    """A construction would exceed the configured dimension ceiling."""


def max_dim_default() -> int:
    env = os.environ.get("MEMCHAN_MAX_DIM")
    return int(env) if env else DEFAULT_MAX_DIM


def _check_ceiling(dims: Sequence[int], max_dim: int | None) -> None:
    limit = max_dim_default() if max_dim is None else max_dim
    worst = max(dims)
    if worst > limit:
        raise DimensionCeilingError(f"dimension {worst} exceeds ceiling {limit}")


@dataclass(frozen=True)
class Channel:
    """Completely positive map in Kraus form."""

    d_in: int
    d_out: int
    kraus: np.ndarray = field(repr=False)

    def __post_init__(self):
        k = np.asarray(self.kraus, dtype=np.complex128)
        if k.ndim == 2:
            k = k[None]
        if k.ndim != 3 or k.shape[1:] != (self.d_out, self.d_in) or k.shape[0] == 0:
            raise DimensionError(
                f"Kraus stack of shape {k.shape} does not match {self.d_out}x{self.d_in}"
            )
        if not np.all(np.isfinite(k)):
            raise ValueError("Kraus operators have non-finite entries")
        k.setflags(write=False)
        object.__setattr__(self, "kraus", k)

    @classmethod
    def from_kraus(cls, kraus) -> "Channel":
        k = np.asarray(kraus, dtype=np.complex128)
        if k.ndim == 2:
            k = k[None]
        return cls(d_in=k.shape[2], d_out=k.shape[1], kraus=k)

    @property
    def n_kraus(self) -> int:
        return self.kraus.shape[0]

    def __call__(self, rho) -> np.ndarray:
        return schrodinger_apply(self, rho)


@dataclass(frozen=True)
class MemoryChannel:
    """Channel ``M (x) A -> B (x) M`` with explicit register and memory sizes."""

    dA: int
    dB: int
    dM: int
    base: Channel

    def __post_init__(self):
        if self.base.d_in != self.dM * self.dA or self.base.d_out != self.dB * self.dM:
            raise DimensionError(
                f"base channel {self.base.d_in}->{self.base.d_out} inconsistent with "
                f"dA={self.dA}, dB={self.dB}, dM={self.dM}"
            )

    @property
    def is_pure(self) -> bool:
        return prune_kraus(self.base).n_kraus == 1


@dataclass(frozen=True)
class IsometryDilation:
    v: np.ndarray = field(repr=False)
    d_env: int
    d_out: int


# ---------------------------------------------------------------------------
# basic operations
# ---------------------------------------------------------------------------

def validate_cptp(ch: Channel, tol: float = 1e-10) -> tuple[bool, float]:
    """Return (ok, residual) with residual = ||sum K^dagger K - 1||_inf."""
    s = _kernels.kraus_adjoint_apply(ch.kraus, np.eye(ch.d_out, dtype=np.complex128))
    res = float(np.linalg.norm(s - np.eye(ch.d_in), 2))
    return res <= tol, res


def schrodinger_apply(ch: Channel, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (ch.d_in, ch.d_in):
        raise DimensionError(f"state of shape {rho.shape} does not fit input dim {ch.d_in}")
    return _kernels.kraus_apply(ch.kraus, rho)


def heisenberg_apply(ch: Channel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    if x.shape != (ch.d_out, ch.d_out):
        raise DimensionError(f"observable of shape {x.shape} does not fit output dim {ch.d_out}")
    return _kernels.kraus_adjoint_apply(ch.kraus, x)


def choi(ch: Channel) -> np.ndarray:
    r = ch.n_kraus
    vecs = ch.kraus.transpose(0, 2, 1).reshape(r, ch.d_in * ch.d_out)
    return vecs.T @ vecs.conj()


def choi_of_map(apply, d_in: int, d_out: int) -> np.ndarray:
    """Choi matrix of an arbitrary linear map given as a callable on matrices."""
    j = np.zeros((d_in * d_out, d_in * d_out), dtype=np.complex128)
    for a in range(d_in):
        for b in range(d_in):
            e = np.zeros((d_in, d_in), dtype=np.complex128)
            e[a, b] = 1.0
            j[a * d_out:(a + 1) * d_out, b * d_out:(b + 1) * d_out] = apply(e)
    return j


def apply_choi(j: np.ndarray, rho: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    """Apply the map with Choi matrix ``j`` to ``rho``."""
    t = j.reshape(d_in, d_out, d_in, d_out)
    return np.einsum("aobp,ab->op", t, rho)


def kraus_from_choi(j, d_in: int, d_out: int, tol: float = 1e-12) -> Channel:
    j = np.asarray(j, dtype=np.complex128)
    if j.shape != (d_in * d_out, d_in * d_out):
        raise DimensionError(f"Choi matrix of shape {j.shape} does not match {d_in}x{d_out}")
    w, v = np.linalg.eigh(hermitian_part(j))
    scale = max(1.0, float(np.max(np.abs(w))))
    if w[0] < -max(tol, 1e-9) * scale:
        raise ValueError(f"Choi matrix not positive semidefinite (eigenvalue {w[0]:.3e})")
    keep = w > tol * scale
    if not np.any(keep):
        raise ValueError("Choi matrix is zero")
    vecs = v[:, keep] * np.sqrt(w[keep])
    kraus = vecs.T.reshape(-1, d_in, d_out).transpose(0, 2, 1)
    return Channel(d_in=d_in, d_out=d_out, kraus=kraus)


def prune_kraus(ch: Channel, tol: float = KRAUS_PRUNE_TOL) -> Channel:
    """Minimal Kraus set: drop Choi eigenvalues below ``tol``.

    Uses the SVD of the stacked Kraus matrix, whose squared singular values
    are the nonzero Choi eigenvalues.
    """
    r = ch.n_kraus
    m = ch.kraus.reshape(r, -1)
    if r == 1:
        return ch
    _, s, vh = np.linalg.svd(m, full_matrices=False)
    keep = s ** 2 > tol
    if not np.any(keep):
        keep[0] = True
    new = (s[keep, None] * vh[keep]).reshape(-1, ch.d_out, ch.d_in)
    return Channel(d_in=ch.d_in, d_out=ch.d_out, kraus=new)


def identity_channel(d: int) -> Channel:
    return Channel(d_in=d, d_out=d, kraus=np.eye(d, dtype=np.complex128)[None])


def unitary_channel(u) -> Channel:
    u = np.asarray(u, dtype=np.complex128)
    return Channel(d_in=u.shape[1], d_out=u.shape[0], kraus=u[None])


def replacement_channel(d_in: int, state) -> Channel:
    """rho -> tr(rho) * state."""
    state = check_density(state)
    w, v = eig_hermitian(state)
    ops = []
    for k in range(len(w)):
        if w[k] > 1e-15:
            for i in range(d_in):
                ops.append(np.sqrt(w[k]) * np.outer(v[:, k], ket(i, d_in)))
    return Channel(d_in=d_in, d_out=state.shape[0], kraus=np.array(ops))


def depolarizing_channel(d: int, p: float) -> Channel:
    """(1 - p) id + p * (completely depolarizing)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("depolarizing probability must lie in [0, 1]")
    ops = [np.sqrt(1 - p) * np.eye(d)] if p < 1 else []
    full = replacement_channel(d, maximally_mixed(d)).kraus
    ops.extend(np.sqrt(p) * full)
    return Channel(d_in=d, d_out=d, kraus=np.array(ops))


def dephasing_channel(p: float) -> Channel:
    """Qubit channel with Kraus {sqrt(p) I, sqrt(1-p) Z}."""
    z = np.diag([1.0, -1.0]).astype(np.complex128)
    return Channel(2, 2, np.array([np.sqrt(p) * np.eye(2), np.sqrt(1 - p) * z]))


def trace_channel(d: int) -> Channel:
    """Discard a d-level system."""
    return Channel(d_in=d, d_out=1, kraus=np.eye(d, dtype=np.complex128).reshape(d, 1, d))


def random_channel(d_in: int, d_out: int, n_kraus: int, rng: np.random.Generator) -> Channel:
    v = random_isometry(d_in, d_out * n_kraus, rng)
    return Channel(d_in, d_out, v.reshape(d_out, n_kraus, d_in).transpose(1, 0, 2))


def compose(outer: Channel, inner: Channel) -> Channel:
    """outer o inner (inner applied first, Schrodinger picture)."""
    if outer.d_in != inner.d_out:
        raise DimensionError(f"cannot compose {inner.d_out}-dim output with {outer.d_in}-dim input")
    k = np.einsum("aij,bjk->abik", outer.kraus, inner.kraus).reshape(-1, outer.d_out, inner.d_in)
    return prune_kraus(Channel(inner.d_in, outer.d_out, k))


def tensor_channels(*chs: Channel) -> Channel:
    out = chs[0]
    for ch in chs[1:]:
        k = np.einsum("aij,bkl->abikjl", out.kraus, ch.kraus).reshape(
            -1, out.d_out * ch.d_out, out.d_in * ch.d_in
        )
        out = prune_kraus(Channel(out.d_in * ch.d_in, out.d_out * ch.d_out, k))
    return out


def convex_mix(weights: Sequence[float], chs: Sequence[Channel]) -> Channel:
    ops = [np.sqrt(w) * c.kraus for w, c in zip(weights, chs) if w > 0]
    return Channel(chs[0].d_in, chs[0].d_out, np.concatenate(ops))


def channel_distance_choi(a: Channel, b: Channel) -> float:
    """Frobenius distance of Choi matrices."""
    return float(np.linalg.norm(choi(a) - choi(b)))


# ---------------------------------------------------------------------------
# memory channel machinery
# ---------------------------------------------------------------------------

def concatenate(mc: MemoryChannel, n: int, max_dim: int | None = None, prune: bool = True) -> Channel:
    """n-fold concatenation ``M (x) A^n -> B^n (x) M``."""
    if n < 1:
        raise ValueError("n must be positive")
    _check_ceiling([mc.dM * mc.dA ** n, mc.dB ** n * mc.dM], max_dim)
    dA, dB, dM = mc.dA, mc.dB, mc.dM
    k = mc.base.kraus.reshape(-1, dB, dM, dM, dA)  # (k, b, m_out, m_in, a)
    cur = mc.base.kraus.copy()  # (j, Bprev * M, X)
    for step in range(1, n):
        bprev = dB ** step
        x = dM * dA ** step
        lj = cur.reshape(-1, bprev, dM, x)  # (j, p, m, x)
        prod = np.einsum("kbnma,jpmx->kjpbnxa", k, lj)
        cur = prod.reshape(-1, bprev * dB * dM, x * dA)
        if prune:
            cur = prune_kraus(Channel(x * dA, bprev * dB * dM, cur)).kraus
    return Channel(dM * dA ** n, dB ** n * dM, cur)


def restrict_ignore_outputs(mc: MemoryChannel, n: int, max_dim: int | None = None) -> Channel:
    """Memory-output channel ``M (x) A^n -> M`` with every register output traced."""
    if n < 1:
        raise ValueError("n must be positive")
    _check_ceiling([mc.dM * mc.dA ** n, mc.dB ** n * mc.dM], max_dim)
    dA, dB, dM = mc.dA, mc.dB, mc.dM
    # one-step Kraus with Bob's output traced: index (k, b) -> M <- M (x) A
    step = mc.base.kraus.reshape(-1, dB, dM, dM * dA).reshape(-1, dM, dM * dA)
    step = prune_kraus(Channel(dM * dA, dM, step)).kraus
    cur = step
    s4 = step.reshape(-1, dM, dM, dA)  # (k, m_out, m_in, a)
    for i in range(1, n):
        x = dM * dA ** i
        lj = cur.reshape(-1, dM, x)
        prod = np.einsum("knma,jmx->kjnxa", s4, lj)
        cur = prune_kraus(Channel(x * dA, dM, prod.reshape(-1, dM, x * dA))).kraus
    return Channel(dM * dA ** n, dM, cur)


def memory_step_block(mc: MemoryChannel) -> Channel:
    """One step with register output traced: ``M (x) A -> M``."""
    return restrict_ignore_outputs(mc, 1)


def fix_memory_input(mc: MemoryChannel, mu, n: int, max_dim: int | None = None,
                     prune: bool = False) -> Channel:
    """Channel ``A^n -> B^n``: memory starts in ``mu``, final memory is traced.

    With the concatenated Kraus operators ``V`` split into blocks
    ``V_ab = (1 (x) <a|) V (|b> (x) 1)`` over the eigenbasis of ``mu``, the
    Kraus operators are ``sqrt(mu_b) V_ab``. A pure memory channel therefore
    yields at most ``dM**2`` of them for every ``n``.
    """
    mu = check_density(mu)
    if mu.shape[0] != mc.dM:
        raise DimensionError(f"memory state has dim {mu.shape[0]}, expected {mc.dM}")
    sn = concatenate(mc, n, max_dim=max_dim)
    dM = mc.dM
    w, v = eig_hermitian(mu)
    dAn, dBn = mc.dA ** n, mc.dB ** n
    ops = []
    for L in sn.kraus:
        # rotate memory input into the eigenbasis of mu
        L4 = L.reshape(dBn, dM, dM, dAn)
        Lrot = np.einsum("pnma,mb->pnba", L4, v)
        for beta in range(dM):
            if w[beta] <= 1e-15:
                continue
            for alpha in range(dM):
                ops.append(np.sqrt(w[beta]) * Lrot[:, alpha, beta, :])
    ch = Channel(dAn, dBn, np.array(ops))
    return prune_kraus(ch) if prune else ch


def stinespring(ch: Channel) -> IsometryDilation:
    """Minimal dilation ``V: H_in -> H_out (x) H_env`` with d_env the Choi rank."""
    ch = prune_kraus(ch)
    r = ch.n_kraus
    v = ch.kraus.transpose(1, 0, 2).reshape(ch.d_out * r, ch.d_in)
    return IsometryDilation(v=v, d_env=r, d_out=ch.d_out)


def complementary(ch: Channel) -> Channel:
    """Channel to the environment of the minimal dilation."""
    dil = stinespring(ch)
    k = dil.v.reshape(dil.d_out, dil.d_env, ch.d_in)
    return Channel(d_in=ch.d_in, d_out=dil.d_env, kraus=k)


def dilation_channel(dil: IsometryDilation, trace_env: bool = True) -> Channel:
    """Rebuild a channel from a dilation by tracing the environment (or the output)."""
    d_in = dil.v.shape[1]
    k = dil.v.reshape(dil.d_out, dil.d_env, d_in)
    if trace_env:
        return Channel(d_in, dil.d_out, k.transpose(1, 0, 2))
    return Channel(d_in, dil.d_env, k)


def trace_memory_output(ch: Channel, d_reg: int, dM: int) -> Channel:
    """Trace the rightmost ``dM`` factor from the output of a channel."""
    if ch.d_out != d_reg * dM:
        raise DimensionError("output dimension does not factor as register x memory")
    k = ch.kraus.reshape(-1, d_reg, dM, ch.d_in).transpose(0, 2, 1, 3).reshape(-1, d_reg, ch.d_in)
    return prune_kraus(Channel(ch.d_in, d_reg, k))


def prepend_memory_state(ch: Channel, mu, dM: int) -> Channel:
    """Feed ``mu`` into the leftmost ``dM`` input factor: result acts on the rest."""
    mu = check_density(mu)
    d_rest = ch.d_in // dM
    w, v = eig_hermitian(mu)
    ops = []
    for L in ch.kraus:
        L3 = L.reshape(ch.d_out, dM, d_rest)
        for b in range(dM):
            if w[b] > 1e-15:
                ops.append(np.sqrt(w[b]) * np.einsum("omx,m->ox", L3, v[:, b]))
    return prune_kraus(Channel(d_rest, ch.d_out, np.array(ops)))


def memory_replacement(mc: MemoryChannel, d_rest: int, sigma=None) -> Channel:
    """Channel on ``M (x) R`` replacing the memory factor by ``sigma``."""
    sigma = maximally_mixed(mc.dM) if sigma is None else check_density(sigma)
    rep = replacement_channel(mc.dM, sigma)
    return tensor_channels(rep, identity_channel(d_rest))


# ---------------------------------------------------------------------------
# built-in memory channels
# ---------------------------------------------------------------------------

def shift_unitary(d: int) -> np.ndarray:
    """Memory goes to Bob, the register becomes the new memory.

    With memory leftmost on input and rightmost on output this is the
    plain identity matrix on ``C^d (x) C^d``.
    """
    return np.eye(d * d, dtype=np.complex128)


def ideal_unitary(d: int) -> np.ndarray:
    """Register goes straight to Bob, memory is kept: the swap matrix."""
    f = np.zeros((d * d, d * d), dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            f[j * d + i, i * d + j] = 1.0
    return f


def shift(d: int = 2) -> MemoryChannel:
    return MemoryChannel(d, d, d, unitary_channel(shift_unitary(d)))


def ideal_memory_channel(d: int = 2) -> MemoryChannel:
    """Noiseless register with a memory that is never touched."""
    return MemoryChannel(d, d, d, unitary_channel(ideal_unitary(d)))


def memoryless(t: Channel) -> MemoryChannel:
    """Embed a memoryless channel with a one-dimensional memory."""
    return MemoryChannel(t.d_in, t.d_out, 1, t)


def partial_flip_unitary(eta: float, d: int = 2) -> np.ndarray:
    """cos(eta) * shift + i sin(eta) * ideal."""
    return np.cos(eta) * shift_unitary(d) + 1j * np.sin(eta) * ideal_unitary(d)


def partial_flip(eta: float, d: int = 2) -> MemoryChannel:
    if not 0.0 <= eta < 2 * np.pi:
        raise ValueError("eta must lie in [0, 2*pi)")
    return MemoryChannel(d, d, d, unitary_channel(partial_flip_unitary(eta, d)))


def switch(components: Sequence[Channel]) -> MemoryChannel:
    """Global classical switch: memory |i><i| selects component i forever."""
    comps = list(components)
    if not comps:
        raise ValueError("switch needs at least one component")
    dA, dB = comps[0].d_in, comps[0].d_out
    if any(c.d_in != dA or c.d_out != dB for c in comps):
        raise DimensionError("switch components must share dimensions")
    dM = len(comps)
    ops = []
    eye_a = np.eye(dA)
    for i, c in enumerate(comps):
        bra = np.kron(ket(i, dM).conj()[None, :], eye_a)  # (dA, dM*dA)
        for t in c.kraus:
            ops.append(np.kron(t, ket(i, dM)[:, None]) @ bra)
    return MemoryChannel(dA, dB, dM, Channel(dM * dA, dB * dM, np.array(ops)))


def mixed_shift(p: float, d: int = 2) -> MemoryChannel:
    """With probability p the ideal channel, otherwise the shift."""
    if not 0.0 <= p < 1.0:
        raise ValueError("p must lie in [0, 1)")
    ops = [np.sqrt(1 - p) * shift_unitary(d)]
    if p > 0:
        ops.insert(0, np.sqrt(p) * ideal_unitary(d))
    return MemoryChannel(d, d, d, Channel(d * d, d * d, np.array(ops)))


def depolarize_mix(mc: MemoryChannel, eps: float, delta=None) -> MemoryChannel:
    """(1 - eps) S + eps D with D(rho) = tr(rho) delta on ``B (x) M``."""
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    d_out = mc.dB * mc.dM
    delta = maximally_mixed(d_out) if delta is None else check_density(delta)
    if delta.shape[0] != d_out:
        raise DimensionError(f"delta must act on B (x) M of dimension {d_out}")
    rep = replacement_channel(mc.dM * mc.dA, delta)
    mixed = convex_mix([1 - eps, eps], [mc.base, rep])
    return MemoryChannel(mc.dA, mc.dB, mc.dM, prune_kraus(mixed))


BUILTINS = ("shift", "switch", "partial_flip", "mixed_shift", "depolarize_mix")


def builtin(name: str, **params) -> MemoryChannel:
    """Construct a named memory channel."""
    if name == "shift":
        return shift(int(params.get("d", 2)))
    if name == "partial_flip":
        return partial_flip(float(params["eta"]), int(params.get("d", 2)))
    if name == "mixed_shift":
        return mixed_shift(float(params["p"]), int(params.get("d", 2)))
    if name == "switch":
        return switch(params["components"])
    if name == "depolarize_mix":
        return depolarize_mix(params["mc"], float(params["eps"]), params.get("delta"))
    raise ValueError(f"unknown builtin channel {name!r}; expected one of {BUILTINS}")
