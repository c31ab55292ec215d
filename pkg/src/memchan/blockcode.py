"""Block coding for forgetful memory channels.

Each block of ``m + l`` uses starts with ``m`` guard inputs fed a fixed state
``omega``; their outputs are discarded. Only the ``l`` payload uses carry
data. If the channel forgets quickly, the memory entering the payload
barely depends on the previous block. The block is then close to the
surrogate in which the guard section resets the memory to a fixed state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from memchan.channel import (
    Channel,
    MemoryChannel,
    complementary,
    compose,
    concatenate,
    identity_channel,
    memory_replacement,
    prepend_memory_state,
    prune_kraus,
    replacement_channel,
    restrict_ignore_outputs,
    schrodinger_apply,
    tensor_channels,
    trace_memory_output,
    _check_ceiling,
)
from memchan.entropics import CapacitySetting, Ensemble, effective_channel, maximize_chi
from memchan.forgetful import dn_result
from memchan.matkernel import (
    DimensionError,
    check_density,
    eig_hermitian,
    hermitian_part,
    maximally_mixed,
    trace_norm,
)
from memchan.metrics import DEFAULT_TOL, DiamondResult, HermitianPreservingMap, diamond_norm


def strictly_forgetful_depth(mc: MemoryChannel, m_max: int = 4, tol: float = DEFAULT_TOL,
                             max_dim: int | None = None) -> int | None:
    """Smallest ``m <= m_max`` at which the memory output no longer depends on the memory input."""
    for m in range(1, m_max + 1):
        r = dn_result(mc, m, tol=min(tol, DEFAULT_TOL) / 10, max_dim=max_dim)
        if r.value <= tol:
            return m
    return None


def _fix_trailing_input(ch: Channel, d_first: int, state) -> Channel:
    """Feed ``state`` into every input factor after the first ``d_first`` dimensions."""
    state = check_density(state)
    d_rest = ch.d_in // d_first
    if state.shape[0] != d_rest:
        raise DimensionError(f"guard state has dim {state.shape[0]}, expected {d_rest}")
    w, v = eig_hermitian(state)
    ops = []
    for L in ch.kraus:
        L3 = L.reshape(ch.d_out, d_first, d_rest)
        for b in range(d_rest):
            if w[b] > 1e-15:
                ops.append(np.sqrt(w[b]) * np.einsum("omx,x->om", L3, v[:, b]))
    return prune_kraus(Channel(d_first, ch.d_out, np.array(ops)))


@dataclass(frozen=True)
class BlockReduction:
    m: int
    l: int
    reduced: Channel
    error_rate_per_block: float
    block: MemoryChannel
    surrogate: MemoryChannel
    bracket: tuple[float, float] = (0.0, 0.0)
    guard_memory_state: np.ndarray | None = None


def _guard_channels(mc: MemoryChannel, m: int, omega, sigma, max_dim):
    sm = restrict_ignore_outputs(mc, m, max_dim=max_dim)  # M (x) A^m -> M
    omega = maximally_mixed(mc.dA ** m) if omega is None else check_density(omega)
    sigma = maximally_mixed(mc.dM) if sigma is None else check_density(sigma)
    guard = _fix_trailing_input(sm, mc.dM, omega)  # M -> M
    nu = hermitian_part(schrodinger_apply(guard, sigma))
    return guard, nu


def block_reduce(mc: MemoryChannel, m: int, l: int, omega=None, sigma=None,
                 tol: float = DEFAULT_TOL, max_dim: int | None = None) -> BlockReduction:
    """Guarded block channel, its reset surrogate and the per-block error between them.

    The block acts on ``M (x) A^l -> B^l (x) M`` as ``S_l o (G (x) id)`` with
    ``G`` the guard section fed ``omega``; the surrogate replaces ``G`` by the
    constant map onto ``G(sigma)``. ``reduced`` is the memoryless payload
    channel ``A^l -> B^l`` of the surrogate.
    """
    if m < 1 or l < 1:
        raise ValueError("m and l must be at least 1")
    _check_ceiling([mc.dM * mc.dA ** (m + l), mc.dB ** l * mc.dM], max_dim)
    sl = concatenate(mc, l, max_dim=max_dim)
    guard, nu = _guard_channels(mc, m, omega, sigma, max_dim)
    id_pay = identity_channel(mc.dA ** l)
    block = compose(sl, tensor_channels(guard, id_pay))
    reset = replacement_channel(mc.dM, nu)
    surrogate = compose(sl, tensor_channels(reset, id_pay))
    reduced = trace_memory_output(prepend_memory_state(sl, nu, mc.dM), mc.dB ** l, mc.dM)
    if mc.dM == 1:
        res = DiamondResult(0.0, 0.0, 0.0, 0, True)
    else:
        res = diamond_norm(HermitianPreservingMap.difference(block, surrogate), tol=tol)
    dA, dB = mc.dA ** l, mc.dB ** l
    return BlockReduction(
        m, l, reduced, res.value,
        MemoryChannel(dA, dB, mc.dM, block),
        MemoryChannel(dA, dB, mc.dM, surrogate),
        (res.lower_witness, res.upper_certificate),
        nu,
    )


def full_block_error(mc: MemoryChannel, m: int, l: int, sigma=None, tol: float = DEFAULT_TOL,
                     max_dim: int | None = None) -> DiamondResult:
    """Per-block error with the guard inputs left free (``M (x) A^m (x) A^l`` input)."""
    sl = concatenate(mc, l, max_dim=max_dim)
    sm = restrict_ignore_outputs(mc, m, max_dim=max_dim)
    id_pay = identity_channel(mc.dA ** l)
    t = compose(sl, tensor_channels(sm, id_pay))
    sm_reset = compose(sm, memory_replacement(mc, mc.dA ** m, sigma))
    t_sur = compose(sl, tensor_channels(sm_reset, id_pay))
    return diamond_norm(HermitianPreservingMap.difference(t, t_sur), tol=tol)


def concat_error_bound(n: int, m: int, c: float) -> float:
    """``n * c**(-m)`` for a growth constant ``c > 1`` (the inverse of a fitted decay rate)."""
    if c <= 0:
        raise ValueError("c must be positive")
    return n * c ** (-m)


@dataclass(frozen=True)
class ConcatErrorCheck:
    empirical: float
    bound: float
    holds: bool
    per_block: float
    per_block_full: float | None
    bracket: tuple[float, float]


def concat_error_verify(mc: MemoryChannel, n: int, m: int, l: int = 1, omega=None, sigma=None,
                        tol: float = DEFAULT_TOL, with_full: bool = False,
                        max_dim: int | None = None) -> ConcatErrorCheck:
    """Diamond distance between ``n`` chained blocks and ``n`` chained surrogates.

    The bound checked is ``n * error_rate_per_block + tol``; with
    ``with_full`` the unguarded per-block error is reported as well.
    """
    br = block_reduce(mc, m, l, omega, sigma, tol, max_dim)
    _check_ceiling([mc.dM * mc.dA ** (n * l), mc.dB ** (n * l) * mc.dM], max_dim)
    real = concatenate(br.block, n, max_dim=max_dim)
    sur = concatenate(br.surrogate, n, max_dim=max_dim)
    res = diamond_norm(HermitianPreservingMap.difference(real, sur), tol=tol)
    bound = n * br.error_rate_per_block
    full = full_block_error(mc, m, l, sigma, tol, max_dim).value if with_full else None
    return ConcatErrorCheck(res.value, bound, res.value <= bound + tol, br.error_rate_per_block, full,
                            (res.lower_witness, res.upper_certificate))


@dataclass(frozen=True)
class RateSandwich:
    lower: float
    upper: float
    lower_ee: float
    upper_ee: float
    chi_ab: float
    chi_ee: float

    @property
    def flagged_negative(self) -> bool:
        return self.lower < 0


def rate_sandwich(mc: MemoryChannel, m: int, l: int, mu=None, restarts: int = 1, seed: int = 0,
                  iter_cap: int = 300, max_dim: int | None = None) -> RateSandwich:
    """Achievable-rate window for guarded block codes, in bits per use.

    ``lower = chi/(l+m) - (2m/(m+l)) ld dB`` and ``upper = chi/l`` with ``chi``
    the best Holevo quantity of ``S_l`` including memory legs; the same pair
    is reported with the memory legs removed on both ends (Eve-Eve style,
    memory started in ``mu``, maximally mixed by default).
    """
    if m < 0 or l < 1:
        raise ValueError("need m >= 0 and l >= 1")
    mu = maximally_mixed(mc.dM) if mu is None else mu
    chi_ab, _, _ = maximize_chi(effective_channel(mc, l, CapacitySetting.from_code("ab"), max_dim),
                                restarts=restarts, seed=seed, iter_cap=iter_cap)
    chi_ee, _, _ = maximize_chi(effective_channel(mc, l, CapacitySetting.from_code("ee", mu), max_dim),
                                restarts=restarts, seed=seed, iter_cap=iter_cap)
    pen = 2.0 * m / (m + l) * math.log2(mc.dB)
    return RateSandwich(chi_ab / (l + m) - pen, chi_ab / l, chi_ee / (l + m) - pen, chi_ee / l, chi_ab, chi_ee)


def privacy_deviation(ch: Channel, codewords) -> float:
    """``max_j || mean_k T^E(rho_jk) - Theta ||_1`` with ``Theta`` the mean over all codewords.

    ``codewords`` has shape ``(J, K, d, d)`` (density matrices) or
    ``(J, K, d)`` (pure state vectors).
    """
    cw = np.asarray(codewords, dtype=np.complex128)
    if cw.ndim == 3:
        cw = np.einsum("jka,jkb->jkab", cw, cw.conj())
    if cw.ndim != 4 or cw.shape[2] != ch.d_in:
        raise DimensionError("codewords must have shape (J, K, d_in, d_in)")
    env = complementary(ch)
    k = env.kraus
    outs = np.einsum("rab,jkbc,rdc->jkad", k, cw, k.conj(), optimize=True)
    group_means = outs.mean(axis=1)
    theta = group_means.mean(axis=0)
    return float(max(trace_norm(g - theta) for g in group_means))


def _inv_sqrt_psd(a, tol=1e-12):
    w, v = np.linalg.eigh(hermitian_part(a))
    inv = np.where(w > tol * max(1.0, w.max()), 1.0 / np.sqrt(np.clip(w, 1e-300, None)), 0.0)
    return (v * inv) @ v.conj().T


def _sample_codebook(rng, n_symbols: int, n: int, size: int) -> np.ndarray:
    """Codeword symbol sequences; distinct whenever enough sequences exist."""
    total = n_symbols ** n
    if size <= total and total <= 1 << 20:
        idx = rng.choice(total, size=size, replace=False)
        return np.array([np.unravel_index(i, (n_symbols,) * n) for i in idx]).reshape(size, n)
    return rng.integers(0, n_symbols, size=(size, n))


def random_code_sim(ch: Channel, n: int, rate: float, trials: int = 20, seed: int = 0,
                    ensemble: Ensemble | None = None, max_dim: int | None = None) -> float:
    """Mean success probability of random product codes under the square-root measurement.

    Codebooks of size ``floor(2**(n*rate))`` are drawn from ``ensemble``
    (default: the best chi ensemble found for ``ch``) and decoded with the
    pretty-good measurement ``E_c = S^-1/2 sigma_c S^-1/2``.
    """
    size = int(math.floor(2 ** (n * rate)))
    if size < 2:
        raise ValueError("codebook must contain at least two codewords")
    _check_ceiling([ch.d_in ** n, ch.d_out ** n], max_dim)
    if ensemble is None:
        _, ensemble, _ = maximize_chi(ch, restarts=0, seed=seed)
    outs = np.array([schrodinger_apply(ch, s) for s in ensemble.states])
    probs = np.asarray(ensemble.probs)
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(trials):
        words = _sample_codebook(rng, len(probs), n, size) if np.allclose(probs, probs[0]) else \
            rng.choice(len(probs), size=(size, n), p=probs)
        sig = []
        for w in words:
            s = outs[w[0]]
            for x in w[1:]:
                s = np.kron(s, outs[x])
            sig.append(s)
        sig = np.array(sig)
        root = _inv_sqrt_psd(sig.sum(axis=0))
        succ = 0.0
        for s in sig:
            e = root @ s @ root
            succ += np.real(np.sum(e.T * s))  # tr(E s)
        total += succ / size
    return float(total / trials)
