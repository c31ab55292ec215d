"""Causality checks for channels on a finite window of sites.

A channel on ``n`` sites is causal when observables on the first ``z``
output sites pull back to observables on the first ``z`` input sites:

    T(b (x) 1) = T_z(b) (x) 1    for every b supported on sites <= z.

The reduced action ``T_z`` is recovered by averaging the trailing input
factors against the maximally mixed state; anything of the form
``X (x) 1`` survives that projection unchanged, so the deviation from it
measures the violation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from memchan.channel import (
    Channel,
    MemoryChannel,
    channel_distance_choi,
    choi_of_map,
    fix_memory_input,
    heisenberg_apply,
    identity_channel,
    kraus_from_choi,
    unitary_channel,
)
from memchan.matkernel import (
    DimensionError,
    hermitian_unit_basis,
    maximally_mixed,
    operator_norm,
    partial_trace,
    random_hermitian,
    tensor,
)

BASIS_LIMIT = 4096
BASIS = "basis"
RANDOM = "random"


@dataclass(frozen=True)
class WindowChannel:
    """Channel on ``n_sites`` sites, ``A^n -> B^n`` in the Schrodinger picture.

    Observables on ``B^n`` are pulled back with :func:`heisenberg_apply`.
    """

    n_sites: int
    dB: int
    dA: int
    channel: Channel

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError("n_sites must be positive")
        if self.channel.d_in != self.dA ** self.n_sites or self.channel.d_out != self.dB ** self.n_sites:
            raise DimensionError(
                f"channel {self.channel.d_in}->{self.channel.d_out} does not act on "
                f"{self.n_sites} sites of dims dA={self.dA}, dB={self.dB}"
            )


@dataclass(frozen=True)
class CutReport:
    z: int
    deviation: float
    mode: str
    samples: int


def _cut_samples(d: int, z: int, samples: int, rng):
    """Operators on the first ``z`` sites, each of operator norm one."""
    if d ** (2 * z) <= BASIS_LIMIT:
        unit = hermitian_unit_basis(d)
        ops = (tensor(*f) for f in itertools.product(unit, repeat=z))
        return BASIS, ops
    ops = []
    for _ in range(samples):
        h = random_hermitian(d ** z, rng)
        ops.append(h / operator_norm(h))
    return RANDOM, ops


def cut_report(wc: WindowChannel, z: int, samples: int = 64, seed: int = 0) -> CutReport:
    """Worst deviation ``||T(b (x) 1) - T_z(b) (x) 1||`` over sampled ``b`` at cut ``z``."""
    if not 1 <= z < wc.n_sites:
        raise ValueError(f"cut index must satisfy 1 <= z < {wc.n_sites}, got {z}")
    rng = np.random.default_rng(seed)
    mode, ops = _cut_samples(wc.dB, z, samples, rng)
    d_tail_out = wc.dB ** (wc.n_sites - z)
    d_head_in, d_tail_in = wc.dA ** z, wc.dA ** (wc.n_sites - z)
    tail_eye_out = np.eye(d_tail_out)
    tail_eye_in = np.eye(d_tail_in)
    worst, count = 0.0, 0
    for b in ops:
        x = heisenberg_apply(wc.channel, np.kron(b, tail_eye_out))
        reduced = partial_trace(x, [d_head_in, d_tail_in], [0]) / d_tail_in
        worst = max(worst, operator_norm(x - np.kron(reduced, tail_eye_in)))
        count += 1
    return CutReport(z, worst, mode, count)


def causal_cut_check(wc: WindowChannel, z: int, samples: int = 64, seed: int = 0) -> float:
    """Maximum causality deviation at cut ``z``; zero up to rounding for causal channels.

    On windows where ``dB**(2z) <= 4096`` the samples are a complete
    Hermitian product basis, so a zero result is exact by linearity.
    """
    return cut_report(wc, z, samples, seed).deviation


def all_cuts(wc: WindowChannel, samples: int = 64, seed: int = 0) -> list[CutReport]:
    return [cut_report(wc, z, samples, seed) for z in range(1, wc.n_sites)]


def from_memory_channel(mc: MemoryChannel, n: int, mu=None, max_dim: int | None = None) -> WindowChannel:
    """Window channel ``rho -> tr_M S_n(mu (x) rho)`` on ``n`` sites."""
    mu = maximally_mixed(mc.dM) if mu is None else mu
    ch = fix_memory_input(mc, mu, n, max_dim=max_dim, prune=True)
    return WindowChannel(n, mc.dB, mc.dA, ch)


def site_permutation_window(perm, d: int) -> WindowChannel:
    """Unitary window channel sending input site ``perm[k]`` to output site ``k``."""
    return WindowChannel(len(perm), d, d, unitary_channel(_permutation_unitary(perm, d)))


def _permutation_unitary(perm, d: int) -> np.ndarray:
    n = len(perm)
    u = np.zeros((d ** n, d ** n), dtype=np.complex128)
    for idx in itertools.product(range(d), repeat=n):
        src = np.ravel_multi_index(idx, [d] * n)
        dst = np.ravel_multi_index(tuple(idx[p] for p in perm), [d] * n)
        u[dst, src] = 1.0
    return u


def site_marginal(wc: WindowChannel, k: int) -> Channel:
    """Map from input site ``k`` to output site ``k`` (1-based), other inputs maximally mixed."""
    if not 1 <= k <= wc.n_sites:
        raise ValueError(f"site index must lie in 1..{wc.n_sites}")
    n, dA, dB = wc.n_sites, wc.dA, wc.dB
    before, after = dA ** (k - 1), dA ** (n - k)
    ops = []
    for e in hermitian_unit_basis(dA):
        rho = tensor(maximally_mixed(before), e, maximally_mixed(after))
        out = wc.channel(rho)
        ops.append(partial_trace(out, [dB ** (k - 1), dB, dB ** (n - k)], [1]))
    return _channel_from_images(dA, dB, ops)


def _channel_from_images(d_in: int, d_out: int, images) -> Channel:
    """Rebuild a channel from its values on :func:`hermitian_unit_basis`."""
    basis = hermitian_unit_basis(d_in)
    mat = np.array([b.ravel() for b in basis]).T  # columns are vectorized basis elements
    imgs = np.array([y.ravel() for y in images]).T

    def apply(rho):
        coeff = np.linalg.solve(mat, np.asarray(rho, dtype=np.complex128).ravel())
        return (imgs @ coeff).reshape(d_out, d_out)

    return kraus_from_choi(choi_of_map(apply, d_in, d_out), d_in, d_out)


def translation_gap(mc: MemoryChannel, n: int, k: int, mu=None) -> float:
    """Choi distance between the site ``k`` and site ``k + 1`` marginals of a memory-channel window."""
    wc = from_memory_channel(mc, n, mu)
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < {n}")
    return channel_distance_choi(site_marginal(wc, k), site_marginal(wc, k + 1))


def identity_window(n: int, d: int) -> WindowChannel:
    return WindowChannel(n, d, d, identity_channel(d ** n))
