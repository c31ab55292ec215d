"""How quickly a memory channel forgets its initial memory state.

The basic quantity is

    dn_estimate(mc, n) = || S^_n - S^_n o (P (x) id^n) ||_diamond

where ``S^_n : M (x) A^n -> M`` is the concatenation with every register
output discarded and ``P`` replaces the memory by a fixed state (maximally
mixed unless ``sigma`` is given). This is within a factor two of the best
possible memoryless approximation, so a value below one at some ``n``
certifies that the channel is forgetful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from memchan.channel import (
    Channel,
    MemoryChannel,
    choi,
    compose,
    depolarize_mix,
    heisenberg_apply,
    memory_replacement,
    restrict_ignore_outputs,
    schrodinger_apply,
)
from memchan.matkernel import (
    hermitian_part,
    partial_trace,
    random_density,
    random_pure,
    random_unitary,
    trace_norm,
)
from memchan.metrics import DEFAULT_TOL, DiamondResult, HermitianPreservingMap, diamond_norm

LEMMA_BOUND = "lemma_bound"
LEAST_SQUARES = "least_squares"
ZERO_LEVEL = 1e-12


class NoContractionError(ValueError):
    """No point of the series lies below one."""


@dataclass(frozen=True)
class DecaySeries:
    points: tuple[tuple[int, float], ...]
    fitted_c: float | None = None
    method: str = LEAST_SQUARES
    brackets: tuple[tuple[float, float], ...] = field(default=(), compare=False)

    def __post_init__(self):
        pts = tuple(sorted((int(n), float(d)) for n, d in self.points))
        if any(d < 0 for _, d in pts):
            raise ValueError("series values must be non-negative")
        if self.method not in (LEMMA_BOUND, LEAST_SQUARES):
            raise ValueError(f"unknown fit method {self.method!r}")
        object.__setattr__(self, "points", pts)

    @property
    def ns(self) -> list[int]:
        return [n for n, _ in self.points]

    @property
    def values(self) -> list[float]:
        return [d for _, d in self.points]


@dataclass(frozen=True)
class ForgetfulVerdict:
    forgetful_at: int | None
    series: DecaySeries

    @property
    def inconclusive(self) -> bool:
        return self.forgetful_at is None


def memory_difference_map(mc: MemoryChannel, n: int, sigma=None,
                          max_dim: int | None = None) -> HermitianPreservingMap:
    """``S^_n - S^_n o (P (x) id^n)`` as a Hermitian-preserving map ``M (x) A^n -> M``."""
    sn = restrict_ignore_outputs(mc, n, max_dim=max_dim)
    replaced = compose(sn, memory_replacement(mc, mc.dA ** n, sigma))
    return HermitianPreservingMap(sn.d_in, sn.d_out, choi(sn) - choi(replaced))


def dn_result(mc: MemoryChannel, n: int, sigma=None, tol: float = DEFAULT_TOL,
              max_dim: int | None = None) -> DiamondResult:
    """Full solver result behind :func:`dn_estimate`."""
    if mc.dM == 1:
        return DiamondResult(0.0, 0.0, 0.0, 0, True)
    return diamond_norm(memory_difference_map(mc, n, sigma, max_dim), tol=tol)


def dn_estimate(mc: MemoryChannel, n: int, sigma=None, tol: float = DEFAULT_TOL,
                max_dim: int | None = None) -> float:
    return dn_result(mc, n, sigma, tol, max_dim).value


def dn_series(mc: MemoryChannel, ns: Sequence[int], sigma=None, tol: float = DEFAULT_TOL,
              max_dim: int | None = None) -> DecaySeries:
    res = [dn_result(mc, n, sigma, tol, max_dim) for n in ns]
    return DecaySeries(
        points=tuple((n, r.value) for n, r in zip(ns, res)),
        brackets=tuple((r.lower_witness, r.upper_certificate) for r in res),
    )


def is_forgetful(mc: MemoryChannel, n_max: int, sigma=None, tol: float = DEFAULT_TOL,
                 max_dim: int | None = None) -> ForgetfulVerdict:
    """Smallest ``N <= n_max`` whose certified upper bound on ``d_N`` is below one.

    The returned series always covers ``1..N`` (or ``1..n_max`` when
    inconclusive), so slow decay can be told apart from a flat series.
    """
    if n_max < 1:
        raise ValueError("n_max must be positive")
    pts, brackets = [], []
    found = None
    for n in range(1, n_max + 1):
        r = dn_result(mc, n, sigma, tol, max_dim)
        pts.append((n, r.value))
        brackets.append((r.lower_witness, r.upper_certificate))
        if r.upper_certificate < 1.0:
            found = n
            break
    return ForgetfulVerdict(found, DecaySeries(tuple(pts), brackets=tuple(brackets)))


def decay_fit(series: DecaySeries, method: str | None = None) -> float:
    """Contraction constant ``c`` from a decay series.

    ``lemma_bound`` returns ``min_N d_N ** (1 / (2N))`` over points below one.
    ``least_squares`` fits ``log d_n = a + n log c`` on those points (through
    the origin when only one point is available). Points after the first one
    at rounding level are ignored.
    """
    method = series.method if method is None else method
    below = [(n, d) for n, d in series.points if d < 1.0]
    if not below:
        raise NoContractionError("no contraction observed")
    if method == LEMMA_BOUND:
        return min(d ** (1.0 / (2 * n)) if d > 0 else 0.0 for n, d in below)
    if method != LEAST_SQUARES:
        raise ValueError(f"unknown fit method {method!r}")
    # values at rounding level carry no slope information: keep only the first
    for i, (_, d) in enumerate(below):
        if d <= ZERO_LEVEL:
            below = below[: i + 1]
            break
    floor = 1e-300
    ns = np.array([n for n, _ in below], dtype=float)
    ys = np.log(np.array([max(d, floor) for _, d in below]))
    if len(below) == 1:
        slope = ys[0] / ns[0]
    else:
        slope = np.polyfit(ns, ys, 1)[0]
    return float(min(1.0, math.exp(slope)))


def with_fit(series: DecaySeries, method: str = LEAST_SQUARES) -> DecaySeries:
    return DecaySeries(series.points, decay_fit(series, method), method, series.brackets)


def make_forgetful(mc: MemoryChannel, eps: float, delta=None) -> MemoryChannel:
    """Mix ``mc`` with the constant channel onto ``delta`` (maximally mixed by default)."""
    return depolarize_mix(mc, eps, delta)


def memory_channel_distance(a: MemoryChannel, b: MemoryChannel, tol: float = DEFAULT_TOL) -> DiamondResult:
    """Diamond distance between the base channels of two memory channels."""
    return diamond_norm(HermitianPreservingMap.difference(a.base, b.base), tol=tol)


@dataclass(frozen=True)
class OpennessRadius:
    n: int
    radius: float
    dn: float


def openness_radius(mc: MemoryChannel, n_max: int = 4, sigma=None, tol: float = DEFAULT_TOL,
                    max_dim: int | None = None) -> OpennessRadius | None:
    """First ``N <= n_max`` with ``d_N < 1/2`` and the radius ``1/(2N)``, or None.

    Any memory channel within that diamond distance of ``mc`` has its own
    ``d_N`` below one and is therefore forgetful.
    """
    for n in range(1, n_max + 1):
        r = dn_result(mc, n, sigma, tol, max_dim)
        if r.upper_certificate < 0.5:
            return OpennessRadius(n, 1.0 / (2 * n), r.value)
    return None


# ---------------------------------------------------------------------------
# Schrodinger-picture memory distance
# ---------------------------------------------------------------------------

def _sign_operator(x):
    w, v = np.linalg.eigh(hermitian_part(x))
    return (v * np.where(w >= 0, 1.0, -1.0)) @ v.conj().T


def _optimize_product_pair(sn: Channel, dM: int, d_rest: int, rho0, rng, iters=50):
    """Alternating ascent on ||S^_n((mu1 - mu2) (x) rho)||_1 over pure mu1, mu2, rho."""
    rho = rho0
    u = random_unitary(dM, rng)
    mu1 = np.outer(u[:, 0], u[:, 0].conj())
    mu2 = np.outer(u[:, 1], u[:, 1].conj())
    best = 0.0
    for _ in range(iters):
        out = schrodinger_apply(sn, np.kron(mu1 - mu2, rho))
        val = trace_norm(out)
        if val <= best * (1 + 1e-12) and best > 0:
            break
        best = max(best, val)
        h = heisenberg_apply(sn, _sign_operator(out))  # on M (x) A^n
        # optimal memory pair for fixed rho
        hm = partial_trace(h @ np.kron(np.eye(dM), rho), [dM, d_rest], [0])
        w, v = np.linalg.eigh(hermitian_part(hm))
        mu1 = np.outer(v[:, -1], v[:, -1].conj())
        mu2 = np.outer(v[:, 0], v[:, 0].conj())
        # optimal register state for fixed memory pair
        hr = partial_trace(np.kron(mu1 - mu2, np.eye(d_rest)) @ h, [dM, d_rest], [1])
        w, v = np.linalg.eigh(hermitian_part(hr))
        rho = np.outer(v[:, -1], v[:, -1].conj())
    return best


def schrodinger_memory_distance(mc: MemoryChannel, n: int, samples: int = 16, seed: int = 0,
                                max_dim: int | None = None) -> float:
    """Estimate of ``sup ||tr_B S_n(rho1 - rho2)||_1`` over pairs with equal register marginals.

    Uses optimized product pairs ``mu1 (x) rho`` against ``mu2 (x) rho`` and
    random correlated pairs related by a unitary on the memory factor. The
    result is a lower estimate of the supremum, which itself never exceeds
    twice :func:`dn_estimate`.
    """
    if mc.dM == 1:
        return 0.0
    sn = restrict_ignore_outputs(mc, n, max_dim=max_dim)
    dM, d_rest = mc.dM, mc.dA ** n
    rng = np.random.default_rng(seed)
    best = 0.0
    starts = [np.eye(d_rest, dtype=np.complex128) / d_rest]
    for _ in range(samples):
        v = random_pure(d_rest, rng)
        starts.append(np.outer(v, v.conj()))
    for rho in starts:
        best = max(best, _optimize_product_pair(sn, dM, d_rest, rho, rng))
    for _ in range(samples):
        r1 = random_density(dM * d_rest, rng, rank=1)
        u = np.kron(random_unitary(dM, rng), np.eye(d_rest))
        r2 = u @ r1 @ u.conj().T
        best = max(best, trace_norm(schrodinger_apply(sn, r1 - r2)))
    return float(best)
