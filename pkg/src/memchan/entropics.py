"""Entropies, Holevo chi, coherent information and capacity-bound estimators.

All entropies are in bits. Eigenvalues below ``ENTROPY_FLOOR`` are treated
as zero. The maximizers are local searches: they report the best value
found, which is a lower estimate of the true maximum, together with a
monotone optimizer trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from memchan import _kernels
from memchan.channel import (
    Channel,
    MemoryChannel,
    check_density,
    complementary,
    compose,
    concatenate,
    heisenberg_apply,
    prepend_memory_state,
    schrodinger_apply,
    trace_memory_output,
)
from memchan.matkernel import DimensionError, hermitian_part, purify, trace_norm

ENTROPY_FLOOR = 1e-15
LOG2E = math.log2(math.e)


# ---------------------------------------------------------------------------
# basic quantities
# ---------------------------------------------------------------------------

def vn_entropy(rho) -> float:
    """von Neumann entropy in bits."""
    w = np.linalg.eigvalsh(hermitian_part(np.asarray(rho, dtype=np.complex128)))
    return _kernels.entropy_bits(w, ENTROPY_FLOOR)


def _batched_entropy(mats: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvalsh(mats)
    w = np.where(w > ENTROPY_FLOOR, w, 1.0)
    return -np.sum(w * np.log2(w), axis=-1)


def _logm2(mats: np.ndarray) -> np.ndarray:
    """Batched base-2 matrix logarithm with eigenvalues floored."""
    w, v = np.linalg.eigh(mats)
    lw = np.log2(np.clip(w, ENTROPY_FLOOR, None))
    return (v * lw[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


@dataclass(frozen=True)
class Ensemble:
    probs: np.ndarray
    states: np.ndarray  # (n, d, d)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).ravel()
        s = np.asarray(self.states, dtype=np.complex128)
        if s.ndim == 2:
            s = s[None]
        if s.ndim != 3 or s.shape[1] != s.shape[2] or len(p) != s.shape[0]:
            raise DimensionError("ensemble needs one square state per probability")
        if np.any(p < -1e-15) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("ensemble probabilities must be non-negative and sum to one")
        for st in s:
            check_density(st)
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "states", s)

    @classmethod
    def from_pure(cls, probs, vectors) -> "Ensemble":
        v = np.asarray(vectors, dtype=np.complex128)
        v = v / np.linalg.norm(v, axis=1, keepdims=True)
        return cls(np.asarray(probs, dtype=float), np.einsum("ni,nj->nij", v, v.conj()))

    @classmethod
    def basis(cls, d: int) -> "Ensemble":
        return cls.from_pure(np.full(d, 1.0 / d), np.eye(d))

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def average(self) -> np.ndarray:
        return np.einsum("n,nij->ij", self.probs, self.states)


def _channel_outputs(ch: Channel, states: np.ndarray) -> np.ndarray:
    k = ch.kraus
    return np.einsum("kab,nbc,kdc->nad", k, states, k.conj(), optimize=True)


def holevo_chi(ch: Channel, e: Ensemble) -> float:
    if e.dim != ch.d_in:
        raise DimensionError(f"ensemble dimension {e.dim} does not match channel input {ch.d_in}")
    outs = _channel_outputs(ch, e.states)
    avg = np.einsum("n,nij->ij", e.probs, outs)
    return float(vn_entropy(avg) - np.dot(e.probs, _batched_entropy(outs)))


def coherent_info(ch: Channel, rho) -> float:
    """``H(S(rho)) - H((S (x) id)(psi psi^*))`` with ``psi`` a purification of ``rho``."""
    rho = check_density(rho)
    if rho.shape[0] != ch.d_in:
        raise DimensionError("state dimension does not match channel input")
    d = ch.d_in
    psi = purify(rho).reshape(d, d)  # (in, ref)
    # (S (x) id)(psi psi^*) via the Kraus vectors K_k psi
    kv = np.einsum("kab,br->kar", ch.kraus, psi).reshape(ch.n_kraus, -1)
    joint = kv.T @ kv.conj()
    return float(vn_entropy(schrodinger_apply(ch, rho)) - vn_entropy(joint))


def coherent_info_complementary(ch: Channel, rho) -> float:
    """Same quantity evaluated as ``H(S(rho)) - H(S^c(rho))``."""
    rho = check_density(rho)
    return float(vn_entropy(schrodinger_apply(ch, rho)) - vn_entropy(schrodinger_apply(complementary(ch), rho)))


def private_chi_gap(ch: Channel, e: Ensemble) -> float:
    return holevo_chi(ch, e) - holevo_chi(complementary(ch), e)


# ---------------------------------------------------------------------------
# chi maximization
# ---------------------------------------------------------------------------

@dataclass
class OptimizerTrace:
    values: list[float] = field(default_factory=list)
    iterations: int = 0
    hit_cap: bool = False
    restarts: int = 0

    def record(self, value: float) -> None:
        best = self.values[-1] if self.values else -np.inf
        self.values.append(max(best, float(value)))


class _PureOutputs:
    """Channel outputs of pure inputs, kept in low-rank form when that is cheaper.

    For an input vector psi the output is ``sum_k K_k psi psi^dag K_k^dag``,
    whose nonzero spectrum is that of the Gram matrix of the vectors
    ``K_k psi``; with few Kraus operators this avoids full-size
    eigendecompositions.
    """

    def __init__(self, kraus, p, vecs):
        self.kraus, self.p, self.vecs = kraus, p, vecs
        r, d_out, _ = kraus.shape
        self.kv = np.einsum("kab,nb->nka", kraus, vecs)  # (n, r, d_out)
        self.low_rank = r < d_out
        if self.low_rank:
            gram = np.einsum("nka,nla->nkl", self.kv.conj(), self.kv)
            lam, c = np.linalg.eigh(gram)
            self.lam, self.c = lam, c
            self.avg = np.einsum("n,nka,nkb->ab", p, self.kv, self.kv.conj())
            lam = np.where(lam > ENTROPY_FLOOR, lam, 1.0)
            h_out = -np.sum(lam * np.log2(lam), axis=-1)
        else:
            self.outs = np.einsum("nka,nkc->nac", self.kv, self.kv.conj())
            self.avg = np.einsum("n,nij->ij", p, self.outs)
            h_out = _batched_entropy(self.outs)
        self.value = vn_entropy(self.avg) - float(np.dot(p, h_out))

    def divergences(self):
        """D(out_i || avg) in bits."""
        log_avg = _logm2(self.avg[None])[0]
        cross = -np.einsum("nka,ab,nkb->n", self.kv.conj(), log_avg, self.kv).real
        if self.low_rank:
            lam = np.where(self.lam > ENTROPY_FLOOR, self.lam, 1.0)
            h = -np.sum(lam * np.log2(lam), axis=-1)
        else:
            h = _batched_entropy(self.outs)
        return cross - h

    def gradient(self):
        """Riemannian gradient of chi with respect to each input vector."""
        log_avg = _logm2(self.avg[None])[0]
        kv = self.kv
        if self.low_rank:
            lam = np.clip(self.lam, ENTROPY_FLOOR, None)
            # eigenvectors u_j = sum_k c_kj K_k psi / sqrt(lam_j) of the output
            u = np.einsum("nka,nkj->naj", kv, self.c) / np.sqrt(lam)[:, None, :]
            lf = math.log2(ENTROPY_FLOOR)
            coef = np.einsum("naj,nka->njk", u.conj(), kv)
            lw = lf * kv + np.einsum("naj,nj,njk->nka", u, np.log2(lam) - lf, coef)
        else:
            lw = np.einsum("nab,nkb->nka", _logm2(self.outs), kv)
        lw = lw - np.einsum("ab,nkb->nka", log_avg, kv)
        g = np.einsum("kab,nka->nb", self.kraus.conj(), lw)
        g = g - np.einsum("na,na->n", self.vecs.conj(), g)[:, None] * self.vecs
        return self.p[:, None] * g


def _optimize_chi(ch: Channel, p, vecs, iter_cap: int, trace: OptimizerTrace, tol=1e-12):
    kraus = ch.kraus
    cur = _PureOutputs(kraus, p, vecs)
    step = 1.0
    for _ in range(iter_cap):
        trace.iterations += 1
        prev = cur.value
        # probability reweighting by relative-entropy radius
        dvals = cur.divergences()
        q = cur.p * np.exp2(dvals - dvals.max())
        cand = _PureOutputs(kraus, q / q.sum(), cur.vecs)
        if cand.value >= cur.value:
            cur = cand
        # gradient step on the pure states, with backtracking
        gv = cur.gradient()
        for _ in range(30):
            nv = cur.vecs + step * gv
            nv = nv / np.linalg.norm(nv, axis=1, keepdims=True)
            cand = _PureOutputs(kraus, cur.p, nv)
            if cand.value > cur.value:
                cur = cand
                step *= 1.5
                break
            step *= 0.5
        trace.record(cur.value)
        if cur.value - prev <= tol:
            break
    else:
        trace.hit_cap = True
    return cur.value, cur.p, cur.vecs


def maximize_chi(ch: Channel, n_states: int | None = None, restarts: int = 1, seed: int = 0,
                 iter_cap: int = 300):
    """Best Holevo chi found, its ensemble and the optimizer trace.

    The first run starts from the uniform ensemble over the computational
    basis; each further restart draws ``n_states`` random pure states with
    random weights. Returns ``(value, Ensemble, OptimizerTrace)``.
    """
    d = ch.d_in
    n_states = d * d if n_states is None else int(n_states)
    if n_states < 2:
        raise ValueError("n_states must be at least 2")
    rng = np.random.default_rng(seed)
    trace = OptimizerTrace()
    best = (-np.inf, None, None)
    for r in range(restarts + 1):
        if r == 0:
            vecs = np.eye(d, dtype=np.complex128)
            p = np.full(d, 1.0 / d)
        else:
            vecs = rng.standard_normal((n_states, d)) + 1j * rng.standard_normal((n_states, d))
            vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
            p = rng.dirichlet(np.ones(n_states))
        val, p, vecs = _optimize_chi(ch, p, vecs, iter_cap, trace)
        trace.restarts += 1
        if val > best[0]:
            best = (val, p, vecs)
    val, p, vecs = best
    keep = p > 1e-14
    p = p[keep] / p[keep].sum()
    return float(max(val, 0.0)), Ensemble.from_pure(p, vecs[keep]), trace


# ---------------------------------------------------------------------------
# coherent information maximization
# ---------------------------------------------------------------------------

def _coherent_parts(ch: Channel, comp: Channel, a):
    t = np.trace(a @ a.conj().T).real
    rho = a @ a.conj().T / t
    out = schrodinger_apply(ch, rho)
    env = schrodinger_apply(comp, rho)
    val = vn_entropy(out) - vn_entropy(env)
    return val, rho, out, env, t


def coherent_value(ch: Channel, a, comp: Channel | None = None) -> float:
    """I_c at ``rho = A A^dag / tr(A A^dag)``."""
    comp = complementary(ch) if comp is None else comp
    return _coherent_parts(ch, comp, np.asarray(a, dtype=np.complex128))[0]


def coherent_gradient(ch: Channel, a, comp: Channel | None = None) -> np.ndarray:
    """Gradient of I_c with respect to ``A``, so that ``dI = Re tr(grad^dag dA)``."""
    comp = complementary(ch) if comp is None else comp
    a = np.asarray(a, dtype=np.complex128)
    _, rho, out, env, t = _coherent_parts(ch, comp, a)
    g = -heisenberg_apply(ch, _logm2(out[None])[0]) + heisenberg_apply(comp, _logm2(env[None])[0])
    g = hermitian_part(g)
    g = g - np.trace(g @ rho).real * np.eye(a.shape[0])
    return 2.0 * g @ a / t


def finite_difference_check(ch: Channel, a, direction, h: float = 1e-6,
                            comp: Channel | None = None) -> tuple[float, float, float]:
    """Compare the analytic directional derivative with a central difference.

    Returns ``(analytic, numeric, relative_error)``.
    """
    comp = complementary(ch) if comp is None else comp
    a = np.asarray(a, dtype=np.complex128)
    e = np.asarray(direction, dtype=np.complex128)
    analytic = float(np.real(np.vdot(coherent_gradient(ch, a, comp), e)))
    fp = coherent_value(ch, a + h * e, comp)
    fm = coherent_value(ch, a - h * e, comp)
    numeric = (fp - fm) / (2 * h)
    rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)
    return analytic, numeric, rel


def maximize_coherent(ch: Channel, restarts: int = 4, seed: int = 0, iter_cap: int = 500,
                      tol: float = 1e-12):
    """Best coherent information found by gradient ascent on ``rho = A A^dag / tr``.

    The first run starts at the maximally mixed input. Returns
    ``(value, rho, OptimizerTrace)``.
    """
    comp = complementary(ch)
    d = ch.d_in
    rng = np.random.default_rng(seed)
    trace = OptimizerTrace()
    best_val, best_rho = -np.inf, None
    for r in range(restarts + 1):
        if r == 0:
            a = np.eye(d, dtype=np.complex128)
        else:
            a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        a = a / np.linalg.norm(a)
        val, rho, *_ = _coherent_parts(ch, comp, a)
        step = 1.0
        for _ in range(iter_cap):
            trace.iterations += 1
            g = coherent_gradient(ch, a, comp)
            moved = False
            for _ in range(40):
                cand = a + step * g
                cand = cand / np.linalg.norm(cand)
                v2, r2, *_ = _coherent_parts(ch, comp, cand)
                if v2 > val:
                    gain = v2 - val
                    a, val, rho = cand, v2, r2
                    step *= 1.5
                    moved = True
                    break
                step *= 0.5
            trace.record(max(val, best_val))
            if not moved or gain <= tol:
                break
        else:
            trace.hit_cap = True
        trace.restarts += 1
        if val > best_val:
            best_val, best_rho = val, rho
    return float(best_val), hermitian_part(best_rho), trace


# ---------------------------------------------------------------------------
# capacity settings
# ---------------------------------------------------------------------------

ALICE, EVE, BOB = "Alice", "Eve", "Bob"
CLASSICAL_CHI = "classical_chi"
QUANTUM_COHERENT = "quantum_coherent"
PRIVATE_GAP = "private_gap"
KINDS = (CLASSICAL_CHI, QUANTUM_COHERENT, PRIVATE_GAP)


@dataclass(frozen=True)
class CapacitySetting:
    who_initializes: str
    who_reads_final: str
    mu: np.ndarray | None = None

    def __post_init__(self):
        if self.who_initializes not in (ALICE, EVE):
            raise ValueError("who_initializes must be 'Alice' or 'Eve'")
        if self.who_reads_final not in (BOB, EVE):
            raise ValueError("who_reads_final must be 'Bob' or 'Eve'")
        if (self.who_initializes == EVE) != (self.mu is not None):
            raise ValueError("mu is required exactly when Eve initializes the memory")
        if self.mu is not None:
            object.__setattr__(self, "mu", check_density(self.mu))

    @classmethod
    def from_code(cls, code: str, mu=None) -> "CapacitySetting":
        code = code.lower()
        table = {"ab": (ALICE, BOB), "ae": (ALICE, EVE), "eb": (EVE, BOB), "ee": (EVE, EVE)}
        if code not in table:
            raise ValueError(f"setting must be one of {sorted(table)}")
        init, final = table[code]
        return cls(init, final, mu if init == EVE else None)

    @property
    def code(self) -> str:
        return self.who_initializes[0].lower() + self.who_reads_final[0].lower()


def effective_channel(mc: MemoryChannel, n: int, setting: CapacitySetting,
                      max_dim: int | None = None) -> Channel:
    """The channel whose capacity quantity bounds the given setting at block length n."""
    ch = concatenate(mc, n, max_dim=max_dim)
    if setting.who_reads_final == EVE:
        ch = trace_memory_output(ch, mc.dB ** n, mc.dM)
    if setting.who_initializes == EVE:
        if setting.mu.shape[0] != mc.dM:
            raise DimensionError(f"mu has dim {setting.mu.shape[0]}, memory has {mc.dM}")
        ch = prepend_memory_state(ch, setting.mu, mc.dM)
    return ch


@dataclass(frozen=True)
class BoundReport:
    setting: CapacitySetting
    n: int
    kind: str
    value_bits_per_use: float
    optimizer_trace: OptimizerTrace
    total_bits: float = 0.0
    label: str = "best found"


def capacity_bound(mc: MemoryChannel, n: int, setting: CapacitySetting, kind: str = CLASSICAL_CHI,
                   restarts: int = 1, seed: int = 0, iter_cap: int = 300,
                   max_dim: int | None = None) -> BoundReport:
    if n < 1:
        raise ValueError("n must be positive")
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    ch = effective_channel(mc, n, setting, max_dim=max_dim)
    if kind == CLASSICAL_CHI:
        val, _, tr = maximize_chi(ch, restarts=restarts, seed=seed, iter_cap=iter_cap)
    elif kind == QUANTUM_COHERENT:
        val, _, tr = maximize_coherent(ch, restarts=restarts, seed=seed, iter_cap=iter_cap)
    else:
        # the gap on a pure-state decomposition equals I_c, so take the better of both searches
        _, ens, tr = maximize_chi(ch, restarts=restarts, seed=seed, iter_cap=iter_cap)
        val_c, _, tr_c = maximize_coherent(ch, restarts=restarts, seed=seed, iter_cap=iter_cap)
        val = max(private_chi_gap(ch, ens), val_c)
        tr.values.extend(tr_c.values)
        tr.iterations += tr_c.iterations
    return BoundReport(setting, n, kind, float(val) / n, tr, float(val))


def capacity_series(mc: MemoryChannel, ns: Sequence[int], setting: CapacitySetting,
                    kind: str = CLASSICAL_CHI, **kw) -> list[BoundReport]:
    """Per-n bounds; the limit over n is never extrapolated."""
    return [capacity_bound(mc, n, setting, kind, **kw) for n in ns]


def ordering_flags(values: dict[str, float], tol: float = 1e-9) -> list[str]:
    """Inversions of the expected order ee <= {ae, eb} <= ab among per-n estimates."""
    flags = []
    pairs = [("ee", "ae"), ("ee", "eb"), ("ae", "ab"), ("eb", "ab"), ("ee", "ab")]
    for lo, hi in pairs:
        if lo in values and hi in values and values[lo] > values[hi] + tol:
            flags.append(f"{lo} > {hi}")
    return flags


# ---------------------------------------------------------------------------
# inequality checks
# ---------------------------------------------------------------------------

def check_fannes(rho, sigma) -> tuple[float, float, bool]:
    rho = check_density(rho)
    sigma = check_density(sigma)
    d = rho.shape[0]
    lhs = abs(vn_entropy(rho) - vn_entropy(sigma))
    rhs = trace_norm(rho - sigma) * math.log2(d) + LOG2E / math.e
    return lhs, rhs, lhs <= rhs


def check_dpi(r: Channel, s: Channel, rho, tol: float = 1e-9) -> tuple[float, float, bool]:
    """Coherent information before and after post-processing ``s`` by ``r``."""
    pre = coherent_info(s, rho)
    post = coherent_info(compose(r, s), rho)
    return pre, post, post <= pre + tol


def sandwich_check(mc: MemoryChannel, n: int, e: Ensemble, tol: float = 1e-9,
                   max_dim: int | None = None) -> tuple[float, float, float, bool]:
    """chi(tr_M o S_n) <= chi(S_n) <= chi(tr_M o S_n) + 2 ld dM on one ensemble."""
    sn = concatenate(mc, n, max_dim=max_dim)
    traced = trace_memory_output(sn, mc.dB ** n, mc.dM)
    lower = holevo_chi(traced, e)
    mid = holevo_chi(sn, e)
    upper = lower + 2 * math.log2(mc.dM)
    return lower, mid, upper, (lower <= mid + tol) and (mid <= upper + tol)
