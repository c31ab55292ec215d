"""Diamond norm of Hermitian-preserving maps and cheaper bounds around it.

The diamond norm of a map with Hermitian Choi matrix ``J`` (input factor
first) is the value of

    maximize    <J, W>
    subject to  -rho (x) 1 <= W <= rho (x) 1,   rho >= 0,  tr rho = 1

whose dual is

    minimize    lambda_max( tr_out (P + N) )
    subject to  P - N = J,   P, N >= 0.

``diamond_norm`` runs a Douglas-Rachford splitting on the primal written as
a pair of PSD blocks ``X1 = rho(x)1 - W``, ``X2 = rho(x)1 + W``. Every few
iterations it extracts

* a certified lower bound ``|| (sqrt(rho) (x) 1) J (sqrt(rho) (x) 1) ||_1``
  for the current density ``rho`` (any density gives a valid lower bound),
* a certified upper bound from the splitting's dual estimate ``N``, repaired
  into an exactly feasible pair ``(P, N)``.

It stops once the bracket is narrower than ``tol``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from memchan import _kernels
from memchan.channel import Channel, apply_choi, choi, choi_of_map
from memchan.matkernel import (
    DimensionError,
    hermitian_part,
    is_hermitian,
    permute_factors,
    random_unitary,
    sqrtm_psd,
    svd,
    trace_norm,
)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 50_000


class NonConvergenceWarning(RuntimeWarning):
    """The diamond-norm bracket did not close within the iteration budget."""


class SolverNonConvergence(RuntimeError):
    """Raised (only on request) when the bracket did not close in time."""

    def __init__(self, message: str, result: "DiamondResult"):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class HermitianPreservingMap:
    """Linear map ``B(C^d_in) -> B(C^d_out)`` given by a Hermitian Choi matrix."""

    d_in: int
    d_out: int
    choi: np.ndarray

    def __post_init__(self):
        j = np.asarray(self.choi, dtype=np.complex128)
        n = self.d_in * self.d_out
        if j.shape != (n, n):
            raise DimensionError(f"choi shape {j.shape} does not match {self.d_in}x{self.d_out}")
        if not is_hermitian(j, 1e-8 * max(1.0, float(np.abs(j).max(initial=0.0)))):
            raise ValueError("choi matrix is not Hermitian; map is not Hermitian preserving")
        j = hermitian_part(j)
        j.setflags(write=False)
        object.__setattr__(self, "choi", j)

    @classmethod
    def from_channel(cls, ch: Channel) -> "HermitianPreservingMap":
        return cls(ch.d_in, ch.d_out, choi(ch))

    @classmethod
    def difference(cls, a: Channel, b: Channel) -> "HermitianPreservingMap":
        if (a.d_in, a.d_out) != (b.d_in, b.d_out):
            raise DimensionError("channels have different shapes")
        return cls(a.d_in, a.d_out, choi(a) - choi(b))

    @classmethod
    def from_callable(cls, apply, d_in: int, d_out: int) -> "HermitianPreservingMap":
        return cls(d_in, d_out, choi_of_map(apply, d_in, d_out))

    def __call__(self, x) -> np.ndarray:
        return apply_choi(np.asarray(self.choi), np.asarray(x, dtype=np.complex128), self.d_in, self.d_out)

    def adjoint(self, y) -> np.ndarray:
        """Heisenberg-picture action: the Hilbert-Schmidt adjoint."""
        t = np.asarray(self.choi).reshape(self.d_in, self.d_out, self.d_in, self.d_out)
        # tr(Y^dag M(X)) = tr(M^dag(Y)^dag X)
        return np.einsum("aobp,op->ab", t.conj(), np.asarray(y, dtype=np.complex128))

    def __sub__(self, other: "HermitianPreservingMap") -> "HermitianPreservingMap":
        return HermitianPreservingMap(self.d_in, self.d_out, self.choi - other.choi)

    def __add__(self, other: "HermitianPreservingMap") -> "HermitianPreservingMap":
        return HermitianPreservingMap(self.d_in, self.d_out, self.choi + other.choi)

    def scale(self, s: float) -> "HermitianPreservingMap":
        return HermitianPreservingMap(self.d_in, self.d_out, float(s) * self.choi)


def tensor_maps(a: HermitianPreservingMap, b: HermitianPreservingMap) -> HermitianPreservingMap:
    """The map ``a (x) b`` acting on ``in_a (x) in_b``."""
    j = np.kron(a.choi, b.choi)  # factors (in_a, out_a, in_b, out_b)
    j = permute_factors(j, [a.d_in, a.d_out, b.d_in, b.d_out], [0, 2, 1, 3])
    return HermitianPreservingMap(a.d_in * b.d_in, a.d_out * b.d_out, j)


@dataclass(frozen=True)
class DiamondResult:
    value: float
    upper_certificate: float
    lower_witness: float
    iterations: int
    converged: bool = True

    @property
    def gap(self) -> float:
        return self.upper_certificate - self.lower_witness


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

def _ptr_out(x, d_in, d_out):
    return _kernels.ptrace_keep(x, d_in, d_out, True)


def _neg_part(a):
    w, v = np.linalg.eigh(a)
    return (v * np.clip(-w, 0.0, None)) @ v.conj().T


def lower_from_density(j: np.ndarray, rho: np.ndarray, d_out: int) -> float:
    """``|| (sqrt(rho) (x) 1) J (sqrt(rho) (x) 1) ||_1``, a valid lower bound for any density."""
    k = np.kron(sqrtm_psd(rho), np.eye(d_out))
    a = hermitian_part(k @ j @ k)
    return float(np.abs(np.linalg.eigvalsh(a)).sum())


def upper_from_dual(j: np.ndarray, n_guess: np.ndarray, d_in: int, d_out: int) -> float:
    """Repair an approximate dual ``N`` into a feasible pair and return its objective.

    ``N`` is projected onto the PSD cone, then the negative part of ``J + N``
    is added to it, so that ``P = J + N`` and ``N`` are both PSD and
    ``P - N = J`` holds exactly.
    """
    n = _kernels.psd_project(hermitian_part(n_guess))
    n = n + _neg_part(hermitian_part(j + n))
    z = _ptr_out(j + 2.0 * n, d_in, d_out)
    return float(np.linalg.eigvalsh(hermitian_part(z))[-1])


def _density_from_blocks(y1, y2, d_in, d_out):
    rho = _ptr_out(y1 + y2, d_in, d_out) / (2.0 * d_out)
    rho = _kernels.psd_project(hermitian_part(rho))
    tr = np.trace(rho).real
    if tr <= 0:
        return np.eye(d_in, dtype=np.complex128) / d_in
    return rho / tr


# ---------------------------------------------------------------------------
# splitting solver
# ---------------------------------------------------------------------------

def _douglas_rachford(j, d_in, d_out, tol, max_iter, step=1.0, relax=1.6, check_every=25):
    eye_out = np.eye(d_out)
    z1 = np.kron(np.eye(d_in) / d_in, eye_out).astype(np.complex128)
    z2 = z1.copy()
    lo, hi = 0.0, np.inf
    half = 0.5 * step * j
    it = 0
    for it in range(1, max_iter + 1):
        a1 = z1 - half
        a2 = z2 + half
        diff = a1 - a2
        q = _ptr_out(a1 + a2, d_in, d_out) / d_out
        q = q + (2.0 - np.trace(q).real) / d_in * np.eye(d_in)
        s = np.kron(q, eye_out)
        x1 = 0.5 * (s + diff)
        x2 = 0.5 * (s - diff)
        y1 = _kernels.psd_project(2.0 * x1 - z1)
        y2 = _kernels.psd_project(2.0 * x2 - z2)
        if it % check_every == 0 or it == max_iter:
            rho = _density_from_blocks(y1, y2, d_in, d_out)
            lo = max(lo, lower_from_density(j, rho, d_out))
            hi = min(hi, upper_from_dual(j, (z2 - x2) / step, d_in, d_out))
            if hi - lo < tol:
                break
        z1 = z1 + relax * (y1 - x1)
        z2 = z2 + relax * (y2 - x2)
    return lo, hi, it


def diamond_norm(m: HermitianPreservingMap, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER, strict: bool = False) -> DiamondResult:
    """Diamond norm with a certified bracket ``lower <= value <= upper``.

    ``value`` is the midpoint of the bracket. When the bracket is still wider
    than ``tol`` after ``max_iter`` iterations the result carries
    ``converged=False`` and a warning is issued (or ``SolverNonConvergence``
    raised when ``strict``).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    j = np.asarray(m.choi)
    d_in, d_out = m.d_in, m.d_out
    scale = trace_norm(j) / d_in  # maximally entangled lower bound, sets the problem scale
    if scale <= 1e-300:
        return DiamondResult(0.0, 0.0, 0.0, 0, True)
    # certificates computed on the scaled problem are exact up to the factor
    lo, hi, iters = _douglas_rachford(j / scale, d_in, d_out, tol / scale, max_iter)
    lo, hi = lo * scale, hi * scale
    lo = max(lo, scale)
    converged = hi - lo < tol
    res = DiamondResult(0.5 * (lo + hi), hi, lo, iters, converged)
    if not converged:
        msg = f"diamond_norm bracket [{lo:.9g}, {hi:.9g}] wider than {tol:g} after {iters} iterations"
        if strict:
            raise SolverNonConvergence(msg, res)
        warnings.warn(msg, NonConvergenceWarning, stacklevel=2)
    return res


def diamond_distance(a: Channel, b: Channel, tol: float = DEFAULT_TOL, **kw) -> DiamondResult:
    return diamond_norm(HermitianPreservingMap.difference(a, b), tol=tol, **kw)


# ---------------------------------------------------------------------------
# lower witness search
# ---------------------------------------------------------------------------

def _abs_part(a):
    w, v = np.linalg.eigh(a)
    return (v * np.abs(w)) @ v.conj().T


def _fixed_point_ascent(j, rho, d_in, d_out, iters=200, tol=1e-13):
    best = lower_from_density(j, rho, d_out)
    prev = best
    for _ in range(iters):
        k = np.kron(sqrtm_psd(rho), np.eye(d_out))
        t = _ptr_out(_abs_part(hermitian_part(k @ j @ k)), d_in, d_out)
        tr = np.trace(t).real
        if tr <= 1e-300:
            break
        rho = hermitian_part(t / tr)
        val = lower_from_density(j, rho, d_out)
        best = max(best, val)
        if abs(val - prev) <= tol * max(1.0, abs(val)):
            break
        prev = val
    return best


def diamond_lower_witness(m: HermitianPreservingMap, restarts: int = 8, seed: int = 0,
                          iters: int = 200) -> float:
    """Best ``|| (m (x) id)(psi psi^*) ||_1`` over optimized pure inputs.

    A pure input with reduced state ``rho`` on the reference gives the value
    ``|| (sqrt(rho) (x) 1) J (sqrt(rho) (x) 1) ||_1`` (up to a transpose of
    ``rho``, which does not change the maximum). The search starts from the
    maximally entangled input and from ``restarts`` random pure inputs, then
    climbs with the fixed-point update ``rho <- tr_out |A(rho)| / tr``.
    """
    j = np.asarray(m.choi)
    d_in, d_out = m.d_in, m.d_out
    if not np.any(j):
        return 0.0
    rng = np.random.default_rng(seed)
    starts = [np.eye(d_in, dtype=np.complex128) / d_in]
    for _ in range(restarts):
        u = random_unitary(d_in, rng)
        w = rng.dirichlet(np.ones(d_in))
        starts.append((u * w) @ u.conj().T)
    best = 0.0
    for rho in starts:
        val = _fixed_point_ascent(j, rho, d_in, d_out, iters=iters)
        best = max(best, val)
    return float(best)


# ---------------------------------------------------------------------------
# operator-norm based upper bound
# ---------------------------------------------------------------------------

def _polar_unitary(a):
    u, _, v = svd(a)
    return u @ v.conj().T


def opnorm_estimate(m: HermitianPreservingMap, restarts: int = 8, seed: int = 0,
                    iters: int = 100) -> float:
    """Estimate of ``||m||_{1->1}`` (equivalently the operator norm of the dual map).

    Alternates between a rank-one input ``|x><y|`` and the contraction
    ``U`` attaining ``||m(|x><y|)||_1 = Re tr(U^dag m(|x><y|))``; each half
    step can only increase the objective.
    """
    d_in = m.d_in
    rng = np.random.default_rng(seed)
    best = 0.0
    for r in range(restarts + 1):
        if r == 0:
            x = np.zeros(d_in, dtype=np.complex128)
            x[0] = 1.0
            y = x.copy()
        else:
            x = rng.standard_normal(d_in) + 1j * rng.standard_normal(d_in)
            y = rng.standard_normal(d_in) + 1j * rng.standard_normal(d_in)
            x /= np.linalg.norm(x)
            y /= np.linalg.norm(y)
        val = 0.0
        for _ in range(iters):
            out = m(np.outer(x, y.conj()))
            new = trace_norm(out)
            if new <= val * (1 + 1e-12):
                val = max(val, new)
                break
            val = new
            # Re tr(U^dag m(|x><y|)) = Re <y| m^dag(U)^dag |x>
            g = m.adjoint(_polar_unitary(out))
            u, s, v = svd(g.conj().T)
            x, y = v[:, 0], u[:, 0]
        best = max(best, val)
    return float(best)


def cb_upper_from_opnorm(m: HermitianPreservingMap, dM: int | None = None, restarts: int = 8,
                         seed: int = 0) -> float:
    """``dM**2`` times the operator-norm estimate; ``dM`` defaults to the output dimension."""
    dM = m.d_out if dM is None else int(dM)
    if dM < 1:
        raise ValueError("dM must be positive")
    return dM * dM * opnorm_estimate(m, restarts=restarts, seed=seed)
