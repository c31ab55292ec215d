"""Reference computations written without the package, used to cross-check it.

Everything here works on explicit tensors with ``einsum`` and never calls
into ``memchan``.
"""

import numpy as np


def ptrace(rho, dims, keep):
    """Partial trace by summing matching bra/ket indices of the discarded factors."""
    n = len(dims)
    t = np.asarray(rho).reshape(list(dims) * 2)
    letters = "abcdefghijklmnopqrstuvwxyz"
    ket = list(letters[:n])
    bra = list(letters[n:2 * n])
    for k in range(n):
        if k not in keep:
            bra[k] = ket[k]
    out = [ket[k] for k in keep] + [bra[k] for k in keep]
    res = np.einsum("".join(ket + bra) + "->" + "".join(out), t)
    d = int(np.prod([dims[k] for k in keep])) if keep else 1
    return res.reshape(d, d)


def apply_on_factors(kraus, rho, dims, first, n_in, out_dims):
    """Apply Kraus operators acting on the ``n_in`` consecutive factors starting at ``first``.

    The acted-on factors are replaced by factors of sizes ``out_dims``.
    """
    dims = list(dims)
    d_act = int(np.prod(dims[first:first + n_in]))
    d_before = int(np.prod(dims[:first])) if first else 1
    d_after = int(np.prod(dims[first + n_in:])) if first + n_in < len(dims) else 1
    d_out = int(np.prod(out_dims))
    r = rho.reshape(d_before, d_act, d_after, d_before, d_act, d_after)
    out = np.zeros((d_before, d_out, d_after, d_before, d_out, d_after), dtype=complex)
    for k in kraus:
        out += np.einsum("ob,xbyzcw,pc->xoyzpw", k, r, k.conj())
    new_dims = dims[:first] + list(out_dims) + dims[first + n_in:]
    dtot = int(np.prod(new_dims))
    return out.reshape(dtot, dtot), new_dims


def propagate(kraus, dA, dB, dM, n, rho):
    """Run ``n`` uses of the memory channel ``M (x) A -> B (x) M`` on ``rho`` over ``M (x) A^n``.

    Returns the output on ``B^n (x) M``; the memory moves one slot to the
    right after every use.
    """
    dims = [dM] + [dA] * n
    state = np.asarray(rho, dtype=complex)
    for k in range(n):
        # factor layout: B_1..B_k, M, A_{k+1}..A_n
        state, dims = apply_on_factors(kraus, state, dims, k, 2, [dB, dM])
    return state


def choi_from_apply(apply, d_in):
    blocks = []
    for i in range(d_in):
        row = []
        for j in range(d_in):
            e = np.zeros((d_in, d_in), dtype=complex)
            e[i, j] = 1.0
            row.append(np.kron(e, apply(e)))
        blocks.append(sum(row))
    return sum(blocks)


def binary_entropy(p):
    if p <= 0 or p >= 1:
        return 0.0
    return float(-p * np.log2(p) - (1 - p) * np.log2(1 - p))


def shift_kraus(d=2):
    """The shift wired as ``M (x) A -> B (x) M``: memory goes out to B, register becomes memory."""
    return [np.eye(d * d, dtype=complex)]


def swap_kraus(d=2):
    u = np.zeros((d * d, d * d), dtype=complex)
    for a in range(d):
        for b in range(d):
            u[b * d + a, a * d + b] = 1.0
    return [u]


def mixed_shift_kraus(p, d=2):
    return [np.sqrt(p) * swap_kraus(d)[0], np.sqrt(1 - p) * shift_kraus(d)[0]]


def dn_choi(kraus, dA, dB, dM, n):
    """Choi matrix of ``rho -> tr_B S_n(rho) - tr_B S_n(1/dM (x) tr_M rho)``."""
    d_rest = dA ** n

    def trace_outputs(out):
        return ptrace(out, [dB ** n, dM], [1])

    def apply(x):
        real = trace_outputs(propagate(kraus, dA, dB, dM, n, x))
        replaced = np.kron(np.eye(dM) / dM, ptrace(x, [dM, d_rest], [1]))
        return real - trace_outputs(propagate(kraus, dA, dB, dM, n, replaced))

    return choi_from_apply(apply, dM * d_rest)
