import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from memchan import channel as C
from memchan import matkernel as mk
from memchan import metrics as M
from frozen import DIAMOND, SDP_AGREEMENT
from oracles import choi_from_apply

Z = np.diag([1.0, -1.0]).astype(complex)


def _pure_state_search(m, rng, starts=200):
    """Crude oracle: best ||(m (x) id)(psi psi^*)||_1 over random pure inputs psi."""
    d = m.d_in
    best = 0.0
    j = m.choi.reshape(d, m.d_out, d, m.d_out)
    for _ in range(starts):
        psi = mk.random_pure(d * d, rng).reshape(d, d)  # (in, ref)
        # (m (x) id)(|psi><psi|) = sum_ab psi_ar conj(psi_bs) m(|a><b|) (x) |r><s|
        out = np.einsum("ar,bs,aobp->orps", psi, psi.conj(), j).reshape(m.d_out * d, m.d_out * d)
        best = max(best, mk.trace_norm(out))
    return best


def test_zero_map():
    z = M.HermitianPreservingMap(2, 3, np.zeros((6, 6)))
    r = M.diamond_norm(z)
    assert r.value == 0.0 and r.converged
    assert M.diamond_lower_witness(z) == 0.0


def test_identity_vs_z(rng):
    m = M.HermitianPreservingMap.difference(C.identity_channel(2), C.unitary_channel(Z))
    r = M.diamond_norm(m)
    assert abs(r.value - 2.0) <= 1e-6
    assert r.gap <= 1e-6
    assert abs(r.value - DIAMOND["id_vs_Z"]) <= SDP_AGREEMENT
    assert _pure_state_search(m, rng) <= r.upper_certificate + 1e-9
    assert M.diamond_lower_witness(m) == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("eps", [0.1, 0.5])
def test_depolarizing_mixture_distance(eps):
    mix = C.convex_mix([1 - eps, eps], [C.identity_channel(2), C.depolarizing_channel(2, 1.0)])
    m = M.HermitianPreservingMap.difference(mix, C.identity_channel(2))
    r = M.diamond_norm(m)
    # ||eps (D - id)|| = eps * 2 (1 - 1/d^2) = 1.5 eps for qubits
    assert r.value == pytest.approx(1.5 * eps, abs=1e-6)
    assert r.value == pytest.approx(DIAMOND[f"depol_mix_{eps}"], abs=SDP_AGREEMENT)
    assert M.diamond_lower_witness(m) == pytest.approx(r.value, abs=1e-5)


def test_maximally_entangled_lower_bound(rng):
    for _ in range(5):
        m = M.HermitianPreservingMap.difference(C.random_channel(3, 2, 2, rng), C.random_channel(3, 2, 2, rng))
        r = M.diamond_norm(m)
        assert r.lower_witness >= mk.trace_norm(m.choi) / 3 - 1e-12


def test_unitary_difference_witness_agrees(rng):
    for _ in range(5):
        a = C.unitary_channel(mk.random_unitary(2, rng))
        b = C.unitary_channel(mk.random_unitary(2, rng))
        m = M.HermitianPreservingMap.difference(a, b)
        r = M.diamond_norm(m)
        assert abs(M.diamond_lower_witness(m) - r.value) <= 1e-4


def test_adjoint_is_hilbert_schmidt_dual(rng):
    m = M.HermitianPreservingMap.difference(C.random_channel(2, 3, 2, rng), C.random_channel(2, 3, 1, rng))
    x = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    y = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    assert np.vdot(y, m(x)) == pytest.approx(np.vdot(m.adjoint(y), x))


def test_hermitian_check():
    with pytest.raises(ValueError):
        M.HermitianPreservingMap(1, 2, np.array([[0, 1], [0, 0]]))


def test_opnorm_bounds():
    ident = M.HermitianPreservingMap.from_channel(C.identity_channel(2))
    assert M.opnorm_estimate(ident) == pytest.approx(1.0)
    lam = 0.7
    assert M.cb_upper_from_opnorm(ident.scale(lam), dM=2) == pytest.approx(4 * lam)
    assert M.cb_upper_from_opnorm(ident.scale(lam), dM=1) == pytest.approx(M.opnorm_estimate(ident.scale(lam)))


def test_strict_mode_raises():
    rng = np.random.default_rng(0)
    m = M.HermitianPreservingMap.difference(C.random_channel(4, 2, 2, rng), C.random_channel(4, 2, 2, rng))
    with pytest.raises(M.SolverNonConvergence) as info:
        M.diamond_norm(m, tol=1e-14, max_iter=50, strict=True)
    assert not info.value.result.converged
    with pytest.warns(M.NonConvergenceWarning):
        r = M.diamond_norm(m, tol=1e-14, max_iter=50)
    assert r.lower_witness <= r.value <= r.upper_certificate


def test_multiplicativity():
    a = M.HermitianPreservingMap.from_callable(lambda x: x - Z @ x @ Z, 2, 2)
    b = M.HermitianPreservingMap.from_callable(lambda x: 0.5 * x - np.trace(x) * np.eye(2) / 4, 2, 2)
    va, vb = M.diamond_norm(a).value, M.diamond_norm(b).value
    vab = M.diamond_norm(M.tensor_maps(a, b)).value
    assert vab == pytest.approx(va * vb, abs=1e-4)


def test_tensor_maps_matches_kron_action(rng):
    a = M.HermitianPreservingMap.from_channel(C.random_channel(2, 3, 2, rng))
    b = M.HermitianPreservingMap.from_channel(C.random_channel(2, 2, 2, rng))
    x, y = mk.random_density(2, rng), mk.random_density(2, rng)
    assert np.allclose(M.tensor_maps(a, b)(np.kron(x, y)), np.kron(a(x), b(y)))


@settings(max_examples=15)
@given(st.integers(0, 2 ** 31 - 1))
def test_channel_difference_in_range_and_triangle(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (C.random_channel(2, 2, int(rng.integers(1, 3)), rng) for _ in range(3))
    ab = M.diamond_distance(a, b).value
    bc = M.diamond_distance(b, c).value
    ac = M.diamond_distance(a, c).value
    assert -1e-9 <= ab <= 2 + 1e-6
    assert ac <= ab + bc + 2e-6


@settings(max_examples=15)
@given(st.integers(0, 2 ** 31 - 1))
def test_bracket_ordering_with_opnorm_bound(seed):
    rng = np.random.default_rng(seed)
    j = choi_from_apply(lambda x: C.random_channel(4, 2, 2, np.random.default_rng(seed))(x), 4)
    m = M.HermitianPreservingMap(4, 2, j - np.kron(np.eye(4), np.eye(2)) / 2)
    r = M.diamond_norm(m)
    lw = M.diamond_lower_witness(m, restarts=2, seed=int(rng.integers(1 << 30)))
    assert lw <= r.upper_certificate + 1e-9
    assert r.lower_witness <= r.value <= r.upper_certificate
    assert r.value <= M.cb_upper_from_opnorm(m, dM=2) + 1e-9
