import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from memchan import channel as C
from memchan import matkernel as mk
from oracles import choi_from_apply, propagate, ptrace

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)


def test_validate_cptp():
    assert C.validate_cptp(C.identity_channel(3)) == (True, 0.0)
    ok, resid = C.validate_cptp(C.Channel.from_kraus([I2, I2]))
    assert not ok and resid == pytest.approx(1.0)
    rng = np.random.default_rng(5)
    v = mk.random_unitary(6, rng)[:, :2]  # isometry 2 -> 6
    ok, resid = C.validate_cptp(C.Channel.from_kraus(v.reshape(3, 2, 2)))
    assert ok and resid <= 1e-10


def test_pictures(rng):
    ch = C.random_channel(3, 2, 3, rng)
    assert np.allclose(C.heisenberg_apply(ch, np.eye(2)), np.eye(3))
    u = mk.random_unitary(3, rng)
    rho = mk.random_density(3, rng)
    assert np.allclose(C.schrodinger_apply(C.unitary_channel(u), rho), u @ rho @ u.conj().T)


def test_duality(rng):
    for _ in range(20):
        ch = C.random_channel(3, 4, 2, rng)
        rho, x = mk.random_density(3, rng), mk.random_hermitian(4, rng)
        lhs = np.trace(C.schrodinger_apply(ch, rho) @ x)
        rhs = np.trace(rho @ C.heisenberg_apply(ch, x))
        assert abs(lhs - rhs) <= 1e-10


def test_choi_conventions(rng):
    j = C.choi(C.identity_channel(2))
    phi = mk.max_entangled(2)
    assert np.allclose(j, 2 * np.outer(phi, phi.conj()))
    ch = C.random_channel(2, 3, 3, rng)
    assert np.allclose(C.choi(ch), choi_from_apply(ch, 2))
    back = C.kraus_from_choi(C.choi(ch), 2, 3)
    assert np.linalg.norm(C.choi(back) - C.choi(ch)) <= 1e-10
    rho = mk.random_density(2, rng)
    assert np.allclose(C.apply_choi(C.choi(ch), rho, 2, 3), ch(rho))
    rank1 = C.kraus_from_choi(C.choi(C.unitary_channel(mk.random_unitary(2, rng))), 2, 2)
    assert rank1.n_kraus == 1


def test_concatenate_n1_is_base():
    mc = C.mixed_shift(0.3)
    assert C.channel_distance_choi(C.concatenate(mc, 1), mc.base) < 1e-12


def test_shift_concatenation_propagates(rng):
    mu = mk.random_density(2, rng)
    rhos = [mk.random_density(2, rng) for _ in range(3)]
    s3 = C.concatenate(C.shift(), 3)
    out = s3(mk.tensor(mu, *rhos))
    assert np.allclose(out, mk.tensor(mu, rhos[0], rhos[1], rhos[2]))


def test_switch_concatenation():
    t0, t1 = C.identity_channel(2), C.depolarizing_channel(2, 1.0)
    sw = C.switch([t0, t1])
    s2 = C.concatenate(sw, 2)
    rng = np.random.default_rng(3)
    rho = mk.random_density(4, rng)
    for i, t in enumerate([t0, t1]):
        m = mk.proj(mk.ket(i, 2))
        out = s2(np.kron(m, rho))
        want = np.kron(C.tensor_channels(t, t)(rho), m)
        assert np.allclose(out, want)


@pytest.mark.parametrize("name", ["shift", "mixed_shift", "partial_flip", "switch"])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_concatenate_matches_propagation(name, n, rng):
    mc = {
        "shift": C.shift(),
        "mixed_shift": C.mixed_shift(0.4),
        "partial_flip": C.partial_flip(0.7),
        "switch": C.switch([C.identity_channel(2), C.dephasing_channel(0.3)]),
    }[name]
    rho = mk.random_density(2 * 2 ** n, rng)
    want = propagate(list(mc.base.kraus), 2, 2, 2, n, rho)
    assert np.allclose(C.concatenate(mc, n)(rho), want)
    assert C.validate_cptp(C.concatenate(mc, n), 1e-9)[0]


def test_concatenation_composes(rng):
    mc = C.MemoryChannel(2, 2, 2, C.random_channel(4, 4, 2, rng))
    for n, m in [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (3, 1)]:
        sn, sm = C.concatenate(mc, n), C.concatenate(mc, m)
        # run S_m first, then S_n on its memory output and the remaining registers
        dB_m, dA_n = 2 ** m, 2 ** n

        def chained(x):
            y = C.tensor_channels(sm, C.identity_channel(dA_n))(x)  # B^m M A^n
            return C.tensor_channels(C.identity_channel(dB_m), sn)(y)

        assert np.allclose(C.choi(C.concatenate(mc, n + m)), choi_from_apply(chained, 2 * 2 ** (n + m)))


def test_restrict_ignore_outputs():
    rng = np.random.default_rng(2)
    rho = mk.random_density(2, rng)
    mu = mk.random_density(2, rng)
    s1 = C.restrict_ignore_outputs(C.shift(), 1)
    assert np.allclose(s1(np.kron(mu, rho)), rho)
    sw = C.restrict_ignore_outputs(C.switch([C.identity_channel(2), C.depolarizing_channel(2, 1.0)]), 3)
    m = mk.random_density(2, rng)
    out = sw(np.kron(m, mk.maximally_mixed(8)))
    assert np.allclose(out, np.diag(np.diag(m)))
    ident = C.restrict_ignore_outputs(C.partial_flip(np.pi / 2), 1)
    assert np.allclose(ident(np.kron(mu, rho)), mu)


def test_fix_memory_input():
    for n in range(1, 5):
        mc = C.partial_flip(0.4)
        ch = C.fix_memory_input(mc, mk.proj(mk.ket(0, 2)), n, prune=True)
        assert ch.n_kraus <= 4
    rng = np.random.default_rng(8)
    mu, r1, r2 = (mk.random_density(2, rng) for _ in range(3))
    ch = C.fix_memory_input(C.shift(), mu, 2)
    assert np.allclose(ch(np.kron(r1, r2)), np.kron(mu, r1))
    t = C.random_channel(2, 2, 2, rng)
    ch = C.fix_memory_input(C.memoryless(t), np.eye(1), 3)
    assert np.allclose(C.choi(ch), C.choi(C.tensor_channels(t, t, t)))


def test_dilation_round_trip(rng):
    u = C.unitary_channel(mk.random_unitary(3, rng))
    dil = C.stinespring(u)
    assert dil.d_env == 1
    comp = C.complementary(u)
    assert np.allclose(comp(mk.random_density(3, rng)), np.ones((1, 1)))
    deph = C.dephasing_channel(0.3)
    assert C.stinespring(deph).d_env == 2
    ch = C.random_channel(3, 2, 3, rng)
    back = C.dilation_channel(C.stinespring(ch))
    assert C.channel_distance_choi(back, ch) <= 1e-10


def test_double_complement_acts_like_original(rng):
    ch = C.random_channel(2, 3, 2, rng)
    cc = C.complementary(C.complementary(ch))
    # cc maps into the environment of the complement, isometric to the range of ch
    for _ in range(5):
        rho = mk.random_density(2, rng)
        a, b = ch(rho), cc(rho)
        assert np.allclose(np.sort(np.linalg.eigvalsh(a))[-b.shape[0]:], np.sort(np.linalg.eigvalsh(b)), atol=1e-9)


def test_builtins():
    for mc in (C.shift(), C.mixed_shift(0.3), C.partial_flip(1.1),
               C.switch([C.identity_channel(2), C.depolarizing_channel(2, 0.5)]),
               C.depolarize_mix(C.shift(), 0.2)):
        assert C.validate_cptp(mc.base, 1e-10)[0]
    assert C.channel_distance_choi(C.partial_flip(0.0).base, C.shift().base) < 1e-12
    ms = C.mixed_shift(0.3)
    assert np.allclose(ms.base.kraus[0], np.sqrt(0.3) * C.ideal_unitary(2))
    assert np.allclose(ms.base.kraus[1], np.sqrt(0.7) * C.shift_unitary(2))
    sw = C.switch([C.identity_channel(2), C.depolarizing_channel(2, 1.0)])
    fixed = C.fix_memory_input(sw, mk.proj(mk.ket(0, 2)), 1, prune=True)
    assert C.channel_distance_choi(fixed, C.identity_channel(2)) < 1e-12
    assert C.builtin("mixed_shift", p=0.2).base.n_kraus == 2
    with pytest.raises(ValueError):
        C.builtin("nope")


def test_dimension_ceiling(monkeypatch):
    with pytest.raises(C.DimensionCeilingError):
        C.concatenate(C.shift(), 4, max_dim=16)
    monkeypatch.setenv("MEMCHAN_MAX_DIM", "8")
    with pytest.raises(C.DimensionCeilingError):
        C.concatenate(C.shift(), 3)


def test_memory_dims_must_match():
    with pytest.raises(mk.DimensionError):
        C.MemoryChannel(2, 2, 2, C.identity_channel(3))


@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_random_channels_are_cptp_and_dual(seed, d_in, d_out, r):
    assume(d_out * r >= d_in)
    rng = np.random.default_rng(seed)
    ch = C.random_channel(d_in, d_out, r, rng)
    assert C.validate_cptp(ch, 1e-9)[0]
    rho, x = mk.random_density(d_in, rng), mk.random_hermitian(d_out, rng)
    assert abs(np.trace(ch(rho) @ x) - np.trace(rho @ C.heisenberg_apply(ch, x))) <= 1e-10


@given(st.integers(0, 2 ** 31 - 1))
def test_prune_keeps_the_channel(seed):
    rng = np.random.default_rng(seed)
    ch = C.random_channel(2, 2, 3, rng)
    doubled = C.Channel(2, 2, np.concatenate([ch.kraus, ch.kraus]) / np.sqrt(2))
    pr = C.prune_kraus(doubled)
    assert pr.n_kraus <= 4
    assert C.channel_distance_choi(pr, ch) < 1e-10


def test_partial_trace_oracle_on_outputs(rng):
    s2 = C.concatenate(C.mixed_shift(0.5), 2)
    rho = mk.random_density(8, rng)
    out = s2(rho)
    assert np.allclose(ptrace(out, [2, 2, 2], [2]), C.restrict_ignore_outputs(C.mixed_shift(0.5), 2)(rho))
