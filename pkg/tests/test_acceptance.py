"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the summary lines
inline; they are printed even when output capture is on.
"""

import filecmp
from pathlib import Path

import numpy as np
import pytest

from memchan import blockcode as B
from memchan import causal as K
from memchan import channel as C
from memchan import cli
from memchan import entropics as E
from memchan import forgetful as F
from memchan import klcodes as KL
from memchan import matkernel as mk
from memchan import metrics as M

FIX = Path(__file__).parent / "fixtures"


@pytest.fixture
def verdict(capsys):
    def emit(num, label, ok, detail=""):
        with capsys.disabled():
            print(f"\n[acceptance {num:>2}] {'PASS' if ok else 'FAIL'}  {label}  {detail}")
        assert ok, f"criterion {num} failed: {detail}"
    return emit


def _random_memory_channel(rng, dA=2, dB=2, dM=2, r=2):
    return C.MemoryChannel(dA, dB, dM, C.random_channel(dM * dA, dB * dM, r, rng))


def _switch_orthogonal():
    return C.switch([C.identity_channel(2), C.unitary_channel(np.array([[0, 1], [1, 0]]))])


def test_c01_duality_and_cptp(verdict):
    rng = np.random.default_rng(101)
    worst_dual = worst_cptp = 0.0
    for _ in range(500):
        d_in, d_out = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        r = int(rng.integers(-(-d_in // d_out), 5))
        ch = C.random_channel(d_in, d_out, r, rng)
        rho = mk.random_density(d_in, rng)
        x = mk.random_hermitian(d_out, rng) + 1j * mk.random_hermitian(d_out, rng)
        lhs = np.trace(C.schrodinger_apply(ch, rho) @ x)
        rhs = np.trace(rho @ C.heisenberg_apply(ch, x))
        worst_dual = max(worst_dual, abs(lhs - rhs))
        worst_cptp = max(worst_cptp, C.validate_cptp(ch, 1e-9)[1])
    verdict(1, "duality & CPTP", worst_dual <= 1e-10 and worst_cptp <= 1e-9,
            f"duality {worst_dual:.1e}, cptp {worst_cptp:.1e}")


def test_c02_partial_flip(verdict):
    f = C.shift_unitary(2)
    worst = 0.0
    for eta in np.linspace(0, 2 * np.pi, 100, endpoint=False):
        delta = C.partial_flip_unitary(eta) - f
        worst = max(worst, abs(mk.operator_norm(delta) ** 2 - 2 * (1 - np.cos(eta))))
    hit = F.is_forgetful(C.partial_flip(np.arccos(0.9)), 4)
    miss = F.is_forgetful(C.partial_flip(np.pi / 2), 4)
    ok = worst <= 1e-12 and hit.forgetful_at == 1 and miss.inconclusive
    verdict(2, "partial flip algebra", ok,
            f"norm residual {worst:.1e}, cos=0.9 -> {hit.forgetful_at}, pi/2 inconclusive={miss.inconclusive}")


def test_c03_mixed_shift_decay(verdict):
    s = F.dn_series(C.mixed_shift(0.5), [1, 2, 3, 4])
    within = all(v <= 2 * 0.5 ** n + 1e-6 for n, v in zip(s.ns, s.values))
    c = F.decay_fit(s, F.LEAST_SQUARES)
    verdict(3, "mixed-shift decay", within and 0.45 <= c <= 0.55,
            f"d_n={[round(v, 6) for v in s.values]}, c={c:.4f}")


def test_c04_switch_witness(verdict):
    sw = _switch_orthogonal()
    dn = [F.dn_estimate(sw, n) for n in range(1, 5)]
    sd = F.schrodinger_memory_distance(sw, 2)
    ok = all(d >= 1 for d in dn) and abs(sd - 2) <= 1e-6
    verdict(4, "non-forgetful switch", ok, f"d_n={[round(d, 9) for d in dn]}, schrodinger={sd:.9f}")


def test_c05_shift_capacity(verdict):
    mu = np.eye(2) / 2
    errs, flags = [], []
    for n in (2, 3, 4):
        vals = {code: E.capacity_bound(C.shift(), n, E.CapacitySetting.from_code(code, mu)).value_bits_per_use
                for code in ("ab", "ae", "eb", "ee")}
        errs += [abs(vals["ee"] - (n - 1) / n), abs(vals["ab"] - (n + 1) / n)]
        flags += E.ordering_flags(vals, tol=1e-3)
    verdict(5, "shift capacity bounds", max(errs) <= 1e-3 and not flags,
            f"max error {max(errs):.1e}, order flags {flags}")


def test_c06_kl_constructor(verdict):
    rng = np.random.default_rng(606)
    dims, resids, fids, steps = [], [], [], []
    for _ in range(20):
        k = C.random_channel(32, 32, 2, rng).kraus
        res = KL.pairing_construct(k)
        dims.append(res.code.dim)
        steps.append(res.max_step_residual)
        _, _, r = KL.kl_verify(k, res.code.code_basis, tol=1e-8)
        resids.append(r)
        rec = KL.recovery_channel(k, res.code)
        fids.append(KL.entanglement_fidelity(C.compose(rec, C.Channel.from_kraus(k)), res.code.code_basis))
    ok = min(dims) >= 2 and max(resids) <= 1e-8 and min(fids) >= 1 - 1e-8 and max(steps) <= 1e-10
    verdict(6, "KL constructor", ok,
            f"min dim {min(dims)}, kl {max(resids):.1e}, fidelity {min(fids):.12f}, step {max(steps):.1e}")


def test_c07_pure_kraus_count(verdict):
    rng = np.random.default_rng(707)
    chans = [C.shift(), C.partial_flip(0.7), C.ideal_memory_channel(2)]
    chans += [C.MemoryChannel(2, 2, 2, C.unitary_channel(mk.random_unitary(4, rng))) for _ in range(5)]
    chans += [C.MemoryChannel(2, 3, 2, C.Channel.from_kraus([mk.random_isometry(4, 6, rng)]))]
    counts = []
    for mc in chans:
        mu = mk.random_density(2, rng)
        counts += [C.fix_memory_input(mc, mu, n, prune=True).n_kraus for n in range(1, 5)]
    verdict(7, "pure channel Kraus count", max(counts) <= 4, f"max count {max(counts)}")


def test_c08_entropic_identities(verdict):
    rng = np.random.default_rng(808)
    fannes = all(E.check_fannes(mk.random_density(2, rng), mk.random_density(2, rng))[2] for _ in range(1000))
    dpi = True
    for _ in range(200):
        d = int(rng.integers(2, 4))
        s = C.random_channel(2, d, 2, rng)
        r = C.random_channel(d, 2, 2, rng)
        dpi &= E.check_dpi(r, s, mk.random_density(2, rng), tol=1e-9)[2]
    sand, gap = True, 0.0
    for _ in range(100):
        mc = _random_memory_channel(rng)
        k = int(rng.integers(2, 5))
        e = E.Ensemble(rng.dirichlet(np.ones(k)), np.array([mk.random_density(4, rng) for _ in range(k)]))
        lo, _, hi, ok = E.sandwich_check(mc, 1, e)
        sand &= ok
        gap = max(gap, hi - lo)
    joint = 0.0
    for _ in range(100):
        ch = C.random_channel(3, 3, 2, rng)
        rho = mk.random_density(3, rng)
        w, v = mk.eig_hermitian(rho)
        ens = E.Ensemble.from_pure(np.clip(w, 0, None) / np.clip(w, 0, None).sum(), v.T)
        joint = max(joint, abs(E.coherent_info(ch, rho) - E.private_chi_gap(ch, ens)))
    ok = fannes and dpi and sand and gap <= 2 * np.log2(2) + 1e-12 and joint <= 1e-8
    verdict(8, "entropic identities", ok,
            f"fannes={fannes}, dpi={dpi}, sandwich={sand} (gap {gap:.3f}), joint {joint:.1e}")


def test_c09_diamond(verdict):
    z = C.unitary_channel(np.diag([1.0, -1.0]))
    r = M.diamond_distance(C.identity_channel(2), z)
    width, order_ok = r.upper_certificate - r.lower_witness, True
    rng = np.random.default_rng(909)
    for i in range(100):
        m = F.memory_difference_map(_random_memory_channel(rng, r=int(rng.integers(1, 4))), 1)
        res = M.diamond_norm(m)
        width = max(width, res.upper_certificate - res.lower_witness)
        lw = M.diamond_lower_witness(m, restarts=2, seed=i)
        cap = M.cb_upper_from_opnorm(m, dM=2, restarts=2, seed=i)
        order_ok &= lw <= res.value + 1e-6 and res.value <= cap + 1e-6
    ok = width <= 1e-6 and abs(r.value - 2) <= 1e-6 and order_ok
    verdict(9, "diamond norm", ok, f"bracket {width:.1e}, id-vs-Z {r.value:.9f}, ordering {order_ok}")


def test_c10_block_machinery(verdict):
    depth = B.strictly_forgetful_depth(C.shift())
    checks = [B.concat_error_verify(C.mixed_shift(0.5), 2, m) for m in (1, 2, 3)]
    concat_ok = all(c.empirical <= c.bound + 1e-6 for c in checks)
    rs = B.rate_sandwich(C.shift(), 1, 3)
    ok = depth == 1 and concat_ok and abs(rs.lower - 0.5) <= 1e-3 and abs(rs.upper - 4 / 3) <= 1e-3
    verdict(10, "block machinery", ok,
            f"depth {depth}, concat {[(round(c.empirical, 4), round(c.bound, 4)) for c in checks]}, "
            f"sandwich ({rs.lower:.4f}, {rs.upper:.4f})")


def test_c11_causality(verdict):
    rng = np.random.default_rng(1111)
    chans = [C.shift(), C.mixed_shift(0.5), C.partial_flip(0.9), _switch_orthogonal(),
             C.depolarize_mix(C.partial_flip(0.45), 0.2), _random_memory_channel(rng, r=3)]
    worst = 0.0
    for mc in chans:
        wc = K.from_memory_channel(mc, 3, mk.random_density(2, rng))
        worst = max(worst, max(rep.deviation for rep in K.all_cuts(wc)))
    anti = K.causal_cut_check(K.site_permutation_window([1, 0], 2), 1)
    verdict(11, "causality", worst <= 1e-9 and anti >= 1, f"memory windows {worst:.1e}, anti-causal {anti:.3f}")


def test_c12_gradients(verdict):
    rng = np.random.default_rng(1212)
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(2, 4))
        ch = C.random_channel(d, int(rng.integers(2, 4)), int(rng.integers(2, 4)), rng)
        a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        e = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        worst = max(worst, E.finite_difference_check(ch, a, e)[2])
    verdict(12, "coherent-information gradient", worst <= 1e-3, f"max relative error {worst:.1e}")


CLI_CASES = [
    ["describe", "flip.json"],
    ["concat", "mixed_shift.json", "--n", "2"],
    ["distance", "mixed_shift.json", "flip.json"],
    ["forgetful-scan", "flip.json", "--n", "2"],
    ["capacity-bounds", "switch.json", "--n", "2", "--setting", "ee", "--mu", "ket:0"],
    ["kl-construct", "shift.json", "--n", "3"],
    ["block-rate", "mixed_shift.json", "--m", "1", "--l", "2"],
    ["causality-check", "flip.json", "--n", "3"],
    ["sim-code", "bitflip_explicit.json", "--n", "2", "--trials", "6", "--seed", "3"],
]


def test_c13_cli_determinism(verdict, tmp_path, capsys):
    failures = []
    for case in CLI_CASES:
        argv = [str(FIX / a) if a.endswith(".json") else a for a in case]
        outs = []
        for rep in range(2):
            out = tmp_path / f"{case[0]}-{rep}.json"
            code = cli.run(argv + ["--out", str(out)])
            outs.append(out)
            if code != 0:
                failures.append(f"{case[0]} exit {code}")
        if not filecmp.cmp(*outs, shallow=False):
            failures.append(f"{case[0]} differs")
    capsys.readouterr()
    verdict(13, "CLI determinism", not failures and len({c[0] for c in CLI_CASES}) == 9,
            f"{len(CLI_CASES)} commands, problems {failures}")
