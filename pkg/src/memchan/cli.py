"""Command-line interface: channel spec files in, deterministic JSON/CSV reports out.

Spec files are JSON. A builtin spec names a channel family::

    {"builtin": {"name": "mixed_shift", "params": {"p": 0.5},
                 "dims": {"dA": 2, "dB": 2, "dM": 2}}}

An explicit spec lists the Kraus operators of the base channel
``M (x) A -> B (x) M``, every entry a ``[re, im]`` pair::

    {"dims": {"dA": 2, "dB": 2, "dM": 1},
     "kraus": [[[[1, 0], [0, 0]], [[0, 0], [1, 0]]]]}

Exit codes: 0 success, 2 invalid input, 3 solver did not converge (the
report is still written), 4 dimension ceiling exceeded.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from memchan import __version__
from memchan import blockcode, causal, entropics, forgetful, klcodes
from memchan.channel import (
    BUILTINS,
    Channel,
    DimensionCeilingError,
    MemoryChannel,
    builtin,
    compose,
    concatenate,
    dephasing_channel,
    depolarizing_channel,
    fix_memory_input,
    identity_channel,
    validate_cptp,
)
from memchan.matkernel import DimensionError, check_density, ket, maximally_mixed, proj
from memchan.metrics import NonConvergenceWarning, diamond_distance

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED, EXIT_CEILING = 0, 2, 3, 4
CPTP_TOL = 1e-8
COMMANDS = (
    "describe", "concat", "distance", "forgetful-scan", "capacity-bounds",
    "kl-construct", "block-rate", "causality-check", "sim-code",
)
SERIES_COMMANDS = ("forgetful-scan", "capacity-bounds")


class SpecError(ValueError):
    """Malformed channel spec or argument; the message names the offending field."""


# ---------------------------------------------------------------------------
# spec parsing
# ---------------------------------------------------------------------------

def _complex_matrix(rows, where: str) -> np.ndarray:
    if not isinstance(rows, list) or not rows:
        raise SpecError(f"{where}: expected a non-empty list of rows")
    out = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != len(rows[0]):
            raise SpecError(f"{where}[{i}]: rows must be lists of equal length")
        vals = []
        for j, entry in enumerate(row):
            if (not isinstance(entry, list) or len(entry) != 2
                    or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in entry)):
                raise SpecError(f"{where}[{i}][{j}]: expected a [re, im] pair of numbers")
            vals.append(complex(entry[0], entry[1]))
        out.append(vals)
    return np.array(out, dtype=np.complex128)


def _dims(doc, where: str) -> tuple[int, int, int]:
    if not isinstance(doc, dict):
        raise SpecError(f"{where}: expected an object with dA, dB, dM")
    vals = []
    for key in ("dA", "dB", "dM"):
        v = doc.get(key)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise SpecError(f"{where}.{key}: expected a positive integer")
        vals.append(v)
    return tuple(vals)


def _component(doc, where: str) -> Channel:
    """Switch component: ``{"kraus": [...]}`` or a named channel."""
    if not isinstance(doc, dict):
        raise SpecError(f"{where}: expected an object")
    if "kraus" in doc:
        ks = doc["kraus"]
        if not isinstance(ks, list) or not ks:
            raise SpecError(f"{where}.kraus: expected a non-empty list of matrices")
        mats = [_complex_matrix(k, f"{where}.kraus[{i}]") for i, k in enumerate(ks)]
        if len({m.shape for m in mats}) != 1:
            raise SpecError(f"{where}.kraus: matrices have different shapes")
        return Channel.from_kraus(np.array(mats))
    name = doc.get("channel")
    d = int(doc.get("d", 2))
    if name == "identity":
        return identity_channel(d)
    if name == "depolarizing":
        return depolarizing_channel(d, float(doc.get("p", 0.0)))
    if name == "dephasing":
        return dephasing_channel(float(doc.get("p", 0.0)))
    raise SpecError(f"{where}.channel: expected identity, depolarizing, dephasing or a kraus list")


def _builtin(doc, where: str) -> MemoryChannel:
    if not isinstance(doc, dict):
        raise SpecError(f"{where}: expected an object")
    name = doc.get("name")
    if name not in BUILTINS:
        raise SpecError(f"{where}.name: expected one of {', '.join(BUILTINS)}, got {name!r}")
    params = dict(doc.get("params", {}))
    if name == "switch":
        comps = params.get("components")
        if not isinstance(comps, list) or not comps:
            raise SpecError(f"{where}.params.components: expected a non-empty list")
        params["components"] = [_component(c, f"{where}.params.components[{i}]") for i, c in enumerate(comps)]
    if name == "depolarize_mix":
        if "base" not in params:
            raise SpecError(f"{where}.params.base: nested channel spec required")
        params["mc"] = parse_spec(params.pop("base"), f"{where}.params.base")
        if "delta" in params:
            params["delta"] = _complex_matrix(params["delta"], f"{where}.params.delta")
    try:
        mc = builtin(name, **params)
    except KeyError as exc:
        raise SpecError(f"{where}.params.{exc.args[0]}: missing parameter") from None
    except (TypeError, ValueError) as exc:
        raise SpecError(f"{where}.params: {exc}") from None
    if "dims" in doc:
        dims = _dims(doc["dims"], f"{where}.dims")
        if dims != (mc.dA, mc.dB, mc.dM):
            raise SpecError(f"{where}.dims: declared {dims} but {name} has {(mc.dA, mc.dB, mc.dM)}")
    return mc


def parse_spec(doc, where: str = "spec") -> MemoryChannel:
    """Turn a decoded spec document into a validated memory channel."""
    if not isinstance(doc, dict):
        raise SpecError(f"{where}: expected a JSON object")
    if "builtin" in doc:
        mc = _builtin(doc["builtin"], f"{where}.builtin")
    elif "kraus" in doc:
        dA, dB, dM = _dims(doc.get("dims"), f"{where}.dims")
        ks = doc["kraus"]
        if not isinstance(ks, list) or not ks:
            raise SpecError(f"{where}.kraus: expected a non-empty list of matrices")
        mats = [_complex_matrix(k, f"{where}.kraus[{i}]") for i, k in enumerate(ks)]
        for i, m in enumerate(mats):
            if m.shape != (dB * dM, dM * dA):
                raise SpecError(f"{where}.kraus[{i}]: shape {m.shape}, expected {(dB * dM, dM * dA)}")
        mc = MemoryChannel(dA, dB, dM, Channel(dM * dA, dB * dM, np.array(mats)))
    else:
        raise SpecError(f"{where}: needs either a 'builtin' or a 'kraus' field")
    ok, resid = validate_cptp(mc.base, CPTP_TOL)
    if not ok:
        raise SpecError(f"{where}.kraus: not trace preserving, residual {resid:.3e} exceeds {CPTP_TOL:g}")
    return mc


def load_spec(path: str) -> tuple[MemoryChannel, str]:
    """Read and validate a spec file; returns the channel and the sha256 of the file."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise SpecError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        doc = json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    except UnicodeDecodeError:
        raise SpecError(f"{path}: not UTF-8 text") from None
    return parse_spec(doc, Path(path).name), hashlib.sha256(raw).hexdigest()


def parse_mu(text: str | None, dM: int) -> np.ndarray:
    """``maximally_mixed``, ``ket:<i>``, or a JSON matrix (inline or a file path) of [re, im] pairs."""
    if text is None or text == "maximally_mixed":
        return maximally_mixed(dM)
    if text.startswith("ket:"):
        try:
            i = int(text[4:])
        except ValueError:
            raise SpecError(f"--mu: bad basis index in {text!r}") from None
        if not 0 <= i < dM:
            raise SpecError(f"--mu: basis index {i} out of range for memory dimension {dM}")
        return proj(ket(i, dM))
    src = Path(text).read_text() if os.path.exists(text) else text
    try:
        doc = json.loads(src)
    except json.JSONDecodeError as exc:
        raise SpecError(f"--mu: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if isinstance(doc, dict):
        doc = doc.get("matrix")
    mu = _complex_matrix(doc, "--mu")
    if mu.shape != (dM, dM):
        raise SpecError(f"--mu: shape {mu.shape}, memory dimension is {dM}")
    try:
        return check_density(mu)
    except ValueError as exc:
        raise SpecError(f"--mu: {exc}") from None


# ---------------------------------------------------------------------------
# report helpers
# ---------------------------------------------------------------------------

def _matrix_json(a) -> list:
    a = np.asarray(a, dtype=np.complex128)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def _mc_summary(mc: MemoryChannel) -> dict:
    return {"dA": mc.dA, "dB": mc.dB, "dM": mc.dM, "n_kraus": mc.base.n_kraus}


def _bracket(r) -> dict:
    return {"lower": r.lower_witness, "upper": r.upper_certificate,
            "iterations": r.iterations, "converged": r.converged}


def cmd_describe(mc, args, prov):
    ok, resid = validate_cptp(mc.base, CPTP_TOL)
    return {**_mc_summary(mc), "cptp_residual": resid, "is_pure": mc.is_pure,
            "strictly_forgetful_depth": blockcode.strictly_forgetful_depth(mc, m_max=args.n or 2,
                                                                            max_dim=args.max_dim)}


def cmd_concat(mc, args, prov):
    n = args.n or 2
    ch = concatenate(mc, n, max_dim=args.max_dim)
    ok, resid = validate_cptp(ch, CPTP_TOL)
    out = {"n": n, "d_in": ch.d_in, "d_out": ch.d_out, "n_kraus": ch.n_kraus, "cptp_residual": resid}
    if ch.d_in * ch.d_out * ch.n_kraus <= 1 << 14:
        out["kraus"] = [_matrix_json(k) for k in ch.kraus]
    return out


def cmd_distance(mc, args, prov):
    if args.other is None:
        raise SpecError("distance: a second spec file is required")
    other, digest = load_spec(args.other)
    prov["inputs"][args.other] = digest
    if (other.dA, other.dB, other.dM) != (mc.dA, mc.dB, mc.dM):
        raise SpecError("distance: the two channels have different dimensions")
    r = diamond_distance(mc.base, other.base, tol=args.tol)
    prov["solver"].append(_bracket(r))
    return {"diamond_distance": r.value, **_bracket(r)}


def cmd_forgetful_scan(mc, args, prov):
    n_max = args.n or 4
    mu = parse_mu(args.mu, mc.dM) if args.mu else None
    brackets, points = [], []
    verdict = None
    for n in range(1, n_max + 1):
        r = forgetful.dn_result(mc, n, mu, args.tol, args.max_dim)
        points.append((n, r.value))
        brackets.append(_bracket(r))
        if verdict is None and r.upper_certificate < 1.0:
            verdict = n
    prov["solver"].extend(brackets)
    series = forgetful.DecaySeries(tuple(points))
    try:
        c = forgetful.decay_fit(series, forgetful.LEAST_SQUARES)
    except forgetful.NoContractionError:
        c = None
    return {"forgetful_at": verdict, "inconclusive": verdict is None, "fitted_c": c,
            "series": [{"n": n, "value": v} for n, v in points]}


def cmd_capacity_bounds(mc, args, prov):
    n_max = args.n or 2
    code = args.setting or "ab"
    mu = parse_mu(args.mu, mc.dM) if code[0] == "e" else None
    setting = entropics.CapacitySetting.from_code(code, mu)
    reps = entropics.capacity_series(mc, range(1, n_max + 1), setting, args.kind,
                                     restarts=args.restarts, seed=args.seed, max_dim=args.max_dim)
    prov["optimizer"] = [{"n": r.n, "iterations": r.optimizer_trace.iterations,
                          "hit_cap": r.optimizer_trace.hit_cap} for r in reps]
    return {"setting": code, "kind": args.kind, "label": "best found",
            "value": reps[-1].value_bits_per_use,
            "series": [{"n": r.n, "value": r.value_bits_per_use} for r in reps]}


def cmd_kl_construct(mc, args, prov):
    n = args.n or 1
    mu = parse_mu(args.mu, mc.dM)
    block = fix_memory_input(mc, mu, n, max_dim=args.max_dim, prune=True)
    res = klcodes.pairing_construct(block.kraus)
    out = {"n": n, "n_kraus": block.n_kraus, "code_dim": res.code.dim,
           "guaranteed_floor": mc.dA ** n // 2 ** (block.n_kraus ** 2),
           "halvings": res.halvings, "max_step_residual": res.max_step_residual,
           "diagnostic": res.diagnostic}
    if res.code.dim:
        holds, omega, resid = klcodes.kl_verify(block.kraus, res.code.code_basis, tol=1e-8)
        out.update(kl_holds=bool(holds), kl_residual=resid, omega=_matrix_json(omega))
        if holds:
            rec = klcodes.recovery_channel(block.kraus, res.code)
            out["recovery_fidelity"] = klcodes.entanglement_fidelity(compose(rec, block),
                                                                     res.code.code_basis)
        out["code_basis"] = _matrix_json(res.code.code_basis)
    return out


def cmd_block_rate(mc, args, prov):
    m, l = args.m, args.l or args.n or 1
    mu = parse_mu(args.mu, mc.dM)
    br = blockcode.block_reduce(mc, m, l, tol=args.tol, max_dim=args.max_dim)
    prov["solver"].append({"lower": br.bracket[0], "upper": br.bracket[1]})
    rs = blockcode.rate_sandwich(mc, m, l, mu, restarts=args.restarts, seed=args.seed, max_dim=args.max_dim)
    return {"m": m, "l": l, "error_rate_per_block": br.error_rate_per_block,
            "lower": rs.lower, "upper": rs.upper, "lower_ee": rs.lower_ee, "upper_ee": rs.upper_ee,
            "chi_ab": rs.chi_ab, "chi_ee": rs.chi_ee, "flagged_negative": rs.flagged_negative}


def cmd_causality_check(mc, args, prov):
    n = args.n or 3
    mu = parse_mu(args.mu, mc.dM)
    wc = causal.from_memory_channel(mc, n, mu, max_dim=args.max_dim)
    cuts = causal.all_cuts(wc, samples=args.samples, seed=args.seed)
    worst = max((c.deviation for c in cuts), default=0.0)
    return {"n": n, "max_deviation": worst, "causal": worst <= 1e-9,
            "cuts": [{"z": c.z, "deviation": c.deviation, "mode": c.mode, "samples": c.samples}
                     for c in cuts]}


def cmd_sim_code(mc, args, prov):
    n = args.n or 2
    mu = parse_mu(args.mu, mc.dM)
    if args.m:
        br = blockcode.block_reduce(mc, args.m, 1, tol=args.tol, max_dim=args.max_dim)
        ch, source = br.reduced, f"guarded block, m={args.m}"
        prov["solver"].append({"lower": br.bracket[0], "upper": br.bracket[1]})
    else:
        ch, source = fix_memory_input(mc, mu, 1, prune=True), "single use, memory in mu"
    p = blockcode.random_code_sim(ch, n, args.rate, trials=args.trials, seed=args.seed,
                                  max_dim=args.max_dim)
    return {"n": n, "rate": args.rate, "codebook_size": int(2 ** (n * args.rate)),
            "trials": args.trials, "success_probability": p, "channel": source}


HANDLERS = {
    "describe": cmd_describe,
    "concat": cmd_concat,
    "distance": cmd_distance,
    "forgetful-scan": cmd_forgetful_scan,
    "capacity-bounds": cmd_capacity_bounds,
    "kl-construct": cmd_kl_construct,
    "block-rate": cmd_block_rate,
    "causality-check": cmd_causality_check,
    "sim-code": cmd_sim_code,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="memchan", description="Memory channel toolkit")
    p.add_argument("--version", action="version", version=f"memchan {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("spec", help="channel spec file (JSON)")
    p.add_argument("other", nargs="?", help="second spec file (distance only)")
    p.add_argument("--n", type=int, default=None, help="number of uses / window length")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--setting", choices=("ab", "ae", "eb", "ee"), default=None)
    p.add_argument("--kind", choices=entropics.KINDS, default=entropics.CLASSICAL_CHI)
    p.add_argument("--mu", default=None, help="maximally_mixed, ket:<i>, or a JSON matrix / file")
    p.add_argument("--m", type=int, default=1, help="guard length (block-rate, sim-code)")
    p.add_argument("--l", type=int, default=None, help="payload length (block-rate)")
    p.add_argument("--rate", type=float, default=0.5, help="code rate in bits per use (sim-code)")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--samples", type=int, default=64, help="random cut samples (causality-check)")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--max-dim", type=int, default=4096)
    return p


def _echo(args) -> dict:
    # the destination path is not an input, and echoing it would make reports differ by location
    return {k: v for k, v in sorted(vars(args).items()) if k != "out"}


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True, allow_nan=True) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "value"])
    for row in report["results"]["series"]:
        w.writerow([row["n"], repr(float(row["value"]))])
    return buf.getvalue()


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    env = os.environ.get("MEMCHAN_MAX_DIM")
    if env:
        try:
            args.max_dim = int(env)
        except ValueError:
            print(f"error: MEMCHAN_MAX_DIM={env!r} is not an integer", file=sys.stderr)
            return EXIT_INVALID
    if args.format == "csv" and args.command not in SERIES_COMMANDS:
        print(f"error: csv output is only available for {', '.join(SERIES_COMMANDS)}", file=sys.stderr)
        return EXIT_INVALID
    prov = {"seed": args.seed, "tol": args.tol, "restarts": args.restarts,
            "max_dim": args.max_dim, "inputs": {}, "solver": []}
    try:
        mc, digest = load_spec(args.spec)
        prov["inputs"][args.spec] = digest
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", NonConvergenceWarning)
            results = HANDLERS[args.command](mc, args, prov)
    except DimensionCeilingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CEILING
    except (SpecError, DimensionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    nonconv = [str(w.message) for w in caught if issubclass(w.category, NonConvergenceWarning)]
    prov["nonconvergence"] = nonconv
    report = {"command": args.command, "args": _echo(args), "memchan_version": __version__,
              "results": results, "provenance": prov}
    _emit(render(report, args.format), args.out)
    if nonconv:
        print("warning: solver did not converge; report written", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
