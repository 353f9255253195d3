"""Command-line frontend: ``qki decompose | rates | simulate | bounds | audit``.

Exit codes: 0 success, 2 input error, 3 verification failure, 4 feasibility
cap exceeded, 5 property violation (audit slack or infeasible optimum).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

from . import bounds as bounds_mod
from .errors import (
    DimTooLarge,
    NoFeasiblePoint,
    QkiError,
    SlackViolation,
    VerificationFailed,
)
from .ki.decomposition import KIDecomposition, ki_decompose
from .qcore.io import InputError, load_state
from .qcore.rand import default_seed
from .qcore.states import MultipartiteState
from .rates import rate_region, region_boundary_csv, schumacher_gap
from .sim import (
    audit_converse_chain,
    check_slacks,
    run_assisted,
    run_schumacher_control,
    run_unassisted,
    unassisted_code,
)

EXIT_OK, EXIT_INPUT, EXIT_VERIFY, EXIT_CAP, EXIT_PROPERTY = 0, 2, 3, 4, 5


def fmt(x) -> str:
    return f"{x:.17g}" if isinstance(x, float) else str(x)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# argument parsing helpers


def parse_int_list(text: str) -> list[int]:
    """``2,4,6`` or ``a..b`` or ``a..b:step``."""
    text = text.strip()
    try:
        if ".." in text:
            span, _, step = text.partition(":")
            lo, hi = span.split("..")
            return list(range(int(lo), int(hi) + 1, int(step) if step else 1))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"field '--n': cannot parse {text!r}") from None


def parse_float_list(text: str, field: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"field '{field}': cannot parse {text!r}") from None
    if not vals or not all(math.isfinite(v) for v in vals):
        raise InputError(f"field '{field}': need finite numbers, got {text!r}")
    return vals


def resolve_rate(text: str, ki: KIDecomposition) -> float:
    """A number, ``full`` (log2 |C||Q|), or ``opt+x`` (S(CQ) + x)."""
    text = text.strip()
    dc, _, dq = ki.dims_cnq
    if text == "full":
        return math.log2(dc * dq)
    if text.startswith("opt"):
        rest = text[3:] or "+0"
        try:
            return rate_region(ki, cross_check=False).s_CQ + float(rest)
        except ValueError:
            raise InputError(f"field '--rate': cannot parse {text!r}") from None
    try:
        r = float(text)
    except ValueError:
        raise InputError(f"field '--rate': cannot parse {text!r}") from None
    if r < 0 or not math.isfinite(r):
        raise InputError(f"field '--rate': must be a nonnegative number, got {text!r}")
    return r


def _labels(s: MultipartiteState, given: str | None) -> tuple[str, str]:
    if given:
        parts = [p.strip() for p in given.split(",")]
        if len(parts) != 2 or any(p not in s.labels for p in parts):
            raise InputError(f"field '--labels': need two labels of the state {list(s.labels)}")
        return parts[0], parts[1]
    if len(s.labels) != 2:
        raise InputError(f"field 'dims': expected two systems (source, reference), got {list(s.labels)}")
    return s.labels[0], s.labels[1]


def _load(args) -> tuple[MultipartiteState, KIDecomposition]:
    s = load_state(args.input)
    labels = _labels(s, args.labels)
    ki = ki_decompose(s, seed=args.seed, labels=labels)
    return s, ki


def _summary(ki: KIDecomposition) -> str:
    k = ki.n_blocks
    dq = [b.q_dim for b in ki.blocks]
    mn = [b.n_dim for b in ki.blocks]
    if k == 1:
        return f"1 block, dQ={dq[0]}, mN={mn[0]}"
    return f"{k} blocks, dQ=({', '.join(map(str, dq))}), mN=({', '.join(map(str, mn))})"


# ---------------------------------------------------------------------------
# commands


def cmd_decompose(args) -> int:
    s, ki = _load(args)
    f = ki.verification.get("reconstruction_fidelity", 1.0)
    if 1.0 - f > args.tol:
        raise VerificationFailed(f"reconstruction fidelity {f!r} below 1 - {args.tol}")
    if args.out:
        ki.save(args.out)
    else:
        print(json.dumps(ki.to_json()))
    _say(_summary(ki))
    _say("j,p_j,d_j,m_j")
    for j, b in enumerate(ki.blocks):
        _say(f"{j},{fmt(float(b.p))},{b.q_dim},{b.n_dim}")
    _say(f"verification fidelity {fmt(float(f))}")
    return EXIT_OK


def cmd_rates(args) -> int:
    ki = KIDecomposition.load(args.input)
    if args.samples < 2:
        raise InputError("field '--samples': must be >= 2")
    r = rate_region(ki)
    _say(f"S(C) = {fmt(r.s_C)}")
    _say(f"S(CQ) = {fmt(r.s_CQ)}")
    _say(f"corner unassisted (E,Q) = ({fmt(r.corner_unassisted.E)}, {fmt(r.corner_unassisted.Q)})")
    _say(f"corner assisted (E,Q) = ({fmt(r.corner_assisted.E)}, {fmt(r.corner_assisted.Q)})")
    _say(f"Schumacher gap = {fmt(schumacher_gap(ki))}")
    _emit(region_boundary_csv(r, args.samples), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    s, ki = _load(args)
    ns = parse_int_list(args.n)
    if not ns or min(ns) < 1:
        raise InputError("field '--n': need positive block lengths")
    rows = []
    for n in ns:
        if args.mode == "assisted":
            if args.slack < 0:
                raise InputError("field '--slack': must be nonnegative")
            rep = run_assisted(s, n, args.slack, ki=ki, method=args.method, rounding=args.rounding)
            rows.append(rep.row())
            continue
        if args.rate is None:
            raise InputError("field '--rate': required for unassisted and control modes")
        for text in args.rate.split(","):
            rate = resolve_rate(text, ki)
            if args.mode == "unassisted":
                rep = run_unassisted(s, n, rate, ki=ki, method=args.method, rounding=args.rounding)
            else:
                rep = run_schumacher_control(s, n, rate, labels=ki.labels, method=args.method, rounding=args.rounding)
            rows.append(rep.row())
    _emit(_csv(["n", "rateQ", "rateE", "fidelity", "typical_mass"], rows), args.out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    _, ki = _load(args)
    eps = parse_float_list(args.epsilons, "--epsilons")
    if any(e < 0 or e > 1 for e in eps):
        raise InputError("field '--epsilons': values must lie in [0, 1]")
    if any(b < a for a, b in zip(eps, eps[1:])):
        raise InputError("field '--epsilons': list must be sorted ascending")
    if args.restarts < 0 or args.iters < 1:
        raise InputError("field '--restarts'/'--iters': need restarts >= 0 and iters >= 1")
    budget = bounds_mod.Budget(restarts=args.restarts, iterations=args.iters)
    src = bounds_mod.FactoredSource.from_ki(ki)
    env_j = bounds_mod.envelope(src, eps, "J", budget, args.seed, env_dim=args.env_dim)
    env_z = bounds_mod.envelope(src, eps, "Z", budget, args.seed, env_dim=args.env_dim)
    rows = []
    for ej, ez in zip(env_j, env_z):
        # each column comes from its own optimum; report the weaker fidelity
        fid = min(ej.achieved_fidelity, ez.achieved_fidelity)
        rows.append((ej.epsilon, ej.J_value, ez.Z_value, fid, ej.restarts_used + ez.restarts_used))
    _emit(_csv(["epsilon", "J_lower", "Z_lower", "fidelity", "restarts"], rows), args.out)
    if args.ansatz_json:
        dump = [
            {"epsilon": ej.epsilon, "J": ej.ansatz.to_json(), "Z": ez.ansatz.to_json()}
            for ej, ez in zip(env_j, env_z)
        ]
        Path(args.ansatz_json).write_text(json.dumps(dump))
    return EXIT_OK


def cmd_audit(args) -> int:
    s, ki = _load(args)
    ns = parse_int_list(args.n)
    if len(ns) != 1 or ns[0] < 1:
        raise InputError("field '--n': audit takes one positive block length")
    n = ns[0]
    if args.ebits < 0:
        raise InputError("field '--ebits': must be nonnegative")
    rate = resolve_rate(args.rate, ki)
    code = unassisted_code(ki, n, rate, args.rounding)
    rows = audit_converse_chain(code, s, epsilon=args.epsilon, ki=ki, ebits=args.ebits)
    _emit(_csv(["step", "lhs", "rhs", "slack"], rows), args.out)
    check_slacks(rows, args.tol)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None, help="command tolerance (see README)")
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default: $QKI_SEED or 0)")
    common.add_argument("--out", default=None, help="output file (default: stdout)")

    p = argparse.ArgumentParser(prog="qki", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def state_cmd(name, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.add_argument("input", help="state JSON file")
        sp.add_argument("--labels", default=None, help="source,reference labels (default: the two systems in order)")
        return sp

    d = state_cmd("decompose", "decompose a source into classical, redundant and quantum parts")
    d.set_defaults(func=cmd_decompose, tol_default=1e-9)

    r = sub.add_parser("rates", parents=[common], help="rate region of a saved decomposition")
    r.add_argument("input", help="decomposition JSON file")
    r.add_argument("--samples", type=int, default=101)
    r.set_defaults(func=cmd_rates, tol_default=0.0)

    s = state_cmd("simulate", "exact fidelity of block codes")
    s.add_argument("--n", required=True, help="block lengths: 2,4,6 or 2..8:2")
    s.add_argument("--rate", default=None, help="qubit rates: numbers, 'full' or 'opt+x' (S(CQ)+x)")
    s.add_argument("--mode", choices=["unassisted", "assisted", "control"], default="unassisted")
    s.add_argument("--slack", type=float, default=0.25)
    s.add_argument("--method", choices=["structured", "dense"], default="structured")
    s.add_argument("--rounding", choices=["ceil", "floor"], default="ceil", help="code size 2^{nR} rounded up or down")
    s.set_defaults(func=cmd_simulate, tol_default=0.0)

    b = state_cmd("bounds", "feasible lower bounds on J_eps and Z_eps")
    b.add_argument("--epsilons", required=True, help="sorted comma-separated list")
    b.add_argument("--restarts", type=int, default=4)
    b.add_argument("--iters", type=int, default=40)
    b.add_argument("--env-dim", type=int, default=None)
    b.add_argument("--ansatz-json", default=None, help="write the optimal isometries here")
    b.set_defaults(func=cmd_bounds, tol_default=0.0)

    a = state_cmd("audit", "check the converse entropy chains on a simulated code")
    a.add_argument("--n", required=True)
    a.add_argument("--rate", default="full")
    a.add_argument("--epsilon", type=float, default=None, help="default: 1 - achieved fidelity")
    a.add_argument("--ebits", type=int, default=0)
    a.add_argument("--rounding", choices=["ceil", "floor"], default="ceil")
    a.set_defaults(func=cmd_audit, tol_default=1e-8)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = default_seed()
    if args.tol is None:
        args.tol = args.tol_default
    try:
        return args.func(args)
    except VerificationFailed as exc:
        _say(f"verification failed: {exc}")
        return EXIT_VERIFY
    except DimTooLarge as exc:
        _say(f"feasibility cap exceeded (dimension {exc.dim}): {exc}")
        return EXIT_CAP
    except (SlackViolation, NoFeasiblePoint) as exc:
        _say(f"property violation: {exc}")
        return EXIT_PROPERTY
    except (QkiError, ValueError, OSError) as exc:
        _say(f"input error: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
