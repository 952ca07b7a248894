"""Command-line interface.

System files are JSON documents::

    {"name": "...", "A": [[...]], "B": [[...]], "C": [[...]], "D": [[...]],
     "pair": {"P": [[["p/q", ...]]], "Q": ...}, "supply": "passive" | "gain"}

Numbers may be integers, decimals or rational strings ``"p/q"``; they are
parsed exactly.  Exit status is 0 for a passing verdict, 1 for a failing one
and 2 for errors.
"""
import argparse
import json
import sys as _sys
import time
from fractions import Fraction

import numpy as np

from . import fixtures
from . import polymat as pm
from .extract import (MarginalClosedLoopError, epsilon_feedback, exact_feedback,
                      simulate_extraction)
from .reduction import ChainError, spectral_factor, verify_spectral_factor
from .statespace import StateSpaceSystem
from .storage import (GAIN, PASSIVE, NotDissipativeError, SingularFeedthroughError,
                      available_energy)

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2
DEFAULT_EPSILON = 0.01


class InputError(ValueError):
    """Malformed system file; the message names the offending location."""


# ---------------------------------------------------------------------------
# system files

def _number(x, where):
    if isinstance(x, bool):
        raise InputError(f"{where}: booleans are not numbers")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise InputError(f"{where}: cannot parse {x!r} as a rational") from exc
    raise InputError(f"{where}: expected a number, got {type(x).__name__}")


def _matrix(data, name):
    if isinstance(data, (int, float, str)) and not isinstance(data, bool):
        data = [[data]]
    if not isinstance(data, list) or not all(isinstance(r, list) for r in data):
        raise InputError(f"{name}: expected a nested array (list of rows)")
    rows = [[_number(x, f"{name}[{i}][{j}]") for j, x in enumerate(row)]
            for i, row in enumerate(data)]
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise InputError(f"{name}: rows have different lengths {sorted(widths)}")
    return rows


def _poly_matrix(data, name):
    if not isinstance(data, list) or not all(isinstance(r, list) for r in data):
        raise InputError(f"pair.{name}: expected rows of polynomial coefficient lists")
    try:
        for i, row in enumerate(data):
            for j, p in enumerate(row):
                if not isinstance(p, list):
                    raise InputError(f"pair.{name}[{i}][{j}]: expected a coefficient list")
                for k, c in enumerate(p):
                    _number(c, f"pair.{name}[{i}][{j}][{k}]")
        return pm.PolyMatrix.from_strings(
            [[[str(_number(c, name)) for c in p] for p in row] for row in data])
    except InputError:
        raise
    except (ValueError, IndexError) as exc:
        raise InputError(f"pair.{name}: {exc}") from exc


def parse_system(doc):
    """Build ``(system or None, pair or None, supply or None, name)`` from a parsed document."""
    if not isinstance(doc, dict):
        raise InputError("top level: expected an object")
    name = str(doc.get("name", ""))
    supply = doc.get("supply")
    if supply is not None and supply not in (PASSIVE, GAIN):
        raise InputError(f"supply: expected 'passive' or 'gain', got {supply!r}")
    sys = pair = None
    keys = [k for k in "ABCD" if k in doc]
    if keys:
        if len(keys) != 4:
            raise InputError(f"system: missing {sorted(set('ABCD') - set(keys))}")
        D = _matrix(doc["D"], "D")
        m, n = len(D), len(D[0]) if D else 0
        A = _matrix(doc["A"], "A")
        d = len(A)
        if any(len(r) != d for r in A):
            raise InputError(f"A: expected a square matrix, got {d} rows")
        B = _matrix(doc["B"], "B") if d else []
        C = _matrix(doc["C"], "C") if d else [[] for _ in range(m)]
        if d and (len(B) != d or any(len(r) != n for r in B)):
            raise InputError(f"B: expected shape ({d}, {n})")
        if d and (len(C) != m or any(len(r) != d for r in C)):
            raise InputError(f"C: expected shape ({m}, {d})")
        sys = StateSpaceSystem(pm.fm_to_float(A, d, d), pm.fm_to_float(B, d, n),
                               pm.fm_to_float(C, m, d), pm.fm_to_float(D, m, n), name,
                               exact=(A, B, C, D))
    if "pair" in doc:
        p = doc["pair"]
        if not isinstance(p, dict) or "P" not in p or "Q" not in p:
            raise InputError("pair: expected an object with P and Q")
        P, Q = _poly_matrix(p["P"], "P"), _poly_matrix(p["Q"], "Q")
        if P.rows != Q.rows:
            raise InputError("pair: P and Q must have the same number of rows")
        pair = pm.PolyPair(P, Q)
    if sys is None and pair is None:
        raise InputError("file has neither (A, B, C, D) nor pair")
    return sys, pair, supply, name


def load_system(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_system(doc)


def default_supply(sys, pair, supply):
    if supply:
        return supply
    if sys is not None:
        return PASSIVE if sys.m == sys.n else GAIN
    return PASSIVE if pair.m == pair.n else GAIN


# ---------------------------------------------------------------------------
# reports

def jsonable(x):
    """Convert numpy, complex, rational and polynomial objects to plain JSON values."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, pm.PolyMatrix):
        return x.to_strings()
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": float(np.real(x)), "im": float(np.imag(x))}
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if x is None or isinstance(x, (str, int, bool)):
        return x
    if hasattr(x, "to_dict"):
        return jsonable(x.to_dict())
    return str(x)


def new_report():
    return {"verdict": None, "X_minus": None, "S_a": None, "L": None, "W": None,
            "bounded_above": None, "witness": None, "trace": None, "elapsed_ms": None}


def _sa_terms(storage):
    return [{"coefficient": c, "direction": v} for c, v in storage.terms()]


def _verdict_witness(verdict):
    if verdict is None:
        return None
    return {"condition": verdict.failed_condition, "witness": verdict.witness,
            "details": verdict.details}


def _fill_storage(rep, storage, lmi_report):
    rep["X_minus"] = storage.X
    rep["S_a"] = {"scale": storage.supply.scale, "terms": _sa_terms(storage)}
    if lmi_report is not None:
        rep["bounded_above"] = lmi_report.bounded_above
        if lmi_report.unbounded_witness is not None:
            lam, z = lmi_report.unbounded_witness
            rep["witness"] = {"lambda": lam, "z": z}


def _not_dissipative(rep, exc):
    rep["verdict"] = "fail"
    rep["witness"] = {"condition": exc.condition, "message": str(exc),
                      "pair_test": _verdict_witness(exc.verdict)}
    return EXIT_FAIL


def cmd_check(args, rep):
    sys, pair, supply, _ = load_system(args.file)
    supply = default_supply(sys, pair, supply)
    rep["supply"] = supply
    if sys is None:
        return cmd_pair(args, rep)
    try:
        st, lr = available_energy(sys, supply, tol=args.tol)
    except NotDissipativeError as exc:
        return _not_dissipative(rep, exc)
    rep["verdict"] = "pass"
    _fill_storage(rep, st, lr)
    _attach_trace(args, rep, lr.diagnostics.get("trace"))
    return EXIT_PASS


def _attach_trace(args, rep, trace):
    if args.trace and trace is not None:
        rep["trace"] = trace.to_dict()


def cmd_energy(args, rep):
    sys, pair, supply, _ = load_system(args.file)
    if sys is None:
        raise InputError("energy needs a state-space system (A, B, C, D)")
    supply = default_supply(sys, pair, supply)
    rep["supply"] = supply
    try:
        st, lr = available_energy(sys, supply, tol=args.tol)
        _, factor, trace = spectral_factor(sys, supply)
    except NotDissipativeError as exc:
        return _not_dissipative(rep, exc)
    rep["verdict"] = "pass"
    _fill_storage(rep, st, lr)
    rep["L"], rep["W"] = factor.L, factor.W
    _attach_trace(args, rep, trace)
    return EXIT_PASS


def cmd_factor(args, rep):
    sys, pair, supply, _ = load_system(args.file)
    if sys is None:
        raise InputError("factor needs a state-space system (A, B, C, D)")
    supply = default_supply(sys, pair, supply)
    rep["supply"] = supply
    try:
        st, factor, trace = spectral_factor(sys, supply)
    except NotDissipativeError as exc:
        return _not_dissipative(rep, exc)
    check = verify_spectral_factor(sys, factor, seed=args.seed)
    rep["verdict"] = "pass" if check.passed else "fail"
    rep["X_minus"] = st.X
    rep["L"], rep["W"] = factor.L, factor.W
    rep["factor_check"] = {"residual": check.factor_residual, "rank_ok": check.rank_ok,
                           "closed_loop_ok": check.closed_loop_ok,
                           "hypotheses_met": check.hypotheses_met}
    _attach_trace(args, rep, trace)
    return EXIT_PASS if check.passed else EXIT_FAIL


def cmd_pair(args, rep):
    sys, pair, supply, _ = load_system(args.file)
    supply = default_supply(sys, pair, supply)
    rep["supply"] = supply
    if pair is None:
        pair, _ = pm.behavior_from_realization(sys)
    rep["pair"] = pair.to_strings()
    kind = "pr" if supply == PASSIVE else "br"
    verdict = pm.is_positive_real_pair(pair) if kind == "pr" else pm.is_bounded_real_pair(pair)
    rep["verdict"] = verdict.verdict
    rep["witness"] = _verdict_witness(verdict)
    if verdict.verdict == "fail":
        rep["witness"]["verified"] = pm.verify_witness(pair, verdict, kind)
        return EXIT_FAIL
    return EXIT_PASS


def _law(args, sys, supply):
    if args.epsilon is not None:
        law, Xe = epsilon_feedback(sys, args.epsilon, supply)
        return law, Xe
    st, _ = available_energy(sys, supply, tol=args.tol)
    try:
        return exact_feedback(sys, st.X, supply), st.X
    except (SingularFeedthroughError, MarginalClosedLoopError):
        return epsilon_feedback(sys, DEFAULT_EPSILON, supply)


def cmd_feedback(args, rep):
    sys, pair, supply, _ = load_system(args.file)
    if sys is None:
        raise InputError("feedback needs a state-space system (A, B, C, D)")
    supply = default_supply(sys, pair, supply)
    rep["supply"] = supply
    try:
        law, X = _law(args, sys, supply)
    except NotDissipativeError as exc:
        return _not_dissipative(rep, exc)
    rep["verdict"] = "pass"
    rep["feedback"] = {"K": law.K, "kind": law.kind, "epsilon": law.epsilon,
                       "closed_loop_spectrum": law.closed_loop_spectrum}
    rep["X_minus" if law.kind == "exact" else "X_epsilon"] = X
    return EXIT_PASS


def _vector(text, d):
    try:
        vals = [float(Fraction(v)) for v in text.replace(",", " ").split()]
    except (ValueError, ZeroDivisionError) as exc:
        raise InputError(f"--x0: {exc}") from exc
    if len(vals) != d:
        raise InputError(f"--x0: expected {d} entries, got {len(vals)}")
    return np.array(vals)


def cmd_extract(args, rep):
    sys, pair, supply, _ = load_system(args.file)
    if sys is None:
        raise InputError("extract needs a state-space system (A, B, C, D)")
    supply = default_supply(sys, pair, supply)
    rep["supply"] = supply
    x0 = _vector(args.x0, sys.d)
    try:
        law, _ = _law(args, sys, supply)
        st, lr = available_energy(sys, supply, tol=args.tol)
    except NotDissipativeError as exc:
        return _not_dissipative(rep, exc)
    run = simulate_extraction(sys, law, x0, args.horizon, args.step, target=st.value(x0))
    rep["verdict"] = "pass" if run.extracted_energy <= run.target + 1e-6 else "fail"
    _fill_storage(rep, st, lr)
    rep["extraction"] = {"energy": run.extracted_energy, "target": run.target,
                         "horizon": run.horizon, "step": run.step, "kind": law.kind,
                         "epsilon": law.epsilon}
    if args.table:
        with open(args.table, "w") as fh:
            fh.write(run.table())
        rep["extraction"]["table"] = args.table
    return EXIT_PASS if rep["verdict"] == "pass" else EXIT_FAIL


def cmd_fixtures(args, rep):
    results = fixtures.reference_checks(seed=args.seed)
    rep["checks"] = [r.to_dict() for r in results]
    ok = all(r.passed for r in results)
    rep["verdict"] = "pass" if ok else "fail"
    return EXIT_PASS if ok else EXIT_FAIL


COMMANDS = {"check": cmd_check, "energy": cmd_energy, "feedback": cmd_feedback,
            "extract": cmd_extract, "pair": cmd_pair, "factor": cmd_factor,
            "fixtures": cmd_fixtures}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=1e-8, help="boundary tolerance")
    common.add_argument("--json", action="store_true", help="emit the report as JSON")
    common.add_argument("--trace", action="store_true", help="include the reduction trace")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    parser = argparse.ArgumentParser(prog="passivity", parents=[common],
                                     description="Passivity and non-expansivity toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("check", "energy", "pair", "factor"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("file")
    p = sub.add_parser("feedback", parents=[common])
    p.add_argument("file")
    p.add_argument("--epsilon", type=float, default=None)
    p = sub.add_parser("extract", parents=[common])
    p.add_argument("file")
    p.add_argument("--x0", required=True, help="initial state, comma or space separated")
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--table", default=None, help="write the sampled run to this file")
    sub.add_parser("fixtures", parents=[common])
    return parser


def _print_text(rep, out):
    for key, val in rep.items():
        if val is None:
            continue
        if key == "checks":
            for c in val:
                out.write(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}  ({c['detail']})\n")
            continue
        if isinstance(val, (list, dict)):
            val = json.dumps(val)
        out.write(f"{key}: {val}\n")


def main(argv=None, out=None):
    out = out or _sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    rep = new_report()
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](args, rep)
    except InputError as exc:
        rep["verdict"] = "error"
        rep["error"] = f"malformed input: {exc}"
        code = EXIT_ERROR
    except (ChainError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        rep["verdict"] = "error"
        rep["error"] = f"{type(exc).__name__}: {exc}"
        code = EXIT_ERROR
    rep["elapsed_ms"] = (time.perf_counter() - t0) * 1e3
    rep = jsonable(rep)
    if args.json:
        out.write(json.dumps(rep) + "\n")
    else:
        _print_text(rep, out)
    return code


def entry():
    _sys.exit(main())
