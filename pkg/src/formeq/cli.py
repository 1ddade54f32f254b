"""Command line front end.

    formeq <subcommand> [--problem P.json] [--seed S] [--tol T] [--out DIR] [--threads K]

Exit codes: 0 pass or converged, 2 cone exit (or cone check failed),
3 input error, 4 verification failure or stalled solve.
"""

import argparse
import csv
import io
import json
import os
import sys

import numpy as np
from jsonschema import Draft202012Validator

EXIT_OK, EXIT_CONE, EXIT_INPUT, EXIT_VERIFY = 0, 2, 3, 4

_number = {"type": "number"}
_complex = {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}
_matrix = {"type": "array", "minItems": 1,
           "items": {"type": "array", "minItems": 1, "items": {"anyOf": [_number, _complex]}}}
_component = {
    "type": "object", "required": ["k", "entries"],
    "properties": {
        "k": {"type": "integer", "minimum": 1},
        "entries": {"type": "array", "items": {
            "type": "array", "minItems": 4, "maxItems": 4,
            "prefixItems": [{"type": "array", "items": {"type": "integer", "minimum": 1}},
                            {"type": "array", "items": {"type": "integer", "minimum": 1}},
                            _number, _number]}},
    },
}
_power = {"type": "object", "description": "degree -> weight of rho^k/k!",
          "patternProperties": {"^[0-9]+$": _number}, "additionalProperties": False}
_bundle = {
    "type": "object",
    "properties": {
        "components": {"type": "array", "items": _component},
        "rho_powers": _power,
        "f": _number,
    },
    "additionalProperties": False,
}
_field = {"anyOf": [_number, {
    "type": "object", "required": ["modes"],
    "properties": {
        "mean": _number,
        "modes": {"type": "array", "items": {
            "type": "object", "required": ["k"],
            "properties": {"k": {"type": "array", "items": {"type": "integer"}},
                           "cos": _number, "sin": _number},
            "additionalProperties": False}},
    },
    "additionalProperties": False}]}

_base = {"n": {"type": "integer", "minimum": 1, "maximum": 5}, "rho": _matrix}
SCHEMAS = {
    "check-cone": {"type": "object", "required": ["n", "A"], "properties": {
        **_base, "bundle": _bundle, "kappa": {"type": "number", "exclusiveMinimum": 0},
        "A": _matrix, "samples": {"type": "integer", "minimum": 1}}},
    "solve-ray": {"type": "object", "required": ["n", "A", "B", "kappa"], "properties": {
        **_base, "bundle": _bundle, "kappa": {"type": "number", "exclusiveMinimum": 0},
        "A": _matrix, "B": _matrix}},
    "solve-torus": {"type": "object", "required": ["n", "N", "omega0"], "properties": {
        **_base, "N": {"type": "integer", "minimum": 4}, "omega0": _matrix, "bundle": _bundle,
        "f": _field, "kappa": {"type": "number", "exclusiveMinimum": 0}, "u_init": _field}},
    "dhym": {"type": "object", "required": ["n", "omega0"], "properties": {
        **_base, "N": {"type": "integer", "minimum": 4}, "omega0": _matrix,
        "theta": _number, "u_init": _field}},
    "functional": {"type": "object", "required": ["n", "N", "omega0"], "properties": {
        **_base, "N": {"type": "integer", "minimum": 4}, "omega0": _matrix, "bundle": _bundle,
        "f": _field, "kappa": {"type": "number", "exclusiveMinimum": 0}, "u_init": _field,
        "u_field": {"type": "string"}, "perturbations": {"type": "integer", "minimum": 0}}},
}


class InputError(Exception):
    def __init__(self, message, pointer=""):
        super().__init__(message)
        self.pointer = pointer


# ---------------------------------------------------------------------------
# input


def _pointer(path):
    return "/" + "/".join(str(p) for p in path)


def load_problem(path, command):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as e:
        raise InputError("cannot read problem file: %s" % e)
    except json.JSONDecodeError as e:
        raise InputError("malformed JSON at line %d column %d: %s" % (e.lineno, e.colno, e.msg))
    errors = sorted(Draft202012Validator(SCHEMAS[command]).iter_errors(obj),
                    key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        e = errors[0]
        path = list(e.absolute_path)
        if e.validator == "required" and isinstance(e.instance, dict):
            path.append(next(k for k in e.validator_value if k not in e.instance))
        raise InputError(e.message, _pointer(path))
    return obj


def _matrix(obj, key, n):
    from .form_algebra import matrix_from_json

    if key not in obj:
        return np.eye(n, dtype=complex)
    try:
        M = matrix_from_json(obj[key])
    except ValueError as e:
        raise InputError(str(e), "/" + key)
    if M.shape != (n, n):
        raise InputError("expected a %d x %d matrix" % (n, n), "/" + key)
    if np.abs(M - M.conj().T).max() > 1e-12 * max(1.0, np.abs(M).max()):
        raise InputError("matrix is not Hermitian", "/" + key)
    return M


def _bundle(obj, n, rho):
    from .form_algebra import FormBundle, component_from_json, power_form

    desc = obj.get("bundle", {})
    comps = {}
    for i, item in enumerate(desc.get("components", [])):
        if item["k"] >= n:
            raise InputError("component degree must be below n", "/bundle/components/%d/k" % i)
        try:
            c = component_from_json(item, n)
        except (KeyError, IndexError):
            raise InputError("index out of range", "/bundle/components/%d/entries" % i)
        comps[c.k] = comps[c.k] + c if c.k in comps else c
    for key, w in desc.get("rho_powers", {}).items():
        k = int(key)
        if not 1 <= k <= n - 1:
            raise InputError("degree out of range", "/bundle/rho_powers/" + key)
        c = power_form(rho, k, w)
        comps[k] = comps[k] + c if k in comps else c
    return FormBundle(n, rho, comps, float(desc.get("f", 0.0)))


def _field(desc, n, N, where):
    from .solver import grid_coords

    if desc is None:
        return None
    if isinstance(desc, (int, float)):
        return np.full((N,) * (2 * n), float(desc))
    X = grid_coords(n, N)
    u = np.full(X[0].shape, float(desc.get("mean", 0.0)))
    for i, m in enumerate(desc["modes"]):
        k = m["k"]
        if len(k) != 2 * n:
            raise InputError("wavevector needs %d entries" % (2 * n), "%s/modes/%d/k" % (where, i))
        phase = sum(2 * np.pi * k[a] * X[a] for a in range(2 * n))
        u = u + m.get("cos", 0.0) * np.cos(phase) + m.get("sin", 0.0) * np.sin(phase)
    return u


def _torus_problem(obj):
    from .solver import make_problem

    n, N = obj["n"], obj["N"]
    rho = _matrix(obj, "rho", n)
    omega0 = _matrix(obj, "omega0", n)
    bundle = _bundle(obj, n, rho)
    f = _field(obj.get("f", bundle.f), n, N, "/f")
    try:
        return make_problem(n, N, rho, omega0, bundle, f, obj.get("kappa"))
    except ValueError as e:
        raise InputError(str(e), "/f")


# ---------------------------------------------------------------------------
# output


def _fmt(x):
    return repr(float(x))


def _clean(obj):
    """Make a report JSON-safe: numpy scalars to Python, NaN and inf to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_table(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in r])
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def write_fields(path, n, N, fields):
    """Grid fields as CSV: 1-based indices, coordinates x_1..x_n, y_1..y_n, then values."""
    names = list(fields)
    header = ["i%d" % (a + 1) for a in range(2 * n)]
    header += ["x%d" % (a + 1) for a in range(n)] + ["y%d" % (a + 1) for a in range(n)] + names
    rows = []
    for idx in np.ndindex(*(N,) * (2 * n)):
        row = [i + 1 for i in idx] + [_fmt(i / N) for i in idx]
        row += [_fmt(fields[k][idx]) for k in names]
        rows.append(row)
    write_table(path, header, rows)


def read_field(path, n, N, column="u"):
    u = np.zeros((N,) * (2 * n))
    with open(path) as fh:
        for rec in csv.DictReader(fh):
            idx = tuple(int(rec["i%d" % (a + 1)]) - 1 for a in range(2 * n))
            u[idx] = float(rec[column])
    return u


def _trace_rows(trace):
    return [[r.t, r.newton_iters, r.residual_sup, r.min_eig, r.q_min, r.functional]
            for r in trace.rows]


_TRACE_HEADER = ["t", "newton_iters", "residual_sup", "min_eig", "q_min", "functional"]


# ---------------------------------------------------------------------------
# subcommands


def cmd_check_cone(obj, args):
    from .cone import bounded_roots, subsolution_check
    from .operator import OperatorContext

    n = obj["n"]
    rho = _matrix(obj, "rho", n)
    A = _matrix(obj, "A", n)
    if np.linalg.eigvalsh(A)[0] <= 0:
        raise InputError("A must be positive definite", "/A")
    bundle = _bundle(obj, n, rho)
    kappa = obj.get("kappa")
    if kappa is None:
        from .operator import F
        kappa = float(F(A, OperatorContext(bundle, 1.0)))
    ctx = OperatorContext(bundle, kappa)
    rep = subsolution_check(A, ctx, samples=obj.get("samples", 4096), seed=args.seed)
    bounded, tbig = bounded_roots(A, ctx, seed=args.seed)
    report = {"command": "check-cone", "seed": args.seed, "kappa": kappa, "cone": rep.as_dict(),
              "bounded_roots": bounded, "largest_root": tbig}
    write_json(os.path.join(args.out, "report.json"), report)
    return (EXIT_OK if rep.passed else EXIT_CONE), report


def cmd_solve_ray(obj, args):
    from .operator import OperatorContext
    from .solver import solve_ray

    n = obj["n"]
    rho = _matrix(obj, "rho", n)
    A, B = _matrix(obj, "A", n), _matrix(obj, "B", n)
    if np.linalg.eigvalsh(A)[0] <= 0:
        raise InputError("A must be positive definite", "/A")
    if np.linalg.eigvalsh(B)[0] < -1e-12:
        raise InputError("B must be positive semidefinite", "/B")
    ctx = OperatorContext(_bundle(obj, n, rho), obj["kappa"])
    t = solve_ray(A, B, ctx, tol=args.tol)
    report = {"command": "solve-ray", "seed": args.seed, "root": t, "found": t is not None}
    write_json(os.path.join(args.out, "report.json"), report)
    return EXIT_OK, report


def _solve_exit(trace):
    return {"CONVERGED": EXIT_OK, "CONE_EXIT": EXIT_CONE}.get(trace.status, EXIT_VERIFY)


def cmd_solve_torus(obj, args):
    from .solver import continuity_solve, monitor_estimates

    p = _torus_problem(obj)
    u0 = _field(obj.get("u_init"), p.n, p.N, "/u_init")
    u, trace = continuity_solve(p, u_init=u0, tol=args.tol)
    exit_point = None
    if trace.exit_point is not None:
        exit_point = dict(trace.exit_point, index=[i + 1 for i in trace.exit_point["index"]])
    report = {"command": "solve-torus", "seed": args.seed, "status": trace.status,
              "message": trace.message, "kappa": p.kappa, "newton_total": trace.newton_total,
              "warnings": trace.warnings, "exit_point": exit_point,
              "monitor": monitor_estimates(u, p)}
    write_json(os.path.join(args.out, "report.json"), report)
    write_table(os.path.join(args.out, "trace.csv"), _TRACE_HEADER, _trace_rows(trace))
    write_fields(os.path.join(args.out, "u.csv"), p.n, p.N, {"u": u})
    return _solve_exit(trace), report


def cmd_dhym(obj, args):
    from .dhym import DhymInstance, DegeneratePhaseError, h1_predicate, solve_dhym

    n = obj["n"]
    rho = _matrix(obj, "rho", n)
    omega0 = _matrix(obj, "omega0", n)
    try:
        inst = DhymInstance(n, rho, omega0, obj.get("theta"))
    except DegeneratePhaseError as e:
        raise InputError(str(e), "/omega0")
    report = {"command": "dhym", "seed": args.seed, "theta": inst.theta,
              "cot_theta": inst.cot, "theta_max": np.pi / max(n - 1, 1),
              "in_range": inst.in_theorem_range(), "h1": h1_predicate(inst, seed=args.seed)}
    N = obj.get("N", 16)
    u0 = _field(obj.get("u_init"), n, N, "/u_init")
    try:
        u, trace, res = solve_dhym(inst, N, u_init=u0, tol=args.tol)
    except ValueError as e:
        raise InputError(str(e), "/omega0")
    report.update({"status": trace.status, "message": trace.message,
                   "newton_total": trace.newton_total,
                   "max_abs_residual": {k: float(np.nanmax(np.abs(v))) for k, v in res.items()}})
    write_json(os.path.join(args.out, "report.json"), report)
    write_table(os.path.join(args.out, "trace.csv"), _TRACE_HEADER, _trace_rows(trace))
    fields = {"u": u}
    fields.update({"r_" + k: v for k, v in res.items()})
    write_fields(os.path.join(args.out, "u.csv"), n, N, fields)
    return _solve_exit(trace), report


def cmd_functional(obj, args, problem_path):
    from .solver import band_limited_field, continuity_solve
    from .variational import functional_F, segment_convexity

    p = _torus_problem(obj)
    if "u_field" in obj:
        path = os.path.join(os.path.dirname(os.path.abspath(problem_path)), obj["u_field"])
        try:
            u = read_field(path, p.n, p.N)
        except (OSError, KeyError, ValueError) as e:
            raise InputError("cannot read u_field: %s" % e, "/u_field")
    else:
        u, trace = continuity_solve(p, u_init=_field(obj.get("u_init"), p.n, p.N, "/u_init"),
                                    tol=args.tol, with_functional=False)
        if not trace.converged:
            report = {"command": "functional", "seed": args.seed, "status": trace.status}
            write_json(os.path.join(args.out, "report.json"), report)
            return _solve_exit(trace), report
    F0 = functional_F(u, p)
    rows, worst_gap, worst_conv = [], np.inf, np.inf
    for j in range(obj.get("perturbations", 8)):
        v = band_limited_field(p.n, p.N, 2, seed=args.seed * 1000 + j)
        gap = functional_F(u + 1e-2 * v, p) - F0
        conv = min(segment_convexity(u, u + 1e-2 * v, p, ts=[0.0, 0.5, 1.0]))
        worst_gap, worst_conv = min(worst_gap, gap), min(worst_conv, conv)
        rows.append([j, gap, conv])
    report = {"command": "functional", "seed": args.seed, "functional": F0,
              "shift_defect": abs(functional_F(u + 1.0, p) - F0),
              "min_perturbation_gap": worst_gap, "min_second_variation": worst_conv,
              "local_minimizer": bool(worst_gap >= 0)}
    write_json(os.path.join(args.out, "report.json"), report)
    write_table(os.path.join(args.out, "perturbations.csv"), ["j", "gap", "second_variation"], rows)
    return (EXIT_OK if worst_gap >= 0 and worst_conv >= -1e-10 else EXIT_VERIFY), report


def cmd_verify(args):
    from .verify import run_suite

    results = run_suite(args.seed)
    report = {"command": "verify", "seed": args.seed, "checks": [r.as_dict() for r in results],
              "passed": all(r.passed for r in results)}
    write_json(os.path.join(args.out, "report.json"), report)
    write_table(os.path.join(args.out, "checks.csv"), ["name", "count", "max_error", "tol", "pass"],
                [[r.name, r.count, r.max_error, r.tol, r.passed] for r in results])
    return (EXIT_OK if report["passed"] else EXIT_VERIFY), report


COMMANDS = ["check-cone", "solve-ray", "solve-torus", "dhym", "functional", "verify"]


def build_parser():
    ap = argparse.ArgumentParser(prog="formeq", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--problem", help="problem JSON file (all commands except verify)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tol", type=float, default=1e-11)
    ap.add_argument("--out", default="formeq_out")
    ap.add_argument("--threads", type=int, default=None)
    return ap


def run(args):
    from threadpoolctl import threadpool_limits

    if args.seed < 0:
        raise InputError("seed must be nonnegative", "")
    os.makedirs(args.out, exist_ok=True)
    with threadpool_limits(limits=args.threads):
        if args.command == "verify":
            return cmd_verify(args)
        if not args.problem:
            raise InputError("--problem is required for %s" % args.command, "")
        obj = load_problem(args.problem, args.command)
        if args.command == "check-cone":
            return cmd_check_cone(obj, args)
        if args.command == "solve-ray":
            return cmd_solve_ray(obj, args)
        if args.command == "solve-torus":
            return cmd_solve_torus(obj, args)
        if args.command == "dhym":
            return cmd_dhym(obj, args)
        return cmd_functional(obj, args, args.problem)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        code, report = run(args)
    except InputError as e:
        msg = {"error": str(e), "pointer": e.pointer}
        print(json.dumps(msg, sort_keys=True), file=sys.stderr)
        return EXIT_INPUT
    summary = {k: report[k] for k in ("command", "status", "passed") if k in report}
    summary["exit"] = code
    print(json.dumps(_clean(summary), sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
