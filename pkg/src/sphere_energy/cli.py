"""Command-line harness: ``sphere-energy <command> ...``.

Every run prints a JSON (or CSV) report with an embedded manifest holding
the argv, parameters, seed, package version and wall time; ``--out`` also
writes the report to a file. Exit codes: 0 pass, 1 check failed, 2 usage.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import _accel, energy as energy_mod, gegenbauer, optimizer, sdp
from .geomcore import face_functional
from .measures import DiscreteMeasure, UniformSphere, parse_measure
from .specs import SpecError, compact_to_json, parse_kernel

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover - running from a checkout
        return "0+unknown"


# ---------------------------------------------------------------------------
# serialization with 17 significant digits


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(bool(obj) if obj is not None else None)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if all(isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(inner + dumps(v, indent, _level + 1) for v in obj) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _flat(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flat(v, key + "."))
        elif isinstance(v, (list, tuple, np.ndarray)):
            out[key] = dumps(v, indent=0).replace("\n", "")
        elif isinstance(v, (float, np.floating)):
            out[key] = _fmt_float(float(v))
        else:
            out[key] = v
    return out


def to_csv(rows: list[dict]) -> str:
    flat = [_flat(r) for r in rows]
    header = []
    for r in flat:
        header += [k for k in r if k not in header]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    w.writerows(flat)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# helpers


def _kernel(text: str, d: int | None):
    try:
        return parse_kernel(text, d)
    except SpecError as exc:
        raise UsageError(f"--kernel: {exc}" + (f" (field {exc.field!r})" if exc.field else "")) from None


def _kernel_json(text: str) -> dict:
    text = text.strip()
    return json.loads(text) if text.startswith("{") else compact_to_json(text)


def _measure(text: str):
    try:
        return parse_measure(text)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"--measure: {exc}") from None


def _closed_form(kdoc: dict, measure) -> tuple[str, float] | None:
    kind, s = kdoc.get("kind"), float(kdoc.get("s", 2.0))
    d = measure.dim
    try:
        if kind == "V" and s == 2.0:
            return "V2", energy_mod.closed_form_max("V2", d, int(kdoc["k"]))
        if kind == "A" and s == 2.0:
            return "A2", energy_mod.closed_form_max("A2", d, int(kdoc["k"]))
        if kind == "frame":
            return "frame_min", energy_mod.closed_form_max("frame_min", d)
    except (ValueError, KeyError):
        return None
    return None


def theoretical_max(kdoc: dict, N: int, d: int) -> tuple[float, bool] | None:
    """Jensen bound for A^s / V^s with 0 < s <= 2, and whether it is known to be attained."""
    kind, s = kdoc.get("kind"), float(kdoc.get("s", 2.0))
    if kind not in ("A", "V") or not 0 < s <= 2 or N < int(kdoc.get("k", N + 1)):
        return None
    try:
        return energy_mod.discrete_max_bound(kind, int(kdoc["k"]), d, N, s)
    except (ValueError, KeyError):
        return None


# ---------------------------------------------------------------------------
# commands


def cmd_energy(args) -> tuple[dict, int]:
    measure = _measure(args.measure)
    kdoc = _kernel_json(args.kernel)
    kernel = _kernel(args.kernel, args.d or measure.dim)
    mc = int(float(args.mc))
    try:
        est = energy_mod.energy_integral(kernel, measure, mc_samples=mc, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = {"kernel": kernel.spec, "measure": measure.to_json() if isinstance(measure, UniformSphere) else args.measure,
           **est.to_json()}
    cf = _closed_form(kdoc, measure)
    if cf is not None:
        name, val = cf
        out["closed_form"] = {"name": name, "value": val}
        out["gap"] = est.value - val
        out["z_score"] = est.z_score(val)
    return out, EXIT_OK


def cmd_verify(args) -> tuple[dict, int]:
    if args.psd:
        if not args.kernel:
            raise UsageError("--psd needs --kernel")
        return _psd(args)
    if not args.identity:
        raise UsageError("give --identity NAME or --psd --kernel SPEC")
    d = args.d or 4
    try:
        res = sdp.identity_check(args.identity, d, args.trials, seed=args.seed)
    except KeyError as exc:
        raise UsageError(str(exc)) from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ok = res <= args.tol
    return ({"name": args.identity, "d": d, "trials": args.trials, "max_residual": res,
             "tol": args.tol, "pass": ok}, EXIT_OK if ok else EXIT_FAIL)


def _psd(args) -> tuple[dict, int]:
    kernel = _kernel(args.kernel, args.d)
    rep = optimizer.psd_empirical(kernel, args.points, args.tails, seed=args.seed)
    out = {"kernel": kernel.spec, "n_points": args.points, "n_tails": args.tails, **rep.to_json()}
    out.pop("per_tail")
    return out, EXIT_OK if rep.consistent else EXIT_FAIL


def cmd_psd_check(args) -> tuple[dict, int]:
    return _psd(args)


def cmd_optimize(args) -> tuple[dict, int]:
    cfg = optimizer.AscentConfig(restarts=args.restarts, max_iters=args.max_iters, seed=args.seed,
                                 workers=args.workers or 1)
    if args.face_functional:
        params = {}
        for tok in args.face_functional:
            key, _, val = tok.partition("=")
            if key not in ("j", "s", "d") or not val:
                raise UsageError(f"--face-functional expects j=.. s=.. d=.., got {tok!r}")
            params[key] = float(val)
        j, s = int(params.get("j", 1)), params.get("s", 1.0)
        d = int(params.get("d", args.d or 2))
        if not 1 <= j <= d:
            raise UsageError(f"face dimension j={j} out of range for d={d}")
        res = optimizer.maximize_objective(lambda X: face_functional(X, j, s), d + 1, d, cfg)
        return ({"objective": {"face_functional": {"j": j, "s": s, "d": d}}, **res.to_json()}, EXIT_OK)
    if args.phase:
        d = args.d or 3
        rows = []
        for s in args.s or [1.0, 2.0, 3.0]:
            for r in energy_mod.two_input_phase_report(args.phase, s, d, mc_samples=int(float(args.mc)),
                                                       seed=args.seed):
                rows.append({"kind": args.phase, "s": s, "d": d, **r})
        return {"table": rows}, EXIT_OK
    if not args.kernel or not args.N or not args.d:
        raise UsageError("optimize needs --kernel, --N and --d (or --face-functional / --phase)")
    kernel = _kernel(args.kernel, args.d)
    res = optimizer.maximize_discrete(kernel, args.N, args.d, cfg)
    out = {"kernel": kernel.spec, "N": args.N, "d": args.d, **res.to_json()}
    bound = theoretical_max(_kernel_json(args.kernel), args.N, args.d)
    code = EXIT_OK
    if bound is not None:
        tmax, attained = bound
        gap = (tmax - res.best_energy) / abs(tmax)
        out["theoretical_max" if attained else "upper_bound"] = tmax
        out["gap"] = gap
        if attained and abs(gap) > args.gap_tol:
            code = EXIT_FAIL
    out["certificate"] = optimizer.local_max_certificate(kernel, res.best_config, trials=200, seed=args.seed)
    return out, code


def cmd_gegenbauer(args) -> tuple[dict, int]:
    kind = args.kind.upper()
    if kind not in ("A", "V"):
        raise UsageError("--kind must be A or V")
    if args.action == "sign-test":
        try:
            rep = gegenbauer.maclaurin_sign_test(args.s, kind, args.terms)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        return ({"kind": kind, "s": args.s, "coeffs": list(rep.coeffs), "powers": list(rep.powers),
                 "all_nonpositive": rep.all_nonpositive, "offending": rep.offending}, EXIT_OK)
    d = args.d or 3
    s = args.s
    f = (lambda t: (2 - 2 * t) ** (s / 2)) if kind == "A" else (lambda t: (1 - t * t) ** (s / 2))
    ser = gegenbauer.expand_in_gegenbauer(lambda t: -f(t), d, args.M)
    ok, bad = gegenbauer.schoenberg_pd_test(ser, from_m=1)
    return ({"kind": kind, "s": s, "d": d, "series_of": f"-{kind}^s", **ser.to_json(),
             "converged": ser.converged, "pd_mod_constant": ok, "offending": bad}, EXIT_OK)


def _manifest_files(paths) -> list[Path]:
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out += sorted(p.glob("*.json"))
        elif p.exists():
            out.append(p)
        else:
            raise UsageError(f"missing manifest {p}")
    return out


def cmd_report(args) -> tuple[dict, int]:
    files = _manifest_files(args.inputs)
    seen, rows = set(), []
    for f in files:
        doc = json.loads(f.read_text())
        man = doc.get("manifest", doc)
        body = {k: v for k, v in doc.items() if k != "manifest"}
        digest = hashlib.sha256(json.dumps({"params": man.get("params"), "body": body},
                                           sort_keys=True).encode()).hexdigest()
        if digest in seen:
            continue
        seen.add(digest)
        rows.append({"file": str(f), "command": man.get("command"), "seed": man.get("seed"),
                     "exit_code": man.get("exit_code"),
                     "status": "pass" if man.get("exit_code", 0) == 0 else "fail",
                     "hash": digest[:16]})
    header = ["file", "command", "seed", "exit_code", "status", "hash"]
    table = to_csv(rows) if rows else ",".join(header) + "\n"
    if args.table:
        Path(args.table).write_text(table)
    summary = [f"{r['command']}: {r['status']} ({r['file']})" for r in rows]
    return {"rows": rows, "n_unique": len(rows), "n_files": len(files), "summary": summary,
            "table_csv": table}, EXIT_OK


COMMANDS = {"energy": cmd_energy, "verify": cmd_verify, "verify-identity": cmd_verify,
            "psd-check": cmd_psd_check, "optimize": cmd_optimize, "gegenbauer": cmd_gegenbauer,
            "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    def global_flags(parser, suppress):
        # flags may sit before or after the subcommand; the subcommand copy
        # must not reset a value given up front
        dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        parser.add_argument("--seed", type=int, default=dflt(0))
        parser.add_argument("--workers", type=int, default=dflt(None))
        parser.add_argument("--out", default=dflt(None), help="also write the report here")
        parser.add_argument("--format", choices=("json", "csv"), default=dflt("json"))

    common = argparse.ArgumentParser(add_help=False)
    global_flags(common, suppress=True)
    p = argparse.ArgumentParser(prog="sphere-energy",
                                description="Multivariate geometric energies on spheres.")
    global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("energy", parents=[common], help="energy integral of a kernel")
    e.add_argument("--kernel", required=True)
    e.add_argument("--measure", required=True)
    e.add_argument("--mc", default="1000000")
    e.add_argument("--d", type=int, default=None)

    for name in ("verify", "verify-identity"):
        v = sub.add_parser(name, parents=[common], help="identity or PSD checks")
        v.add_argument("--identity", "--name", dest="identity")
        v.add_argument("--d", type=int, default=None)
        v.add_argument("--trials", type=int, default=10000)
        v.add_argument("--tol", type=float, default=1e-10)
        v.add_argument("--psd", action="store_true")
        v.add_argument("--kernel")
        v.add_argument("--points", type=int, default=60)
        v.add_argument("--tails", type=int, default=20)

    c = sub.add_parser("psd-check", parents=[common], help="empirical k-positive definiteness")
    c.add_argument("--kernel", required=True)
    c.add_argument("--d", type=int, required=True)
    c.add_argument("--points", type=int, default=60)
    c.add_argument("--tails", type=int, default=20)

    o = sub.add_parser("optimize", parents=[common], help="maximize a discrete energy")
    o.add_argument("--kernel")
    o.add_argument("--N", type=int)
    o.add_argument("--d", type=int)
    o.add_argument("--restarts", type=int, default=30)
    o.add_argument("--max-iters", type=int, default=5000)
    o.add_argument("--gap-tol", type=float, default=1e-5)
    o.add_argument("--face-functional", nargs="+", metavar="KEY=VAL")
    o.add_argument("--phase", choices=("A", "V"), help="two-input phase table instead")
    o.add_argument("--s", type=float, nargs="+")
    o.add_argument("--mc", default="400000")

    g = sub.add_parser("gegenbauer", parents=[common], help="expansions and sign tests")
    g.add_argument("action", choices=("expand", "sign-test"))
    g.add_argument("--kind", default="A")
    g.add_argument("--s", type=float, default=1.0)
    g.add_argument("--d", type=int, default=None)
    g.add_argument("--M", type=int, default=20)
    g.add_argument("--terms", type=int, default=25)

    r = sub.add_parser("report", parents=[common], help="aggregate run manifests")
    r.add_argument("inputs", nargs="*")
    r.add_argument("--table", default=None, help="write the CSV table here")
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    env_seed = os.environ.get("SPHERE_ENERGY_SEED")
    if env_seed:
        try:
            args.seed = int(env_seed)
        except ValueError:
            parser.error(f"SPHERE_ENERGY_SEED must be an integer, got {env_seed!r}")
    if args.workers:
        _accel.set_threads(args.workers)
    t0 = time.perf_counter()
    try:
        body, code = COMMANDS[args.command](args)
    except (UsageError, SpecError) as exc:
        print(f"sphere-energy: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    params = {k: v for k, v in vars(args).items() if k not in ("out", "format")}
    body["manifest"] = {"command": args.command, "argv": argv, "params": params, "seed": args.seed,
                        "version": version(), "backend": _accel.get_backend(),
                        "wall_time": time.perf_counter() - t0, "exit_code": code}
    if args.format == "csv":
        rows = body.get("table") or body.get("rows") or [{k: v for k, v in body.items() if k != "manifest"}]
        text = to_csv(rows)
    else:
        text = dumps(body) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(dumps(body) + "\n" if args.format == "json" else text)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
