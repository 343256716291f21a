"""Command line front end: ``breuil <task> <file>... [options]``.

Exit codes: 0 certified, 1 certification failed (or an engine rejected the
input), 2 input error, 3 precision or step budget exhausted.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Sequence

from .errors import BreuilError, BudgetExceeded, ParseError, PrecisionExhausted
from .problem import HANDLERS, TASKS, load_problem, ring_from

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_EXHAUSTED = 0, 1, 2, 3


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, str)) or x is None:
        return x
    if hasattr(x, "item"):  # numpy scalars
        return x.item()
    if isinstance(x, int):
        return x
    return str(x)


def _diff(a, b, path: str = "") -> list[str]:
    """Paths at which two comparable reports differ."""
    if isinstance(a, dict) and isinstance(b, dict):
        out = []
        for k in sorted(set(a) | set(b)):
            out += _diff(a.get(k), b.get(k), f"{path}.{k}" if path else str(k))
        return out
    if isinstance(a, list) and isinstance(b, list) and len(a) == len(b):
        out = []
        for i, (x, y) in enumerate(zip(a, b)):
            out += _diff(x, y, f"{path}[{i}]")
        return out
    return [] if a == b else [path or "<root>"]


def run(path: str, task: str, bump: int = 0, budget: Optional[int] = None, seed: int = 0) -> tuple[int, dict]:
    """Solve one problem file; returns (exit code, report)."""
    report = {"file": str(path), "task": task}
    try:
        data = load_problem(path)
        if data["task"] != task:
            raise ParseError(f"{path}: field task: file declares {data['task']!r}, command asked for {task!r}")
        ring = ring_from(data["ring"], str(path))
        report["ring"] = ring.to_json()
        opts = {"budget": budget, "seed": seed, "base_ring": ring}
        out = HANDLERS[task](ring, data["payload"], opts)
        report["certified"] = bool(out["certified"])
        report["result"] = _jsonable(out["result"])
        code = EXIT_OK if out["certified"] else EXIT_FAILED
        if bump:
            big = ring.with_precision(n=ring.n + bump, N=ring.N + bump * ring.e)
            other = HANDLERS[task](big, data["payload"], opts)
            diffs = _diff(_jsonable(out["comparable"]), _jsonable(other["comparable"]))
            same = not diffs and bool(other["certified"]) == bool(out["certified"])
            report["precision_bump"] = {"k": bump, "ring": big.to_json(), "identical": same, "differences": diffs}
            if not same:
                code = EXIT_FAILED
    except ParseError as exc:
        report["error"] = {"kind": "input", "message": str(exc)}
        return EXIT_INPUT, report
    except (PrecisionExhausted, BudgetExceeded) as exc:
        report["error"] = {"kind": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, BudgetExceeded) and exc.partial is not None and task == "iterate-lattice":
            report["partial_trace"] = _jsonable(exc.partial)
        return EXIT_EXHAUSTED, report
    except BreuilError as exc:
        report["error"] = {"kind": type(exc).__name__, "message": str(exc)}
        return EXIT_FAILED, report
    return code, report


def _run_star(args):
    return run(*args)


def _text(report: dict) -> str:
    lines = [f"{report['task']} {report['file']}"]
    if "error" in report:
        lines.append(f"error ({report['error']['kind']}): {report['error']['message']}")
        return "\n".join(lines)
    res = report["result"]
    task = report["task"]
    if task == "build-algebra":
        lines.append(res["text"])
        lines.append(f"method: {res['method']}  free rank check: {res['rank_check']}  regular mod pi: {res['regular_mod_pi']}")
    elif task == "iterate-lattice":
        lines.append(f"trace of {res['steps']} steps")
        for rec in res["trace"]:
            gens = "; ".join("(" + ", ".join(g) + ")" for g in rec["generators"])
            lines.append(f"  N_{rec['step']}: p^-{rec['denominator_exponent']} <{gens}>  hash {rec['normal_form_hash'][:12]}")
        cert = res["certificate"]
        lines.append(f"cycle certificate: i0 = {cert['i0']}, C = {cert['C']}")
    elif task == "check-wa":
        lines.append(f"t_H = {res['t_H']}, t_N = {res['t_N']}")
        for s in res["subobjects"]:
            lines.append(f"  {s['source']} {s['basis']}: t_H = {s['t_H']}, t_N = {s['t_N']}, ok = {s['ok']}")
        lines.append(f"weakly admissible: {res['weakly_admissible']}")
    elif task == "check-strong-div":
        for k, v in res["verdict"].items():
            lines.append(f"  {k}: {v}")
        if "filtered_basis" in res:
            lines.append(f"  filtered basis: d1 = {res['filtered_basis']['d1']}")
    elif task == "construct-N":
        for i, row in enumerate(res["N"]):
            lines.append(f"  N(e_{i + 1}) = " + ", ".join(row))
        for k, v in res["checks"].items():
            lines.append(f"  {k}: {v}")
    else:
        for k, v in res.items():
            if k not in ("G", "F", "V"):
                lines.append(f"  {k}: {v}")
    if "precision_bump" in report:
        pb = report["precision_bump"]
        lines.append(f"precision bump +{pb['k']}: {'identical' if pb['identical'] else 'DIFFERENT ' + ', '.join(pb['differences'])}")
    lines.append("certified" if report["certified"] else "NOT certified")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="breuil", description="Exact computations with Breuil modules.")
    ap.add_argument("task", choices=TASKS)
    ap.add_argument("files", nargs="+", metavar="file")
    ap.add_argument("--json", action="store_true", help="machine-readable report")
    ap.add_argument("--precision-bump", type=int, default=0, metavar="k",
                    help="rerun at (n+k, N+k*e) and compare")
    ap.add_argument("--budget", type=int, default=None, metavar="B", help="iteration step budget")
    ap.add_argument("--jobs", type=int, default=1, metavar="J", help="parallel workers across files")
    ap.add_argument("--seed", type=int, default=0, metavar="s", help="seed for randomized checks")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.precision_bump < 0:
        print("error: --precision-bump must be nonnegative", file=sys.stderr)
        return EXIT_INPUT
    jobs = [(f, args.task, args.precision_bump, args.budget, args.seed) for f in args.files]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_star, jobs))
    else:
        results = [run(*j) for j in jobs]
    if args.json:
        reports = [r for _, r in results]
        out = reports[0] if len(reports) == 1 else reports
        print(json.dumps(out, sort_keys=True, indent=2))
    else:
        print("\n\n".join(_text(r) for _, r in results))
    return max(code for code, _ in results)


if __name__ == "__main__":
    sys.exit(main())
