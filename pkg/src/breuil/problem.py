"""Problem files: schema validation, payload parsing and the task engines
behind the command line front end.

Each task returns a report dict with a ``certified`` verdict, a ``result``
for display and a ``comparable`` part that must not depend on the working
precision (used by the precision-bump harness).
"""

from __future__ import annotations

import json
from fractions import Fraction
from importlib import resources
from typing import Any, Callable

import jsonschema
import numpy as np

from .errors import ParseError
from .linalg import FlatLattice
from .rings import DividedSeries, RingParams, format_series, parse_series, reduce_to_tilde

TASKS = ("classify-module", "build-algebra", "iterate-lattice", "check-wa", "check-strong-div", "construct-N")


def _schema() -> dict:
    text = resources.files("breuil").joinpath("schema/problem.schema.json").read_text()
    return json.loads(text)


def load_problem(path) -> dict:
    """Read and validate a problem file; ring constraints are checked here too."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    validate_problem(data, str(path))
    return data


def validate_problem(data: Any, where: str = "<input>") -> RingParams:
    try:
        jsonschema.validate(data, _schema())
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ParseError(f"{where}: field {loc}: {exc.message}") from None
    return ring_from(data["ring"], where)


def ring_from(desc: dict, where: str = "<input>") -> RingParams:
    from .errors import InvalidRingParams

    try:
        return RingParams(desc["p"], desc["e"], tuple(desc["E_coeffs"]), desc["n"], desc["N"])
    except InvalidRingParams as exc:
        raise ParseError(f"{where}: field ring: {exc}") from None


# payload helpers -----------------------------------------------------------------

def field(payload: dict, name: str, where: str, default=ParseError):
    if name in payload:
        return payload[name]
    if default is ParseError:
        raise ParseError(f"{where}: missing field {name}")
    return default


def rational(x, where: str) -> Fraction:
    try:
        return Fraction(x) if not isinstance(x, float) else Fraction(str(x))
    except (ValueError, TypeError, ZeroDivisionError):
        raise ParseError(f"{where}: not a rational number: {x!r}") from None


def rational_matrix(M, d: int, where: str) -> list:
    if not isinstance(M, list) or len(M) != d or any(not isinstance(r, list) or len(r) != d for r in M):
        raise ParseError(f"{where}: expected a {d}x{d} matrix")
    return [[rational(x, f"{where}[{i}][{j}]") for j, x in enumerate(r)] for i, r in enumerate(M)]


def series(ring: RingParams, text, where: str) -> DividedSeries:
    if isinstance(text, int):
        text = str(text)
    if not isinstance(text, str):
        raise ParseError(f"{where}: expected a series literal, got {text!r}")
    try:
        return parse_series(ring, text)
    except ParseError as exc:
        raise ParseError(f"{where}: {exc}") from None


def series_vector(ring: RingParams, v, d: int, where: str) -> np.ndarray:
    if not isinstance(v, list) or len(v) != d:
        raise ParseError(f"{where}: expected {d} series")
    return np.array([series(ring, x, f"{where}[{c}]").coeffs for c, x in enumerate(v)], dtype=np.int64)


def series_matrix(ring: RingParams, M, where: str) -> np.ndarray:
    if not isinstance(M, list) or not M:
        raise ParseError(f"{where}: expected a square matrix of series")
    d = len(M)
    return np.array([series_vector(ring, r, d, f"{where}[{i}]") for i, r in enumerate(M)], dtype=np.int64)


def tilde_poly(p: int, m: int, v, where: str) -> np.ndarray:
    """A polynomial of k[u]/u^m given by its coefficient list (u^0 first)."""
    if not isinstance(v, list) or any(not isinstance(c, int) for c in v) or len(v) > m:
        raise ParseError(f"{where}: expected at most {m} integer coefficients")
    out = np.zeros(m, dtype=np.int64)
    out[: len(v)] = v
    return out % p


def format_rows(ring: RingParams, rows: np.ndarray, d: int) -> list:
    """Generators as lists of d series literals."""
    out = []
    for r in rows:
        r = np.asarray(r).reshape(d, ring.N)
        out.append([format_series(DividedSeries._raw(ring, x)) for x in r])
    return out


def project_lattice(lat: FlatLattice, d: int, N_from: int, ring: RingParams) -> FlatLattice:
    """Image of a lattice of S^d computed at higher precision in S/(p^n, J_N)^d."""
    rows = np.asarray(lat.rows).reshape(-1, d, N_from)[:, :, : ring.N].reshape(-1, d * ring.N)
    return FlatLattice.span(ring.p, ring.n, d * ring.N, rows % ring.q)


def c_tilde(ring: RingParams) -> np.ndarray:
    return reduce_to_tilde(DividedSeries.c(ring.with_precision(n=max(ring.n, 2)))).coeffs


Handler = Callable[[RingParams, dict, dict], dict]


# modules killed by p or by a power of p -----------------------------------------

def tilde_module(ring: RingParams, desc: dict, where: str = "payload.module"):
    """A TildeModule from a 'standard-S1', 'adapted' or 'tilde' description."""
    from .tilde import TildeModule
    from .torsion import T_functor, standard_S1

    p, e, m = ring.p, ring.e, ring.e * ring.p
    kind = field(desc, "kind", where)
    if kind == "standard-S1":
        index = field(desc, "index", where)
        if index not in (0, 1):
            raise ParseError(f"{where}.index: must be 0 or 1")
        # S_1(0): Fil^1 = Fil^1 S e ; S_1(1): Fil^1 = M
        return T_functor(standard_S1(ring.with_precision(n=max(ring.n, 2)), e if index == 0 else 0))
    if kind == "adapted":
        r = field(desc, "r", where)
        if not isinstance(r, list) or any(not isinstance(x, int) or not 0 <= x <= e for x in r):
            raise ParseError(f"{where}.r: expected exponents in [0, {e}]")
        d = len(r)
        G = field(desc, "G", where)
        if not isinstance(G, list) or len(G) != d or any(not isinstance(row, list) or len(row) != d for row in G):
            raise ParseError(f"{where}.G: expected a {d}x{d} matrix")
        arr = np.array([[tilde_poly(p, m, x, f"{where}.G[{i}][{j}]") for j, x in enumerate(row)]
                        for i, row in enumerate(G)], dtype=np.int64)
        return TildeModule.from_adapted(p, e, r, arr)
    if kind == "tilde":
        d = field(desc, "d", where)
        fil = field(desc, "fil", where)
        imgs = field(desc, "phi1", where)
        if not isinstance(fil, list) or not isinstance(imgs, list) or len(fil) != len(imgs):
            raise ParseError(f"{where}: fil and phi1 must be lists of equal length")

        def vec(v, w):
            if not isinstance(v, list) or len(v) != d:
                raise ParseError(f"{w}: expected {d} polynomials")
            return np.array([tilde_poly(p, m, x, f"{w}[{c}]") for c, x in enumerate(v)], dtype=np.int64)

        return TildeModule(p, e, d, [vec(v, f"{where}.fil[{k}]") for k, v in enumerate(fil)],
                           [vec(v, f"{where}.phi1[{k}]") for k, v in enumerate(imgs)])
    raise ParseError(f"{where}.kind: unknown tilde module kind {kind!r}")


def presented_module(ring: RingParams, desc: dict, where: str = "payload.module"):
    from .presented import counterexample_module, fi_block_module

    kind = desc.get("kind")
    if kind == "counterexample":
        if ring.n < 3:
            raise ParseError(f"{where}: the counterexample needs precision n >= 3")
        return counterexample_module(ring)
    blocks = []
    for k, b in enumerate(field(desc, "blocks", where)):
        w = f"{where}.blocks[{k}]"
        level = field(b, "level", w)
        if not isinstance(level, int) or not 1 <= level < ring.n:
            raise ParseError(f"{w}.level: must satisfy 1 <= level < n")
        G = series_matrix(ring, field(b, "G", w), f"{w}.G")
        blocks.append((level, field(b, "d1", w), G))
    return fi_block_module(ring, blocks)


def _classify_tilde(ring: RingParams, t) -> dict:
    from .tilde import frobenius_verschiebung

    checks = t.check()
    result = {"checks": checks, "is_object": all(checks.values())}
    if result["is_object"]:
        ad = t.adapted()
        dd = frobenius_verschiebung(t, c_tilde(ring))
        result.update({
            "adapted_exponents": list(ad.r),
            "G": [[[int(c) for c in x] for x in row] for row in ad.G.tolist()],
            "F": dd.F.tolist(),
            "V": dd.V.tolist(),
            "F_rank": dd.f_rank(ring.p),
            "F_bijective": dd.f_rank(ring.p) == dd.dim,
            "FV_zero": dd.fv_zero(ring.p),
        })
    return result


def _classify_presented(ring: RingParams, m, desc: dict, seed: int) -> dict:
    from .presented import counterexample_extension_check

    checks = m.check_category(seed=seed)
    shape = m.fi_shape()
    result = {
        "checks": checks,
        "is_object": all(checks.values()),
        "exponent": m.exponent(),
        "log_size": m.log_size(),
        "layer_ranks": [list(x) for x in m.layer_ranks()],
        "is_fi": shape is not None,
        "fi_shape": None if shape is None else [list(x) if isinstance(x, tuple) else x for x in shape],
        "classification": "FI" if shape is not None else "NotFI",
    }
    if desc.get("kind") == "counterexample":
        ext = counterexample_extension_check(m)
        result["extension"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in ext.items()}
    return result


def task_classify(ring: RingParams, payload: dict, opts: dict) -> dict:
    desc = field(payload, "module", "payload")
    if desc.get("kind") in ("counterexample", "fi-blocks"):
        result = _classify_presented(ring, presented_module(ring, desc), desc, opts.get("seed", 0))
        # the size of the truncated module grows with N
        comparable = {k: v for k, v in result.items() if k != "log_size"}
    else:
        result = comparable = _classify_tilde(ring, tilde_module(ring, desc))
    return {"certified": result["is_object"], "result": result, "comparable": comparable}


def task_build_algebra(ring: RingParams, payload: dict, opts: dict) -> dict:
    from .algebra import build_algebra_closed, build_algebra_general, closed_form_eligible

    t = tilde_module(ring, field(payload, "module", "payload"))
    method = payload.get("method", "auto")
    K = payload.get("K")
    if method not in ("auto", "closed", "general"):
        raise ParseError("payload.method: must be auto, closed or general")
    if method == "auto":
        method = "closed" if closed_form_eligible(t.adapted().G, ring.p) else "general"
    build = build_algebra_closed if method == "closed" else build_algebra_general
    P = build(t, ring, K)
    result = {
        "method": method,
        "presentation": P.to_json(),
        "text": P.to_text(),
        "rank_check": P.rank_check(),
        "regular_mod_pi": P.regular_mod_pi(),
        "A_invertible": P.A_invertible(),
    }
    ok = result["rank_check"] and result["regular_mod_pi"]
    return {"certified": ok, "result": result, "comparable": result}


# filtered (phi, N)-modules and lattices ------------------------------------------

def filtered_module(ring: RingParams, desc: dict, where: str = "payload.module"):
    from .filtered import FilteredPhiN

    phi = field(desc, "phi", where)
    d = len(phi) if isinstance(phi, list) else 0
    phi = rational_matrix(phi, d, f"{where}.phi")
    N = rational_matrix(desc.get("N", [[0] * d for _ in range(d)]), d, f"{where}.N")
    fil = field(desc, "fil", where, [])
    e = ring.e
    levels = []
    for i, level in enumerate(fil):
        vecs = []
        for k, v in enumerate(level):
            w = f"{where}.fil[{i}][{k}]"
            if not isinstance(v, list) or len(v) != d:
                raise ParseError(f"{w}: expected {d} K-coordinates")
            coords = []
            for c, x in enumerate(v):
                if isinstance(x, list):
                    if len(x) > e:
                        raise ParseError(f"{w}[{c}]: at most {e} pi-coefficients")
                    coords.append([rational(a, f"{w}[{c}]") for a in x])
                else:
                    coords.append(rational(x, f"{w}[{c}]"))
            vecs.append(coords)
        levels.append(vecs)
    return FilteredPhiN(ring.p, ring.E_coeffs, phi, N, levels)


def start_lattice(ring: RingParams, d: int, desc, where: str = "payload.lattice"):
    """p^{-b} times the S-span of the given generators (default S e_1 + ... + S e_d)."""
    from .filtered import SLattice, standard_lattice

    if desc is None:
        return standard_lattice(ring, d)
    gens = field(desc, "generators", where)
    b = field(desc, "b", where, 0)
    if not isinstance(gens, list) or not gens:
        raise ParseError(f"{where}.generators: expected a nonempty list")
    rows = [series_vector(ring, g, d, f"{where}.generators[{k}]").ravel() for k, g in enumerate(gens)]
    return SLattice.from_generators(ring, d, rows, b=b)


def _lattice_view(ring: RingParams, L, d: int, base: RingParams) -> dict:
    """Generators of p^b L at the base precision, with its hash there."""
    from .filtered import SLattice
    from .strong import minimal_s_generators

    lat = project_lattice(L.lattice, d, ring.N, base)
    view = SLattice(L.b, lat)
    gens = [g.ravel() for g in minimal_s_generators(base, d, lat)]
    return {
        "denominator_exponent": L.b,
        "normal_form_hash": view.normal_form_hash(),
        "generators": format_rows(base, gens, d),
    }


def _iterate(ring: RingParams, payload: dict, opts: dict):
    from .filtered import BigD, iterate_lattice

    D = filtered_module(ring, field(payload, "module", "payload"))
    B = BigD(D, ring)
    M0 = start_lattice(ring, D.d, payload.get("lattice"))
    return D, B, iterate_lattice(B, M0, budget=opts.get("budget") or 32)


def task_iterate(ring: RingParams, payload: dict, opts: dict) -> dict:
    D, B, res = _iterate(ring, payload, opts)
    base = opts.get("base_ring", ring)
    trace = [dict(_lattice_view(ring, L, D.d, base), step=i, N_stable=s)
             for i, (L, s) in enumerate(zip(res.trace, res.n_stable))]
    result = {
        "steps": len(res.trace) - 1,
        "certificate": res.certificate(),
        "trace": trace,
    }
    if opts.get("records"):
        result["records"] = res.records()
    comparable = {"certificate": res.certificate(), "trace": trace}
    return {"certified": True, "result": result, "comparable": comparable}


def task_check_wa(ring: RingParams, payload: dict, opts: dict) -> dict:
    from .filtered import check_wa

    D = filtered_module(ring, field(payload, "module", "payload"))
    subs = []
    for k, basis in enumerate(payload.get("subobjects", [])):
        if not isinstance(basis, list) or any(not isinstance(v, list) or len(v) != D.d for v in basis):
            raise ParseError(f"payload.subobjects[{k}]: expected vectors of length {D.d}")
        subs.append([[rational(x, f"payload.subobjects[{k}]") for x in v] for v in basis])
    result = check_wa(D, subs, auto=payload.get("auto", True))
    result["structure"] = D.check()
    return {"certified": result["weakly_admissible"], "result": result, "comparable": result}


def task_check_strong_div(ring: RingParams, payload: dict, opts: dict) -> dict:
    from .filtered import BigD, assemble_DC, filtered_basis, verify_strongly_divisible

    base = opts.get("base_ring", ring)
    if "lattice" in payload and payload.get("mode", "lattice") == "lattice":
        D = filtered_module(ring, field(payload, "module", "payload"))
        B = BigD(D, ring)
        L = start_lattice(ring, D.d, payload["lattice"])
        source = {"mode": "lattice"}
    else:
        D, _, res = _iterate(ring, payload, opts)
        B, L = assemble_DC(D, ring, res.cycle())
        source = {"mode": "cycle", "certificate": res.certificate()}
    verdict = verify_strongly_divisible(B, L)
    result = dict(source, verdict=verdict, lattice=_lattice_view(ring, L, B.d, base))
    if verdict["strongly_divisible"] and B.D.r <= 1:
        fb = filtered_basis(B, L)
        result["filtered_basis"] = {"d1": fb.d1, "size": len(fb.basis)}
    return {"certified": verdict["strongly_divisible"], "result": result, "comparable": result}


def task_construct_N(ring: RingParams, payload: dict, opts: dict) -> dict:
    from .strong import StronglyDivisible

    if ring.n < 2:
        raise ParseError("ring.n: monodromy needs precision n >= 2")
    G = series_matrix(ring, field(payload, "G", "payload"), "payload.G")
    d1 = field(payload, "d1", "payload")
    if not isinstance(d1, int) or not 0 <= d1 <= G.shape[0]:
        raise ParseError("payload.d1: out of range")
    M = StronglyDivisible(ring, d1, G)
    seed = opts.get("seed", 0)
    Nmat = M.monodromy_construct(budget=opts.get("budget") or 64)
    checks = M.check_monodromy(Nmat, seed=seed)
    checks["perturbation_breaks"] = M.perturbation_breaks(Nmat, seed=seed)
    base = opts.get("base_ring", ring)
    low = base.with_precision(n=base.n - 1)
    shown = [[format_series(DividedSeries._raw(low, x[: low.N] % low.q)) for x in row] for row in Nmat]
    result = {"N": shown, "checks": checks, "zero": not np.any(Nmat)}
    return {"certified": all(checks.values()), "result": result, "comparable": result}


HANDLERS: dict[str, Handler] = {
    "classify-module": task_classify,
    "build-algebra": task_build_algebra,
    "iterate-lattice": task_iterate,
    "check-wa": task_check_wa,
    "check-strong-div": task_check_strong_div,
    "construct-N": task_construct_N,
}


def fixture_path(name: str) -> str:
    """Path of a bundled problem file, e.g. ``fixture_path("s1-0.json")``."""
    return str(resources.files("breuil").joinpath("fixtures", name))
