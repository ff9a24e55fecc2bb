"""Command-line front end, installed as ``qgv``.

Subcommands: ``value``, ``gen``, ``convert`` and ``report``. Standard output
carries exactly one JSON document (or nothing when ``gen --out`` writes a
file). Exit codes: 0 success, 2 invalid input, 3 solver infeasibility,
4 resource-chain violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__, sdp
from .channels import ValidationError
from .convert import OneWayProtocol, locc_convertible, losr_evidence, nielsen_protocol, protocol_fidelity
from .games import (
    ClassicalGame,
    HypergraphGame,
    ProjectionGame,
    RegisterDims,
    cq_to_projection_dims,
    gen_chsh,
    gen_diag_family,
    gen_implication,
    gen_xor_embedding,
)
from .linalg import DimensionError
from .values import (
    InternalConsistencyError,
    SeesawOptions,
    SizeError,
    ValueEstimate,
    chain_report,
    value_classical_loc_exact,
    value_loc_lower,
    value_lowc_lower,
    value_ns,
    value_q_lower,
    value_qc_upper,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3
EXIT_CHAIN = 4

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3

log = logging.getLogger("qgames")


class InputError(ValueError):
    """Malformed or invalid command-line input."""


# ---------------------------------------------------------------------------
# JSON helpers


def fnv1a64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV64_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def _float_numbers(obj):
    if isinstance(obj, dict):
        return {k: _float_numbers(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_float_numbers(v) for v in obj]
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return float(obj)
    return obj


def canonical_json(doc) -> str:
    """Key-sorted compact JSON with every number written as a shortest round-trip float."""
    return json.dumps(_float_numbers(doc), sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest(doc) -> str:
    """FNV-1a 64-bit hash of the UTF-8 canonical JSON, as 16 hex digits."""
    return f"{fnv1a64(canonical_json(doc).encode('utf-8')):016x}"


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def complex_to_json(a) -> list:
    arr = np.asarray(a, dtype=complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def complex_from_json(data, what: str, ndim: int) -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{what}: expected nested [re, im] pairs ({exc})") from None
    if arr.ndim != ndim + 1 or arr.shape[-1] != 2:
        raise InputError(f"{what}: expected a {ndim}-dimensional array of [re, im] pairs, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise InputError(f"{what}: non-finite entry")
    return arr[..., 0] + 1j * arr[..., 1]


def _real_array(data, what: str, ndim: int) -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{what}: expected a numeric array ({exc})") from None
    if arr.ndim != ndim or not np.isfinite(arr).all():
        raise InputError(f"{what}: expected a finite {ndim}-dimensional array, got shape {arr.shape}")
    return arr


def _number(v, what: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise InputError(f"{what}: expected a finite number")
    return float(v)


def _object(obj, what: str, required: set, optional: set = frozenset()) -> dict:
    if not isinstance(obj, dict):
        raise InputError(f"{what}: expected a JSON object")
    missing = required - obj.keys()
    extra = obj.keys() - required - optional
    if missing:
        raise InputError(f"{what}: missing keys {sorted(missing)}")
    if extra:
        raise InputError(f"{what}: unknown keys {sorted(extra)}")
    return obj


def _read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


# ---------------------------------------------------------------------------
# game files

KINDS = ("projection", "hypergraph", "classical", "cq")
_PAYLOAD_KEYS = {
    "projection": {"xi", "p"},
    "hypergraph": {"atoms"},
    "classical": {"rule", "pi"},
    "cq": {"varphi", "pi"},
}


def _parse_dims(obj) -> RegisterDims:
    _object(obj, "dims", {"x", "y", "a", "b", "r"})
    vals = {}
    for k in ("x", "y", "a", "b", "r"):
        v = obj[k]
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise InputError(f"dims.{k}: expected a positive integer")
        vals[k] = v
    return RegisterDims(**vals)


def _dims_json(d: RegisterDims) -> dict:
    return {"x": d.x, "y": d.y, "a": d.a, "b": d.b, "r": d.r}


@dataclass(frozen=True)
class GameFile:
    """A parsed game document: the payload as read plus the validated game object."""

    kind: str
    dims: RegisterDims
    data: dict
    game: object

    @classmethod
    def from_json(cls, doc) -> "GameFile":
        if not isinstance(doc, dict) or doc.get("kind") not in KINDS:
            raise InputError(f"kind must be one of {list(KINDS)}")
        kind = doc["kind"]
        _object(doc, "game file", {"kind", "dims"} | _PAYLOAD_KEYS[kind])
        dims = _parse_dims(doc["dims"])
        data = getattr(cls, f"_parse_{kind}")(doc, dims)
        try:
            game = cls._build(kind, dims, data)
        except (ValidationError, DimensionError) as exc:
            raise InputError(f"invalid {kind} game: {exc}") from None
        return cls(kind, dims, data, game)

    @staticmethod
    def _parse_projection(doc, dims) -> dict:
        data = {"xi": complex_from_json(doc["xi"], "xi", 1)}
        p = doc["p"]
        if isinstance(p, dict) and set(p) == {"rank_terms"}:
            if not isinstance(p["rank_terms"], list):
                raise InputError("p.rank_terms must be a list")
            terms = []
            for i, t in enumerate(p["rank_terms"]):
                _object(t, f"p.rank_terms[{i}]", {"lambda", "gamma"})
                terms.append((_number(t["lambda"], f"p.rank_terms[{i}].lambda"),
                              complex_from_json(t["gamma"], f"p.rank_terms[{i}].gamma", 1)))
            data["rank_terms"] = terms
        elif isinstance(p, dict) and set(p) == {"dense"}:
            data["dense"] = complex_from_json(p["dense"], "p.dense", 2)
        else:
            raise InputError('p must be {"rank_terms": [...]} or {"dense": [...]}')
        return data

    @staticmethod
    def _parse_hypergraph(doc, dims) -> dict:
        if dims.r != 1:
            raise InputError("hypergraph games use dims.r = 1")
        if not isinstance(doc["atoms"], list):
            raise InputError("atoms must be a list")
        atoms = []
        for i, t in enumerate(doc["atoms"]):
            _object(t, f"atoms[{i}]", {"mu", "xi", "q"})
            atoms.append((_number(t["mu"], f"atoms[{i}].mu"), complex_from_json(t["xi"], f"atoms[{i}].xi", 1),
                          complex_from_json(t["q"], f"atoms[{i}].q", 2)))
        return {"atoms": atoms}

    @staticmethod
    def _parse_classical(doc, dims) -> dict:
        if dims.r != 1:
            raise InputError("classical games use dims.r = 1")
        rule = _real_array(doc["rule"], "rule", 4)
        if not np.isin(rule, (0, 1)).all():
            raise InputError("rule entries must be 0 or 1")
        return {"rule": rule.astype(int), "pi": _real_array(doc["pi"], "pi", 2)}

    @staticmethod
    def _parse_cq(doc, dims) -> dict:
        if dims.r != dims.x * dims.y:
            raise InputError("cq games use dims.r = x * y")
        return {"varphi": complex_from_json(doc["varphi"], "varphi", 4), "pi": _real_array(doc["pi"], "pi", 2)}

    @staticmethod
    def _build(kind: str, dims: RegisterDims, data: dict):
        if kind == "projection":
            if "dense" in data:
                return ProjectionGame.from_dense(dims, data["xi"], data["dense"])
            return ProjectionGame(dims, data["xi"], tuple(data["rank_terms"]))
        if kind == "hypergraph":
            return HypergraphGame(dims, tuple(data["atoms"]))
        if kind == "classical":
            return ClassicalGame(dims, data["rule"], data["pi"])
        g = cq_to_projection_dims(data["varphi"], data["pi"], dims.a, dims.b)
        if (g.dims.x, g.dims.y) != (dims.x, dims.y):
            raise DimensionError("pi shape does not match dims")
        return g

    @classmethod
    def from_game(cls, g) -> "GameFile":
        if isinstance(g, ProjectionGame):
            if g.orthonormal:
                data = {"xi": g.xi, "rank_terms": list(g.p_terms)}
            else:
                data = {"xi": g.xi, "dense": g.p_matrix()}
            return cls("projection", g.dims, data, g)
        if isinstance(g, HypergraphGame):
            return cls("hypergraph", g.dims, {"atoms": list(g.atoms)}, g)
        if isinstance(g, ClassicalGame):
            return cls("classical", g.dims, {"rule": g.rule.astype(int), "pi": g.pi}, g)
        raise TypeError(f"cannot serialize {type(g).__name__}")

    def to_json(self) -> dict:
        doc = {"kind": self.kind, "dims": _dims_json(self.dims)}
        d = self.data
        if self.kind == "projection":
            doc["xi"] = complex_to_json(d["xi"])
            if "dense" in d:
                doc["p"] = {"dense": complex_to_json(d["dense"])}
            else:
                doc["p"] = {"rank_terms": [{"lambda": float(lam), "gamma": complex_to_json(g)}
                                           for lam, g in d["rank_terms"]]}
        elif self.kind == "hypergraph":
            doc["atoms"] = [{"mu": float(mu), "xi": complex_to_json(v), "q": complex_to_json(q)}
                            for mu, v, q in d["atoms"]]
        elif self.kind == "classical":
            doc["rule"] = np.asarray(d["rule"]).astype(int).tolist()
            doc["pi"] = np.asarray(d["pi"], dtype=float).tolist()
        else:
            doc["varphi"] = complex_to_json(d["varphi"])
            doc["pi"] = np.asarray(d["pi"], dtype=float).tolist()
        return doc


def load_game(path: str) -> tuple[GameFile, dict]:
    doc = _read_json(path)
    return GameFile.from_json(doc), doc


# ---------------------------------------------------------------------------
# results


def estimate_record(e: ValueEstimate, wall_time_ms=None) -> dict:
    residual = None if e.residual is None else float(e.residual)
    return {
        "value": float(e.value),
        "bound_kind": e.bound_kind.value,
        "solver": e.solver,
        "iterations": int(e.iterations),
        "restarts": int(e.restarts),
        "residual": residual,
        "seed": int(e.seed),
        "wall_time_ms": wall_time_ms,
    }


def _result(command: str, input_digest: str, **fields) -> dict:
    return {"version": __version__, "command": command, "input_digest": input_digest, **fields}


def _timed(fn, timing: bool):
    start = time.perf_counter()
    out = fn()
    ms = round((time.perf_counter() - start) * 1000, 3) if timing else None
    return out, ms


def _workers() -> int:
    raw = os.environ.get("QGV_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise InputError("QGV_THREADS must be a positive integer")
    return n


def _opts(args) -> SeesawOptions:
    return SeesawOptions(restarts=args.restarts, outer_iters=args.outer_iters, tol=args.tol,
                         seed=args.seed, workers=_workers())


# ---------------------------------------------------------------------------
# commands


def cmd_value(args) -> dict:
    gf, doc = load_game(args.game)
    g = gf.game
    log.info("computing %s value of %s game %s", args.kind, gf.kind, args.game)
    solvers = {
        "loc": lambda: value_loc_lower(g, _opts(args)),
        "q": lambda: value_q_lower(g, args.dim_a, args.dim_b, _opts(args)),
        "lowc": lambda: value_lowc_lower(g, args.branches, _opts(args)),
        "qc": lambda: value_qc_upper(g, tol=args.tol, max_iter=args.max_iters),
        "ns": lambda: value_ns(g, tol=args.tol, max_iter=args.max_iters),
    }
    if args.kind == "classical":
        if not isinstance(g, ClassicalGame):
            raise InputError("the classical value needs a classical game file")
        run = lambda: value_classical_loc_exact(g)  # noqa: E731
    else:
        run = solvers[args.kind]
    est, ms = _timed(run, args.timing)
    log.info("%s value %.12g (%s)", args.kind, est.value, est.bound_kind.value)
    return _result("value", digest(doc), estimates={args.kind: estimate_record(est, ms)})


def _complex_tokens(tokens, what: str) -> np.ndarray:
    out = []
    for tok in tokens:
        parts = tok.split(",")
        try:
            nums = [float(p) for p in parts]
        except ValueError:
            raise InputError(f"{what}: cannot parse {tok!r} as re[,im]") from None
        if len(nums) not in (1, 2) or not all(map(math.isfinite, nums)):
            raise InputError(f"{what}: cannot parse {tok!r} as re[,im]")
        out.append(complex(nums[0], nums[1] if len(nums) == 2 else 0.0))
    return np.array(out)


def _matrix_file(path: str, what: str) -> np.ndarray:
    doc = _read_json(path)
    if isinstance(doc, dict):
        doc = _object(doc, what, {"dense"})["dense"]
    return complex_from_json(doc, what, 2)


def _unit_rows(vectors, what: str) -> list:
    out = []
    for v in vectors:
        norm = np.linalg.norm(v)
        if norm == 0:
            raise InputError(f"{what}: zero vector")
        out.append(v / norm)
    return out


def build_generated(args):
    if args.name == "chsh":
        return gen_chsh()
    if args.name == "diag":
        if args.n is None:
            raise InputError("diag needs --n")
        vectors = [_complex_tokens(toks, "--gamma") for toks in args.gamma or []]
        if args.gamma_file:
            raw = _read_json(args.gamma_file)
            vectors += list(complex_from_json(raw, "gamma file", 2))
        if not vectors:
            raise InputError("diag needs --gamma or --gamma-file")
        return gen_diag_family(args.n, _unit_rows(vectors, "gamma"))
    if args.name == "implication":
        if not (args.p and args.q):
            raise InputError("implication needs --p and --q")
        return gen_implication(_matrix_file(args.p, "P"), _matrix_file(args.q, "Q"))
    if not (args.xi and args.pi0 and args.pi1):
        raise InputError("xor needs --xi, --pi0 and --pi1")
    xi = complex_from_json(_read_json(args.xi), "xi", 3)
    return gen_xor_embedding(xi, _matrix_file(args.pi0, "pi0"), _matrix_file(args.pi1, "pi1"))


def cmd_gen(args):
    try:
        g = build_generated(args)
    except (ValidationError, DimensionError) as exc:
        raise InputError(f"invalid generator parameters: {exc}") from None
    doc = GameFile.from_game(g).to_json()
    GameFile.from_json(json.loads(json.dumps(doc)))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(dumps(doc))
        log.info("wrote %s game to %s", args.name, args.out)
        return None
    return doc


def _load_state(path: str):
    doc = _read_json(path)
    if isinstance(doc, dict):
        _object(doc, path, {"dims", "vector"})
        dims = doc["dims"]
        if (not isinstance(dims, list) or len(dims) != 2
                or not all(isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in dims)):
            raise InputError(f"{path}: dims must be [x, y] with positive integers")
        v = complex_from_json(doc["vector"], path, 1)
        if v.size != dims[0] * dims[1]:
            raise InputError(f"{path}: vector length {v.size} does not fit dims {dims}")
        return v.reshape(dims), doc
    v = complex_from_json(doc, path, 1)
    side = math.isqrt(v.size)
    if side * side != v.size:
        raise InputError(f"{path}: give {{\"dims\": [x, y], \"vector\": ...}} for non-square bipartitions")
    return v.reshape(side, side), doc


def protocol_json(p: OneWayProtocol) -> dict:
    def channel(c):
        return {"in_dim": c.in_dim, "out_dim": c.out_dim, "choi": complex_to_json(c.J)}

    return {"branches": [{"instrument": channel(j), "correction": channel(k)}
                         for j, k in zip(p.instrument, p.corrections)]}


def cmd_convert(args) -> dict:
    xi, xi_doc = _load_state(args.xi)
    gamma, gamma_doc = _load_state(args.gamma)
    if xi.shape != gamma.shape:
        raise InputError(f"bipartitions differ: {xi.shape} vs {gamma.shape}")
    source = digest({"xi": xi_doc, "gamma": gamma_doc})
    try:
        if args.mode == "locc":
            ok = locc_convertible(xi, gamma)
            fields = {"verdict": "convertible" if ok else "not_convertible"}
            if ok:
                proto = nielsen_protocol(xi, gamma)
                fields["witness"] = protocol_json(proto)
                fields["fidelity"] = float(protocol_fidelity(proto, xi, gamma))
            return _result("convert", source, mode="locc", **fields)
        ev, ms = _timed(lambda: losr_evidence(xi, gamma, _opts(args)), args.timing)
    except (ValidationError, DimensionError) as exc:
        raise InputError(str(exc)) from None
    return _result(
        "convert", source, mode="losr", verdict=ev.verdict.value,
        upper=estimate_record(ev.upper), lower=None if ev.lower is None else estimate_record(ev.lower),
        wall_time_ms=ms,
    )


def cmd_report(args) -> dict:
    gf, doc = load_game(args.game)
    rep, ms = _timed(lambda: chain_report(gf.game, _opts(args), args.dim_a, args.dim_b, args.branches,
                                          tol=args.tol, max_iter=args.max_iters), args.timing)
    checks = [{"relation": rel, "lower": float(lo), "upper": float(hi), "satisfied": bool(ok)}
              for rel, lo, hi, ok in rep.checks]
    return _result(
        "report", digest(doc),
        estimates={k: estimate_record(v) for k, v in rep.estimates.items()},
        chain={"checks": checks, "satisfied": rep.satisfied},
        wall_time_ms=ms,
    )


# ---------------------------------------------------------------------------
# argument parsing


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonnegative_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be a nonnegative integer")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("must be a positive number")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_nonnegative_int, default=0, help="seed for randomized solvers")
    common.add_argument("--restarts", type=_positive_int, default=16, help="see-saw random restarts")
    common.add_argument("--dim-a", type=_positive_int, default=2, help="Alice's entanglement dimension (q)")
    common.add_argument("--dim-b", type=_positive_int, default=2, help="Bob's entanglement dimension (q)")
    common.add_argument("--branches", type=_positive_int, default=4, help="instrument branches (lowc)")
    common.add_argument("--tol", type=_positive_float, default=sdp.DEFAULT_TOL, help="solver tolerance")
    common.add_argument("--max-iters", type=_positive_int, default=sdp.DEFAULT_MAX_ITER,
                        help="iteration cap for SDP solvers")
    common.add_argument("--outer-iters", type=_positive_int, default=SeesawOptions.outer_iters,
                        help="iteration cap per see-saw restart")
    common.add_argument("--timing", action="store_true", help="record wall_time_ms (breaks byte-identical output)")
    common.add_argument("--verbose", action="store_true", help="log progress to standard error")

    parser = argparse.ArgumentParser(prog="qgv", description="Values and convertibility for quantum non-local games.")
    parser.add_argument("--version", action="version", version=f"qgv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("value", parents=[common], help="compute one value or bound")
    p.add_argument("kind", choices=["loc", "q", "qc", "ns", "lowc", "classical"])
    p.add_argument("game", help="game file (JSON)")
    p.set_defaults(func=cmd_value)

    p = sub.add_parser("gen", parents=[common], help="write a generated game file")
    p.add_argument("name", choices=["chsh", "diag", "implication", "xor"])
    p.add_argument("--out", help="output path (default: standard output)")
    p.add_argument("--n", type=_positive_int, help="diag: register size")
    p.add_argument("--gamma", nargs="+", action="append",
                   help="diag: one vector as re,im tokens; repeat the flag for more vectors")
    p.add_argument("--gamma-file", help="diag: JSON list of vectors of [re, im]")
    p.add_argument("--p", help="implication: input projection file")
    p.add_argument("--q", help="implication: output projection file")
    p.add_argument("--xi", help="xor: referee state file, shape (dx, dy, dr) of [re, im]")
    p.add_argument("--pi0", help="xor: projection file on the referee register")
    p.add_argument("--pi1", help="xor: projection file on the referee register")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("convert", parents=[common], help="pure-state convertibility")
    p.add_argument("mode", choices=["losr", "locc"])
    p.add_argument("xi", help="source state file")
    p.add_argument("gamma", help="target state file")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("report", parents=[common], help="all estimates with chain checks")
    p.add_argument("game", help="game file (JSON)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        doc = args.func(args)
    except (InputError, ValidationError, DimensionError, SizeError) as exc:
        print(f"qgv: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except sdp.InfeasibleError as exc:
        print(f"qgv: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except InternalConsistencyError as exc:
        print(f"qgv: chain violation: {exc}", file=sys.stderr)
        print(json.dumps(exc.diagnostics, default=str), file=sys.stderr)
        return EXIT_CHAIN
    if doc is not None:
        sys.stdout.write(dumps(doc))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
