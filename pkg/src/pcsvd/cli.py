"""Command-line driver: ``pcsvd {analyze,decompose,verify,synthesize}``.

Exit codes: 0 success, 1 input or parse error, 2 unresolvable degeneracy,
3 verification failure.  ``PCSVD_THREADS`` caps the BLAS thread pool.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from pathlib import Path

from .decompositions import MODES, Factorization, analyze, decompose
from .errors import (
    AmbiguousAssociationError,
    DegeneracyError,
    FactorizationError,
    InfeasibleStructureError,
    MultiplexError,
    ParseError,
    ShapeError,
    TailNotDecayedError,
)
from .laurent import load_matrix, save_matrix
from .multiplex import OrbitStructure, orbit_report
from .synthesis import generate_fixture
from .verification import parse_profile, verify_factorization

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE, EXIT_VERIFY = 0, 1, 2, 3
FACTOR_FILES = {"U": "U.json", "middle": "middle.json", "V": "V.json"}
METADATA_FILE = "metadata.json"


def _dump(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write(path: Path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _load_input(path):
    if path is None:
        raise ParseError("--input is required")
    try:
        A = load_matrix(path)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    if A.index_L != 1:
        raise ParseError("input must have index_L = 1", "$.index_L")
    return A


def _threads():
    n = os.environ.get("PCSVD_THREADS")
    if not n:
        return contextlib.nullcontext()
    try:
        limit = max(1, int(n))
    except ValueError as exc:
        raise ParseError(f"PCSVD_THREADS must be an integer, got {n!r}") from exc
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=limit)


def cmd_analyze(args):
    A = _load_input(args.input)
    _, st = analyze(A, args.grid_k)
    if args.format == "json":
        out = _dump(st.to_dict())
    else:
        out = orbit_report(st) + "\n"
    if args.output_dir:
        _write(Path(args.output_dir) / "orbits.json", _dump(st.to_dict()))
    sys.stdout.write(out)
    return EXIT_OK


def _save_factorization(fact: Factorization, outdir: Path, report=None):
    outdir.mkdir(parents=True, exist_ok=True)
    save_matrix(fact.left_U, outdir / FACTOR_FILES["U"])
    save_matrix(fact.middle, outdir / FACTOR_FILES["middle"])
    save_matrix(fact.right_V, outdir / FACTOR_FILES["V"])
    meta = fact.metadata()
    if report is not None:
        meta["verification"] = report.to_dict()
    _write(outdir / METADATA_FILE, _dump(meta))


def load_factorization(directory) -> Factorization:
    """Read the three factor files and metadata written by ``decompose``."""
    d = Path(directory)
    mats = {}
    for key, name in FACTOR_FILES.items():
        try:
            mats[key] = load_matrix(d / name)
        except OSError as exc:
            raise ParseError(f"cannot read {d / name}: {exc.strerror}") from exc
        except ParseError as exc:
            raise ParseError(f"{name}: {exc}") from exc
    try:
        meta = json.loads((d / METADATA_FILE).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read {d / METADATA_FILE}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{METADATA_FILE}: invalid JSON: {exc.msg}") from exc
    if not isinstance(meta, dict):
        raise ParseError("metadata must be an object")
    kind = meta.get("kind")
    if kind not in MODES.values():
        raise ParseError(f"unknown kind {kind!r}", "$.kind")
    try:
        meta.setdefault("shape", list(mats["middle"].shape))
        st = OrbitStructure.from_dict(meta)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed orbit metadata: {exc}", "$.orbits") from exc
    try:
        return Factorization(
            kind,
            mats["U"],
            mats["middle"],
            mats["V"],
            st,
            grid_k=int(meta.get("grid_k", 0) or 0),
        )
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def _report_text(report, fmt):
    return report.to_json() + "\n" if fmt == "json" else report.to_text() + "\n"


def cmd_decompose(args):
    if not args.mode:
        raise ParseError("--mode is required for decompose")
    if not args.output_dir:
        raise ParseError("--output-dir is required for decompose")
    profile = parse_profile(args.profile)
    A = _load_input(args.input)
    fact = decompose(A, args.mode, args.grid_k)
    report = verify_factorization(A, fact, profile)
    _save_factorization(fact, Path(args.output_dir), report)
    sys.stdout.write(_report_text(report, args.format))
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_verify(args):
    profile = parse_profile(args.profile)
    A = _load_input(args.input)
    factors = args.factors or args.output_dir
    if not factors:
        raise ParseError("--factors (directory with U.json, middle.json, V.json, metadata.json) is required")
    fact = load_factorization(factors)
    try:
        report = verify_factorization(A, fact, profile, args.grid_k)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    sys.stdout.write(_report_text(report, args.format))
    return EXIT_OK if report.passed else EXIT_VERIFY


def _parse_shape(text):
    try:
        parts = [int(v) for v in text.lower().replace(",", "x").split("x")]
    except ValueError as exc:
        raise ParseError(f"shape must look like 4x4, got {text!r}") from exc
    if len(parts) != 2:
        raise ParseError(f"shape must look like 4x4, got {text!r}")
    return tuple(parts)


def cmd_synthesize(args):
    if args.seed is None:
        raise ParseError("--seed is required for synthesize")
    if not args.structure:
        raise ParseError("--structure is required for synthesize (e.g. '2,2,1;2,1,1')")
    if not args.output_dir:
        raise ParseError("--output-dir is required for synthesize")
    shape = _parse_shape(args.shape)
    fx = generate_fixture(args.structure, args.seed, shape)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_matrix(fx.matrix, out / "A.json")
    _write(out / "ground_truth.json", _dump(fx.ground_truth()))
    if args.format == "json":
        sys.stdout.write(_dump(fx.ground_truth()))
    else:
        sys.stdout.write(orbit_report(fx.structure) + f"\ndegenerate = {str(fx.degenerate).lower()}\n")
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "decompose": cmd_decompose,
    "verify": cmd_verify,
    "synthesize": cmd_synthesize,
}


def build_parser():
    p = argparse.ArgumentParser(
        prog="pcsvd",
        description="Analytic SVD structure of matrices analytic on the unit circle.",
    )
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--input", help="PuiseuxMatrix JSON file (index_L = 1)")
    p.add_argument("--output-dir", help="directory for output files")
    p.add_argument("--mode", choices=sorted(MODES), help="factorization for decompose")
    p.add_argument("--grid-k", type=int, default=None, help="points per period (power of two)")
    p.add_argument("--profile", default="default", help="'default', 'strict' or key=val overrides")
    p.add_argument("--seed", type=int, default=None, help="seed for synthesize")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--factors", help="directory with factor files for verify")
    p.add_argument("--structure", help="orbits as 'k,kappa,q;...' for synthesize")
    p.add_argument("--shape", default="4x4", help="MxN for synthesize")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if args.grid_k is not None and (args.grid_k < 1 or args.grid_k & (args.grid_k - 1)):
        sys.stderr.write("error: --grid-k must be a power of two\n")
        return EXIT_INPUT
    try:
        with _threads():
            return COMMANDS[args.command](args)
    except (
        DegeneracyError,
        AmbiguousAssociationError,
        MultiplexError,
        TailNotDecayedError,
        FactorizationError,
    ) as exc:
        sys.stderr.write(f"degeneracy: {exc}\n")
        return EXIT_DEGENERATE
    except (ParseError, ShapeError, InfeasibleStructureError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
