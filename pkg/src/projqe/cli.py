"""Batch command-line surface: validation, corpus verification, and
external-oracle integration.

Subcommands (all emit JSON on standard output):

* ``validate``   -- schema/fragment/closedness report for a formula file;
* ``patterns``   -- the realization of a coordinate formula as a pattern
  document;
* ``poincare``   -- serve one homology-oracle request (a request document,
  or a bare formula/pattern document, from a file);
* ``reduce``     -- compile a formula file into the (Theta, F) document;
* ``decide``     -- compile and decide a sentence (``--exit-verdict`` maps
  a False verdict to exit code 1);
* ``verify``     -- run the verification corpus (a directory of formula
  documents, or the bundled exhaustive corpus plus ``--count`` seeded
  random instances);
* ``crosscheck`` -- independent certificates for one instance: trace
  bookkeeping, brute-force verdict, and fiberwise identity checks;
* ``serve``      -- the line-delimited JSON oracle loop on stdin/stdout
  (one request per line, one response per line), the protocol spoken by
  ``--oracle`` commands.

Exit codes: 0 success; 1 verdict False (decide with ``--exit-verdict``);
2 input error; 3 oracle error; 4 verification failure.  An external
oracle command is taken from ``--oracle`` or the ``PTODA_ORACLE``
environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import subprocess
import sys
from typing import Callable, Optional

from . import __version__
from . import coordinate_model as cm, corpus, formula_ir as ir
from . import homology_oracle as ho, reduction_compiler as rc
from .errors import OracleError, ProjqeError

SCHEMA = "projqe-report/1"

EXIT_OK = 0
EXIT_FALSE = 1
EXIT_INPUT = 2
EXIT_ORACLE = 3
EXIT_VERIFY = 4


# ---------------------------------------------------------------------------
# External oracle subprocess (line-delimited JSON)
# ---------------------------------------------------------------------------


class SubprocessOracle:
    """Client for an external Poincare oracle: a long-lived subprocess
    answering one JSON request per input line with one JSON response
    line (homology_oracle.answer_request's schema)."""

    def __init__(self, command: str, timeout: float = 300.0):
        self.command = command
        self.timeout = timeout
        self._proc: Optional[subprocess.Popen] = None

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                shlex.split(self.command), stdin=subprocess.PIPE,
                stdout=subprocess.PIPE, text=True, bufsize=1)
        return self._proc

    def __call__(self, request: dict) -> dict:
        proc = self._ensure()
        try:
            proc.stdin.write(json.dumps(request, sort_keys=True) + "\n")
            proc.stdin.flush()
            line = proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise OracleError(f"oracle subprocess failed: {exc!r}") from exc
        if not line:
            raise OracleError("oracle subprocess closed its output")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise OracleError(f"oracle sent invalid JSON: {line!r}") from exc
        if "error" in response:
            raise OracleError(f"oracle error: {response['error']}")
        return response

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
        self._proc = None


def serve(stdin=None, stdout=None) -> None:
    """The oracle side of the subprocess protocol: answer until EOF.
    Errors are reported in-band so one bad request does not kill the
    session."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            response = ho.answer_request(json.loads(line))
        except Exception as exc:  # noqa: BLE001 - protocol boundary
            response = {"error": repr(exc)}
        stdout.write(json.dumps(response, sort_keys=True) + "\n")
        stdout.flush()


def _oracle_from(args) -> Optional[Callable]:
    command = getattr(args, "oracle", None) or os.environ.get("PTODA_ORACLE")
    return SubprocessOracle(command) if command else None


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _load_formula(path: str) -> ir.ShapedFormula:
    return ir.parse_formula(_load_json(path))


def _emit(doc: dict) -> None:
    json.dump(doc, sys.stdout, sort_keys=True, indent=2)
    sys.stdout.write("\n")


def cmd_validate(args) -> int:
    f = _load_formula(args.path)
    report = {
        "schema": SCHEMA,
        "valid": True,
        "free_blocks": [b.name for b in f.free_blocks],
        "omega": len(f.quantifiers),
        "coordinate_fragment": ir.is_coordinate_fragment(f.core),
        "closedness": f.closedness,
        "atoms": ir.atom_count(f.core),
    }
    out = rc.compile(f)
    report["warnings"] = list(out.warnings)
    _emit(report)
    return EXIT_OK


def cmd_patterns(args) -> int:
    f = _load_formula(args.path)
    a = cm.realization_bruteforce(f)
    _emit({"schema": SCHEMA, "patterns": a.to_doc()})
    return EXIT_OK


def cmd_poincare(args) -> int:
    doc = _load_json(args.path)
    if "matrix" in doc:
        doc = {"formula": doc}  # a bare formula document
    elif "space" in doc and "patterns" in doc:
        doc = {"patterns": doc}  # a bare pattern-set document
    _emit(ho.answer_request(doc))
    return EXIT_OK


def cmd_reduce(args) -> int:
    out = rc.compile(_load_formula(args.path))
    _emit(out.to_doc())
    return EXIT_OK


def cmd_decide(args) -> int:
    oracle = _oracle_from(args)
    out = rc.compile(_load_formula(args.path))
    verdict = rc.verdict(out, oracle)
    _emit({"schema": SCHEMA, "verdict": verdict,
           "trace": [s.to_doc() for s in out.trace]})
    if args.exit_verdict and not verdict:
        return EXIT_FALSE
    return EXIT_OK


def _corpus_instances(args) -> list:
    if args.corpus:
        paths = sorted(
            os.path.join(args.corpus, n) for n in os.listdir(args.corpus)
            if n.endswith(".json"))
        return [ir.parse_formula(_load_json(p)) for p in paths]
    instances = list(corpus.exhaustive_corpus())
    if args.count:
        instances.extend(corpus.random_corpus(args.seed, args.count))
    return instances


def cmd_verify(args) -> int:
    instances = _corpus_instances(args)
    summary = corpus.run_corpus(instances, jobs=args.jobs, seed=args.seed)
    _emit(summary)
    return EXIT_OK if summary["failures"] == 0 else EXIT_VERIFY


def cmd_crosscheck(args) -> int:
    f = _load_formula(args.path)
    report = corpus.check_instance(f, _oracle_from(args))
    report["schema"] = SCHEMA
    report["formula"] = ir.formula_to_doc(f)
    _emit(report)
    return EXIT_OK if report["ok"] else EXIT_VERIFY


def cmd_serve(_args) -> int:
    serve()
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="projqe",
        description="compiler/verification workbench for quantified "
                    "multi-homogeneous formulas")
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        p = sub.add_parser(name, **kw)
        p.set_defaults(fn=fn)
        return p

    for name, fn, help_ in [
        ("validate", cmd_validate, "validate a formula document"),
        ("patterns", cmd_patterns, "realize a coordinate formula"),
        ("reduce", cmd_reduce, "compile to the (Theta, F) document"),
    ]:
        p = add(name, fn, help=help_)
        p.add_argument("path")

    p = add("poincare", cmd_poincare, help="answer one oracle request")
    p.add_argument("path")

    p = add("decide", cmd_decide, help="decide a sentence")
    p.add_argument("path")
    p.add_argument("--oracle", help="external oracle command")
    p.add_argument("--exit-verdict", action="store_true",
                   help="exit 1 when the verdict is False")

    p = add("verify", cmd_verify, help="run the verification corpus")
    p.add_argument("corpus", nargs="?",
                   help="directory of formula documents (default: the "
                        "bundled exhaustive corpus)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=0,
                   help="additional seeded random instances")
    p.add_argument("--jobs", type=int, default=1)

    p = add("crosscheck", cmd_crosscheck, help="certify one instance")
    p.add_argument("path")
    p.add_argument("--oracle", help="external oracle command")

    add("serve", cmd_serve,
        help="line-delimited JSON oracle loop on stdin/stdout")
    return top


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.fn(args)
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        print(json.dumps({"schema": SCHEMA, "error": repr(exc)}),
              file=sys.stderr)
        return EXIT_INPUT
    except OracleError as exc:
        print(json.dumps({"schema": SCHEMA, "error": repr(exc)}),
              file=sys.stderr)
        return EXIT_ORACLE
    except ProjqeError as exc:
        print(json.dumps({"schema": SCHEMA, "error": repr(exc)}),
              file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
