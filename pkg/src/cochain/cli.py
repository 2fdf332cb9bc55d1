"""Command-line interface.

Every command writes its outputs together with a ``.manifest.json`` run
manifest; ``cochain rerun MANIFEST`` re-executes the recorded command and
checks the outputs are byte-identical.

Exit codes: 0 ok, 1 rerun mismatch, 2 bad input, 3 degree out of range,
4 divergence, 5 bad expression.
"""
from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .complex import Cochain, load_complex_json, read_off
from .dec import boundary_matrix, coboundary_matrix, graph_laplacian, hodge_laplacian, write_coo
from .errors import (
    DegreeError,
    DimensionError,
    DivergenceError,
    ExpressionError,
    FormatError,
    UnsupportedDimension,
)
from .optim import TrainConfig
from .persistence import persistent_homology, write_diagram_csv
from .structloss import distance_matrix, embed, read_point_cloud, write_loss_csv
from .topnet import ACTIVATIONS, build_expression, train_expression, with_target

EXIT_OK, EXIT_MISMATCH, EXIT_PARSE, EXIT_DEGREE, EXIT_DIVERGENCE, EXIT_EXPRESSION = 0, 1, 2, 3, 4, 5

EMBED_DEFAULTS = {
    "mds": {"lr": 0.005, "momentum": 0.9, "max_iter": 5000, "tol": 0.0, "seed": 0},
    "tsne": {"lr": 1.0, "momentum": 0.5, "max_iter": 1000, "tol": 0.0, "seed": 0},
    "ph": {"lr": 0.01, "momentum": 0.0, "max_iter": 200, "tol": 0.0, "seed": 0},
}
TRAIN_DEFAULTS = {"lr": 0.01, "momentum": 0.0, "max_iter": 1000, "tol": 0.0, "seed": 0}

EXPR_HELP = """\
expression grammar:
  equation := term [ "=" term ]
  term     := NAME | OP "(" term ")" | "TN" "[" OP [":" CHANNELS] "]" "(" term ")"
  OP       := d<k> (exterior derivative on k-cochains) | b<k> (k-th boundary)
            | L<k> (k-th Hodge Laplacian) | I (identity) | A (vertex adjacency)
            | G (graph Laplacian D - A)
NAMEs refer to --input cochains. Without "= rhs", --target supplies the cochain
the left side is fitted to. Examples:
  "d1(TN[d0](x)) = L2(g)"     "TN[I](x)" --target g.csv
"""


class UsageError(Exception):
    pass


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _atomic_write_text(path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


@contextlib.contextmanager
def _staged(paths):
    """Yield temporary paths; move them onto ``paths`` only if the block succeeds."""
    tmps = []
    for p in paths:
        p = Path(p)
        p.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=f".{p.name}.")
        os.close(fd)
        tmps.append(tmp)
    try:
        yield tmps
    except BaseException:
        for t in tmps:
            with contextlib.suppress(OSError):
                os.unlink(t)
        raise
    for t, p in zip(tmps, paths):
        os.replace(t, p)


def _write_manifest(args, argv, inputs, outputs, config=None, seed=None):
    manifest = {
        "command": args.command,
        "argv": argv,
        "cwd": os.getcwd(),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "config": config,
        "seed": seed,
        "version": __version__,
        "outputs": {str(p): _sha256(p) for p in outputs},
    }
    path = Path(str(outputs[0]) + ".manifest.json")
    _atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _resolve_seed(args, cfg_seed):
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("COCHAIN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"COCHAIN_SEED must be an integer, got {env!r}") from None
    return cfg_seed


def _load_config(path, defaults):
    d = dict(defaults)
    if path is not None:
        try:
            d.update(json.loads(Path(path).read_text()))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
    return d


def _config(args, defaults):
    d = _load_config(args.config, defaults)
    d["seed"] = _resolve_seed(args, d.get("seed", 0))
    try:
        return TrainConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc


def _load_complex(path):
    p = Path(path)
    if p.suffix.lower() == ".off":
        return read_off(p)[0]
    return load_complex_json(p)


def _pinned_argv(argv, seed):
    # record the effective seed so a rerun ignores the environment
    out = list(argv)
    if "--seed" in out:
        i = out.index("--seed")
        del out[i:i + 2]
    return out + ["--seed", str(seed)]


# --- commands -----------------------------------------------------------------------

def cmd_dec(args, argv):
    K = _load_complex(args.input)
    if args.op == "graph-laplacian":
        A = graph_laplacian(K, paper_sign=args.paper_sign)
    else:
        if args.paper_sign:
            raise UsageError("--paper-sign only applies to --op graph-laplacian")
        if args.k is None:
            raise UsageError(f"--op {args.op} needs --k")
        fn = {"boundary": boundary_matrix, "coboundary": coboundary_matrix, "hodge": hodge_laplacian}[args.op]
        A = fn(K, args.k)
    with _staged([args.output]) as (tmp,):
        write_coo(A, tmp)
    _write_manifest(args, argv, [args.input], [args.output])


def cmd_embed(args, argv):
    if args.dim < 1:
        raise UsageError("--dim must be a positive integer")
    cfg = _config(args, EMBED_DEFAULTS[args.method])
    X = read_point_cloud(args.input)
    res = embed(X, args.method, args.dim, cfg)
    prefix = Path(args.output)
    final = [prefix.parent / (prefix.name + suffix) for suffix in (".csv", "_loss.csv", ".json")]
    with tempfile.TemporaryDirectory(dir=prefix.parent if str(prefix.parent) else ".") as d:
        written = res.write(Path(d) / "out")
        for src, dst in zip(written, final):
            os.replace(src, dst)
    inputs = [args.input] + ([args.config] if args.config else [])
    _write_manifest(args, _pinned_argv(argv, cfg.seed), inputs, final, cfg.to_dict(), cfg.seed)


def cmd_ph(args, argv):
    X = read_point_cloud(args.input)
    ps = persistent_homology(distance_matrix(X), args.max_dim, args.max_radius)
    with _staged([args.output]) as (tmp,):
        write_diagram_csv(ps.diagrams, tmp)
    _write_manifest(args, argv, [args.input], [args.output])


def _parse_input_spec(spec):
    try:
        lhs, path = spec.split("=", 1)
        name, degree = lhs.split(":")
        return name, int(degree), path
    except ValueError:
        raise UsageError(f"--input expects NAME:DEGREE=PATH, got {spec!r}") from None


def _read_matrix(path):
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read cochain file {path}: {exc}") from exc


def cmd_train(args, argv):
    K = _load_complex(args.complex)
    inputs = {}
    paths = [args.complex]
    for spec in args.input:
        name, degree, path = _parse_input_spec(spec)
        try:
            inputs[name] = Cochain(K, degree, _read_matrix(path))
        except DimensionError as exc:
            raise UsageError(f"{path}: {exc}") from exc
        paths.append(path)
    cfg = _config(args, TRAIN_DEFAULTS)
    expr = build_expression(args.expr, K, inputs, activation=args.phi)
    if args.target is not None:
        if expr.kind == "residual_target":
            raise ExpressionError("give either 'lhs = rhs' or --target, not both")
        try:
            target = Cochain(K, expr.degree, _read_matrix(args.target))
        except DimensionError as exc:
            raise UsageError(f"{args.target}: {exc}") from exc
        expr = with_target(expr, target)
        paths.append(args.target)
    weights, history = train_expression(expr, inputs, cfg)
    prefix = Path(args.output)
    wpath = prefix.parent / (prefix.name + "_weights.json")
    lpath = prefix.parent / (prefix.name + "_loss.csv")
    doc = {
        "expr": expr.describe(),
        "activation": args.phi,
        "weights": [w.tolist() for w in weights],
        "final_loss": history[-1],
        "iterations": len(history) - 1,
    }
    with _staged([wpath, lpath]) as (tw, tl):
        Path(tw).write_text(json.dumps(doc, indent=2) + "\n")
        write_loss_csv(history, tl)
    if args.config:
        paths.append(args.config)
    _write_manifest(args, _pinned_argv(argv, cfg.seed), paths, [wpath, lpath], cfg.to_dict(), cfg.seed)


def cmd_rerun(args, argv):
    try:
        manifest = json.loads(Path(args.manifest).read_text())
        old_argv, cwd, expected = manifest["argv"], manifest["cwd"], manifest["outputs"]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read manifest {args.manifest}: {exc}") from exc
    prev = os.getcwd()
    os.chdir(cwd)
    try:
        code = main(old_argv)
        if code != EXIT_OK:
            return code
        bad = [p for p, h in expected.items() if not Path(p).exists() or _sha256(p) != h]
    finally:
        os.chdir(prev)
    if bad:
        print("outputs differ from manifest: " + ", ".join(bad), file=sys.stderr)
        return EXIT_MISMATCH
    print("reproduced " + ", ".join(expected))
    return EXIT_OK


def _float(s):
    try:
        return math.inf if s.lower() in ("inf", "infinity") else float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cochain", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("dec", help="emit a discrete exterior calculus operator in coordinate format")
    d.add_argument("input", help="complex as JSON {\"maximal_simplices\": ...} or OFF mesh")
    d.add_argument("--op", required=True, choices=["boundary", "coboundary", "hodge", "graph-laplacian"])
    d.add_argument("--k", type=int, help="degree")
    d.add_argument("--paper-sign", action="store_true", help="graph Laplacian as A - D instead of D - A")
    d.add_argument("-o", "--output", required=True)
    d.set_defaults(func=cmd_dec)

    e = sub.add_parser("embed", help="embed a point cloud by minimizing a structure loss")
    e.add_argument("input", help="headerless CSV, one point per row")
    e.add_argument("--method", required=True, choices=["mds", "tsne", "ph"])
    e.add_argument("--dim", type=int, required=True)
    e.add_argument("--config", help="JSON {lr, momentum, max_iter, seed, tol}")
    e.add_argument("--seed", type=int)
    e.add_argument("-o", "--output", required=True, help="output prefix")
    e.set_defaults(func=cmd_embed)

    h = sub.add_parser("ph", help="Vietoris-Rips persistence diagrams as CSV")
    h.add_argument("input", help="headerless CSV, one point per row")
    h.add_argument("--max-dim", type=int, default=2, help="largest simplex dimension (0-2)")
    h.add_argument("--max-radius", type=_float, default=math.inf)
    h.add_argument("-o", "--output", required=True)
    h.set_defaults(func=cmd_ph)

    t = sub.add_parser("train", help="train the TN weights of a cochain expression",
                       epilog=EXPR_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    t.add_argument("complex", help="complex as JSON or OFF")
    t.add_argument("--input", action="append", default=[], metavar="NAME:DEGREE=PATH",
                   help="named input cochain (CSV, one row per simplex)")
    t.add_argument("--expr", required=True)
    t.add_argument("--target", help="CSV cochain the expression is fitted to")
    t.add_argument("--phi", default="identity", choices=sorted(ACTIVATIONS))
    t.add_argument("--config", help="JSON {lr, momentum, max_iter, seed, tol}")
    t.add_argument("--seed", type=int)
    t.add_argument("-o", "--output", required=True, help="output prefix")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("rerun", help="re-execute a run manifest and verify identical outputs")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_rerun)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        code = args.func(args, argv)
        return EXIT_OK if code is None else code
    except ExpressionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXPRESSION
    except (DegreeError, UnsupportedDimension) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGREE
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (UsageError, FormatError, DimensionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
