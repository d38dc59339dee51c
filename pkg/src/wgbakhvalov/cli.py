"""Command-line entry point: convergence studies, mesh audits, self-checks, matrix dumps.

Every subcommand accepts ``--config FILE`` with ``key = value`` lines
(``#`` starts a comment). Keys are the long flag names with or without the
leading dashes; flags given on the command line win over the file.

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

import argparse
import logging
import sys

from . import __version__
from .assembly import SolverError, assemble, condense, solve_system, write_matrix_market, write_vector
from .mesh import MeshError, audit_mesh, bakhvalov_nodes, bakhvalov_tensor_mesh
from .problems import EXAMPLES
from .wgops import DEFAULT_PENALTY, PENALTY_RULES

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2

log = logging.getLogger("wgbakhvalov")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        return [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def read_config(path):
    """Parse a flat ``key = value`` file into a dict of strings."""
    out = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = value
    return out


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off", ""}


def _apply_config(sub, values):
    """Install config values as defaults of subparser ``sub``."""
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None or key in ("help", "config"):
            raise UsageError(f"unknown config key {key!r} for '{sub.prog}'")
        if isinstance(action, argparse._StoreTrueAction):
            low = value.lower()
            if low not in _TRUE | _FALSE:
                raise UsageError(f"config key {key!r} expects a boolean, got {value!r}")
            defaults[key] = low in _TRUE
        else:
            defaults[key] = value  # argparse applies ``type`` to string defaults
    sub.set_defaults(**defaults)


def build_parser():
    p = _Parser(prog="wgbakhvalov", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    subs = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = subs.add_parser("study", help="energy-norm convergence study")
    s.add_argument("--example", type=int, choices=sorted(EXAMPLES), default=1)
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--n-list", type=_int_list, default=[8, 16, 32, 64])
    s.add_argument("--eps-list", type=_float_list, default=[1e-6])
    s.add_argument("--sigma", type=float, default=None, help="mesh parameter (default 2k)")
    s.add_argument("--quad-order", type=int, default=None)
    s.add_argument("--penalty", choices=PENALTY_RULES, default=DEFAULT_PENALTY)
    s.add_argument("--no-condense", action="store_true")
    s.add_argument("--jobs", type=int, default=1, help="solve cells concurrently")
    s.add_argument("--format", choices=("csv", "md"), default="csv")
    s.add_argument("--out", default="-", help="output path, '-' for stdout")
    s.add_argument("--plot-dir", default=None, help="also write N/error files here")

    m = subs.add_parser("mesh-audit", help="check the graded mesh width bounds")
    m.add_argument("--n", type=int, default=16)
    m.add_argument("--eps", type=float, default=1e-6)
    m.add_argument("--sigma", type=float, default=2.0)
    m.add_argument("--beta", type=float, default=1.0)
    m.add_argument("--dump", default=None, help="write the node list to this path")

    v = subs.add_parser("verify", help="run the self-check suites")
    v.add_argument("--penalty", choices=PENALTY_RULES, default=DEFAULT_PENALTY)

    d = subs.add_parser("dump-system", help="write the global system in Matrix Market format")
    d.add_argument("--example", type=int, choices=sorted(EXAMPLES), default=1)
    d.add_argument("--k", type=int, default=1)
    d.add_argument("--n", type=int, default=8)
    d.add_argument("--eps", type=float, default=1e-6)
    d.add_argument("--sigma", type=float, default=None)
    d.add_argument("--quad-order", type=int, default=None)
    d.add_argument("--penalty", choices=PENALTY_RULES, default=DEFAULT_PENALTY)
    d.add_argument("--condensed", action="store_true", help="dump the edge Schur complement")
    d.add_argument("--out", default="system", help="path prefix for .mtx files")

    for sub in (s, m, v, d):
        sub.add_argument("--config", default=None, help="key = value defaults file")
        sub.add_argument("-v", "--verbose", action="store_true")
    return p, {"study": s, "mesh-audit": m, "verify": v, "dump-system": d}


def parse_args(argv):
    parser, subs = build_parser()
    first = parser.parse_args(argv)
    if first.config:
        _apply_config(subs[first.command], read_config(first.config))
        return parser.parse_args(argv)
    return first


def _cmd_study(args):
    from .study import csv_text, emit, markdown_table, run_study, write_plot_files

    result = run_study(args.example, args.k, args.n_list, args.eps_list, sigma=args.sigma,
                       nq=args.quad_order, condensed=not args.no_condense,
                       penalty=args.penalty, jobs=args.jobs)
    if args.out == "-":
        sys.stdout.write(markdown_table(result) if args.format == "md" else csv_text(result))
        if args.plot_dir:
            write_plot_files(result, args.plot_dir)
    else:
        try:
            emit(result, args.out, args.format, args.plot_dir)
        except OSError as exc:
            raise UsageError(f"cannot write {args.out}: {exc}")
    for cell in result.failed:
        print(f"cell eps={cell.eps:g} N={cell.N} failed: {cell.failure}", file=sys.stderr)
    return EXIT_NUMERICAL if result.failed else EXIT_OK


def _cmd_mesh_audit(args):
    mesh = bakhvalov_nodes(args.n, args.eps, args.sigma, args.beta)
    audit = audit_mesh(mesh)
    for line in audit.lines():
        print(line)
    if args.dump:
        mesh.dump(args.dump)
    return EXIT_OK if audit.passed else EXIT_NUMERICAL


def _cmd_verify(args):
    from . import verify

    ok = True
    for res in verify.run_all(args.penalty):
        print(res.line())
        ok &= res.passed
    return EXIT_OK if ok else EXIT_NUMERICAL


def _cmd_dump_system(args):
    problem = EXAMPLES[args.example](args.eps, k=args.k,
                                     sigma=2.0 * args.k if args.sigma is None else args.sigma)
    mesh = bakhvalov_tensor_mesh(args.n, args.eps, problem.sigma, problem.beta1, problem.beta2)
    system = assemble(mesh, problem, nq=args.quad_order, penalty=args.penalty)
    _, rep = solve_system(system)
    if args.condensed:
        system, _ = condense(system)
    comment = (f"example {args.example}, k={args.k}, N={args.n}, eps={args.eps:g}, "
               f"sigma={problem.sigma:g}, penalty={args.penalty}, "
               f"solve residual {rep.relative_residual:.2e}")
    try:
        write_matrix_market(f"{args.out}.mtx", system.matrix, comment)
        write_vector(f"{args.out}_rhs.mtx", system.rhs)
    except OSError as exc:
        raise UsageError(f"cannot write {args.out}: {exc}")
    print(f"{args.out}.mtx: {system.size} unknowns, {system.matrix.nnz} nonzeros")
    return EXIT_OK


COMMANDS = {
    "study": _cmd_study,
    "mesh-audit": _cmd_mesh_audit,
    "verify": _cmd_verify,
    "dump-system": _cmd_dump_system,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"wgbakhvalov: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, MeshError, ValueError) as exc:
        print(f"wgbakhvalov: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, FloatingPointError) as exc:
        print(f"wgbakhvalov: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
