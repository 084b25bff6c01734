"""Command-line entry point: ``attrq analyze | generate | compare``."""

from __future__ import annotations

import argparse
import sys

from .avatar import AvatarConfig, avatar_run, default_threads
from .avatar import emit_trace as avatar_trace
from .firefront import FirefrontConfig, emit_trace as firefront_trace, firefront_run
from .genrand import filter_multistable, generate_random_model
from .markov import SingularChainError, exact_run
from .model import ModelError
from .parser import ModelDocument, format_model, load_model
from .results import attractor_ids, serialize_result
from .stg import DEFAULT_STATE_CAP, CapacityError, build_stg, quotient_dot, tarjan_scc

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_CAPACITY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _keep(value: str):
    if value.lower() in ("off", "no", "false"):
        return None
    n = int(value)
    if n < 0:
        raise argparse.ArgumentTypeError("must be >= 0 or 'off'")
    return n


def _add_firefront(p):
    g = p.add_argument_group("firefront")
    g.add_argument("--alpha", type=float, default=1e-5)
    g.add_argument("--beta", type=float, default=1e-3)
    g.add_argument("--max-iters", type=int, default=None)


def _add_avatar(p):
    g = p.add_argument_group("avatar")
    g.add_argument("--runs", type=int, default=10_000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tau", type=int, default=3)
    g.add_argument("--min-rewire", type=int, default=4)
    g.add_argument("--inflationary", choices=["auto", "on", "off"], default="auto")
    g.add_argument("--keep-transients", type=_keep, default=32, metavar="N|off",
                   help="minimum size of transients kept across simulations")
    g.add_argument("--threads", type=int, default=default_threads())


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="attrq", description="Reachability probabilities of attractors in logical models.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    a = sub.add_parser("analyze", help="run one method on a model file")
    a.add_argument("model")
    a.add_argument("--method", choices=["exact", "firefront", "avatar"], required=True)
    fmt = a.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="fmt", action="store_const", const="json")
    fmt.add_argument("--csv", dest="fmt", action="store_const", const="csv")
    a.add_argument("--out", help="write the report here instead of stdout")
    a.add_argument("--trace", help="per-iteration (firefront) or per-run (avatar) CSV")
    a.add_argument("--plot", help="PNG figure of the trace")
    a.add_argument("--cap", type=int, default=DEFAULT_STATE_CAP, help="explicit state cap (exact)")
    a.add_argument("--rational", action="store_true", help="exact fractions (tiny models)")
    a.add_argument("--dot", help="write the quotient graph as Graphviz (exact)")
    _add_firefront(a)
    _add_avatar(a)

    g = sub.add_parser("generate", help="random Boolean model")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--require-multistable", action="store_true")
    g.add_argument("--max-tries", type=int, default=10_000)
    g.add_argument("--out")

    c = sub.add_parser("compare", help="all applicable methods, one row each")
    c.add_argument("model")
    c.add_argument("--cap", type=int, default=DEFAULT_STATE_CAP)
    _add_firefront(c)
    _add_avatar(c)
    c.set_defaults(max_iters=1000)
    return p


def _avatar_cfg(args) -> AvatarConfig:
    return AvatarConfig(
        runs=args.runs, seed=args.seed, tau0=args.tau, min_cycle_to_rewire=args.min_rewire,
        inflationary=args.inflationary, keep_transients=args.keep_transients is not None,
        keep_transients_min_size=args.keep_transients or 0, threads=max(1, args.threads),
    )


def _emit(text: str, path=None):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_analyze(args) -> int:
    doc = load_model(args.model)
    fmt = args.fmt or "json"
    if args.method == "exact":
        result = exact_run(doc, cap=args.cap, rational=args.rational)
        if args.dot:
            from .parser import initial_distribution

            stg = build_stg(doc.model, roots=list(initial_distribution(doc)), cap=args.cap)
            with open(args.dot, "w", encoding="utf-8") as fh:
                fh.write(quotient_dot(stg, tarjan_scc(stg), doc.model))
    elif args.method == "firefront":
        cfg = FirefrontConfig(args.alpha, args.beta, args.max_iters, trace=bool(args.trace or args.plot))
        run = firefront_run(doc, cfg)
        result = run.result
        if args.trace:
            firefront_trace(run, args.trace)
        if args.plot:
            from .plots import plot_firefront

            plot_firefront(run.trace, args.plot)
    else:
        run = avatar_run(doc, _avatar_cfg(args))
        result = run.result
        if args.trace:
            avatar_trace(run, args.trace)
        if args.plot:
            from .plots import plot_avatar

            plot_avatar(run, args.plot)
    _emit(serialize_result(result, fmt, doc.model), args.out)
    return EXIT_OK


def cmd_generate(args) -> int:
    import numpy as np

    rng = np.random.default_rng(args.seed)
    for _ in range(args.max_tries):
        model = generate_random_model(args.n, args.k, rng)
        if not args.require_multistable or filter_multistable(model):
            break
    else:
        raise ModelError(f"no multistable model in {args.max_tries} draws")
    _emit(format_model(ModelDocument(model)), args.out)
    return EXIT_OK


def _row(method, result, extra="") -> str:
    parts = []
    for aid, est in zip(attractor_ids(result), result.sorted_attractors()):
        s = f"{aid}({est.probability:.2f})"
        if est.avg_depth is not None:
            s += f" d={est.avg_depth:.2f}"
        if est.std_error is not None:
            s += f" se={est.std_error:.3f}"
        parts.append(s)
    return (f"{method:<10} {result.wall_time_s:>9.3f}s  {'; '.join(parts) or '-'}"
            f"  residual={result.residual:.3g}{extra}")


def cmd_compare(args) -> int:
    doc = load_model(args.model)
    sampled = bool(doc.initial.sampled)
    print(f"# {doc.name}: {len(doc.model)} components, |S|={doc.model.n_states}")
    if sampled:
        print(f"{'exact':<10} skipped (sampling)")
        print(f"{'firefront':<10} skipped (sampling)")
    else:
        try:
            print(_row("exact", exact_run(doc, cap=args.cap)))
        except CapacityError as exc:
            print(f"{'exact':<10} skipped ({exc})")
        if doc.model.n_states > args.cap:
            print(f"{'firefront':<10} skipped (state cap)")
        else:
            res = firefront_run(doc, FirefrontConfig(args.alpha, args.beta, args.max_iters)).result
            print(_row("firefront", res, f" iterations={res.iterations}"))
    res = avatar_run(doc, _avatar_cfg(args)).result
    print(_row("avatar", res, f" runs={res.runs}"))
    return EXIT_OK


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("attrq: a subcommand is required (analyze, generate, compare)")
        handler = {"analyze": cmd_analyze, "generate": cmd_generate, "compare": cmd_compare}[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ModelError, SingularChainError, OSError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
