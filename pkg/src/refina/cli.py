"""Command-line entry point: ``refina {bench,refine,scale,metrics}``.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 unreadable
input, 3 inconsistent dimensions.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import yaml

from .alignment import load_alignment
from .errors import DimensionError, EdgeListError
from .graph import load_edge_list, load_permutation
from .harness import ConfigError, ExperimentConfig, run_benchmark, run_external, scaling_probe
from .metrics import evaluate
from .refine import RefineConfig
from .validation import check_truth

EXIT_CONFIG = 1
EXIT_INPUT = 2
EXIT_DIMENSION = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _epsilon(text: str):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_refine_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("refinement")
    g.add_argument("--mode", choices=("dense", "sparse"))
    g.add_argument("--alpha", type=int)
    g.add_argument("--epsilon", type=_epsilon, help="number or 'auto'")
    g.add_argument("--iters", type=int, help="number of refinement iterations")
    g.add_argument("--normalization", choices=("single", "sinkhorn"))
    g.add_argument("--log-every", type=int, help="log trace metrics every j-th iteration")
    g.add_argument("--early-stop", type=float,
                   help="stop once at most this fraction of rows change their match")


def _refine_overrides(args) -> dict:
    pairs = {
        "mode": args.mode,
        "alpha": args.alpha,
        "epsilon": args.epsilon,
        "iterations": args.iters,
        "normalization": args.normalization,
        "log_every": args.log_every,
        "early_stop_fraction": args.early_stop,
    }
    return {k: v for k, v in pairs.items() if v is not None}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="refina", description="Refine network alignments by matched neighborhood consistency.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("bench", help="benchmark on noisy permuted copies")
    b.add_argument("--config", help="YAML or JSON experiment file; flags override its keys")
    b.add_argument("--graph", help="edge-list file for the base graph")
    b.add_argument("--n", type=int, help="generate a random base graph with n nodes")
    b.add_argument("--avg-degree", type=float, default=10.0)
    b.add_argument("--graph-seed", type=int, default=0)
    b.add_argument("--noise", type=_float_list, help="comma-separated noise levels")
    b.add_argument("--noise-kind", choices=("remove_edges", "add_edges"))
    b.add_argument("--seeds", type=_int_list, help="comma-separated trial seeds")
    b.add_argument("--workers", type=int)
    b.add_argument("--out")
    _add_refine_flags(b)

    r = sub.add_parser("refine", help="refine an alignment file")
    r.add_argument("--graph", required=True)
    r.add_argument("--graph2", required=True)
    r.add_argument("--m0", required=True, help="initial alignment file")
    r.add_argument("--truth", help="optional ground-truth correspondence file")
    r.add_argument("--top", type=int, help="write only the top entries of each row")
    r.add_argument("--out", required=True)
    _add_refine_flags(r)

    s = sub.add_parser("scale", help="per-iteration time against graph size")
    s.add_argument("--sizes", type=_int_list, default=[1000, 2000, 4000])
    s.add_argument("--avg-degree", type=float, default=10.0)
    s.add_argument("--iters", type=int, default=3)
    s.add_argument("--alpha", type=int, default=10)
    s.add_argument("--mode", choices=("dense", "sparse", "both"), default="both")
    s.add_argument("--out", required=True, help="CSV output path")

    m = sub.add_parser("metrics", help="evaluate an alignment file")
    m.add_argument("--graph", required=True)
    m.add_argument("--graph2", required=True)
    m.add_argument("--m0", required=True, help="alignment file to evaluate")
    m.add_argument("--truth")
    m.add_argument("--out", help="JSON output path; stdout when omitted")
    return parser


def _bench(args) -> None:
    overrides = {
        "noise": args.noise,
        "noise_kind": args.noise_kind,
        "seeds": args.seeds,
        "workers": args.workers,
        "out": args.out,
    }
    if args.graph is not None:
        overrides["graph"] = {"path": args.graph}
    elif args.n is not None:
        overrides["graph"] = {"n": args.n, "avg_degree": args.avg_degree, "seed": args.graph_seed}
    refine_kw = _refine_overrides(args)
    if args.config is not None:
        cfg = ExperimentConfig.from_file(args.config, **overrides)
        if refine_kw:
            cfg = dataclasses.replace(cfg, refine={**cfg.refine, **refine_kw})
    else:
        data = {k: v for k, v in overrides.items() if v is not None}
        if "graph" not in data or "out" not in data:
            raise ConfigError("bench needs --config, or --graph/--n together with --out")
        cfg = ExperimentConfig(refine=refine_kw, **data)
    result = run_benchmark(cfg)
    print(f"wrote {len(result['rows'])} cells to {cfg.out}")


def _refine(args) -> None:
    cfg = RefineConfig(**_refine_overrides(args))
    _, trace, report = run_external(args.graph, args.graph2, args.m0, cfg, args.out,
                                    truth_path=args.truth, top_out=args.top)
    print(report.to_json())


def _scale(args) -> None:
    modes = ("dense", "sparse") if args.mode == "both" else (args.mode,)
    rows = scaling_probe(args.sizes, avg_degree=args.avg_degree, iterations=args.iters,
                         modes=modes, alpha=args.alpha, out=args.out)
    for r in rows:
        print(f"{r['n']},{r['mode']},{r['ms_per_iter']:.3f}")


def _metrics(args) -> None:
    g1, g2 = load_edge_list(args.graph), load_edge_list(args.graph2)
    m = load_alignment(args.m0, g1.n, g2.n)
    truth = None
    if args.truth is not None:
        truth = check_truth(load_permutation(args.truth, g1.n), g1.n, g2.n)
    report = evaluate(g1, g2, m, truth)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        report.to_json(args.out)
    print(report.to_json())


_COMMANDS = {"bench": _bench, "refine": _refine, "scale": _scale, "metrics": _metrics}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _COMMANDS[args.command](args)
    except DimensionError as exc:
        print(f"refina: dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except (OSError, EdgeListError) as exc:
        print(f"refina: cannot read input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigError, yaml.YAMLError, json.JSONDecodeError, ValueError, TypeError) as exc:
        print(f"refina: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
