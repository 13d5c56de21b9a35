"""Command-line interface.

Subcommands: generate (emit one episode as JSON), run (execute an experiment
config), aggregate, compare (against a human-accuracy CSV), plot, gradcheck
(finite-difference verification on random episodes), selftest (acceptance
suite). Exit codes: 0 success, 1 invalid configuration or arguments,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, features, harness, plots, scenegen
from .harness import ConfigError
from .optim import EpisodeArrays, LossConfig, ParamSet, finite_diff_check
from .relgraph import NUM_RELATIONS, ObjectGraph


def _cmd_generate(args) -> int:
    catalog = scenegen.load_catalog(args.catalog) if args.catalog else scenegen.default_catalog()
    if args.problem not in catalog.problems:
        print(f"unknown problem {args.problem!r}; known: {sorted(catalog.problems)}",
              file=sys.stderr)
        return 1
    if args.shots < 2 or args.shots % 2 != 0:
        print("--shots must be even and >= 2", file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    pos, neg, targets = harness.build_episode_scenes(
        args.problem, args.shots, args.targets, args.seed, rng, catalog
    )
    noise_rng = rng if args.noise else None
    payload = {
        "format_version": 1,
        "problem_id": args.problem,
        "seed": args.seed,
        "total_shots": args.shots,
        "noise": bool(args.noise),
        "distinguishing_relation": catalog.problems[args.problem].distinguishing_relation,
        "positives": [features.scene_to_graph(s, noise_rng, catalog).to_dict() for s in pos],
        "negatives": [features.scene_to_graph(s, noise_rng, catalog).to_dict() for s in neg],
        "targets": [
            {
                "label": s.label,
                "graph": features.scene_to_graph(s, noise_rng, catalog).to_dict(),
            }
            for s in targets
        ],
        "scenes": {
            "positives": [scenegen.scene_to_dict(s) for s in pos],
            "negatives": [scenegen.scene_to_dict(s) for s in neg],
            "targets": [scenegen.scene_to_dict(s) for s in targets],
        },
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out}")
    if args.svg:
        svg_dir = Path(args.svg)
        svg_dir.mkdir(parents=True, exist_ok=True)
        for group, scenes in (("pos", pos), ("neg", neg), ("target", targets)):
            for i, scene in enumerate(scenes):
                path = svg_dir / f"{args.problem}_{args.seed}_{group}{i}.svg"
                path.write_text(scenegen.scene_to_svg(scene, catalog), encoding="utf-8")
        print(f"wrote scene renderings to {svg_dir}")
    return 0


def _cmd_run(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        config = harness.parse_experiment_config(raw)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 1
    records_path = harness.run_experiment(config)
    records = harness.read_records(records_path)
    n = len(records)
    correct = sum(int(r["correct"]) for r in records)
    print(f"wrote {records_path} ({n} records, overall accuracy "
          f"{correct / n:.3f})" if n else f"wrote {records_path} (no records)")
    failures = Path(config.output_dir) / "failures.csv"
    n_failures = max(len(failures.read_text(encoding='utf-8').splitlines()) - 1, 0)
    if n_failures:
        print(f"{n_failures} cell(s) failed; see {failures}", file=sys.stderr)
    return 0


def _cmd_aggregate(args) -> int:
    records = harness.read_records(args.records)
    if not records:
        print("records file is empty", file=sys.stderr)
        return 2
    rows = harness.aggregate_curves(records)
    harness.write_aggregates(rows, args.out)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def _cmd_compare(args) -> int:
    rows = harness.read_aggregates(args.aggregates)
    human = harness.load_human_curve(args.human, args.problem_class)
    if not human:
        print(f"no human rows for problem class {args.problem_class!r}", file=sys.stderr)
        return 1
    variants = sorted({r["variant"] for r in rows})
    print("variant,rmse_pp,mae_pp")
    for variant in variants:
        curve = harness.model_curve_from_aggregates(rows, variant)
        try:
            rmse, mae = harness.compare_to_human(curve, human)
        except ValueError as exc:
            print(f"{variant}: {exc}", file=sys.stderr)
            return 2
        print(f"{variant},{rmse:.3f},{mae:.3f}")
    return 0


def _cmd_plot(args) -> int:
    rows = harness.read_aggregates(args.aggregates)
    records = harness.read_records(args.records) if args.records else None
    paths = plots.render_plots(rows, args.out, records)
    for p in paths:
        print(f"wrote {p}")
    return 0


def _random_episode_arrays(rng: np.random.Generator) -> EpisodeArrays:
    n = int(rng.integers(2, 5))
    dim = 6

    def graph() -> ObjectGraph:
        nodes = rng.normal(0.0, 1.0, (n, dim))
        edges = rng.uniform(0.0, 1.0, (n, n, NUM_RELATIONS))
        edges[np.arange(n), np.arange(n)] = 0.0
        return ObjectGraph(nodes, edges)

    n_pos = int(rng.integers(1, 4))
    n_neg = int(rng.integers(1, 4))
    from .relgraph import Episode

    episode = Episode(
        positives=tuple(graph() for _ in range(n_pos)),
        negatives=tuple(graph() for _ in range(n_neg)),
        target=graph(),
        true_label="positive",
    )
    return EpisodeArrays.from_episode(episode)


def _cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for i in range(args.episodes):
        arrays = _random_episode_arrays(rng)
        params = ParamSet.initialize(rng, arrays.node_count,
                                     len(arrays.pos_nodes), len(arrays.neg_nodes))
        params.alpha_logit[...] = rng.normal(0.0, 0.5)
        params.edge_logits[...] = rng.normal(0.0, 0.5, NUM_RELATIONS)
        err = finite_diff_check(params, arrays, LossConfig(), eps=args.eps)
        worst = max(worst, err)
        print(f"episode {i}: n={arrays.node_count} max relative error {err:.3e}")
    print(f"max relative error over {args.episodes} episodes: {worst:.3e}")
    if worst >= args.tolerance:
        print(f"FAIL: {worst:.3e} >= {args.tolerance:.1e}", file=sys.stderr)
        return 2
    print(f"PASS: below {args.tolerance:.1e}")
    return 0


def _cmd_selftest(args) -> int:
    from . import selftest

    results = selftest.run_all(quick=args.quick)
    failed = [r for r in results if not r.passed]
    return 0 if not failed else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psilearn",
        description="Few-shot compositional concept learning over object-relation graphs",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate one episode as JSON (optionally SVG scenes)")
    p.add_argument("--problem", required=True)
    p.add_argument("--shots", type=int, default=8)
    p.add_argument("--targets", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--catalog", help="path to a problem catalog JSON (default: built-in)")
    p.add_argument("--out", required=True)
    p.add_argument("--svg", help="directory for SVG scene renderings")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("aggregate", help="aggregate records into accuracy curves")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_aggregate)

    p = sub.add_parser("compare", help="RMSE/MAE of model curves vs a human curve CSV")
    p.add_argument("--aggregates", required=True)
    p.add_argument("--human", required=True)
    p.add_argument("--problem-class", default="first-order")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("plot", help="render SVG figures from aggregates")
    p.add_argument("--aggregates", required=True)
    p.add_argument("--records", help="records CSV for the accuracy-by-parameter figures")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("selftest", help="run the acceptance criteria")
    p.add_argument("--quick", action="store_true",
                   help="reduced sample sizes (smoke test, not the stated thresholds)")
    p.set_defaults(func=_cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure contract: exit code 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
