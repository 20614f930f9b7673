"""Command-line interface: train, explain, bench, stress, plot.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bench
from .errors import BudgetError, ConfigError, DataError, NumericalError
from .estimators import Budget
from .models import TrainConfig, TreeEnsemble, train_boosted_trees


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shaplab",
        description="Shapley-value feature attribution and estimator benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a boosted tree ensemble from a CSV")
    p_train.add_argument("--data", required=True, help="CSV dataset with header row")
    p_train.add_argument("--target", default=None, help="target column (default: last)")
    p_train.add_argument("--out", required=True, help="output tree-model file")
    p_train.add_argument("--trees", type=int, default=100)
    p_train.add_argument("--depth", type=int, default=3)
    p_train.add_argument("--learning-rate", type=float, default=0.3)
    p_train.add_argument("--min-samples", type=int, default=5)

    p_explain = sub.add_parser("explain", help="attribute one prediction to features")
    p_explain.add_argument("--model", required=True, help="tree-model file")
    p_explain.add_argument("--data", required=True, help="CSV dataset with header row")
    p_explain.add_argument("--target", default=None)
    p_explain.add_argument("--row", type=int, default=0, help="explicand row index")
    p_explain.add_argument(
        "--baseline-rows", default="1", help="comma list of baseline row indices"
    )
    p_explain.add_argument(
        "--strategy",
        default="baseline",
        choices=["baseline", "marginal", "uniform", "product_marginals",
                 "conditional_gaussian"],
    )
    p_explain.add_argument(
        "--estimator",
        default="auto",
        help="auto, interventional_tree_shap, path_dependent_tree_shap, or a "
        "stochastic estimator name",
    )
    p_explain.add_argument("--budget", type=int, default=10_000)
    p_explain.add_argument("--seed", type=int, default=0)
    p_explain.add_argument("--antithetic", action="store_true")
    p_explain.add_argument("--paired", action="store_true")
    p_explain.add_argument("--adaptive", action="store_true")
    p_explain.add_argument("--feature-wise", action="store_true")
    p_explain.add_argument("--mode", default="trapezoid", choices=["trapezoid", "random_q"])
    p_explain.add_argument("--normalize", action="store_true",
                           help="split the efficiency gap evenly across features")
    p_explain.add_argument("--out", required=True, help="output attribution CSV")

    p_bench = sub.add_parser("bench", help="run the convergence benchmark")
    p_bench.add_argument("--config", required=True, help="experiment config JSON")
    p_bench.add_argument("--out", required=True, help="report directory")
    p_bench.add_argument("--seed", type=int, default=None, help="override master seed")
    p_bench.add_argument("--trials", type=int, default=None, help="override n_trials")
    p_bench.add_argument("--budgets", default=None, help="override budgets (comma list)")
    p_bench.add_argument("--jobs", type=int, default=1, help="concurrent trials")

    p_stress = sub.add_parser("stress", help="benchmark with appended all-zero features")
    p_stress.add_argument("--config", required=True)
    p_stress.add_argument("--dummies", type=int, required=True)
    p_stress.add_argument("--out", required=True)
    p_stress.add_argument("--seed", type=int, default=None)
    p_stress.add_argument("--trials", type=int, default=None)
    p_stress.add_argument("--budgets", default=None)
    p_stress.add_argument("--jobs", type=int, default=1)

    p_plot = sub.add_parser("plot", help="render the convergence SVG for a report")
    p_plot.add_argument("--report", required=True, help="completed report directory")
    p_plot.add_argument("--out", default=None, help="output SVG path")
    return parser


def _cmd_train(args) -> int:
    X, y, _ = bench.load_dataset(args.data, args.target)
    cfg = TrainConfig(
        n_trees=args.trees,
        max_depth=args.depth,
        learning_rate=args.learning_rate,
        min_samples=args.min_samples,
    )
    model = train_boosted_trees(X, y, cfg)
    model.save(args.out)
    print(f"trained {len(model.trees)} trees -> {args.out}")
    return 0


def _cmd_explain(args) -> int:
    X, y, names = bench.load_dataset(args.data, args.target)
    model = TreeEnsemble.load(args.model)
    try:
        baseline_rows = [int(k) for k in args.baseline_rows.split(",") if k != ""]
    except ValueError as exc:
        raise ConfigError(f"bad --baseline-rows: {exc}") from exc

    removal = {"kind": args.strategy, "explicand": args.row, "baselines": baseline_rows}
    game, x_e, baselines, _ = bench.build_game(removal, model, X)

    name = args.estimator
    if name == "auto":
        name = "interventional_tree_shap" if args.strategy in ("baseline", "marginal") \
            else "path_dependent_tree_shap"
    spec = {
        "name": name,
        "antithetic": args.antithetic,
        "paired": args.paired,
        "adaptive": args.adaptive,
        "feature_wise": args.feature_wise,
        "mode": args.mode,
    }
    ctx = bench.ExperimentContext(
        config=None, X=X, y=y, feature_names=names, model=model,
        x_e=x_e, baselines=baselines, game=game, truth=None,
    )
    if name in bench.EXACT_ESTIMATORS:
        att = bench._run_exact(name, ctx)
    else:
        trace = bench.run_estimator_trial(spec, ctx, Budget(args.budget), args.seed)
        if not trace.snapshots:
            raise BudgetError(
                f"budget {args.budget} is below the estimator's minimum sample count"
            )
        att = trace.attribution()
    if args.normalize:
        from .games import additive_efficient_normalization

        att = additive_efficient_normalization(att)
    bench.write_attribution_csv(
        args.out, att, names, f"# model={args.model} strategy={args.strategy} "
        f"estimator={name} seed={args.seed}"
    )
    print(f"wrote {att.d} attributions -> {args.out}")
    return 0


def _load_bench_config(args) -> bench.ExperimentConfig:
    cfg = bench.ExperimentConfig.from_json_file(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.trials is not None:
        updates["n_trials"] = args.trials
    if args.budgets is not None:
        try:
            updates["budgets"] = tuple(int(b) for b in args.budgets.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --budgets: {exc}") from exc
    if updates:
        d = cfg.to_dict()
        d.update(updates)
        cfg = bench.ExperimentConfig.from_dict(d)
    return cfg


def _cmd_bench(args) -> int:
    cfg = _load_bench_config(args)
    _, cells = bench.run_experiment(cfg, args.out, jobs=args.jobs)
    done = sum(1 for c in cells if c.mse is not None)
    print(f"wrote report to {args.out} ({done} summary cells)")
    return 0


def _cmd_stress(args) -> int:
    cfg = _load_bench_config(args)
    bench.dummy_feature_stress(cfg, args.dummies, args.out, jobs=args.jobs)
    print(f"wrote base/dummies reports and ratios.csv to {args.out}")
    return 0


def _cmd_plot(args) -> int:
    from .plots import emit_plots

    out = emit_plots(args.report, args.out)
    print(f"wrote {out}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "explain": _cmd_explain,
    "bench": _cmd_bench,
    "stress": _cmd_stress,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, BudgetError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
