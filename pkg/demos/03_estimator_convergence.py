"""Benchmark the stochastic estimators and render the convergence plot.

A scaled-down version of the full protocol: a d=10 tree game, a grid of
evaluation budgets, a handful of trials per estimator, and the bias/variance
decomposition written alongside an SVG of MSE vs budget.
"""

import os
import tempfile

from shaplab.bench import ExperimentConfig, run_experiment
from shaplab.plots import emit_plots

cfg = ExperimentConfig(
    dataset={"kind": "synthetic", "n": 300, "d": 10, "seed": 7},
    model={"kind": "tree", "n_trees": 40, "max_depth": 4,
           "learning_rate": 0.3, "min_samples": 10},
    removal={"kind": "baseline", "explicand": 0, "baseline": 1},
    estimators=[
        {"name": "appro_shapley"},
        {"name": "appro_shapley", "antithetic": True},
        {"name": "kernel_shap", "paired": True},
        {"name": "ime", "adaptive": True},
        {"name": "multilinear", "mode": "trapezoid"},
        {"name": "sgd_shapley"},
        {"name": "interventional_tree_shap"},
    ],
    budgets=[500, 1000, 5000, 10_000],
    n_trials=20,
    seed=42,
)

out = os.path.join(tempfile.mkdtemp(prefix="shaplab_demo_"), "report")
_, cells = run_experiment(cfg, out, jobs=1)

print(f"{'estimator':28s} {'budget':>7s} {'mse':>10s} {'bias^2':>10s} {'variance':>10s}")
for c in cells:
    label = f"{c.estimator} ({c.variant})"
    if c.mse is None:
        print(f"{label:28s} {c.budget:7d} {'missing':>10s}")
        continue
    print(f"{label:28s} {c.budget:7d} {c.mse:10.2e} {c.bias_sq:10.2e} {c.variance:10.2e}")

svg = emit_plots(out)
print(f"\nreport directory: {out}")
print(f"convergence plot: {svg}")
