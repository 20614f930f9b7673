"""Benchmark harness: datasets, experiment configs, multi-trial estimator
runs, and error decomposition into squared bias and variance.

A report directory is a pure function of (config, master seed): rerunning
with the same inputs reproduces every file byte for byte. All output files
embed the config hash and master seed so a report can be traced back to the
exact run that produced it.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import estimators as est
from .errors import ConfigError, DataError
from .exact import interventional_tree_shap, linear_shap, path_dependent_tree_shap
from .games import AttributionVector, brute_force_shapley
from .models import (
    GaussianDistribution,
    LinearModel,
    TrainConfig,
    TreeEnsemble,
    train_boosted_trees,
)
from .removal import (
    baseline_game,
    conditional_gaussian_game,
    marginal_game,
    product_marginals_game,
    uniform_game,
)

DEFAULT_BUDGETS = (500, 1000, 5000, 10_000, 50_000, 100_000)


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


def load_dataset(path, target: str | None = None):
    """Read a CSV with a header row into (X, y, feature_names).

    The last column is the target unless `target` names another column.
    Non-numeric cells, NaN/inf values,. and ragged rows are rejected with
    row/column diagnostics.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file, expected a header row")
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc

    header = [h.strip() for h in header]
    if target is None:
        t_idx = len(header) - 1
    else:
        if target not in header:
            raise DataError(f"{path}: target column {target!r} not in header {header}")
        t_idx = header.index(target)

    n_cols = len(header)
    data = np.empty((len(rows), n_cols), dtype=np.float64)
    for r, row in enumerate(rows):
        if len(row) != n_cols:
            raise DataError(
                f"{path}: row {r + 2} has {len(row)} cells, header has {n_cols}"
            )
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {r + 2}, column {header[c]!r}: "
                    f"non-numeric cell {cell!r}"
                ) from None
            if not math.isfinite(v):
                raise DataError(
                    f"{path}: row {r + 2}, column {header[c]!r}: non-finite value {cell}"
                )
            data[r, c] = v

    keep = [c for c in range(n_cols) if c != t_idx]
    X = data[:, keep]
    y = data[:, t_idx]
    names = [header[c] for c in keep]
    return X, y, names


def _synthetic_target(X: np.ndarray, rng: np.random.Generator, noise: float):
    # mixes main effects with second- and third-order interactions so tree
    # games are genuinely non-additive (and antithetic pairing is not exact)
    n, d = X.shape
    y = np.zeros(n)
    if d >= 1:
        y += 2.0 * X[:, 0]
    if d >= 3:
        y += 1.5 * X[:, 1] * X[:, 2]
    if d >= 5:
        y += 2.0 * (X[:, 3] > 0) * X[:, 4]
    if d >= 6:
        y += X[:, 5] ** 2 + 1.2 * (X[:, 0] > 0) * (X[:, 3] < 0.5) * X[:, 5]
    if d >= 8:
        y += np.sin(2.0 * X[:, 6]) + 0.5 * X[:, 7]
    if d >= 9:
        y += 0.9 * (X[:, 2] > -0.3) * X[:, 7] * X[:, 8]
    if d >= 10:
        y += 0.8 * (X[:, 8] > 0.5) - 0.7 * X[:, 9] * (X[:, 1] < 0)
    return y + noise * rng.standard_normal(n)


def synthetic_dataset(spec: dict):
    """Gaussian features with a fixed nonlinear target; reproducible per seed."""
    n = int(spec.get("n", 300))
    d = int(spec.get("d", 10))
    seed = int(spec.get("seed", 0))
    noise = float(spec.get("noise", 0.1))
    rho = float(spec.get("rho", 0.0))
    rng = np.random.default_rng(seed)
    if rho:
        sigma = np.full((d, d), rho) + (1.0 - rho) * np.eye(d)
        chol = np.linalg.cholesky(sigma)
        X = rng.standard_normal((n, d)) @ chol.T
    else:
        X = rng.standard_normal((n, d))
    y = _synthetic_target(X, rng, noise)
    names = [f"x{j}" for j in range(d)]
    return X, y, names


def get_dataset(spec: dict):
    kind = spec.get("kind")
    if kind == "csv":
        return load_dataset(spec["path"], spec.get("target"))
    if kind == "synthetic":
        return synthetic_dataset(spec)
    raise ConfigError(f"unknown dataset kind {kind!r}")


# ---------------------------------------------------------------------------
# experiment config
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a benchmark run depends on, JSON-round-trippable."""

    dataset: dict
    model: dict
    removal: dict
    estimators: tuple[dict, ...]
    budgets: tuple[int, ...] = DEFAULT_BUDGETS
    n_trials: int = 100
    seed: int = 0
    truth: str = "auto"

    def __post_init__(self):
        object.__setattr__(self, "estimators", tuple(dict(e) for e in self.estimators))
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        if not self.estimators:
            raise ConfigError("config lists no estimators")
        if sorted(self.budgets) != list(self.budgets):
            raise ConfigError("budgets must be sorted ascending")

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "model": self.model,
            "removal": self.removal,
            "estimators": list(self.estimators),
            "budgets": list(self.budgets),
            "n_trials": self.n_trials,
            "seed": self.seed,
            "truth": self.truth,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        try:
            return cls(
                dataset=dict(obj["dataset"]),
                model=dict(obj["model"]),
                removal=dict(obj["removal"]),
                estimators=tuple(obj["estimators"]),
                budgets=tuple(obj.get("budgets", DEFAULT_BUDGETS)),
                n_trials=int(obj.get("n_trials", 100)),
                seed=int(obj.get("seed", 0)),
                truth=str(obj.get("truth", "auto")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed experiment config: {exc}") from exc

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(obj)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# model / game / truth construction
# ---------------------------------------------------------------------------


def build_model(spec: dict, X, y):
    kind = spec.get("kind")
    if kind == "tree":
        cfg = TrainConfig(
            n_trees=int(spec.get("n_trees", 100)),
            max_depth=int(spec.get("max_depth", 3)),
            learning_rate=float(spec.get("learning_rate", 0.3)),
            min_samples=int(spec.get("min_samples", 5)),
        )
        return train_boosted_trees(X, y, cfg)
    if kind == "linear":
        a = np.column_stack([np.ones(len(X)), X])
        coef, *_ = np.linalg.lstsq(a, y, rcond=None)
        return LinearModel(beta=coef[1:], beta0=float(coef[0]))
    if kind == "tree_file":
        return TreeEnsemble.load(spec["path"])
    raise ConfigError(f"unknown model kind {kind!r}")


@dataclass
class ExperimentContext:
    config: ExperimentConfig
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    model: object
    x_e: np.ndarray
    baselines: np.ndarray
    game: object
    truth: AttributionVector
    dist: GaussianDistribution | None = None


def _select_rows(spec, X):
    e_idx = int(spec.get("explicand", 0))
    if not 0 <= e_idx < len(X):
        raise ConfigError(f"explicand row {e_idx} outside dataset of {len(X)} rows")
    x_e = X[e_idx].copy()
    b_spec = spec.get("baselines", spec.get("baseline", 1 if len(X) > 1 else 0))
    if isinstance(b_spec, int):
        rows = [b_spec]
    elif b_spec == "all":
        rows = [k for k in range(len(X)) if k != e_idx]
    elif isinstance(b_spec, dict) and "first" in b_spec:
        rows = [k for k in range(len(X)) if k != e_idx][: int(b_spec["first"])]
    else:
        rows = [int(k) for k in b_spec]
    if not rows:
        raise ConfigError("baseline selection is empty")
    for k in rows:
        if not 0 <= k < len(X):
            raise ConfigError(f"baseline row {k} outside dataset of {len(X)} rows")
    return x_e, X[rows].copy()


def build_game(spec: dict, model, X):
    kind = spec.get("kind")
    x_e, baselines = _select_rows(spec, X)
    dist = None
    if kind == "baseline":
        game = baseline_game(model, x_e, baselines[0])
    elif kind == "marginal":
        game = marginal_game(model, x_e, baselines)
    elif kind == "uniform":
        game = uniform_game(
            model, x_e, baselines,
            seed=int(spec.get("seed", 0)), n_draws=int(spec.get("n_draws", 256)),
        )
    elif kind == "product_marginals":
        game = product_marginals_game(
            model, x_e, baselines,
            seed=int(spec.get("seed", 0)), n_draws=int(spec.get("n_draws", 256)),
        )
    elif kind == "conditional_gaussian":
        mu = X.mean(axis=0)
        centered = X - mu
        sigma = centered.T @ centered / max(1, len(X) - 1)
        dist = GaussianDistribution(mu, sigma)
        game = conditional_gaussian_game(
            model, x_e, dist,
            seed=int(spec.get("seed", 0)), n_draws=int(spec.get("n_draws", 256)),
        )
    else:
        raise ConfigError(f"unknown removal kind {kind!r}")
    return game, x_e, baselines, dist


def compute_truth(cfg: ExperimentConfig, ctx_model, game, x_e, baselines) -> AttributionVector:
    how = cfg.truth
    removal_kind = cfg.removal.get("kind")
    if how == "auto":
        if isinstance(ctx_model, TreeEnsemble) and removal_kind in ("baseline", "marginal"):
            how = "interventional_tree_shap"
        elif isinstance(ctx_model, LinearModel) and removal_kind in ("baseline", "marginal"):
            how = "linear_shap"
        else:
            how = "brute_force"
    if how == "interventional_tree_shap":
        return interventional_tree_shap(ctx_model, x_e, baselines)
    if how == "linear_shap":
        return linear_shap(ctx_model, x_e, baselines)
    if how == "brute_force":
        return brute_force_shapley(game)
    raise ConfigError(f"unknown truth method {cfg.truth!r}")


def prepare(cfg: ExperimentConfig, n_dummies: int = 0) -> ExperimentContext:
    X, y, names = get_dataset(cfg.dataset)
    if n_dummies:
        X = np.column_stack([X, np.zeros((len(X), n_dummies))])
        names = names + [f"dummy{k}" for k in range(n_dummies)]
    model = build_model(cfg.model, X, y)
    game, x_e, baselines, dist = build_game(cfg.removal, model, X)
    truth = compute_truth(cfg, model, game, x_e, baselines)
    return ExperimentContext(cfg, X, y, names, model, x_e, baselines, game, truth, dist)


# ---------------------------------------------------------------------------
# estimator registry
# ---------------------------------------------------------------------------

STOCHASTIC_ESTIMATORS = (
    "semivalue",
    "ime",
    "appro_shapley",
    "kernel_shap",
    "sgd_shapley",
    "multilinear",
)
EXACT_ESTIMATORS = ("linear_shap", "interventional_tree_shap", "path_dependent_tree_shap")


def variant_label(spec: dict) -> str:
    parts = []
    if spec.get("name") == "multilinear":
        parts.append(str(spec.get("mode", "trapezoid")))
        if spec.get("feature_wise"):
            parts.append("feature")
    if spec.get("paired"):
        parts.append("paired")
    if spec.get("antithetic"):
        parts.append("antithetic")
    if spec.get("adaptive"):
        parts.append("adaptive")
    return "+".join(parts) if parts else "plain"


def run_estimator_trial(spec: dict, ctx: ExperimentContext, budget: est.Budget, seed):
    """One seeded estimator run; returns an EstimateTrace."""
    name = spec.get("name")
    game = ctx.game
    if name == "semivalue" or name == "ime":
        return est.ime(
            game,
            budget,
            seed,
            antithetic=bool(spec.get("antithetic", False)),
            adaptive=bool(spec.get("adaptive", False)),
            pilot=int(spec.get("pilot", 4)),
        )
    if name == "appro_shapley":
        return est.appro_shapley(
            game, budget, seed, antithetic=bool(spec.get("antithetic", False))
        )
    if name == "kernel_shap":
        return est.kernel_shap(game, budget, seed, paired=bool(spec.get("paired", False)))
    if name == "sgd_shapley":
        sched = (float(spec.get("step_c", 1.0)), float(spec.get("step_t0", 10.0)))
        return est.sgd_shapley(game, budget, seed, step_schedule=sched)
    if name == "multilinear":
        return est.multilinear(
            game,
            budget,
            seed,
            mode=str(spec.get("mode", "trapezoid")),
            feature_wise=bool(spec.get("feature_wise", False)),
            antithetic=bool(spec.get("antithetic", False)),
            adaptive=bool(spec.get("adaptive", False)),
            q_nodes=int(spec.get("q_nodes", 50)),
            pilot=int(spec.get("pilot", 4)),
        )
    if name in EXACT_ESTIMATORS:
        att = _run_exact(name, ctx)
        trace = est.EstimateTrace(d=game.d, v_empty=att.v_empty, v_full=att.v_full)
        for cp in budget.checkpoints:
            trace.snapshots.append(est.TraceSnapshot(cp, 0, att.phi.copy()))
        return trace
    raise ConfigError(f"unknown estimator {name!r}")


def _run_exact(name: str, ctx: ExperimentContext) -> AttributionVector:
    if name == "linear_shap":
        return linear_shap(ctx.model, ctx.x_e, ctx.baselines)
    if name == "interventional_tree_shap":
        return interventional_tree_shap(ctx.model, ctx.x_e, ctx.baselines)
    if name == "path_dependent_tree_shap":
        return path_dependent_tree_shap(ctx.model, ctx.x_e)
    raise ConfigError(f"unknown exact estimator {name!r}")


# ---------------------------------------------------------------------------
# error decomposition and report files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorCell:
    """One (estimator, budget) cell: mse = bias_sq + variance by construction."""

    estimator: str
    variant: str
    budget: int
    mse: float | None
    bias_sq: float | None
    variance: float | None
    n_trials: int
    n_missing: int


def decompose_errors(estimates: np.ndarray, truth: np.ndarray) -> tuple[float, float, float]:
    """Mean over features of per-feature MSE, squared bias, and variance.

    `estimates` is (n_trials, d). Variance uses the population convention so
    the identity mse = bias_sq + variance holds exactly.
    """
    mean_est = estimates.mean(axis=0)
    bias_sq = float(((mean_est - truth) ** 2).mean())
    variance = float(((estimates - mean_est) ** 2).mean(axis=0).mean())
    mse = float(((estimates - truth) ** 2).mean(axis=0).mean())
    return mse, bias_sq, variance


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _write_csv(path, header_comment: str, columns: list[str], rows) -> None:
    buf = io.StringIO()
    buf.write(header_comment + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(row)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def write_attribution_csv(path, att: AttributionVector, feature_names, comment: str) -> None:
    rows = [
        [j, feature_names[j], _fmt(att.phi[j]), _fmt(att.v_empty), _fmt(att.v_full),
         _fmt(att.efficiency_gap)]
        for j in range(att.d)
    ]
    _write_csv(
        path,
        comment,
        ["feature_index", "feature_name", "phi", "v_empty", "v_full", "efficiency_gap"],
        rows,
    )


def run_experiment(cfg: ExperimentConfig, out_dir, jobs: int = 1, n_dummies: int = 0):
    """Run every configured estimator for n_trials seeded trials.

    Writes config.json, truth.csv, estimates.csv (wide, one row per
    estimator/trial/budget), and summary.csv (one row per estimator/budget
    with the mse/bias/variance decomposition). Missing cells (budgets below
    an estimator's minimum) are counted, not errored.
    """
    ctx = prepare(cfg, n_dummies=n_dummies)
    os.makedirs(out_dir, exist_ok=True)
    stamp = f"# config_hash={cfg.config_hash()} master_seed={cfg.seed}"
    d = ctx.game.d

    budget = est.Budget(max(cfg.budgets), tuple(cfg.budgets))
    results: dict[int, list] = {}
    for e_idx, spec in enumerate(cfg.estimators):
        traces = [None] * cfg.n_trials

        def one_trial(t, spec=spec, e_idx=e_idx):
            return run_estimator_trial(spec, ctx, budget, (cfg.seed, e_idx, t))

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                for t, trace in enumerate(pool.map(one_trial, range(cfg.n_trials))):
                    traces[t] = trace
        else:
            for t in range(cfg.n_trials):
                traces[t] = one_trial(t)
        results[e_idx] = traces

    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "config": cfg.to_dict(),
                "config_hash": cfg.config_hash(),
                "master_seed": cfg.seed,
                "n_dummies": n_dummies,
            },
            fh,
            indent=1,
            sort_keys=True,
        )
        fh.write("\n")

    write_attribution_csv(
        os.path.join(out_dir, "truth.csv"), ctx.truth, ctx.feature_names, stamp
    )

    est_rows = []
    cells: list[ErrorCell] = []
    for e_idx, spec in enumerate(cfg.estimators):
        name = spec["name"]
        label = variant_label(spec)
        traces = results[e_idx]
        for t, trace in enumerate(traces):
            for cp in cfg.budgets:
                snap = trace.snapshot_at(cp)
                if snap is None:
                    continue
                est_rows.append(
                    [name, label, t, cp, snap.evals_used]
                    + [_fmt(v) for v in snap.phi]
                )
        for cp in cfg.budgets:
            got = [tr.snapshot_at(cp) for tr in traces]
            present = np.array([s.phi for s in got if s is not None])
            n_missing = sum(1 for s in got if s is None)
            if len(present) == 0:
                cells.append(
                    ErrorCell(name, label, cp, None, None, None, cfg.n_trials, n_missing)
                )
                continue
            mse, bias_sq, variance = decompose_errors(present, ctx.truth.phi)
            cells.append(
                ErrorCell(name, label, cp, mse, bias_sq, variance, cfg.n_trials, n_missing)
            )

    _write_csv(
        os.path.join(out_dir, "estimates.csv"),
        stamp,
        ["estimator", "variant", "trial", "budget", "evals_used"]
        + [f"phi_{j}" for j in range(d)],
        est_rows,
    )
    _write_csv(
        os.path.join(out_dir, "summary.csv"),
        stamp,
        ["estimator", "variant", "budget", "mse", "bias_sq", "variance", "n_trials", "n_missing"],
        [
            [c.estimator, c.variant, c.budget, _fmt(c.mse), _fmt(c.bias_sq),
             _fmt(c.variance), c.n_trials, c.n_missing]
            for c in cells
        ],
    )
    return ctx, cells


def read_summary(report_dir):
    """Rows of summary.csv as dicts, plus the stamp comment line."""
    path = os.path.join(report_dir, "summary.csv")
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            stamp = fh.readline().rstrip("\n")
            reader = csv.DictReader(fh)
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read report summary {path}: {exc}") from exc
    return rows, stamp


def dummy_feature_stress(cfg: ExperimentConfig, n_dummies: int, out_dir, jobs: int = 1):
    """Rerun the experiment with all-zero columns appended and report the
    per-estimator MSE degradation ratio at matched budgets."""
    if n_dummies < 0:
        raise ConfigError("n_dummies must be nonnegative")
    base_dir = os.path.join(out_dir, "base")
    dummy_dir = os.path.join(out_dir, "dummies")
    _, base_cells = run_experiment(cfg, base_dir, jobs=jobs)
    _, dummy_cells = run_experiment(cfg, dummy_dir, jobs=jobs, n_dummies=n_dummies)

    base_map = {(c.estimator, c.variant, c.budget): c for c in base_cells}
    rows = []
    stamp = f"# config_hash={cfg.config_hash()} master_seed={cfg.seed} n_dummies={n_dummies}"
    for c in dummy_cells:
        b = base_map.get((c.estimator, c.variant, c.budget))
        if b is None:
            continue
        ratio = None
        if c.mse is not None and b.mse is not None and b.mse > 0:
            ratio = c.mse / b.mse
        rows.append(
            [c.estimator, c.variant, c.budget, _fmt(b.mse), _fmt(c.mse), _fmt(ratio)]
        )
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(
        os.path.join(out_dir, "ratios.csv"),
        stamp,
        ["estimator", "variant", "budget", "mse_base", "mse_dummies", "degradation_ratio"],
        rows,
    )
    return base_cells, dummy_cells
