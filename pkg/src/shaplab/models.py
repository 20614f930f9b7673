"""Predictive models: linear models, node-array decision trees, a minimal
boosted-tree trainer, and multivariate Gaussian synthetic data.

Trees are stored as parallel arrays (feature, threshold, left, right,
leaf_value, cover) with feature == -1 marking leaves. Routing is fixed:
go left iff x[feature] <= threshold; inputs are always fully specified, so
there is no missing-value branch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import DataError, NumericalError

LEAF = -1


@dataclass(frozen=True)
class LinearModel:
    """f(x) = beta0 + sum_i beta_i * x_i."""

    beta: np.ndarray
    beta0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=np.float64))

    @property
    def d(self) -> int:
        return len(self.beta)

    def predict(self, X) -> np.ndarray | float:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.d:
            raise DataError(
                f"model expects {self.d} features, input has {X.shape[1]}"
            )
        out = self.beta0 + X @ self.beta
        return float(out[0]) if single else out


class Tree:
    """A single binary regression tree over parallel node arrays.

    Children index strictly forward, which both rules out cycles and lets
    node depths be computed in one reverse sweep. Cover records how many
    (possibly weighted) training rows passed through each node.
    """

    __slots__ = (
        "feature",
        "threshold",
        "left",
        "right",
        "leaf_value",
        "cover",
        "max_depth",
    )

    def __init__(self, feature, threshold, left, right, leaf_value, cover):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.leaf_value = np.asarray(leaf_value, dtype=np.float64)
        self.cover = np.asarray(cover, dtype=np.float64)
        self._validate()
        self.max_depth = self._compute_max_depth()

    def _validate(self):
        n = len(self.feature)
        arrays = (self.threshold, self.left, self.right, self.leaf_value, self.cover)
        if any(len(a) != n for a in arrays):
            raise DataError("tree node arrays have inconsistent lengths")
        if n == 0:
            raise DataError("tree has no nodes")
        internal = self.feature >= 0
        if (self.cover < 0).any():
            raise DataError("node cover must be nonnegative")
        li, ri = self.left[internal], self.right[internal]
        idx = np.nonzero(internal)[0]
        if len(idx) and (
            (li <= idx).any() or (ri <= idx).any() or (li >= n).any() or (ri >= n).any()
        ):
            raise DataError("children must index strictly forward within the tree")

    def _compute_max_depth(self) -> int:
        n = len(self.feature)
        height = np.zeros(n, dtype=np.int64)
        for node in range(n - 1, -1, -1):
            if self.feature[node] >= 0:
                height[node] = 1 + max(
                    height[self.left[node]], height[self.right[node]]
                )
        return int(height[0])

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def check_cover_consistency(self, rtol: float = 1e-9) -> bool:
        """cover(node) == cover(left) + cover(right) for every internal node."""
        internal = np.nonzero(self.feature >= 0)[0]
        if len(internal) == 0:
            return True
        parent = self.cover[internal]
        child_sum = self.cover[self.left[internal]] + self.cover[self.right[internal]]
        return bool(np.allclose(parent, child_sum, rtol=rtol, atol=1e-12))

    def predict_rows(self, X: np.ndarray) -> np.ndarray:
        """Route a (n, width) matrix to leaf values, vectorized over rows."""
        node = np.zeros(len(X), dtype=np.int64)
        for _ in range(self.max_depth):
            f = self.feature[node]
            active = np.nonzero(f >= 0)[0]
            if len(active) == 0:
                break
            cur = node[active]
            go_left = X[active, f[active]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return self.leaf_value[node]

    def leaf_paths(self) -> Iterator[tuple[int, list[tuple[int, bool]]]]:
        """Yield (leaf_node, path) pairs; path lists (internal_node, went_left)."""
        stack: list[tuple[int, list[tuple[int, bool]]]] = [(0, [])]
        while stack:
            node, path = stack.pop()
            if self.is_leaf(node):
                yield node, path
            else:
                stack.append((self.right[node], path + [(node, False)]))
                stack.append((self.left[node], path + [(node, True)]))


@dataclass(frozen=True)
class TreeEnsemble:
    """base_score plus a sum of regression trees."""

    trees: tuple[Tree, ...]
    base_score: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))

    @property
    def max_feature_index(self) -> int:
        idx = -1
        for t in self.trees:
            internal = t.feature[t.feature >= 0]
            if len(internal):
                idx = max(idx, int(internal.max()))
        return idx

    def predict(self, X) -> np.ndarray | float:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] <= self.max_feature_index:
            raise DataError(
                f"model references feature {self.max_feature_index}, "
                f"input has only {X.shape[1]} columns"
            )
        out = np.full(len(X), self.base_score, dtype=np.float64)
        for t in self.trees:
            out += t.predict_rows(X)
        return float(out[0]) if single else out

    def to_dict(self) -> dict:
        return {
            "format": "shaplab-tree-ensemble-v1",
            "base_score": self.base_score,
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "leaf_value": t.leaf_value.tolist(),
                    "cover": t.cover.tolist(),
                }
                for t in self.trees
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TreeEnsemble":
        try:
            if obj.get("format") != "shaplab-tree-ensemble-v1":
                raise DataError(f"unknown tree-model format: {obj.get('format')!r}")
            trees = tuple(
                Tree(
                    t["feature"],
                    t["threshold"],
                    t["left"],
                    t["right"],
                    t["leaf_value"],
                    t["cover"],
                )
                for t in obj["trees"]
            )
            return cls(trees, float(obj["base_score"]))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed tree-model document: {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TreeEnsemble":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read tree-model file {path}: {exc}") from exc
        return cls.from_dict(obj)


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.3
    min_samples: int = 5


def _best_split(X, residual, idx, min_samples):
    """Best (feature, threshold, gain, left_idx, right_idx) by SSE reduction.

    Returns None when no threshold leaves at least min_samples rows on each
    side with distinct adjacent values. Ties resolve to the lowest feature
    index and then the smallest split position, so training is deterministic.
    """
    n = len(idx)
    r = residual[idx]
    sse_parent = float(((r - r.mean()) ** 2).sum())
    best = None
    best_gain = -np.inf
    for j in range(X.shape[1]):
        xv = X[idx, j]
        order = np.argsort(xv, kind="stable")
        xs = xv[order]
        rs = r[order]
        csum = np.cumsum(rs)
        csq = np.cumsum(rs * rs)
        total, total_sq = csum[-1], csq[-1]
        ks = np.arange(min_samples, n - min_samples + 1)
        if len(ks) == 0:
            continue
        valid = xs[ks - 1] < xs[ks]
        ks = ks[valid]
        if len(ks) == 0:
            continue
        left_sum, left_sq = csum[ks - 1], csq[ks - 1]
        sse_left = left_sq - left_sum**2 / ks
        right_n = n - ks
        sse_right = (total_sq - left_sq) - (total - left_sum) ** 2 / right_n
        gains = sse_parent - sse_left - sse_right
        k_best = int(np.argmax(gains))
        if gains[k_best] > best_gain:
            best_gain = float(gains[k_best])
            k = int(ks[k_best])
            thr = float((xs[k - 1] + xs[k]) / 2.0)
            left_mask = xv <= thr
            best = (j, thr, best_gain, idx[left_mask], idx[~left_mask])
    return best


def _grow_tree(X, residual, cfg: TrainConfig):
    feature, threshold, left, right, value, cover = [], [], [], [], [], []

    def build(idx, depth):
        node = len(feature)
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(0.0)
        cover.append(float(len(idx)))
        r = residual[idx]
        make_leaf = (
            depth >= cfg.max_depth
            or len(idx) < 2 * cfg.min_samples
            or np.ptp(r) == 0.0
        )
        split = None if make_leaf else _best_split(X, residual, idx, cfg.min_samples)
        if split is None:
            value[node] = cfg.learning_rate * float(r.mean())
            return node
        j, thr, _, idx_l, idx_r = split
        feature[node] = j
        threshold[node] = thr
        left[node] = build(idx_l, depth + 1)
        right[node] = build(idx_r, depth + 1)
        return node

    build(np.arange(len(X)), 0)
    return Tree(feature, threshold, left, right, value, cover)


def train_boosted_trees(X, y, cfg: TrainConfig = TrainConfig()) -> TreeEnsemble:
    """Greedy variance-reduction CART trees boosted on squared-error residuals.

    The learning rate is folded into each tree's leaf values, so ensemble
    prediction is exactly base_score plus the sum of tree outputs. Degenerate
    (constant) targets produce single-leaf trees rather than an error.
    Training is deterministic given the data order.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise DataError("X must be 2-D with one target per row")
    if len(X) < 2 * cfg.min_samples:
        raise DataError(
            f"need at least {2 * cfg.min_samples} rows for min_samples={cfg.min_samples}"
        )
    base = float(y.mean())
    residual = y - base
    trees = []
    for _ in range(cfg.n_trees):
        tree = _grow_tree(X, residual, cfg)
        residual = residual - tree.predict_rows(X)
        trees.append(tree)
    return TreeEnsemble(tuple(trees), base)


def _psd_factor(sigma: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """A factor F with F @ F.T == sigma for any PSD sigma.

    Strict Cholesky is preferred; singular-but-PSD matrices (including the
    all-zero covariance) fall back to an eigenvalue factor with negatives
    clipped, so degenerate distributions sample exactly at their mean.
    """
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh((sigma + sigma.T) / 2.0)
    scale = max(1.0, float(w.max(initial=0.0)))
    if w.min(initial=0.0) < -tol * scale:
        raise NumericalError(
            f"covariance is not PSD (min eigenvalue {w.min():.3e})"
        )
    return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True)
class GaussianDistribution:
    """Multivariate normal with mean mu and covariance sigma."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        if sigma.shape != (len(mu), len(mu)):
            raise ValueError(f"sigma must be {len(mu)}x{len(mu)}, got {sigma.shape}")
        if not np.allclose(sigma, sigma.T, atol=1e-10):
            raise ValueError("sigma must be symmetric")
        _psd_factor(sigma)  # raises NumericalError when not PSD

    @property
    def d(self) -> int:
        return len(self.mu)

    def conditional(
        self, present: np.ndarray, x_present: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Distribution of the absent block given exact values on `present`.

        Returns (absent_indices, conditional_mean, conditional_covariance).
        Near-singular present blocks are handled by escalating diagonal
        jitter; if 1e-8 jitter still fails, a NumericalError is raised.
        """
        present = np.asarray(present, dtype=np.int64)
        absent = np.setdiff1d(np.arange(self.d), present)
        if len(present) == 0:
            return absent, self.mu.copy(), self.sigma.copy()
        if len(absent) == 0:
            return absent, np.empty(0), np.empty((0, 0))
        coef = _conditional_coefs(self.sigma, present, absent)
        mean = self.mu[absent] + coef @ (np.asarray(x_present) - self.mu[present])
        cov = self.sigma[np.ix_(absent, absent)] - coef @ self.sigma[
            np.ix_(present, absent)
        ]
        cov = (cov + cov.T) / 2.0
        return absent, mean, cov


def _conditional_coefs(
    sigma: np.ndarray, present: np.ndarray, absent: np.ndarray
) -> np.ndarray:
    """Solve sigma[A,S] @ inv(sigma[S,S]) with jitter escalation."""
    s_ss = sigma[np.ix_(present, present)]
    s_as = sigma[np.ix_(absent, present)]
    scale = max(1.0, float(np.abs(np.diag(s_ss)).max()))
    for jitter in (0.0, 1e-10, 1e-8):
        try:
            chol = np.linalg.cholesky(s_ss + jitter * scale * np.eye(len(present)))
        except np.linalg.LinAlgError:
            continue
        half = np.linalg.solve(chol, s_as.T)
        return np.linalg.solve(chol.T, half).T
    raise NumericalError(
        "conditioning failed: present-block covariance is not PSD even with 1e-8 jitter"
    )


def sample_gaussian(dist: GaussianDistribution, n: int, seed) -> np.ndarray:
    """Draw n rows from the distribution; reproducible per seed."""
    rng = np.random.default_rng(seed)
    factor = _psd_factor(dist.sigma)
    z = rng.standard_normal((n, dist.d))
    return dist.mu + z @ factor.T
