"""Polynomial-time attribution algorithms for linear and tree models.

These avoid the exponential subset sum by exploiting model structure: linear
models reduce to a coefficient-times-displacement formula, Gaussian
conditionals of linear models reduce to precomputable affine maps, and tree
models decompose over leaves so each leaf spreads credit only across the
features on its own root path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .games import AttributionVector, CoalitionalGame, shapley_weight
from .errors import DataError
from .models import GaussianDistribution, LinearModel, Tree, TreeEnsemble, _conditional_coefs


def linear_shap(model: LinearModel, x_e, baselines) -> AttributionVector:
    """phi_i = beta_i * (x_e_i - mean_i) against the baseline column means.

    With a single baseline row this matches the single-baseline game exactly;
    with many rows it matches the averaged game. Deterministic, linear time.
    """
    x_e = np.asarray(x_e, dtype=np.float64)
    rows = np.asarray(baselines, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.shape[1] != model.d or len(x_e) != model.d:
        raise DataError("explicand/baseline width must match the model")
    mu = rows.mean(axis=0)
    phi = model.beta * (x_e - mu)
    v_empty = float(model.beta0 + model.beta @ mu)
    v_full = float(model.predict(x_e))
    return AttributionVector(phi, v_empty=v_empty, v_full=v_full, evals_used=0)


@dataclass(frozen=True)
class CorrelatedLinearCoefficients:
    """Per-feature affine maps for Gaussian-conditional linear attributions.

    a[i] and b[i] are d x d matrices: phi_i(x_e) = beta^T a[i] mu + beta^T b[i] x_e.
    They are summations over coalitions, estimated once and reusable across
    explicands.
    """

    a: np.ndarray
    b: np.ndarray
    n_coalitions_sampled: int


def _selector_matrix(dist: GaussianDistribution, mask: int, d: int, cache: dict) -> np.ndarray:
    """W(S): rows select x_e on S and the conditional-mean map off S.

    The conditional mean is affine: E[x | x_S = x_e_S] = W(S) x_e + (I - W(S)) mu.
    """
    got = cache.get(mask)
    if got is not None:
        return got
    w = np.zeros((d, d))
    present = [j for j in range(d) if (mask >> j) & 1]
    absent = [j for j in range(d) if not (mask >> j) & 1]
    for j in present:
        w[j, j] = 1.0
    if present and absent:
        coef = _conditional_coefs(
            dist.sigma, np.array(present, dtype=np.int64), np.array(absent, dtype=np.int64)
        )
        w[np.ix_(absent, present)] = coef
    cache[mask] = w
    return w


def correlated_linear_shap(
    model: LinearModel,
    dist: GaussianDistribution,
    n_coalitions: int | None = None,
    seed: int = 0,
) -> tuple[CorrelatedLinearCoefficients, Callable[[np.ndarray], AttributionVector]]:
    """Gaussian-conditional attributions for a linear model.

    Precomputes the coalition summations once (exhaustively for d <= 12 when
    n_coalitions is None, otherwise by sampling coalitions through random
    permutation prefixes), then returns an explain function that is a
    constant-time affine map per explicand.
    """
    d = model.d
    if dist.d != d:
        raise ValueError("distribution dimension must match the model")
    b_mats = np.zeros((d, d, d))
    cache: dict[int, np.ndarray] = {}

    if n_coalitions is None and d <= 12:
        n_sampled = 0
        for mask in range(1 << d):
            w_s = _selector_matrix(dist, mask, d, cache)
            size = mask.bit_count()
            if size == d:
                continue
            n_sampled += 1
            for i in range(d):
                bit = 1 << i
                if mask & bit:
                    continue
                w_si = _selector_matrix(dist, mask | bit, d, cache)
                b_mats[i] += shapley_weight(size, d) * (w_si - w_s)
    else:
        if n_coalitions is None:
            n_coalitions = 2048 * d
        n_perms = max(1, int(n_coalitions) // (d + 1))
        n_sampled = n_perms * (d + 1)
        rng = np.random.default_rng(seed)
        for _ in range(n_perms):
            perm = rng.permutation(d)
            mask = 0
            w_prev = _selector_matrix(dist, 0, d, cache)
            for i in perm:
                nxt = mask | (1 << i)
                w_next = _selector_matrix(dist, nxt, d, cache)
                b_mats[i] += (w_next - w_prev) / n_perms
                mask, w_prev = nxt, w_next
            if len(cache) > 4 * (d + 1):
                cache.clear()

    a_mats = -b_mats
    coeffs = CorrelatedLinearCoefficients(a_mats, b_mats, n_sampled)

    beta_a = np.einsum("j,ijk->ik", model.beta, a_mats)
    beta_b = np.einsum("j,ijk->ik", model.beta, b_mats)
    v_empty = float(model.beta0 + model.beta @ dist.mu)

    def explain(x_e) -> AttributionVector:
        x_e = np.asarray(x_e, dtype=np.float64)
        phi = beta_a @ dist.mu + beta_b @ x_e
        return AttributionVector(
            phi, v_empty=v_empty, v_full=float(model.predict(x_e)), evals_used=0
        )

    return coeffs, explain


def _path_feature_table(tree: Tree, leaf_path, x_e, baselines):
    """Per distinct path feature: does the explicand / each baseline stay on path.

    Duplicate features along one root-to-leaf path are merged: the hybrid
    input follows the path only if every node testing that feature agrees.
    """
    feats: list[int] = []
    e_ok: list[bool] = []
    b_ok: list[np.ndarray] = []
    pos: dict[int, int] = {}
    for node, went_left in leaf_path:
        f = int(tree.feature[node])
        thr = tree.threshold[node]
        e_match = (x_e[f] <= thr) == went_left
        b_match = (baselines[:, f] <= thr) == went_left
        k = pos.get(f)
        if k is None:
            pos[f] = len(feats)
            feats.append(f)
            e_ok.append(bool(e_match))
            b_ok.append(b_match.copy())
        else:
            e_ok[k] = e_ok[k] and bool(e_match)
            b_ok[k] &= b_match
    return np.array(feats, dtype=np.int64), np.array(e_ok, dtype=bool), np.array(b_ok, dtype=bool).reshape(len(feats), -1)


def interventional_tree_shap(model: TreeEnsemble, x_e, baselines) -> AttributionVector:
    """Exact single-/multi-baseline attributions for a tree ensemble.

    A tree is a disjoint sum over leaves, and a leaf's indicator under hybrid
    inputs depends only on the path features where explicand and baseline
    route differently. Features the leaf needs present get the positive
    inclusion weight, features it needs absent the negative one, and leaves
    requiring an impossible mix contribute nothing. Cost is linear in
    baselines x nodes x depth; results are summed over trees and averaged
    over baselines.
    """
    x_e = np.asarray(x_e, dtype=np.float64)
    rows = np.asarray(baselines, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.shape[1] != len(x_e):
        raise DataError("baseline rows must match the explicand length")
    d = len(x_e)
    n_b = len(rows)
    phi = np.zeros(d)
    fact = [math.factorial(k) for k in range(65)]

    def w_present(p, a):
        return fact[p - 1] * fact[a] / fact[p + a]

    def w_absent(p, a):
        return fact[p] * fact[a - 1] / fact[p + a]

    for tree in model.trees:
        if int(tree.feature.max(initial=-1)) >= d:
            raise DataError("tree references a feature beyond the explicand length")
        for leaf, path in tree.leaf_paths():
            if not path:
                continue
            val = float(tree.leaf_value[leaf])
            feats, e_ok, b_ok = _path_feature_table(tree, path, x_e, rows)
            need_present = e_ok[:, None] & ~b_ok
            need_absent = ~e_ok[:, None] & b_ok
            dead = (~e_ok[:, None] & ~b_ok).any(axis=0)
            p_counts = need_present.sum(axis=0)
            a_counts = need_absent.sum(axis=0)
            for r in range(n_b):
                if dead[r]:
                    continue
                p, a = int(p_counts[r]), int(a_counts[r])
                if p:
                    wp = val * w_present(p, a)
                    phi[feats[need_present[:, r]]] += wp
                if a:
                    wa = val * w_absent(p, a)
                    phi[feats[need_absent[:, r]]] -= wa
    phi /= n_b
    v_empty = float(np.mean(model.predict(rows)))
    v_full = float(model.predict(x_e))
    return AttributionVector(phi, v_empty=v_empty, v_full=v_full, evals_used=0)


class PathDependentGame(CoalitionalGame):
    """The cover-weighted traversal game a tree ensemble induces.

    Present features route deterministically by the explicand; absent
    features average the two subtrees weighted by training cover. This
    recursive rule *defines* the game that path_dependent_tree_shap solves,
    so brute force on this game is its correctness oracle.
    """

    def __init__(self, model: TreeEnsemble, x_e):
        x_e = np.asarray(x_e, dtype=np.float64)
        super().__init__(len(x_e))
        self.model = model
        self.x_e = x_e
        for tree in model.trees:
            _check_positive_covers(tree)

    def _values(self, bits, masks):
        out = np.empty(len(masks), dtype=np.float64)
        for r in range(len(masks)):
            row = bits[r]
            total = self.model.base_score
            for tree in self.model.trees:
                total += self._walk(tree, 0, row)
            out[r] = total
        return out

    def _walk(self, tree: Tree, node: int, present: np.ndarray) -> float:
        f = tree.feature[node]
        if f < 0:
            return float(tree.leaf_value[node])
        left, right = tree.left[node], tree.right[node]
        if present[f]:
            child = left if self.x_e[f] <= tree.threshold[node] else right
            return self._walk(tree, child, present)
        c_l, c_r = tree.cover[left], tree.cover[right]
        return (
            c_l * self._walk(tree, left, present)
            + c_r * self._walk(tree, right, present)
        ) / (c_l + c_r)


def path_dependent_game(model: TreeEnsemble, x_e) -> CoalitionalGame:
    return PathDependentGame(model, x_e)


def _check_positive_covers(tree: Tree) -> None:
    internal = tree.feature >= 0
    if internal.any():
        children = np.concatenate([tree.left[internal], tree.right[internal]])
        if (tree.cover[children] <= 0).any():
            raise DataError("path-dependent traversal requires positive covers")
    if not tree.check_cover_consistency():
        raise DataError("cover(node) must equal cover(left) + cover(right)")


def _extend(g: np.ndarray, p: float, r: float) -> np.ndarray:
    out = np.zeros(len(g) + 1)
    out[1:] += p * g
    out[:-1] += r * g
    return out


def _unwind(g: np.ndarray, p: float, r: float) -> np.ndarray:
    """Invert _extend: recover the size polynomial without one feature."""
    m = len(g) - 1
    out = np.zeros(m)
    if p != 0.0:
        acc = g[m]
        for s in range(m - 1, -1, -1):
            out[s] = acc / p
            acc = g[s] - r * out[s]
    else:
        for s in range(m):
            out[s] = g[s] / r
    return out


def path_dependent_tree_shap(model: TreeEnsemble, x_e) -> AttributionVector:
    """Deterministic attributions for the cover-weighted traversal game.

    Per leaf, the game restricted to the path's distinct features is a
    product of per-feature factors: an indicator when present, a cover ratio
    when absent. One extend pass builds the subset-size polynomial of those
    factors, then each feature is unwound in turn, giving O(depth^2) work per
    leaf and O(leaves * depth^2) per tree. Exact for the traversal game;
    biased relative to true conditional expectations.
    """
    x_e = np.asarray(x_e, dtype=np.float64)
    d = len(x_e)
    phi = np.zeros(d)
    v_empty = model.base_score

    for tree in model.trees:
        if int(tree.feature.max(initial=-1)) >= d:
            raise DataError("tree references a feature beyond the explicand length")
        _check_positive_covers(tree)
        for leaf, path in tree.leaf_paths():
            val = float(tree.leaf_value[leaf])
            if not path:
                v_empty += val
                continue
            factors: dict[int, tuple[float, float]] = {}
            for node, went_left in path:
                f = int(tree.feature[node])
                child = tree.left[node] if went_left else tree.right[node]
                ratio = float(tree.cover[child] / tree.cover[node])
                on_path = (x_e[f] <= tree.threshold[node]) == went_left
                p_prev, r_prev = factors.get(f, (1.0, 1.0))
                factors[f] = (p_prev * (1.0 if on_path else 0.0), r_prev * ratio)

            feats = sorted(factors)
            m = len(feats)
            g = np.array([1.0])
            for f in feats:
                p, r = factors[f]
                g = _extend(g, p, r)
            weights = np.array([shapley_weight(s, m) for s in range(m)])
            for f in feats:
                p, r = factors[f]
                g_wo = _unwind(g, p, r)
                phi[f] += val * (p - r) * float(weights @ g_wo)
            v_empty += val * float(np.prod([factors[f][1] for f in feats]))

    v_full = float(model.predict(x_e))
    return AttributionVector(phi, v_empty=v_empty, v_full=v_full, evals_used=0)
