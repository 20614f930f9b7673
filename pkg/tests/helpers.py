"""Shared generators for randomized tests."""

import zlib

import numpy as np

from shaplab.models import Tree, TreeEnsemble


def skey(*parts):
    """Entropy tuple for numpy seeding; strings are crc32-hashed."""
    return tuple(
        zlib.crc32(p.encode()) if isinstance(p, str) else int(p) for p in parts
    )


def random_tree(d, depth, rng, leaf_prob=0.25):
    """A random binary tree with consistent synthetic covers."""
    feature, threshold, left, right, value, cover = [], [], [], [], [], []

    def build(dep, cov):
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        cover.append(cov)
        if dep == 0 or rng.random() < leaf_prob:
            value[node] = float(rng.standard_normal())
            return node
        feature[node] = int(rng.integers(0, d))
        threshold[node] = float(rng.uniform(-1.0, 1.0))
        u = float(rng.uniform(0.2, 0.8))
        left[node] = build(dep - 1, cov * u)
        right[node] = build(dep - 1, cov * (1.0 - u))
        return node

    build(depth, 100.0)
    return Tree(feature, threshold, left, right, value, cover)


def random_ensemble(d, depth, n_trees, rng, base_score=None):
    if base_score is None:
        base_score = float(rng.standard_normal())
    return TreeEnsemble(
        tuple(random_tree(d, depth, rng) for _ in range(n_trees)), base_score
    )


def random_linear(d, rng):
    from shaplab.models import LinearModel

    return LinearModel(rng.standard_normal(d), float(rng.standard_normal()))


def random_gaussian(d, rng, jitter=0.3):
    from shaplab.models import GaussianDistribution

    a = rng.standard_normal((d, d))
    sigma = a @ a.T + jitter * np.eye(d)
    return GaussianDistribution(rng.standard_normal(d), sigma)
