"""Turn a model and an explicand into a coalitional game.

Each strategy decides what to substitute for absent features: a single
baseline vector, an average over a baseline set, independent uniform or
empirical draws per feature, or a parametric Gaussian conditional. Every
game agrees at the grand coalition (v(D) = f(x_e)), and stochastic games
derive their random stream from (seed, coalition) so repeated evaluation of
the same coalition is bit-identical.
"""

from __future__ import annotations

import numpy as np

from .games import CoalitionalGame
from .coalitions import Coalition
from .models import GaussianDistribution, LinearModel, _psd_factor


def compose(x_e, x_b, coalition) -> np.ndarray:
    """Hybrid input: explicand values on the coalition, baseline elsewhere."""
    x_e = np.asarray(x_e, dtype=np.float64)
    x_b = np.asarray(x_b, dtype=np.float64)
    if x_e.shape != x_b.shape:
        raise ValueError(f"length mismatch: {x_e.shape} vs {x_b.shape}")
    if isinstance(coalition, Coalition):
        if coalition.d != len(x_e):
            raise ValueError(f"coalition d={coalition.d}, vectors have {len(x_e)}")
        bits = coalition.to_bits()
    else:
        bits = np.asarray(coalition, dtype=bool)
        if bits.shape != x_e.shape:
            raise ValueError("membership vector length mismatch")
    return np.where(bits, x_e, x_b)


def _as_matrix(baselines) -> np.ndarray:
    rows = np.asarray(baselines, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.ndim != 2 or len(rows) == 0:
        raise ValueError("baselines must be a nonempty matrix of rows")
    return rows


class BaselineGame(CoalitionalGame):
    """v(S) = f(explicand on S, one fixed baseline elsewhere). Exact."""

    def __init__(self, model, x_e, x_b):
        x_e = np.asarray(x_e, dtype=np.float64)
        x_b = np.asarray(x_b, dtype=np.float64)
        if x_e.shape != x_b.shape or x_e.ndim != 1:
            raise ValueError("explicand and baseline must be vectors of equal length")
        super().__init__(len(x_e))
        self.model = model
        self.x_e = x_e
        self.x_b = x_b

    def _values(self, bits, masks):
        composed = np.where(bits, self.x_e, self.x_b)
        return np.asarray(self.model.predict(composed), dtype=np.float64)


class MarginalGame(CoalitionalGame):
    """v(S) averages the baseline game over a set of baseline rows.

    One coalition evaluation makes |E| model calls but counts as a single
    game evaluation.
    """

    def __init__(self, model, x_e, baselines):
        x_e = np.asarray(x_e, dtype=np.float64)
        rows = _as_matrix(baselines)
        if rows.shape[1] != len(x_e):
            raise ValueError("baseline rows must match the explicand length")
        super().__init__(len(x_e))
        self.model = model
        self.x_e = x_e
        self.baselines = rows
        self._rows_per_eval = len(rows)

    def _values(self, bits, masks):
        b, d = bits.shape
        e = len(self.baselines)
        composed = np.where(
            bits[:, None, :], self.x_e[None, None, :], self.baselines[None, :, :]
        ).reshape(b * e, d)
        preds = np.asarray(self.model.predict(composed), dtype=np.float64)
        return preds.reshape(b, e).mean(axis=1)


class _PerCoalitionSampledGame(CoalitionalGame):
    """Base for games whose absent features are drawn at random.

    The draw stream is keyed on (seed, coalition mask), which makes the game
    a fixed deterministic function: estimator error can then be measured
    against a well-defined target.
    """

    def __init__(self, model, x_e, seed: int, n_draws: int):
        x_e = np.asarray(x_e, dtype=np.float64)
        super().__init__(len(x_e))
        if n_draws < 1:
            raise ValueError("n_draws must be >= 1")
        self.model = model
        self.x_e = x_e
        self.seed = int(seed)
        self.n_draws = int(n_draws)
        self._rows_per_eval = self.n_draws

    def _rng_for(self, mask) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence([self.seed, int(mask)])
        )

    def _draw_absent(self, rng, n: int) -> np.ndarray:
        raise NotImplementedError

    def _values(self, bits, masks):
        out = np.empty(len(masks), dtype=np.float64)
        for r in range(len(masks)):
            row_bits = bits[r]
            if row_bits.all():
                out[r] = float(self.model.predict(self.x_e))
                continue
            draws = self._draw_absent(self._rng_for(masks[r]), self.n_draws)
            composed = np.where(row_bits, self.x_e, draws)
            out[r] = float(np.mean(self.model.predict(composed)))
        return out


class UniformGame(_PerCoalitionSampledGame):
    """Absent features drawn independently uniform over each baseline column's range."""

    def __init__(self, model, x_e, baselines, seed=0, n_draws=256):
        rows = _as_matrix(baselines)
        if len(rows) < 2:
            raise ValueError("uniform removal needs >= 2 baseline rows to define ranges")
        super().__init__(model, x_e, seed, n_draws)
        if rows.shape[1] != self.d:
            raise ValueError("baseline rows must match the explicand length")
        self.lo = rows.min(axis=0)
        self.hi = rows.max(axis=0)

    def _draw_absent(self, rng, n):
        return self.lo + rng.random((n, self.d)) * (self.hi - self.lo)


class ProductMarginalsGame(_PerCoalitionSampledGame):
    """Absent features drawn independently from their own empirical columns."""

    def __init__(self, model, x_e, baselines, seed=0, n_draws=256):
        rows = _as_matrix(baselines)
        super().__init__(model, x_e, seed, n_draws)
        if rows.shape[1] != self.d:
            raise ValueError("baseline rows must match the explicand length")
        self.baselines = rows

    def _draw_absent(self, rng, n):
        picks = rng.integers(0, len(self.baselines), size=(n, self.d))
        return self.baselines[picks, np.arange(self.d)[None, :]]


class ConditionalGaussianGame(_PerCoalitionSampledGame):
    """v(S) = E[f(x) | x_S = x_e_S] under a fitted multivariate Gaussian.

    The conditional mean/covariance come from the standard Gaussian
    conditioning formulas. For linear models an exact mode evaluates f at the
    conditional mean, since the expectation commutes with a linear map; other
    models average n_draws Monte Carlo samples.
    """

    def __init__(self, model, x_e, dist: GaussianDistribution, seed=0, n_draws=256,
                 exact: bool | None = None):
        super().__init__(model, x_e, seed, n_draws)
        if dist.d != self.d:
            raise ValueError("distribution dimension must match the explicand")
        self.dist = dist
        self.exact = isinstance(model, LinearModel) if exact is None else bool(exact)
        if self.exact:
            self._rows_per_eval = 1

    def _values(self, bits, masks):
        out = np.empty(len(masks), dtype=np.float64)
        for r in range(len(masks)):
            row_bits = bits[r]
            if row_bits.all():
                out[r] = float(self.model.predict(self.x_e))
                continue
            present = np.nonzero(row_bits)[0]
            absent, mean, cov = self.dist.conditional(present, self.x_e[present])
            if self.exact:
                x = self.x_e.copy()
                x[absent] = mean
                out[r] = float(self.model.predict(x))
                continue
            rng = self._rng_for(masks[r])
            factor = _psd_factor(cov)
            z = rng.standard_normal((self.n_draws, len(absent)))
            draws = np.tile(self.x_e, (self.n_draws, 1))
            draws[:, absent] = mean + z @ factor.T
            out[r] = float(np.mean(self.model.predict(draws)))
        return out


class EmpiricalConditionalGame(CoalitionalGame):
    """Exact-match conditional averaging over a baseline table.

    Diagnostic only: with continuous features the match set collapses, so
    this is useful on small discrete datasets and nowhere else.
    """

    def __init__(self, model, x_e, baselines):
        x_e = np.asarray(x_e, dtype=np.float64)
        rows = _as_matrix(baselines)
        if rows.shape[1] != len(x_e):
            raise ValueError("baseline rows must match the explicand length")
        super().__init__(len(x_e))
        self.model = model
        self.x_e = x_e
        self.baselines = rows
        self._rows_per_eval = len(rows)

    def _values(self, bits, masks):
        out = np.empty(len(masks), dtype=np.float64)
        for r in range(len(masks)):
            row_bits = bits[r]
            match = (self.baselines[:, row_bits] == self.x_e[row_bits]).all(axis=1)
            rows = self.baselines[match]
            if len(rows) == 0:
                raise ValueError(
                    "no baseline row matches the present features exactly"
                )
            composed = np.where(row_bits, self.x_e, rows)
            out[r] = float(np.mean(self.model.predict(composed)))
        return out


def baseline_game(model, x_e, x_b) -> CoalitionalGame:
    return BaselineGame(model, x_e, x_b)


def marginal_game(model, x_e, baselines) -> CoalitionalGame:
    return MarginalGame(model, x_e, baselines)


def uniform_game(model, x_e, baselines, seed=0, n_draws=256) -> CoalitionalGame:
    return UniformGame(model, x_e, baselines, seed=seed, n_draws=n_draws)


def product_marginals_game(model, x_e, baselines, seed=0, n_draws=256) -> CoalitionalGame:
    return ProductMarginalsGame(model, x_e, baselines, seed=seed, n_draws=n_draws)


def conditional_gaussian_game(
    model, x_e, dist, seed=0, n_draws=256, exact=None
) -> CoalitionalGame:
    return ConditionalGaussianGame(
        model, x_e, dist, seed=seed, n_draws=n_draws, exact=exact
    )


def empirical_conditional_game(model, x_e, baselines) -> CoalitionalGame:
    return EmpiricalConditionalGame(model, x_e, baselines)
