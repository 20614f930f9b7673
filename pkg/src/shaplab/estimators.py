"""Model-agnostic stochastic Shapley estimators.

Every estimator consumes an abstract CoalitionalGame and a budget measured in
game evaluations, and reports a trace of snapshots taken at the first work
unit boundary at or after each checkpoint. A work unit is whatever one draw
costs: a permutation walk (d+1 evaluations), a marginal contribution (2), a
regression row (1), and so on; antithetic variants make the paired draw part
of the same unit. No estimate is emitted until every feature has at least
one contribution (or, for regression-based estimators, until the system is
determined), which is why small budgets produce missing early checkpoints.

Randomness is keyed by the caller-provided seed only; two runs with the same
seed and budget produce identical traces.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .coalitions import full_mask, player_bits
from .errors import BudgetError
from .games import AttributionVector, CoalitionalGame, kernel_weight

logger = logging.getLogger(__name__)

_CHUNK_EVALS = 8192


@dataclass(frozen=True)
class Budget:
    """Evaluation allowance plus the counts at which to snapshot the estimate.

    The final unit that carries the run past a checkpoint is allowed to
    complete, so realized evaluations can exceed a checkpoint by less than
    one work unit.
    """

    max_evals: int
    checkpoints: tuple[int, ...] = ()

    def __post_init__(self):
        if self.max_evals < 0:
            raise ValueError("max_evals must be nonnegative")
        cps = tuple(int(c) for c in self.checkpoints) or (self.max_evals,)
        if any(c < 0 for c in cps):
            raise ValueError("checkpoints must be nonnegative")
        if any(c > self.max_evals for c in cps):
            raise ValueError("checkpoints must not exceed max_evals")
        cps = tuple(sorted(set(cps)))
        object.__setattr__(self, "checkpoints", cps)


def _as_budget(budget) -> Budget:
    if isinstance(budget, Budget):
        return budget
    return Budget(int(budget))


@dataclass(frozen=True)
class TraceSnapshot:
    checkpoint: int
    evals_used: int
    phi: np.ndarray
    contrib_var: np.ndarray | None = None
    contrib_count: np.ndarray | None = None


@dataclass
class EstimateTrace:
    """Per-checkpoint estimates plus running contribution statistics."""

    d: int
    snapshots: list[TraceSnapshot] = field(default_factory=list)
    v_empty: float | None = None
    v_full: float | None = None
    evals_used: int = 0

    def snapshot_at(self, checkpoint: int) -> TraceSnapshot | None:
        for snap in self.snapshots:
            if snap.checkpoint == checkpoint:
                return snap
        return None

    def attribution(self, index: int = -1) -> AttributionVector:
        if not self.snapshots:
            raise ValueError("trace holds no snapshots")
        if self.v_empty is None or self.v_full is None:
            raise ValueError("trace does not carry the game endpoints")
        snap = self.snapshots[index]
        return AttributionVector(
            snap.phi.copy(), self.v_empty, self.v_full, snap.evals_used
        )


class _FeatureStats:
    """Running per-feature count/sum/sum-of-squares of contributions."""

    def __init__(self, d: int):
        self.count = np.zeros(d, dtype=np.int64)
        self.total = np.zeros(d)
        self.total_sq = np.zeros(d)

    def add(self, players: np.ndarray, values: np.ndarray) -> None:
        np.add.at(self.count, players, 1)
        np.add.at(self.total, players, values)
        np.add.at(self.total_sq, players, values * values)

    def add_dense(self, contribs: np.ndarray) -> None:
        """One contribution per feature per row of `contribs`."""
        self.count += len(contribs)
        self.total += contribs.sum(axis=0)
        self.total_sq += (contribs * contribs).sum(axis=0)

    def mean(self) -> np.ndarray:
        out = np.zeros_like(self.total)
        np.divide(self.total, self.count, out=out, where=self.count > 0)
        return out

    def variance(self) -> np.ndarray:
        """Population variance of the contributions seen so far."""
        mean = self.mean()
        out = np.zeros_like(self.total)
        np.divide(self.total_sq, self.count, out=out, where=self.count > 0)
        return np.clip(out - mean * mean, 0.0, None)


def _or_masks(member: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Combine a boolean membership matrix into bitmask values."""
    if bits.dtype == object:
        return (member.astype(object) * bits).sum(axis=1)
    return (member.astype(np.uint64) * bits).sum(axis=1, dtype=np.uint64)


def _rank_matrix(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Each row is the rank vector of a uniformly random permutation."""
    keys = rng.random((n, d))
    return np.argsort(np.argsort(keys, axis=1, kind="stable"), axis=1, kind="stable")


def _subsets_of_sizes(rng, sizes: np.ndarray, d: int) -> np.ndarray:
    """Row r is a uniform subset of size sizes[r] as a boolean matrix."""
    ranks = _rank_matrix(rng, len(sizes), d)
    return ranks < sizes[:, None]


def _prefix_subsets(rng, players: np.ndarray, d: int) -> np.ndarray:
    """Row r is the set of predecessors of players[r] in a random permutation.

    Identifying the players that precede a given one in a uniform ordering is
    the same as sampling from the size-weighted subset distribution used by
    the classic per-player estimator.
    """
    ranks = _rank_matrix(rng, len(players), d)
    pos = ranks[np.arange(len(players)), players]
    return ranks < pos[:, None]


def detect_convergence(trace: EstimateTrace, threshold: float) -> int | None:
    """Index of the first snapshot where every tracked feature's standard
    error falls strictly below the threshold; None if never reached."""
    for k, snap in enumerate(trace.snapshots):
        if snap.contrib_var is None or snap.contrib_count is None:
            raise ValueError("trace does not carry contribution statistics")
        seen = snap.contrib_count > 0
        if not seen.any():
            continue
        stderr = np.sqrt(snap.contrib_var[seen] / snap.contrib_count[seen])
        if float(stderr.max()) < threshold:
            return k
    return None


def _endpoint_values(game: CoalitionalGame) -> tuple[float, float]:
    vals = game.value_many(
        np.array([0, game.grand_mask], dtype=np.uint64 if game.d <= 64 else object)
    )
    return float(vals[0]), float(vals[1])


# ---------------------------------------------------------------------------
# per-player marginal-contribution samplers (semivalue / IME family)
# ---------------------------------------------------------------------------


def _eval_player_contribs(game, rng, players, d, bits, full, antithetic):
    """Marginal contributions for a batch of (player, sampled subset) draws.

    Returns (players_out, contribs): with antithetic pairing each input
    player yields two contributions (the subset and its complement within
    the other players).
    """
    member = _prefix_subsets(rng, players, d)
    masks_s = _or_masks(member, bits)
    masks_si = masks_s | bits[players]
    if antithetic:
        masks_s2 = (full ^ bits[players]) ^ masks_s
        masks_s2i = masks_s2 | bits[players]
        batch = np.concatenate([masks_s, masks_si, masks_s2, masks_s2i])
        vals = game.value_many(batch)
        n = len(players)
        c1 = vals[n : 2 * n] - vals[:n]
        c2 = vals[3 * n :] - vals[2 * n : 3 * n]
        return np.concatenate([players, players]), np.concatenate([c1, c2])
    batch = np.concatenate([masks_s, masks_si])
    vals = game.value_many(batch)
    n = len(players)
    return players, vals[n:] - vals[:n]


def sample_semivalue(game: CoalitionalGame, player: int, budget, seed) -> EstimateTrace:
    """Estimate one player's value by subset sampling from the size-weighted
    distribution (via random-permutation prefixes). Two evaluations per draw.

    A zero budget yields an empty trace rather than an error.
    """
    budget = _as_budget(budget)
    d = game.d
    if not 0 <= player < d:
        raise ValueError(f"player {player} outside 0..{d - 1}")
    rng = np.random.default_rng(seed)
    bits = player_bits(d)
    full = full_mask(d)
    stats = _FeatureStats(d)
    trace = EstimateTrace(d=d)
    evals = 0
    p_arr_cache = np.empty(0, dtype=np.int64)
    for cp in budget.checkpoints:
        while evals < cp:
            n_units = math.ceil((cp - evals) / 2)
            n_units = min(n_units, max(1, _CHUNK_EVALS // 2))
            if len(p_arr_cache) != n_units:
                p_arr_cache = np.full(n_units, player, dtype=np.int64)
            players, contribs = _eval_player_contribs(
                game, rng, p_arr_cache, d, bits, full, antithetic=False
            )
            stats.add(players, contribs)
            evals += 2 * n_units
        if stats.count[player] >= 1:
            trace.snapshots.append(
                TraceSnapshot(cp, evals, stats.mean(), stats.variance(), stats.count.copy())
            )
    trace.evals_used = evals
    return trace


def _interleaved_schedule(alloc: np.ndarray) -> np.ndarray:
    """Round-robin schedule visiting player i alloc[i] times, spread evenly."""
    total = int(alloc.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    reps = np.repeat(np.arange(len(alloc), dtype=np.int64), alloc)
    starts = np.concatenate([[0], np.cumsum(alloc)[:-1]])
    within = np.arange(total, dtype=np.int64) - np.repeat(starts, alloc)
    order = np.lexsort((reps, within))
    return reps[order]


def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation proportional to weights, exact total."""
    d = len(weights)
    if total <= 0:
        return np.zeros(d, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)
    if w.sum() <= 0:
        w = np.ones(d)
    quotas = total * w / w.sum()
    base = np.floor(quotas).astype(np.int64)
    leftover = total - int(base.sum())
    if leftover > 0:
        order = np.lexsort((np.arange(d), -(quotas - base)))
        base[order[:leftover]] += 1
    return base


def ime(
    game: CoalitionalGame,
    budget,
    seed,
    antithetic: bool = False,
    adaptive: bool = False,
    pilot: int = 4,
) -> EstimateTrace:
    """Per-player marginal-contribution sampling across all players.

    Plain mode cycles players round-robin. Adaptive mode runs a short pilot
    (`pilot` contributions per player), then splits the remaining draws in
    proportion to each player's pilot standard deviation using
    largest-remainder rounding, so flat players stop consuming budget.
    Antithetic mode pairs every sampled subset with its complement within
    the other players. Spends two evaluations up front on v(empty) and
    v(full) so estimates carry their efficiency gap.
    """
    budget = _as_budget(budget)
    d = game.d
    if budget.max_evals < 2 * d:
        raise BudgetError(
            f"per-player sampling needs at least {2 * d} evaluations, got {budget.max_evals}"
        )
    rng = np.random.default_rng(seed)
    bits = player_bits(d)
    full = full_mask(d)
    stats = _FeatureStats(d)
    trace = EstimateTrace(d=d)
    trace.v_empty, trace.v_full = _endpoint_values(game)
    evals = 2

    unit_contribs = 2 if antithetic else 1
    unit_evals = 2 * unit_contribs
    last_cp = budget.checkpoints[-1]
    total_units = max(0, math.ceil((last_cp - evals) / unit_evals))

    pilot_rounds = max(1, math.ceil(pilot / unit_contribs)) if adaptive else 0
    pilot_units = min(pilot_rounds * d, total_units) if adaptive else 0
    if adaptive:
        pilot_sched = np.tile(np.arange(d, dtype=np.int64), pilot_rounds)[:pilot_units]
    else:
        pilot_sched = np.empty(0, dtype=np.int64)
    main_sched: np.ndarray | None = None if adaptive else np.empty(0)

    done = 0  # units processed

    def next_players(k: int) -> np.ndarray:
        nonlocal main_sched
        if adaptive:
            if done < pilot_units:
                return pilot_sched[done : min(done + k, pilot_units)]
            if main_sched is None:
                sigma = np.sqrt(stats.variance())
                alloc = _largest_remainder(sigma, total_units - pilot_units)
                main_sched = _interleaved_schedule(alloc)
            off = done - pilot_units
            return main_sched[off : off + k]
        start = done % d
        idx = (start + np.arange(k, dtype=np.int64)) % d
        return idx

    max_chunk = max(1, _CHUNK_EVALS // unit_evals)
    for cp in budget.checkpoints:
        while evals < cp:
            want = math.ceil((cp - evals) / unit_evals)
            players = next_players(min(want, max_chunk))
            if len(players) == 0:
                break
            p_out, contribs = _eval_player_contribs(
                game, rng, players, d, bits, full, antithetic
            )
            stats.add(p_out, contribs)
            done += len(players)
            evals += len(players) * unit_evals
        if (stats.count >= 1).all():
            trace.snapshots.append(
                TraceSnapshot(cp, evals, stats.mean(), stats.variance(), stats.count.copy())
            )
    trace.evals_used = evals
    return trace


# ---------------------------------------------------------------------------
# permutation-walk estimator
# ---------------------------------------------------------------------------


def appro_shapley(
    game: CoalitionalGame, budget, seed, antithetic: bool = False
) -> EstimateTrace:
    """All-player estimate from full permutation walks.

    Each walk evaluates the d+1 prefix coalitions of one random ordering and
    reuses adjacent values, yielding one contribution per player; snapshots
    land on walk boundaries so the estimate telescopes and efficiency holds
    exactly. Antithetic mode pairs every ordering with its reverse.
    """
    budget = _as_budget(budget)
    d = game.d
    if budget.max_evals < d + 1:
        raise BudgetError(
            f"one permutation walk needs {d + 1} evaluations, got {budget.max_evals}"
        )
    rng = np.random.default_rng(seed)
    bits = player_bits(d)
    stats = _FeatureStats(d)
    trace = EstimateTrace(d=d)
    evals = 0

    walks_per_unit = 2 if antithetic else 1
    unit_evals = walks_per_unit * (d + 1)
    max_chunk = max(1, _CHUNK_EVALS // unit_evals)

    def process_units(n_units: int) -> None:
        nonlocal evals
        keys = rng.random((n_units, d))
        perms = np.argsort(keys, axis=1, kind="stable")
        if antithetic:
            both = np.empty((2 * n_units, d), dtype=np.int64)
            both[0::2] = perms
            both[1::2] = perms[:, ::-1]
            perms = both
        n_walks = len(perms)
        chain_bits = bits[perms]
        if chain_bits.dtype == object:
            prefixes = np.bitwise_or.accumulate(chain_bits, axis=1)
            chains = np.concatenate(
                [np.zeros((n_walks, 1), dtype=object), prefixes], axis=1
            )
        else:
            prefixes = np.bitwise_or.accumulate(chain_bits.astype(np.uint64), axis=1)
            chains = np.concatenate(
                [np.zeros((n_walks, 1), dtype=np.uint64), prefixes], axis=1
            )
        vals = game.value_many(chains.reshape(-1)).reshape(n_walks, d + 1)
        diffs = vals[:, 1:] - vals[:, :-1]
        stats.add(perms.reshape(-1), diffs.reshape(-1))
        if trace.v_empty is None:
            trace.v_empty = float(vals[0, 0])
            trace.v_full = float(vals[0, -1])
        evals += n_walks * (d + 1)

    for cp in budget.checkpoints:
        while evals < cp:
            want = math.ceil((cp - evals) / unit_evals)
            process_units(min(want, max_chunk))
        if (stats.count >= 1).all():
            trace.snapshots.append(
                TraceSnapshot(cp, evals, stats.mean(), stats.variance(), stats.count.copy())
            )
    trace.evals_used = evals
    return trace


# ---------------------------------------------------------------------------
# least-squares estimators
# ---------------------------------------------------------------------------


def _kernel_size_distribution(d: int) -> tuple[np.ndarray, np.ndarray]:
    sizes = np.arange(1, d)
    w = np.array([kernel_weight(int(s), d) for s in sizes])
    counts = np.exp(
        [
            math.lgamma(d + 1) - math.lgamma(s + 1) - math.lgamma(d - s + 1)
            for s in sizes
        ]
    )
    probs = w * counts
    return sizes, probs / probs.sum()


@dataclass(frozen=True)
class WlsSystem:
    """A sampled least-squares system for the additive-surrogate solve.

    Rows hold interior coalitions only (the kernel is infinite at sizes 0 and
    d, so the endpoints enter as equality constraints instead). `weights` are
    per-row kernel weights; they are uniform when the rows were sampled from
    the kernel distribution, which already absorbs the weighting.
    """

    member: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    v_empty: float
    v_full: float

    def __post_init__(self):
        sizes = self.member.sum(axis=1)
        d = self.member.shape[1]
        if len(sizes) and (sizes.min() < 1 or sizes.max() > d - 1):
            raise ValueError("system rows must have interior coalition sizes")

    @property
    def n_rows(self) -> int:
        return len(self.member)

    def solve(self) -> np.ndarray:
        """Coefficients pinned to both endpoints by constraint elimination.

        The intercept is fixed to v(empty) and the coefficients sum to
        v(full) - v(empty) by eliminating the last one. Rank-deficient
        systems fall back to the least-norm solution with a logged warning.
        """
        z = self.member.astype(np.float64)
        d = z.shape[1]
        delta = self.v_full - self.v_empty
        if d == 1:
            return np.array([delta])
        a = z[:, :-1] - z[:, -1:]
        y = self.values - self.v_empty - z[:, -1] * delta
        scale = np.sqrt(self.weights)[:, None]
        a = a * scale
        y = y * scale[:, 0]
        sol, _, rank, _ = np.linalg.lstsq(a, y, rcond=None)
        if rank < d - 1:
            logger.warning(
                "least-squares system is rank deficient (%d < %d); "
                "using least-norm solution",
                rank,
                d - 1,
            )
        return np.concatenate([sol, [delta - sol.sum()]])


def kernel_shap(
    game: CoalitionalGame, budget, seed, paired: bool = False
) -> EstimateTrace:
    """Weighted-least-squares estimate from kernel-sampled coalitions.

    Coalition sizes are drawn from the normalized kernel over 1..d-1 and
    coalitions uniformly within a size, so the regression itself is
    unweighted. The two endpoint evaluations enter as equality constraints,
    which makes every snapshot satisfy efficiency exactly. Paired mode
    appends the complement of every sampled coalition.
    """
    budget = _as_budget(budget)
    d = game.d
    if d < 2:
        raise ValueError("kernel sampling needs at least 2 players")
    if budget.max_evals < d + 4:
        raise BudgetError(
            f"a determined system needs {d + 4} evaluations, got {budget.max_evals}"
        )
    rng = np.random.default_rng(seed)
    bits = player_bits(d)
    sizes, probs = _kernel_size_distribution(d)
    trace = EstimateTrace(d=d)
    v0, v_full = _endpoint_values(game)
    trace.v_empty, trace.v_full = v0, v_full
    delta = v_full - v0
    evals = 2

    unit_rows = 2 if paired else 1
    max_chunk = max(1, _CHUNK_EVALS // unit_rows)
    members: list[np.ndarray] = []
    values: list[np.ndarray] = []
    n_rows = 0

    for cp in budget.checkpoints:
        while evals < cp:
            want = math.ceil((cp - evals) / unit_rows)
            n_units = min(want, max_chunk)
            drawn = rng.choice(sizes, size=n_units, p=probs)
            member = _subsets_of_sizes(rng, drawn, d)
            if paired:
                interleaved = np.empty((2 * n_units, d), dtype=bool)
                interleaved[0::2] = member
                interleaved[1::2] = ~member
                member = interleaved
            vals = game.value_many(_or_masks(member, bits))
            members.append(member)
            values.append(vals)
            n_rows += len(member)
            evals += len(member)
        if n_rows >= d + 2:
            z = np.concatenate(members) if len(members) > 1 else members[0]
            members = [z]
            v = np.concatenate(values) if len(values) > 1 else values[0]
            values = [v]
            system = WlsSystem(z, v, np.ones(len(z)), v0, v_full)
            trace.snapshots.append(TraceSnapshot(cp, evals, system.solve()))
    trace.evals_used = evals
    return trace


def kernel_shap_exact(game: CoalitionalGame) -> AttributionVector:
    """Solve the full kernel-weighted system over every interior coalition.

    Exact (equals the subset-sum definition) but exponential; intended as an
    oracle for small d.
    """
    d = game.d
    if d > 20:
        raise BudgetError("exhaustive least-squares capped at d <= 20")
    if d < 2:
        raise ValueError("need at least 2 players")
    masks = np.arange(1 << d, dtype=np.uint64)
    vals = game.value_many(masks)
    v0, v_full = float(vals[0]), float(vals[-1])
    interior = masks[1:-1]
    member = np.zeros((len(interior), d), dtype=bool)
    for j in range(d):
        member[:, j] = (interior >> np.uint64(j)) & np.uint64(1)
    sizes = member.sum(axis=1)
    weights = np.array([kernel_weight(int(s), d) for s in sizes])
    system = WlsSystem(member, vals[1:-1], weights, v0, v_full)
    return AttributionVector(system.solve(), v_empty=v0, v_full=v_full, evals_used=1 << d)


def sgd_shapley(
    game: CoalitionalGame, budget, seed, step_schedule: tuple[float, float] = (1.0, 10.0)
) -> EstimateTrace:
    """Projected stochastic gradient descent on the kernel-weighted objective.

    Starts from a random point on the efficiency hyperplane, then for each
    kernel-sampled coalition takes one gradient step on the squared residual
    of the additive surrogate and re-projects. Step size is c / (t + t0) with
    (c, t0) = step_schedule. Every snapshot satisfies efficiency exactly
    because of the projection.
    """
    budget = _as_budget(budget)
    d = game.d
    if budget.max_evals < 2:
        raise BudgetError("need at least the two endpoint evaluations")
    c, t0 = step_schedule
    rng = np.random.default_rng(seed)
    bits = player_bits(d)
    trace = EstimateTrace(d=d)
    v0, v_full = _endpoint_values(game)
    trace.v_empty, trace.v_full = v0, v_full
    delta = v_full - v0
    evals = 2

    beta = rng.standard_normal(d)
    beta += (delta - beta.sum()) / d

    if d < 2:
        # the efficiency constraint pins the single coefficient outright
        for cp in budget.checkpoints:
            trace.snapshots.append(TraceSnapshot(cp, evals, np.array([delta])))
        trace.evals_used = evals
        return trace

    sizes, probs = _kernel_size_distribution(d)
    t = 0
    for cp in budget.checkpoints:
        while evals < cp:
            n_steps = min(cp - evals, _CHUNK_EVALS)
            drawn = rng.choice(sizes, size=n_steps, p=probs)
            member = _subsets_of_sizes(rng, drawn, d)
            vals = game.value_many(_or_masks(member, bits))
            zf = member.astype(np.float64)
            for k in range(n_steps):
                t += 1
                z = zf[k]
                resid = v0 + beta @ z - vals[k]
                beta -= (c / (t + t0)) * 2.0 * resid * z
                beta += (delta - beta.sum()) / d
            evals += n_steps
        if evals >= 2:
            trace.snapshots.append(TraceSnapshot(cp, evals, beta.copy()))
    trace.evals_used = evals
    return trace


# ---------------------------------------------------------------------------
# multilinear-extension estimators
# ---------------------------------------------------------------------------


def _trapezoid_weights(m: int) -> np.ndarray:
    w = np.full(m, 1.0 / (m - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def multilinear(
    game: CoalitionalGame,
    budget,
    seed,
    mode: str = "trapezoid",
    feature_wise: bool = False,
    antithetic: bool = False,
    adaptive: bool = False,
    q_nodes: int = 50,
    pilot: int = 4,
) -> EstimateTrace:
    """Integrate expected marginal contributions over inclusion probability q.

    Joint mode draws one membership coin per player at probability q and
    evaluates each player's flip against that common coalition, reusing the
    base evaluation (d+1 evaluations for d contributions). Feature-wise mode
    estimates one player at a time (two evaluations per contribution), which
    permits per-player adaptive allocation. `mode` picks the q rule:
    "trapezoid" cycles a fixed grid combined with trapezoid weights (biased
    by the truncation error, usually lower variance), "random_q" draws q
    uniformly (unbiased). Antithetic mode also evaluates the complementary
    coalition at the same q.
    """
    budget = _as_budget(budget)
    d = game.d
    if mode not in ("trapezoid", "random_q"):
        raise ValueError(f"unknown mode {mode!r}")
    if adaptive and not feature_wise:
        raise ValueError("adaptive allocation requires feature_wise mode")
    if mode == "trapezoid" and q_nodes < 2:
        raise ValueError("trapezoid integration needs at least 2 q nodes")
    min_evals = (2 * d + 2) if feature_wise else (d + 3)
    if budget.max_evals < min_evals:
        raise BudgetError(
            f"multilinear sampling needs at least {min_evals} evaluations, "
            f"got {budget.max_evals}"
        )
    rng = np.random.default_rng(seed)
    if feature_wise:
        return _multilinear_feature_wise(
            game, budget, rng, mode, antithetic, adaptive, q_nodes, pilot
        )
    return _multilinear_joint(game, budget, rng, mode, antithetic, q_nodes)


def _joint_contributions(game, rng, d, bits, qs, antithetic):
    """Evaluate joint-mode contributions for subsets drawn at the given qs."""
    member = rng.random((len(qs), d)) < qs[:, None]
    if antithetic:
        paired = np.empty((2 * len(qs), d), dtype=bool)
        paired[0::2] = member
        paired[1::2] = ~member
        member = paired
    masks = _or_masks(member, bits)
    flips = masks[:, None] ^ bits[None, :]
    batch = np.concatenate([masks, flips.reshape(-1)])
    vals = game.value_many(batch)
    n = len(masks)
    v_base = vals[:n]
    v_flip = vals[n:].reshape(n, d)
    signs = 1.0 - 2.0 * member
    return signs * (v_flip - v_base[:, None])


def _multilinear_joint(game, budget, rng, mode, antithetic, q_nodes):
    d = game.d
    bits = player_bits(d)
    trace = EstimateTrace(d=d)
    trace.v_empty, trace.v_full = _endpoint_values(game)
    evals = 2

    subsets_per_unit = 2 if antithetic else 1
    unit_evals = subsets_per_unit * (d + 1)
    max_chunk = max(1, _CHUNK_EVALS // unit_evals)
    stats = _FeatureStats(d)

    if mode == "trapezoid":
        grid = np.linspace(0.0, 1.0, q_nodes)
        tw = _trapezoid_weights(q_nodes)
        node_sum = np.zeros((q_nodes, d))
        node_count = np.zeros(q_nodes, dtype=np.int64)
        ptr = 0

    for cp in budget.checkpoints:
        while evals < cp:
            want = math.ceil((cp - evals) / unit_evals)
            n_units = min(want, max_chunk)
            if mode == "trapezoid":
                nodes = (ptr + np.arange(n_units)) % q_nodes
                ptr = (ptr + n_units) % q_nodes
                qs = grid[nodes]
            else:
                qs = rng.random(n_units)
            contribs = _joint_contributions(game, rng, d, bits, qs, antithetic)
            stats.add_dense(contribs)
            if mode == "trapezoid":
                rep = np.repeat(nodes, subsets_per_unit)
                np.add.at(node_sum, rep, contribs)
                np.add.at(node_count, rep, 1)
            evals += n_units * unit_evals
        if mode == "trapezoid":
            if (node_count >= 1).all():
                means = node_sum / node_count[:, None]
                phi = tw @ means
                trace.snapshots.append(
                    TraceSnapshot(cp, evals, phi, stats.variance(), stats.count.copy())
                )
        elif (stats.count >= 1).all():
            trace.snapshots.append(
                TraceSnapshot(
                    cp, evals, stats.mean(), stats.variance(), stats.count.copy()
                )
            )
    trace.evals_used = evals
    return trace


def _multilinear_feature_wise(game, budget, rng, mode, antithetic, adaptive, q_nodes, pilot):
    d = game.d
    bits = player_bits(d)
    full = full_mask(d)
    trace = EstimateTrace(d=d)
    trace.v_empty, trace.v_full = _endpoint_values(game)
    evals = 2

    unit_contribs = 2 if antithetic else 1
    unit_evals = 2 * unit_contribs
    max_chunk = max(1, _CHUNK_EVALS // unit_evals)
    stats = _FeatureStats(d)
    last_cp = budget.checkpoints[-1]
    total_units = max(0, math.ceil((last_cp - evals) / unit_evals))

    if mode == "trapezoid":
        grid = np.linspace(0.0, 1.0, q_nodes)
        tw = _trapezoid_weights(q_nodes)
        node_sum = np.zeros((d, q_nodes))
        node_count = np.zeros((d, q_nodes), dtype=np.int64)
        node_ptr = np.zeros(d, dtype=np.int64)

    pilot_rounds = max(1, math.ceil(pilot / unit_contribs)) if adaptive else 0
    pilot_units = min(pilot_rounds * d, total_units) if adaptive else 0
    pilot_sched = (
        np.tile(np.arange(d, dtype=np.int64), pilot_rounds)[:pilot_units]
        if adaptive
        else np.empty(0, dtype=np.int64)
    )
    main_sched: np.ndarray | None = None
    done = 0

    def next_players(k: int) -> np.ndarray:
        nonlocal main_sched
        if adaptive:
            if done < pilot_units:
                return pilot_sched[done : min(done + k, pilot_units)]
            if main_sched is None:
                sigma = np.sqrt(stats.variance())
                remaining = total_units - pilot_units
                if mode == "trapezoid":
                    # every player must touch every q node at least once before
                    # it can report, so adaptivity only shapes the surplus
                    have = np.minimum(stats.count, q_nodes)
                    floor = np.ceil(
                        np.maximum(0, q_nodes - have) / unit_contribs
                    ).astype(np.int64)
                    floor = np.minimum(floor, max(0, remaining // max(1, d)))
                    surplus = remaining - int(floor.sum())
                    alloc = floor + _largest_remainder(sigma, max(0, surplus))
                else:
                    alloc = _largest_remainder(sigma, remaining)
                main_sched = _interleaved_schedule(alloc)
            off = done - pilot_units
            return main_sched[off : off + k]
        start = done % d
        return (start + np.arange(k, dtype=np.int64)) % d

    for cp in budget.checkpoints:
        while evals < cp:
            want = math.ceil((cp - evals) / unit_evals)
            players = next_players(min(want, max_chunk))
            if len(players) == 0:
                break
            n = len(players)
            if mode == "trapezoid":
                nodes = (node_ptr[players] + 0) % q_nodes
                # advance each player's node pointer by its occurrences
                np.add.at(node_ptr, players, 1)
                # players repeated within a chunk need consecutive nodes
                order_fix = _per_player_sequence(players)
                nodes = (nodes + order_fix) % q_nodes
                qs = grid[nodes]
            else:
                qs = rng.random(n)
            coins = rng.random((n, d)) < qs[:, None]
            coins[np.arange(n), players] = False
            masks_s = _or_masks(coins, bits)
            masks_si = masks_s | bits[players]
            if antithetic:
                masks_s2 = (full ^ bits[players]) ^ masks_s
                masks_s2i = masks_s2 | bits[players]
                batch = np.concatenate([masks_s, masks_si, masks_s2, masks_s2i])
                vals = game.value_many(batch)
                c1 = vals[n : 2 * n] - vals[:n]
                c2 = vals[3 * n :] - vals[2 * n : 3 * n]
                contribs = np.concatenate([c1, c2])
                p_out = np.concatenate([players, players])
                if mode == "trapezoid":
                    nodes_out = np.concatenate([nodes, nodes])
            else:
                batch = np.concatenate([masks_s, masks_si])
                vals = game.value_many(batch)
                contribs = vals[n:] - vals[:n]
                p_out = players
                if mode == "trapezoid":
                    nodes_out = nodes
            stats.add(p_out, contribs)
            if mode == "trapezoid":
                np.add.at(node_sum, (p_out, nodes_out), contribs)
                np.add.at(node_count, (p_out, nodes_out), 1)
            done += n
            evals += n * unit_evals
        if mode == "trapezoid":
            if (node_count >= 1).all():
                means = node_sum / node_count
                phi = means @ tw
                trace.snapshots.append(
                    TraceSnapshot(cp, evals, phi, stats.variance(), stats.count.copy())
                )
        elif (stats.count >= 1).all():
            trace.snapshots.append(
                TraceSnapshot(
                    cp, evals, stats.mean(), stats.variance(), stats.count.copy()
                )
            )
    trace.evals_used = evals
    return trace


def _per_player_sequence(players: np.ndarray) -> np.ndarray:
    """Occurrence index of each element within the chunk (0, 1, 2, ... per player)."""
    out = np.zeros(len(players), dtype=np.int64)
    seen: dict[int, int] = {}
    for k, p in enumerate(players):
        c = seen.get(int(p), 0)
        out[k] = c
        seen[int(p)] = c + 1
    return out
