"""Coalitional games, Shapley weighting functions, and the exact oracle.

A coalitional game maps subsets of d players to a real value. Everything
downstream (estimators, benchmark) consumes the CoalitionalGame interface,
which counts evaluations so that budgets can be audited exactly.
"""

from __future__ import annotations

import math
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .coalitions import MAX_PLAYERS, Coalition, full_mask, mask_dtype, masks_to_bits
from .errors import BudgetError

# Full 2^d enumeration is capped here; beyond this the oracle refuses to run.
BRUTE_FORCE_MAX_PLAYERS = 25


def shapley_weight(s: int, d: int) -> float:
    """Weight s!(d-s-1)!/d! of a size-s coalition in the d-player average.

    Computed in log space so large player counts (d up to 512) do not
    overflow the intermediate factorials.
    """
    if d < 1:
        raise ValueError(f"player count must be >= 1, got {d}")
    if not 0 <= s <= d - 1:
        raise ValueError(f"coalition size {s} outside 0..{d - 1}")
    return math.exp(math.lgamma(s + 1) + math.lgamma(d - s) - math.lgamma(d + 1))


def kernel_weight(s: int, d: int) -> float:
    """Least-squares kernel (d-1) / (C(d,s) * s * (d-s)) for interior sizes.

    Sizes 0 and d carry infinite weight and are excluded; the solver handles
    them as equality constraints instead.
    """
    if d < 2:
        raise ValueError(f"player count must be >= 2, got {d}")
    if not 0 < s < d:
        raise ValueError(f"size {s} is excluded (kernel is infinite at 0 and {d})")
    log_binom = math.lgamma(d + 1) - math.lgamma(s + 1) - math.lgamma(d - s + 1)
    return math.exp(math.log(d - 1) - log_binom - math.log(s) - math.log(d - s))


class CoalitionalGame(ABC):
    """An evaluable set function v(S) over coalitions of d players.

    Evaluation is pure: the same coalition always yields the same value
    within one game instance (stochastic games derive their random stream
    from the coalition itself). The evaluation counter increases by exactly
    one per coalition evaluated and is safe under concurrent callers.
    """

    #: rows of model input generated per coalition evaluation (batch sizing)
    _rows_per_eval = 1
    _max_batch_rows = 65536

    def __init__(self, d: int):
        if not 0 < d <= MAX_PLAYERS:
            raise ValueError(f"player count must be in 1..{MAX_PLAYERS}, got {d}")
        self.d = d
        self._eval_count = 0
        self._count_lock = threading.Lock()

    @property
    def eval_count(self) -> int:
        return self._eval_count

    @property
    def grand_mask(self):
        return full_mask(self.d)

    def _as_mask(self, coalition):
        if isinstance(coalition, Coalition):
            if coalition.d != self.d:
                raise ValueError(f"coalition has d={coalition.d}, game has d={self.d}")
            m = coalition.mask
        else:
            m = int(coalition)
            if m < 0 or m >> self.d:
                raise ValueError(f"mask {m:#x} has bits outside players 0..{self.d - 1}")
        return np.uint64(m) if self.d <= 64 else m

    def value(self, coalition) -> float:
        """Evaluate v(S) for one coalition (a Coalition or an int bitmask)."""
        masks = np.array([self._as_mask(coalition)], dtype=mask_dtype(self.d))
        return float(self.value_many(masks)[0])

    def value_many(self, coalitions) -> np.ndarray:
        """Evaluate a batch of coalitions; the counter increases by the batch size."""
        if isinstance(coalitions, np.ndarray) and coalitions.dtype != object:
            masks = coalitions.astype(np.uint64, copy=False)
        else:
            masks = np.array(
                [self._as_mask(c) for c in coalitions], dtype=mask_dtype(self.d)
            )
        n = len(masks)
        with self._count_lock:
            self._eval_count += n
        if n == 0:
            return np.empty(0, dtype=np.float64)
        chunk = max(1, self._max_batch_rows // max(1, self._rows_per_eval))
        if n <= chunk:
            return self._values(masks_to_bits(masks, self.d), masks)
        parts = []
        for start in range(0, n, chunk):
            sub = masks[start : start + chunk]
            parts.append(self._values(masks_to_bits(sub, self.d), sub))
        return np.concatenate(parts)

    @abstractmethod
    def _values(self, bits: np.ndarray, masks: np.ndarray) -> np.ndarray:
        """Evaluate a (B, d) membership matrix; rows align with masks."""


class SetFunctionGame(CoalitionalGame):
    """Wrap an arbitrary Python function of a Coalition as a game."""

    def __init__(self, d: int, fn: Callable[[Coalition], float]):
        super().__init__(d)
        self._fn = fn

    def _values(self, bits, masks):
        return np.array(
            [float(self._fn(Coalition(int(m), self.d))) for m in masks],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class AttributionVector:
    """Per-player credits plus the game endpoints they are measured against.

    The efficiency gap v_full - v_empty - sum(phi) is carried as metadata
    rather than silently normalized away; callers opt into normalization via
    additive_efficient_normalization.
    """

    phi: np.ndarray
    v_empty: float
    v_full: float
    evals_used: int

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.float64)
        object.__setattr__(self, "phi", phi)
        if not np.isfinite(phi).all():
            raise ValueError("attributions must be finite")
        if not (math.isfinite(self.v_empty) and math.isfinite(self.v_full)):
            raise ValueError("game endpoints must be finite")

    @property
    def d(self) -> int:
        return len(self.phi)

    @property
    def efficiency_gap(self) -> float:
        return self.v_full - self.v_empty - float(self.phi.sum())


def additive_efficient_normalization(att: AttributionVector) -> AttributionVector:
    """Split the efficiency gap evenly across players.

    The result sums to v_full - v_empty up to float rounding, and is never
    farther (in Euclidean distance) from the true attributions than the input.
    """
    shift = att.efficiency_gap / att.d
    return AttributionVector(att.phi + shift, att.v_empty, att.v_full, att.evals_used)


def _popcounts(masks: np.ndarray, d: int) -> np.ndarray:
    counts = np.zeros(len(masks), dtype=np.int64)
    for j in range(d):
        counts += ((masks >> np.uint64(j)) & np.uint64(1)).astype(np.int64)
    return counts


def value_table(game: CoalitionalGame) -> np.ndarray:
    """All 2^d game values, indexed by bitmask; each v(S) evaluated once.

    Coalitions are visited in Gray-code order (successive masks differ by one
    bit) and scattered into a table indexed by mask.
    """
    d = game.d
    if d > BRUTE_FORCE_MAX_PLAYERS:
        raise BudgetError(
            f"full enumeration needs 2^{d} evaluations; cap is d <= {BRUTE_FORCE_MAX_PLAYERS}"
        )
    n = 1 << d
    order = np.arange(n, dtype=np.uint64)
    gray = order ^ (order >> np.uint64(1))
    table = np.empty(n, dtype=np.float64)
    table[gray] = game.value_many(gray)
    return table


def _shapley_from_table(table: np.ndarray, d: int) -> np.ndarray:
    masks = np.arange(1 << d, dtype=np.uint64)
    sizes = _popcounts(masks, d)
    weights = np.array([shapley_weight(s, d) for s in range(d)])
    phi = np.zeros(d)
    for i in range(d):
        bit = np.uint64(1 << i)
        without = masks[(masks & bit) == 0]
        diffs = table[without | bit] - table[without]
        phi[i] = float((weights[sizes[without]] * diffs).sum())
    return phi


def brute_force_shapley(game: CoalitionalGame) -> AttributionVector:
    """Exact Shapley values by full power-set enumeration (d <= 25)."""
    table = value_table(game)
    phi = _shapley_from_table(table, game.d)
    return AttributionVector(
        phi, v_empty=float(table[0]), v_full=float(table[-1]), evals_used=len(table)
    )


@dataclass(frozen=True)
class AxiomReport:
    """Pass/fail verdicts for the efficiency, symmetry, and dummy axioms."""

    efficiency_ok: bool
    symmetry_ok: bool
    dummy_ok: bool
    efficiency_gap: float
    dummy_players: tuple[int, ...]
    symmetric_pairs: tuple[tuple[int, int], ...]

    @property
    def all_ok(self) -> bool:
        return self.efficiency_ok and self.symmetry_ok and self.dummy_ok


def check_axioms(
    game: CoalitionalGame, att: AttributionVector, tol: float = 1e-8
) -> AxiomReport:
    """Check an attribution vector against the axioms of the given game.

    Symmetry and dummy detection enumerate all subsets, so this is limited to
    d <= 25 like the brute-force oracle. `tol` is used both to detect
    symmetric/dummy players and to judge the attribution values.
    """
    d = game.d
    if len(att.phi) != d:
        raise ValueError(f"attribution has d={len(att.phi)}, game has d={d}")
    table = value_table(game)
    masks = np.arange(1 << d, dtype=np.uint64)
    phi = att.phi

    gap = float(table[-1] - table[0] - phi.sum())
    efficiency_ok = abs(gap) <= tol

    dummy_players = []
    dummy_ok = True
    for i in range(d):
        bit = np.uint64(1 << i)
        without = masks[(masks & bit) == 0]
        if np.abs(table[without | bit] - table[without]).max() <= tol:
            dummy_players.append(i)
            if abs(phi[i]) > tol:
                dummy_ok = False

    symmetric_pairs = []
    symmetry_ok = True
    for i in range(d):
        bi = np.uint64(1 << i)
        for j in range(i + 1, d):
            bj = np.uint64(1 << j)
            neither = masks[(masks & (bi | bj)) == 0]
            if np.abs(table[neither | bi] - table[neither | bj]).max() <= tol:
                symmetric_pairs.append((i, j))
                if abs(phi[i] - phi[j]) > tol:
                    symmetry_ok = False

    return AxiomReport(
        efficiency_ok=efficiency_ok,
        symmetry_ok=symmetry_ok,
        dummy_ok=dummy_ok,
        efficiency_gap=gap,
        dummy_players=tuple(dummy_players),
        symmetric_pairs=tuple(symmetric_pairs),
    )
