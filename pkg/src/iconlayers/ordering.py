"""Exact layer-ordering optimisation.

Each part ``i`` earns ``y_i = 1`` when some part drawn above it covers its
extra region (``c[i][j]``) and pays ``lam * z_i`` when some part above it
covers its visible region (``d[i][j]``). Both flags depend only on the *set*
of parts above ``i``, so the search runs over subsets of still-unplaced parts
(memoised branch and bound, bottom layer first) and is exact for every K.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import permutations
from numbers import Real
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyPartSet, InvalidRelation, NotAPermutation
from .mask_ops import AmodalSet
from .raster import extra_region, fill_holes, fill_region
from .svg_model import CompoundPath

log = logging.getLogger(__name__)

DEFAULT_LAMBDA = 1
LARGE_K_WARNING = 16


def _as_fraction(value: Real) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


def _number(value: Fraction) -> int | float:
    return int(value) if value.denominator == 1 else float(value)


@dataclass
class OrderingProblem:
    extra: list[np.ndarray]
    visible: list[np.ndarray]
    fill: list[np.ndarray]
    lam: Fraction
    c: np.ndarray
    d: np.ndarray

    @property
    def K(self) -> int:
        return int(self.c.shape[0])

    @classmethod
    def from_indicators(cls, c, d, lam: Real = DEFAULT_LAMBDA) -> OrderingProblem:
        """Build a problem straight from indicator matrices (no masks attached)."""
        c = np.array(c, dtype=bool)
        d = np.array(d, dtype=bool)
        if c.shape != d.shape or c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DimensionMismatch("c and d must be equal square matrices")
        np.fill_diagonal(c, False)
        np.fill_diagonal(d, False)
        return cls([], [], [], _as_fraction(lam), c, d)

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "lambda": str(self.lam),
            "c": self.c.astype(int).tolist(),
            "d": self.d.astype(int).tolist(),
        }


@dataclass
class OrderingSolution:
    permutation: tuple[int, ...]  # stack position (0 = bottom) -> part index
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    objective: int | float

    def to_dict(self) -> dict:
        return {
            "permutation": list(self.permutation),
            "x": self.x.astype(int).tolist(),
            "y": self.y.astype(int).tolist(),
            "z": self.z.astype(int).tolist(),
            "objective": self.objective,
        }


def indicators(extra: Sequence[np.ndarray], visible: Sequence[np.ndarray], fill: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """``c[i][j] = |E_i & F_j| > 0`` and ``d[i][j] = |V_i & F_j| > 0``, zero diagonal."""
    k = len(fill)
    c = np.zeros((k, k), dtype=bool)
    d = np.zeros((k, k), dtype=bool)
    for i in range(k):
        for j in range(k):
            if i != j:
                c[i, j] = bool(np.any(extra[i] & fill[j]))
                d[i, j] = bool(np.any(visible[i] & fill[j]))
    return c, d


def build_problem(
    amodal: AmodalSet,
    silhouette: np.ndarray,
    amodal_paths: Sequence[CompoundPath] | None = None,
    lam: Real = DEFAULT_LAMBDA,
) -> OrderingProblem:
    """Assemble the indicator matrices for a set of completed parts.

    Fill regions come from the traced vector shapes when ``amodal_paths`` is
    given, otherwise from the raw amodal masks with holes filled.
    """
    if len(amodal) == 0:
        raise EmptyPartSet("no parts to order")
    if not amodal.visible:
        raise ValueError("amodal set carries no visible masks")
    if amodal_paths is not None and len(amodal_paths) != len(amodal):
        raise ValueError("amodal paths must correspond 1:1 to amodal masks")
    h, w = silhouette.shape
    extra = [extra_region(a, silhouette) for a in amodal.amodal]
    if amodal_paths is None:
        fill = [fill_holes(a) for a in amodal.amodal]
    else:
        fill = [fill_region(p, w, h) for p in amodal_paths]
    c, d = indicators(extra, amodal.visible, fill)
    return OrderingProblem(extra, list(amodal.visible), fill, _as_fraction(lam), c, d)


def _check_relation(x: np.ndarray) -> None:
    k = x.shape[0]
    off = ~np.eye(k, dtype=bool)
    if np.any((x + x.T)[off] != 1):
        raise InvalidRelation("x[i][j] + x[j][i] must equal 1 for i != j")
    xi = x.astype(np.int64)
    # x_ij + x_jk + x_ki <= 2 over distinct triples
    tri = xi[:, :, None] + xi[None, :, :] + xi.T[:, None, :]
    i, j, l = np.indices((k, k, k))
    distinct = (i != j) & (j != l) & (i != l)
    if np.any(tri[distinct] > 2):
        raise InvalidRelation("transitivity violated")


def coverage_flags(x: np.ndarray, problem: OrderingProblem) -> tuple[np.ndarray, np.ndarray]:
    """Per-part occlusion reward and visibility penalty flags for relation ``x``."""
    x = np.asarray(x, dtype=np.int64)
    if x.shape != problem.c.shape:
        raise DimensionMismatch("x must be K x K")
    _check_relation(x)
    above = x.T.astype(bool)  # above[i, j]: j is above i
    y = np.any(problem.c & above, axis=1)
    z = np.any(problem.d & above, axis=1)
    return y, z


def order_to_relation(order: Sequence[int]) -> np.ndarray:
    k = len(order)
    if sorted(order) != list(range(k)):
        raise NotAPermutation(f"{list(order)} is not a permutation of 0..{k - 1}")
    pos = np.empty(k, dtype=np.int64)
    pos[list(order)] = np.arange(k)
    x = (pos[:, None] > pos[None, :]).astype(np.int64)
    return x


def _objective(problem: OrderingProblem, y: np.ndarray, z: np.ndarray) -> Fraction:
    return Fraction(int(y.sum())) - problem.lam * int(z.sum())


def enumerate_objective(problem: OrderingProblem, order: Sequence[int]) -> int | float:
    x = order_to_relation(order)
    y, z = coverage_flags(x, problem)
    return _number(_objective(problem, y, z))


def solve(problem: OrderingProblem) -> OrderingSolution:
    """Exact optimum; among ties the lexicographically smallest bottom-to-top permutation."""
    k = problem.K
    if k < 1:
        raise EmptyPartSet("no parts to order")
    if k > LARGE_K_WARNING:
        log.warning("ordering %d parts: subset search needs 2^%d states", k, k)
    c_mask = [sum(1 << j for j in range(k) if problem.c[i, j]) for i in range(k)]
    d_mask = [sum(1 << j for j in range(k) if problem.d[i, j]) for i in range(k)]
    lam = problem.lam
    full = (1 << k) - 1

    def gain(i: int, above: int) -> Fraction:
        g = Fraction(1) if c_mask[i] & above else Fraction(0)
        return g - lam if d_mask[i] & above else g

    def bound(rest: int) -> int:
        # every unplaced part can at best earn its reward
        return sum(1 for i in range(k) if rest >> i & 1 and c_mask[i] & rest & ~(1 << i))

    @lru_cache(maxsize=None)
    def best(rest: int) -> Fraction:
        """Best total over parts in ``rest`` stacked above everything already placed."""
        if rest == 0:
            return Fraction(0)
        ub = bound(rest)
        top: Fraction | None = None
        for i in range(k):
            if not rest >> i & 1:
                continue
            above = rest & ~(1 << i)
            v = gain(i, above) + best(above)
            if top is None or v > top:
                top = v
                if top == ub:
                    break
        return top  # type: ignore[return-value]

    order: list[int] = []
    rest = full
    while rest:
        target = best(rest)
        for i in range(k):
            if rest >> i & 1:
                above = rest & ~(1 << i)
                if gain(i, above) + best(above) == target:
                    order.append(i)
                    rest = above
                    break
    x = order_to_relation(order)
    y, z = coverage_flags(x, problem)
    obj = _objective(problem, y, z)
    assert obj == best(full)
    best.cache_clear()
    return OrderingSolution(tuple(order), x, y, z, _number(obj))


def brute_force(problem: OrderingProblem) -> tuple[int | float, tuple[int, ...]]:
    """Exhaustive K! enumeration (test oracle); returns the best value and first optimal order."""
    best_val = None
    best_order: tuple[int, ...] = ()
    for perm in permutations(range(problem.K)):
        v = enumerate_objective(problem, perm)
        if best_val is None or v > best_val:
            best_val, best_order = v, perm
    return best_val, best_order  # type: ignore[return-value]


def dump_json(problem: OrderingProblem, solution: OrderingSolution) -> str:
    return json.dumps({"problem": problem.to_dict(), "solution": solution.to_dict()}, indent=2, sort_keys=True)
