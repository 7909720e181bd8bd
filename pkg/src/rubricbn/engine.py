"""Exact posterior inference.

:func:`posterior` runs variable elimination with a deterministic min-degree
ordering; :func:`enumerate_joint` computes the same quantity by brute-force
summation of the joint over every completion and serves as the testing oracle.
Queries are pure over an immutable network, so any number may run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .bn import ARITHMETIC_ATOL, Evidence, Factor, Network, factor_marginalize, factor_product, factor_reduce
from .errors import InconsistentEvidenceError, ParameterError, StructureError

# Normalizers below this are treated as impossible evidence rather than noise.
_ZERO_MASS = 1e-300

ENUMERATION_GUARD = 2**24


@dataclass(frozen=True)
class Query:
    """Posterior request: distribution of ``target`` given ``evidence``."""

    target: str
    evidence: Mapping[str, int]

    def __post_init__(self):
        if self.target in self.evidence:
            raise StructureError(f"query target {self.target!r} appears in the evidence")


@dataclass(frozen=True)
class EliminationOrder:
    """Permutation of the variables to be summed out, plus the simulated width.

    ``width`` is the largest scope (variable count) of any intermediate factor
    produced when eliminating along ``order``.
    """

    order: tuple[str, ...]
    width: int = 0


def _check_query(net: Network, q: Query) -> None:
    if q.target not in net.variables:
        raise StructureError(f"unknown query target {q.target!r}")
    for var, state in q.evidence.items():
        if var not in net.variables:
            raise StructureError(f"evidence on unknown variable {var!r}")
        if not 0 <= int(state) < net.cardinality(var):
            raise StructureError(
                f"evidence state {state} out of range for {var!r}"
            )


def _ancestors(net: Network, seeds) -> set[str]:
    """Seeds plus all their ancestors; CPTs outside this set cannot affect them."""
    seen: set[str] = set()
    stack = list(seeds)
    while stack:
        v = stack.pop()
        if v in seen:
            continue
        seen.add(v)
        stack.extend(net.cpts[v].parents)
    return seen


def _min_degree_order(scopes: list[tuple[str, ...]], eliminate: set[str]) -> tuple[tuple[str, ...], int]:
    """Greedy min-degree ordering with lexicographic id tie-breaking.

    Returns the order and the max clique size (eliminated variable plus its
    neighbours at elimination time).
    """
    adjacency: dict[str, set[str]] = {}
    for scope in scopes:
        for v in scope:
            adjacency.setdefault(v, set()).update(scope)
    for v, neigh in adjacency.items():
        neigh.discard(v)
    for v in eliminate:
        adjacency.setdefault(v, set())
    order = []
    width = 0
    remaining = set(eliminate)
    while remaining:
        best = min(remaining, key=lambda v: (len(adjacency[v]), v))
        neigh = adjacency[best]
        width = max(width, len(neigh) + 1)
        for a in neigh:
            adjacency[a].discard(best)
            adjacency[a].update(n for n in neigh if n != a)
        del adjacency[best]
        order.append(best)
        remaining.discard(best)
    return tuple(order), width


def choose_order(net: Network, q: Query) -> EliminationOrder:
    """Min-degree ordering over every non-target, non-evidence variable.

    The moral graph is built from the evidence-reduced CPT scopes, so observed
    variables do not contribute edges.
    """
    _check_query(net, q)
    keep = {q.target, *q.evidence}
    scopes = [
        tuple(v for v in net.cpts[var].table.scope if v not in q.evidence)
        for var in net.order
    ]
    eliminate = {v for v in net.order if v not in keep}
    order, width = _min_degree_order(scopes, eliminate)
    return EliminationOrder(order, width)


def posterior(
    net: Network,
    q: Query,
    order: EliminationOrder | None = None,
    prune: bool = True,
) -> np.ndarray:
    """P(target | evidence) by variable elimination.

    Raises :class:`InconsistentEvidenceError` when the evidence has zero
    probability. With ``prune=True`` (default) variables with no observed or
    queried descendants are dropped first; this never changes the result.
    """
    _check_query(net, q)
    if prune:
        active = _ancestors(net, {q.target, *q.evidence})
    else:
        active = set(net.order)
    factors: list[Factor] = []
    const = 1.0
    for var in net.order:
        if var not in active:
            continue
        f = factor_reduce(net.cpts[var].table, q.evidence)
        if not f.scope:
            const *= float(f.values)
        else:
            factors.append(f)
    if order is not None:
        elim = [v for v in order.order if v in active and v != q.target and v not in q.evidence]
    else:
        elim, _ = _min_degree_order([f.scope for f in factors], active - {q.target} - set(q.evidence))
    for var in elim:
        bucket = [f for f in factors if var in f.scope]
        if not bucket:
            continue
        factors = [f for f in factors if var not in f.scope]
        prod = bucket[0]
        for f in bucket[1:]:
            prod = factor_product(prod, f)
        result = factor_marginalize(prod, var)
        if result.scope:
            factors.append(result)
        else:
            const *= float(result.values)
    dist = np.ones(net.cardinality(q.target))
    for f in factors:
        if f.scope != (q.target,):
            raise StructureError(
                f"elimination left a factor over {f.scope}; order must cover all other variables"
            )
        dist = dist * f.values
    total = float(dist.sum()) * const
    if not np.isfinite(total) or total < _ZERO_MASS:
        raise InconsistentEvidenceError(
            f"evidence {dict(q.evidence)} has zero probability (normalizer {total:.3g})"
        )
    return dist / dist.sum()


def enumerate_joint(net: Network, q: Query) -> np.ndarray:
    """Posterior by summing the factorized joint over all completions.

    Deliberately independent of the factor-algebra path: the full joint table
    is assembled with raw numpy broadcasting, evidence is applied by slicing,
    and everything but the target is summed out. Guarded to state spaces of at
    most ``ENUMERATION_GUARD`` entries.
    """
    _check_query(net, q)
    ids = list(net.order)
    cards = [net.cardinality(v) for v in ids]
    size = 1
    for c in cards:
        size *= c
    if size > ENUMERATION_GUARD:
        raise ParameterError(f"joint state space {size} exceeds guard {ENUMERATION_GUARD}")
    position = {v: i for i, v in enumerate(ids)}
    joint = np.ones(tuple(cards))
    for var in ids:
        cpt = net.cpts[var]
        scope = cpt.table.scope
        axes = [position[v] for v in scope]
        perm = sorted(range(len(axes)), key=axes.__getitem__)
        arr = cpt.table.values.transpose(perm)
        shape = [1] * len(ids)
        for i, ax in enumerate(sorted(axes)):
            shape[ax] = arr.shape[i]
        joint = joint * arr.reshape(shape)
    slicer = tuple(q.evidence.get(v, slice(None)) for v in ids)
    restricted = joint[slicer]
    free = [v for v in ids if v not in q.evidence]
    target_axis = free.index(q.target)
    other_axes = tuple(i for i in range(len(free)) if i != target_axis)
    dist = restricted.sum(axis=other_axes) if other_axes else restricted
    total = float(dist.sum())
    if not np.isfinite(total) or total < _ZERO_MASS:
        raise InconsistentEvidenceError(
            f"evidence {dict(q.evidence)} has zero probability (normalizer {total:.3g})"
        )
    return dist / total
