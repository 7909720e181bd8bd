"""Discrete Bayesian network primitives: variables, dense factors, CPTs, networks.

A :class:`Factor` stores a dense nonnegative table with one axis per scope
variable, in scope order. Flattening is row-major (C order), so the *last*
scope variable varies fastest; every serialized value list uses this order.

Probabilities are kept in linear space throughout. All types are immutable
after construction and all operations are pure functions, so values can be
shared freely between threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import _kernels
from .errors import StructureError

# Tolerances: CPT rows must be normalized to 1e-12 when built, while results of
# chained float arithmetic are only held to 1e-9.
CPT_NORM_ATOL = 1e-12
ARITHMETIC_ATOL = 1e-9

Evidence = Mapping[str, int]


@dataclass(frozen=True)
class Variable:
    """A discrete variable with at least two states (0 .. cardinality-1)."""

    id: str
    name: str = ""
    cardinality: int = 2

    def __post_init__(self):
        if not self.id:
            raise StructureError("variable id must be a non-empty string")
        if self.cardinality < 2:
            raise StructureError(f"variable {self.id!r}: cardinality must be >= 2")


class Factor:
    """Nonnegative real table over an ordered tuple of variable ids."""

    __slots__ = ("scope", "values")

    def __init__(self, scope: Iterable[str], values):
        scope = tuple(scope)
        # np.array (not ascontiguousarray) keeps 0-d scalars 0-d.
        arr = np.array(values, dtype=np.float64, order="C")
        if arr.ndim != len(scope):
            raise StructureError(
                f"factor over {scope}: table has {arr.ndim} axes, expected {len(scope)}"
            )
        if len(set(scope)) != len(scope):
            raise StructureError(f"factor scope contains duplicates: {scope}")
        if not np.isfinite(arr).all():
            raise StructureError("factor values must be finite")
        if (arr < 0).any():
            raise StructureError("factor values must be nonnegative")
        arr.setflags(write=False)
        object.__setattr__(self, "scope", scope)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Factor is immutable")

    @property
    def cards(self) -> tuple[int, ...]:
        return self.values.shape

    def axis(self, var: str) -> int:
        try:
            return self.scope.index(var)
        except ValueError:
            raise StructureError(f"variable {var!r} not in factor scope {self.scope}") from None

    def __mul__(self, other: "Factor") -> "Factor":
        return factor_product(self, other)

    def __repr__(self):
        dims = ", ".join(f"{v}:{c}" for v, c in zip(self.scope, self.cards))
        return f"Factor({dims})"


def factor_product(a: Factor, b: Factor) -> Factor:
    """Pointwise product; the result's scope is the union of both scopes.

    Variables of ``a`` keep their order and come first, new variables of ``b``
    follow in ``b``'s order.
    """
    a_index = {v: i for i, v in enumerate(a.scope)}
    for i, v in enumerate(b.scope):
        if v in a_index and a.cards[a_index[v]] != b.cards[i]:
            raise StructureError(
                f"cardinality mismatch for {v!r}: {a.cards[a_index[v]]} vs {b.cards[i]}"
            )
    out_scope = a.scope + tuple(v for v in b.scope if v not in a_index)
    pos = {v: i for i, v in enumerate(out_scope)}
    out_cards = list(a.cards) + [
        b.cards[i] for i, v in enumerate(b.scope) if v not in a_index
    ]
    a_axes = [pos[v] for v in a.scope]
    b_axes = [pos[v] for v in b.scope]
    values = _kernels.multiply(a.values, a_axes, b.values, b_axes, tuple(out_cards))
    return Factor(out_scope, values)


def factor_marginalize(f: Factor, var: str) -> Factor:
    """Sum ``var`` out of the factor."""
    ax = f.axis(var)
    values = _kernels.sum_axis(f.values, ax)
    scope = f.scope[:ax] + f.scope[ax + 1 :]
    return Factor(scope, values)


def factor_reduce(f: Factor, evidence: Evidence) -> Factor:
    """Slice the factor to the rows consistent with the evidence.

    Evidence on variables outside the scope is ignored; evidenced variables
    are dropped from the scope.
    """
    hits = [v for v in f.scope if v in evidence]
    if not hits:
        return f
    slicer = []
    for i, v in enumerate(f.scope):
        if v in evidence:
            state = evidence[v]
            if not 0 <= state < f.cards[i]:
                raise StructureError(
                    f"evidence state {state} out of range for {v!r} (cardinality {f.cards[i]})"
                )
            slicer.append(state)
        else:
            slicer.append(slice(None))
    scope = tuple(v for v in f.scope if v not in evidence)
    return Factor(scope, f.values[tuple(slicer)])


@dataclass(frozen=True)
class Cpt:
    """Conditional probability table P(child | parents).

    The factor scope is ``(*parents, child)``, so the child axis is last and
    varies fastest in the flattened table.
    """

    child: str
    parents: tuple[str, ...]
    table: Factor

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        expected = self.parents + (self.child,)
        if self.table.scope != expected:
            raise StructureError(
                f"CPT for {self.child!r}: table scope {self.table.scope} != {expected}"
            )

    def normalization_gaps(self) -> np.ndarray:
        """|column sum - 1| for every joint parent state."""
        return np.abs(self.table.values.sum(axis=-1) - 1.0)

    def is_normalized(self, atol: float = CPT_NORM_ATOL) -> bool:
        return bool((self.normalization_gaps() <= atol).all())


class Network:
    """Directed acyclic graph of variables with one CPT per variable.

    With ``check=True`` (the default) construction raises ``StructureError``
    on any well-formedness violation. ``check=False`` builds the object
    anyway so that :func:`validate_network` can report the problems.
    """

    __slots__ = ("variables", "cpts", "_order", "_topo")

    def __init__(self, variables: Iterable[Variable], cpts: Iterable[Cpt], check: bool = True):
        var_list = tuple(variables)
        by_id: dict[str, Variable] = {}
        for v in var_list:
            if v.id in by_id:
                raise StructureError(f"duplicate variable id {v.id!r}")
            by_id[v.id] = v
        cpt_map: dict[str, Cpt] = {}
        for c in cpts:
            if c.child in cpt_map:
                raise StructureError(f"duplicate CPT for {c.child!r}")
            cpt_map[c.child] = c
        object.__setattr__(self, "variables", by_id)
        object.__setattr__(self, "cpts", cpt_map)
        object.__setattr__(self, "_order", tuple(v.id for v in var_list))
        object.__setattr__(self, "_topo", None)
        if check:
            report = validate_network(self)
            if not report.ok:
                raise StructureError("invalid network:\n" + "\n".join(report.issues))

    def __setattr__(self, name, value):
        raise AttributeError("Network is immutable")

    @property
    def order(self) -> tuple[str, ...]:
        """Variable ids in declaration order (the serialization order)."""
        return self._order

    def cardinality(self, var: str) -> int:
        return self.variables[var].cardinality

    def parents(self, var: str) -> tuple[str, ...]:
        return self.cpts[var].parents

    def children(self, var: str) -> tuple[str, ...]:
        return tuple(c for c in self._order if var in self.cpts[c].parents)

    def topological_order(self) -> tuple[str, ...]:
        if self._topo is None:
            order = _topological_sort(self._order, {v: self.cpts[v].parents for v in self._order})
            if order is None:
                raise StructureError("network graph contains a directed cycle")
            object.__setattr__(self, "_topo", order)
        return self._topo

    def to_json(self, indent: int | None = 2) -> str:
        doc = {
            "variables": [
                {"id": v.id, "name": v.name, "cardinality": v.cardinality}
                for v in (self.variables[i] for i in self._order)
            ],
            "cpts": [
                {
                    "child": c.child,
                    "parents": list(c.parents),
                    "values": self.cpts[c.child].table.values.reshape(-1).tolist(),
                }
                for c in (self.cpts[i] for i in self._order)
            ],
        }
        return json.dumps(doc, indent=indent)

    @classmethod
    def from_json(cls, text: str, check: bool = True) -> "Network":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise StructureError(f"network JSON does not parse: {exc}") from exc
        try:
            variables = [
                Variable(d["id"], d.get("name", ""), int(d.get("cardinality", 2)))
                for d in doc["variables"]
            ]
            cards = {v.id: v.cardinality for v in variables}
            cpts = []
            for d in doc["cpts"]:
                child = d["child"]
                parents = tuple(d["parents"])
                shape = tuple(cards.get(p, 2) for p in parents) + (cards.get(child, 2),)
                values = np.asarray(d["values"], dtype=np.float64)
                if values.size != int(np.prod(shape)):
                    raise StructureError(
                        f"CPT for {child!r}: {values.size} values, expected {int(np.prod(shape))}"
                    )
                cpts.append(Cpt(child, parents, Factor(parents + (child,), values.reshape(shape))))
        except KeyError as exc:
            raise StructureError(f"network JSON missing field {exc}") from exc
        return cls(variables, cpts, check=check)


def _topological_sort(ids, parents_of) -> tuple[str, ...] | None:
    id_set = set(ids)
    pending = {v: {p for p in parents_of[v] if p in id_set} for v in ids}
    out = []
    ready = sorted(v for v, ps in pending.items() if not ps)
    queued = set(ready)
    while ready:
        v = ready.pop(0)
        out.append(v)
        del pending[v]
        newly = []
        for w, ps in pending.items():
            if v in ps:
                ps.discard(v)
                if not ps and w not in queued:
                    newly.append(w)
        for w in sorted(newly):
            ready.append(w)
            queued.add(w)
    if pending:
        return None
    return tuple(out)


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_network`; empty ``issues`` means valid."""

    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __str__(self):
        return "ok" if self.ok else "\n".join(self.issues)


def validate_network(net: Network) -> ValidationReport:
    """Check acyclicity, CPT coverage and shape, and CPT normalization."""
    issues: list[str] = []
    ids = set(net.order)
    for vid in net.order:
        if vid not in net.cpts:
            issues.append(f"missing-cpt: variable {vid!r} has no CPT")
    for child in net.cpts:
        if child not in ids:
            issues.append(f"dangling-child: CPT child {child!r} is not a declared variable")
    for child, cpt in net.cpts.items():
        for p in cpt.parents:
            if p not in ids:
                issues.append(f"dangling-parent: CPT for {child!r} references unknown {p!r}")
        expected_shape = tuple(
            net.variables[v].cardinality for v in cpt.table.scope if v in ids
        )
        if all(v in ids for v in cpt.table.scope) and cpt.table.cards != expected_shape:
            issues.append(
                f"shape: CPT for {child!r} has table shape {cpt.table.cards},"
                f" variables imply {expected_shape}"
            )
            continue
        gaps = cpt.normalization_gaps().reshape(-1)
        if gaps.size and gaps.max() > CPT_NORM_ATOL:
            idx = int(np.argmax(gaps))
            parent_shape = cpt.table.cards[:-1]
            state = np.unravel_index(idx, parent_shape) if parent_shape else ()
            parent_state = {p: int(s) for p, s in zip(cpt.parents, state)}
            total = cpt.table.values.sum(axis=-1).reshape(-1)[idx]
            issues.append(
                f"normalization: CPT for {child!r} sums to {total:.12g}"
                f" at parent state {parent_state}"
            )
    if _topological_sort(net.order, {v: net.cpts[v].parents if v in net.cpts else () for v in net.order}) is None:
        issues.append("cycle: the edge relation is not acyclic")
    return ValidationReport(issues)
