"""Canonical CPT constructors: noisy-OR with leak, logical AND, implication
constraints, and root priors.

The noisy-OR child fails to fire, given parent states x, with probability

    P(child = 0 | x) = lambda_leak * prod_i ( 1 if x_i = 0 else lambda_i )

where each inhibition ``lambda_i`` is the chance that a possessed parent skill
is not expressed, and ``lambda_leak`` (when present) is the complement of the
guess probability contributed by an always-true leak parent folded into the
table.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .bn import Cpt, Factor, Network, Variable
from .errors import ParameterError


def _check_unit(value: float, what: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ParameterError(f"{what} must lie in [0, 1], got {value}")
    return value


@dataclass(frozen=True)
class NoisyOrSpec:
    """Parents of a noisy-OR child with one inhibition per parent.

    ``leak_inhibition`` folds an always-true leak parent into the table; the
    guess probability is its complement.
    """

    parents: tuple[str, ...]
    inhibitions: Mapping[str, float]
    leak_inhibition: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        missing = [p for p in self.parents if p not in self.inhibitions]
        if missing:
            raise ParameterError(f"no inhibition given for parents {missing}")
        extra = [p for p in self.inhibitions if p not in self.parents]
        if extra:
            raise ParameterError(f"inhibitions for non-parents {extra}")
        for p in self.parents:
            _check_unit(self.inhibitions[p], f"inhibition for {p!r}")
        if self.leak_inhibition is not None:
            _check_unit(self.leak_inhibition, "leak inhibition")


@dataclass(frozen=True)
class ConstraintSpec:
    """Implication 'superior skill requires inferior skill'.

    The constraint node is observed true; its CPT zeroes the configuration
    (superior=1, inferior=0) and assigns ``p_star`` to the three permitted
    parent states, so conditioning never depends on the common value.
    """

    superior: str
    inferior: str
    p_star: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.p_star <= 1.0:
            raise ParameterError(f"p_star must lie in (0, 1], got {self.p_star}")


def noisy_or_cpt(spec: NoisyOrSpec, child: str) -> Cpt:
    """Materialize the full noisy-OR table over ``spec.parents``."""
    n = len(spec.parents)
    fail = np.ones((2,) * n, dtype=np.float64)
    for i, parent in enumerate(spec.parents):
        lam = spec.inhibitions[parent]
        term = np.array([1.0, lam]).reshape((1,) * i + (2,) + (1,) * (n - i - 1))
        fail = fail * term
    if spec.leak_inhibition is not None:
        fail = fail * spec.leak_inhibition
    table = np.stack([fail, 1.0 - fail], axis=-1)
    return Cpt(child, spec.parents, Factor(spec.parents + (child,), table))


def and_cpt(parents: list[str] | tuple[str, ...], child: str) -> Cpt:
    """Deterministic AND: the child is true iff every parent is true."""
    parents = tuple(parents)
    if not parents:
        raise ParameterError("AND gate needs at least one parent")
    n = len(parents)
    on = np.zeros((2,) * n, dtype=np.float64)
    on[(1,) * n] = 1.0
    table = np.stack([1.0 - on, on], axis=-1)
    return Cpt(child, parents, Factor(parents + (child,), table))


def or_cpt(parents: list[str] | tuple[str, ...], child: str) -> Cpt:
    """Deterministic OR: the child is true iff any parent is true."""
    parents = tuple(parents)
    if not parents:
        raise ParameterError("OR gate needs at least one parent")
    n = len(parents)
    off = np.zeros((2,) * n, dtype=np.float64)
    off[(0,) * n] = 1.0
    table = np.stack([off, 1.0 - off], axis=-1)
    return Cpt(child, parents, Factor(parents + (child,), table))


def constraint_cpt(spec: ConstraintSpec, node: str) -> Cpt:
    """CPT of an implication-constraint node over (superior, inferior)."""
    p = spec.p_star
    on = np.array([[p, p], [0.0, p]])
    table = np.stack([1.0 - on, on], axis=-1)
    parents = (spec.superior, spec.inferior)
    return Cpt(node, parents, Factor(parents + (node,), table))


def prior_cpt(var: str, p_true: float) -> Cpt:
    """Parentless CPT [1 - p_true, p_true]."""
    p = _check_unit(p_true, f"prior for {var!r}")
    return Cpt(var, (), Factor((var,), np.array([1.0 - p, p])))


def inhibitor_network(
    spec: NoisyOrSpec, child: str, priors: Mapping[str, float], leak_id: str = "__leak"
) -> Network:
    """Explicit-inhibitor formulation of the same gate, as an equivalence oracle.

    Each parent X gets an inhibitor X' with P(X'=1 | X=1) = 1 - lambda and
    P(X'=1 | X=0) = 0; the leak becomes an always-true root with its own
    inhibitor; the child is a deterministic OR of the inhibitors. Marginals of
    ``child`` must match the collapsed table from :func:`noisy_or_cpt`.
    """
    variables = []
    cpts = []
    inhibitor_ids = []
    for parent in spec.parents:
        variables.append(Variable(parent))
        cpts.append(prior_cpt(parent, priors[parent]))
        inh = f"{parent}__inh"
        lam = spec.inhibitions[parent]
        table = np.array([[1.0, 0.0], [lam, 1.0 - lam]])
        variables.append(Variable(inh))
        cpts.append(Cpt(inh, (parent,), Factor((parent, inh), table)))
        inhibitor_ids.append(inh)
    if spec.leak_inhibition is not None:
        variables.append(Variable(leak_id))
        cpts.append(prior_cpt(leak_id, 1.0))
        inh = f"{leak_id}__inh"
        lam = spec.leak_inhibition
        table = np.array([[1.0, 0.0], [lam, 1.0 - lam]])
        variables.append(Variable(inh))
        cpts.append(Cpt(inh, (leak_id,), Factor((leak_id, inh), table)))
        inhibitor_ids.append(inh)
    variables.append(Variable(child))
    if inhibitor_ids:
        cpts.append(or_cpt(inhibitor_ids, child))
    else:
        cpts.append(prior_cpt(child, 0.0))
    return Network(variables, cpts)
