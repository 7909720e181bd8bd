"""Declarative rubric model and its compilation into a quantified network.

A rubric is a grid of latent binary skills: rows are competence components
(lowest first) and columns are proficiency levels (lowest first). Cell (r, c)
dominates (r', c') iff (c > c' and r >= r') or (c == c' and r > r'); dominance
pairs that are consecutive become implication constraints. Tasks attach one
observable answer node per cell, plus optional supplementary-skill machinery:

* per answer node, a target group (noisy-OR over the dominating skills) and
  one group node per required supplementary group (noisy-OR over the group's
  applicable skills),
* a deterministic AND of those group nodes,
* the answer as a noisy-OR over the AND output (inhibition 0) and the leak,
  so a lucky guess succeeds regardless of skills,
* one direct observation node per applicable supplementary skill.

Without the supplementary layer the answer is a plain noisy-OR over the
dominating skills and the leak. Compilation is deterministic: identical specs
and configs serialize to identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping

from .bn import Cpt, Network, Variable
from .errors import DataError, ParameterError
from .gates import ConstraintSpec, NoisyOrSpec, and_cpt, constraint_cpt, noisy_or_cpt, prior_cpt

Cell = tuple[int, int]

LEAK_ID = "LEAK"


def skill_id(cell: Cell) -> str:
    return f"X{cell[0]}{cell[1]}"


def dominates(a: Cell, b: Cell) -> bool:
    """True when cell ``a`` is a strictly higher competence than ``b``."""
    return (a[1] > b[1] and a[0] >= b[0]) or (a[1] == b[1] and a[0] > b[0])


@dataclass(frozen=True)
class TaskSpec:
    """Inhibition tables and supplementary-skill applicability for one task."""

    id: str
    lambda_targets: Mapping[Cell, float]
    lambda_supp: Mapping[tuple[str, Cell], float]
    applicable: frozenset[str]
    lambda_leak: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "applicable", frozenset(self.applicable))
        for cell, lam in self.lambda_targets.items():
            _check_lambda(lam, f"task {self.id}: target inhibition at cell {cell}")
        for (skill, cell), lam in self.lambda_supp.items():
            _check_lambda(lam, f"task {self.id}: inhibition for {skill} at cell {cell}")
            if skill not in self.applicable:
                raise ParameterError(
                    f"task {self.id}: inhibition given for non-applicable skill {skill}"
                )
        _check_lambda(self.lambda_leak, f"task {self.id}: leak inhibition")


def _check_lambda(lam: float, what: str) -> None:
    if not 0.0 <= float(lam) <= 1.0:
        raise ParameterError(f"{what} must lie in [0, 1], got {lam}")


@dataclass(frozen=True)
class RubricSpec:
    """Competence grid, implication ordering, supplementary groups and tasks."""

    components: tuple[str, ...]
    levels: tuple[str, ...]
    implications: tuple[tuple[Cell, Cell], ...]
    supplementary: tuple[tuple[str, str], ...]  # (skill id, group id), spec order
    group_rows: Mapping[str, tuple[int, ...]]  # group id -> rows requiring it
    tasks: tuple[TaskSpec, ...]

    def __post_init__(self):
        if not self.components or not self.levels:
            raise DataError("rubric needs at least one component and one level")
        if len(self.components) > 9 or len(self.levels) > 9:
            raise DataError("rubric grids larger than 9x9 are not supported")
        cells = set(self.cells())
        for sup, inf in self.implications:
            if sup not in cells or inf not in cells:
                raise DataError(f"implication ({sup} -> {inf}) references a cell outside the grid")
            if not dominates(sup, inf):
                raise DataError(f"implication ({sup} -> {inf}) does not follow the dominance order")
        skills = [s for s, _ in self.supplementary]
        if len(set(skills)) != len(skills):
            raise DataError("a supplementary skill may belong to only one group")
        groups = {g for _, g in self.supplementary}
        for g, rows in self.group_rows.items():
            if g not in groups:
                raise DataError(f"group_rows references unknown group {g!r}")
            for r in rows:
                if not 1 <= r <= len(self.components):
                    raise DataError(f"group_rows[{g!r}] references row {r} outside the grid")
        seen = set()
        for task in self.tasks:
            if task.id in seen:
                raise DataError(f"duplicate task id {task.id!r}")
            seen.add(task.id)
            unknown = task.applicable - set(skills)
            if unknown:
                raise DataError(f"task {task.id}: unknown supplementary skills {sorted(unknown)}")

    @property
    def n_rows(self) -> int:
        return len(self.components)

    @property
    def n_cols(self) -> int:
        return len(self.levels)

    def cells(self) -> list[Cell]:
        """All cells in row-major order."""
        return [(r, c) for r in range(1, self.n_rows + 1) for c in range(1, self.n_cols + 1)]

    def cell_label(self, cell: Cell) -> str:
        return f"{self.components[cell[0] - 1]}-{self.levels[cell[1] - 1]}"

    def cell_of_label(self, label: str) -> Cell:
        for cell in self.cells():
            if self.cell_label(cell) == label:
                return cell
        raise DataError(f"unknown cell label {label!r}")

    def groups(self) -> tuple[str, ...]:
        """Group ids in first-appearance order."""
        out: list[str] = []
        for _, g in self.supplementary:
            if g not in out:
                out.append(g)
        return tuple(out)

    def group_members(self, group: str) -> tuple[str, ...]:
        return tuple(s for s, g in self.supplementary if g == group)

    def group_of(self, skill: str) -> str:
        for s, g in self.supplementary:
            if s == skill:
                return g
        raise DataError(f"unknown supplementary skill {skill!r}")

    def required_groups(self, row: int) -> tuple[str, ...]:
        return tuple(g for g in self.groups() if row in self.group_rows.get(g, ()))

    def task(self, task_id: str) -> TaskSpec:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise DataError(f"unknown task id {task_id!r}")


def consecutive_implications(n_rows: int, n_cols: int) -> tuple[tuple[Cell, Cell], ...]:
    """Every (cell -> left neighbour) and (cell -> upper neighbour) pair.

    On an R x C grid this yields R*(C-1) + (R-1)*C pairs (12 on 3x3); their
    transitive closure is exactly the dominance order.
    """
    pairs: list[tuple[Cell, Cell]] = []
    for r in range(1, n_rows + 1):
        for c in range(1, n_cols + 1):
            if r > 1:
                pairs.append(((r, c), (r - 1, c)))
            if c > 1:
                pairs.append(((r, c), (r, c - 1)))
    return tuple(pairs)


@dataclass(frozen=True)
class UniformParameters:
    """One inhibition for every skill-answer arc plus the shared leak."""

    inhibition: float = 0.2
    leak_inhibition: float = 0.9

    def __post_init__(self):
        _check_lambda(self.inhibition, "uniform inhibition")
        _check_lambda(self.leak_inhibition, "uniform leak inhibition")


@dataclass(frozen=True)
class ModelConfig:
    """Structural switches plus the parameter source.

    ``parameters=None`` reads the per-task inhibition tables; a
    :class:`UniformParameters` instance overrides every table with constants.

    ``supp_direct_leak`` controls whether the direct supplementary observation
    nodes get the leak parent. With the leak, a skill can appear "used" by
    luck; without it, a recorded use pins the skill to present. The published
    posterior tables (used skills exactly 1.00) correspond to no leak there,
    so reproduction configs turn it off.
    """

    constraints_enabled: bool = False
    supplementary_enabled: bool = False
    parameters: UniformParameters | None = None
    priors: float | Mapping[Cell, float] = 0.5
    supp_direct_leak: bool = True


@dataclass(frozen=True)
class NodeIndex:
    """Semantic name -> variable id maps for a compiled network."""

    skills: Mapping[Cell, str]
    supplementary: Mapping[str, str]
    answers: Mapping[tuple[str, Cell], str]
    supp_answers: Mapping[tuple[str, str], str]
    constraints: tuple[str, ...]
    target_groups: Mapping[tuple[str, Cell], str]
    groups: Mapping[tuple[str, Cell, str], str]
    and_nodes: Mapping[tuple[str, Cell], str]
    leak: str = LEAK_ID

    def counts(self) -> dict[str, int]:
        return {
            "skills": len(self.skills),
            "supplementary": len(self.supplementary),
            "leak": 1,
            "constraints": len(self.constraints),
            "target-groups": len(self.target_groups),
            "groups": len(self.groups),
            "and": len(self.and_nodes),
            "answers": len(self.answers),
            "supplementary-answers": len(self.supp_answers),
        }


@dataclass(frozen=True)
class CompiledNetwork:
    network: Network
    index: NodeIndex


def _prior_of(cfg: ModelConfig, cell: Cell) -> float:
    if isinstance(cfg.priors, Mapping):
        try:
            return float(cfg.priors[cell])
        except KeyError:
            raise ParameterError(f"no prior given for cell {cell}") from None
    return float(cfg.priors)


def _target_lambda(cfg: ModelConfig, task: TaskSpec, cell: Cell) -> float:
    if cfg.parameters is not None:
        return cfg.parameters.inhibition
    try:
        return float(task.lambda_targets[cell])
    except KeyError:
        raise ParameterError(
            f"task {task.id}: missing target inhibition for cell {cell}"
        ) from None


def _supp_lambda(cfg: ModelConfig, task: TaskSpec, skill: str, cell: Cell) -> float:
    if cfg.parameters is not None:
        return cfg.parameters.inhibition
    try:
        return float(task.lambda_supp[(skill, cell)])
    except KeyError:
        raise ParameterError(
            f"task {task.id}: missing inhibition for skill {skill} at cell {cell}"
        ) from None


def _leak_lambda(cfg: ModelConfig, task: TaskSpec) -> float:
    return cfg.parameters.leak_inhibition if cfg.parameters is not None else task.lambda_leak


def target_parents(spec: RubricSpec, cell: Cell) -> tuple[str, ...]:
    """Skill ids that can explain the answer at ``cell``: the cell itself plus
    every dominating cell, in row-major order."""
    return tuple(
        skill_id(q) for q in spec.cells() if q == cell or dominates(q, cell)
    )


def direct_observation_cell(spec: RubricSpec, task: TaskSpec, skill: str) -> Cell:
    """Cell whose inhibition quantifies a skill's direct observation node.

    Convention: the first row-major answer cell whose row requires the skill's
    group, i.e. the least-inhibited expression of that skill in the task.
    """
    group = spec.group_of(skill)
    for r in range(1, spec.n_rows + 1):
        if group in spec.required_groups(r):
            return (r, 1)
    raise DataError(f"group {group!r} of skill {skill} is not required by any row")


def compile(spec: RubricSpec, cfg: ModelConfig) -> CompiledNetwork:
    """Build the quantified network for one rubric and one model variant."""
    if cfg.supplementary_enabled and not spec.supplementary:
        raise DataError("supplementary layer requested but the rubric lists no supplementary skills")

    variables: list[Variable] = []
    cpts: list[Cpt] = []
    skills: dict[Cell, str] = {}
    supplementary: dict[str, str] = {}
    answers: dict[tuple[str, Cell], str] = {}
    supp_answers: dict[tuple[str, str], str] = {}
    constraints: list[str] = []
    target_groups: dict[tuple[str, Cell], str] = {}
    groups: dict[tuple[str, Cell, str], str] = {}
    and_nodes: dict[tuple[str, Cell], str] = {}

    for cell in spec.cells():
        vid = skill_id(cell)
        skills[cell] = vid
        variables.append(Variable(vid, spec.cell_label(cell)))
        cpts.append(prior_cpt(vid, _prior_of(cfg, cell)))

    if cfg.supplementary_enabled:
        for s, g in spec.supplementary:
            supplementary[s] = s
            variables.append(Variable(s, f"supplementary {s} (group {g})"))
            cpts.append(prior_cpt(s, 0.5))

    variables.append(Variable(LEAK_ID, "always-true guess parent"))
    cpts.append(prior_cpt(LEAK_ID, 1.0))

    if cfg.constraints_enabled:
        for sup, inf in spec.implications:
            vid = f"D_{skill_id(sup)}_{skill_id(inf)}"
            constraints.append(vid)
            variables.append(Variable(vid, f"{skill_id(sup)} implies {skill_id(inf)}"))
            cpts.append(constraint_cpt(ConstraintSpec(skills[sup], skills[inf]), vid))

    for task in spec.tasks:
        for cell in spec.cells():
            r, c = cell
            y_id = f"Y_{task.id}_{r}{c}"
            answers[(task.id, cell)] = y_id
            parents = target_parents(spec, cell)
            lam = _target_lambda(cfg, task, cell)
            leak_lam = _leak_lambda(cfg, task)
            if cfg.supplementary_enabled:
                gx_id = f"G_{task.id}_{r}{c}_X"
                target_groups[(task.id, cell)] = gx_id
                variables.append(Variable(gx_id))
                cpts.append(
                    noisy_or_cpt(NoisyOrSpec(parents, {p: lam for p in parents}), gx_id)
                )
                gate_ids = [gx_id]
                for g in spec.required_groups(r):
                    g_id = f"G_{task.id}_{r}{c}_{g}"
                    groups[(task.id, cell, g)] = g_id
                    members = tuple(
                        s for s in spec.group_members(g) if s in task.applicable
                    )
                    lam_map = {s: _supp_lambda(cfg, task, s, cell) for s in members}
                    variables.append(Variable(g_id))
                    cpts.append(noisy_or_cpt(NoisyOrSpec(members, lam_map), g_id))
                    gate_ids.append(g_id)
                a_id = f"A_{task.id}_{r}{c}"
                and_nodes[(task.id, cell)] = a_id
                variables.append(Variable(a_id))
                cpts.append(and_cpt(gate_ids, a_id))
                variables.append(Variable(y_id, f"{task.id} {spec.cell_label(cell)}"))
                cpts.append(
                    noisy_or_cpt(
                        NoisyOrSpec((a_id, LEAK_ID), {a_id: 0.0, LEAK_ID: leak_lam}), y_id
                    )
                )
            else:
                inhibitions = {p: lam for p in parents}
                inhibitions[LEAK_ID] = leak_lam
                variables.append(Variable(y_id, f"{task.id} {spec.cell_label(cell)}"))
                cpts.append(noisy_or_cpt(NoisyOrSpec(parents + (LEAK_ID,), inhibitions), y_id))
        if cfg.supplementary_enabled:
            for s, _ in spec.supplementary:
                if s not in task.applicable:
                    continue
                ys_id = f"Y_{task.id}_{s}"
                supp_answers[(task.id, s)] = ys_id
                lam = _supp_lambda(cfg, task, s, direct_observation_cell(spec, task, s))
                variables.append(Variable(ys_id, f"{task.id} used {s}"))
                if cfg.supp_direct_leak:
                    leak_lam = _leak_lambda(cfg, task)
                    gate = NoisyOrSpec((s, LEAK_ID), {s: lam, LEAK_ID: leak_lam})
                else:
                    gate = NoisyOrSpec((s,), {s: lam})
                cpts.append(noisy_or_cpt(gate, ys_id))

    index = NodeIndex(
        skills=skills,
        supplementary=supplementary,
        answers=answers,
        supp_answers=supp_answers,
        constraints=tuple(constraints),
        target_groups=target_groups,
        groups=groups,
        and_nodes=and_nodes,
    )
    return CompiledNetwork(Network(variables, cpts), index)


# ---------------------------------------------------------------------------
# Answer encoders


def encode_success_unconstrained(spec: RubricSpec, cell: Cell) -> dict[Cell, int]:
    """Observed states for a success at ``cell`` in the unconstrained model.

    Every dominated cell (and the cell itself) is observed true, every
    dominating cell false; incomparable cells stay unobserved.
    """
    _check_cell(spec, cell)
    obs: dict[Cell, int] = {}
    for q in spec.cells():
        if q == cell or dominates(cell, q):
            obs[q] = 1
        elif dominates(q, cell):
            obs[q] = 0
    return obs


def encode_success_constrained(spec: RubricSpec, cell: Cell) -> dict[Cell, int]:
    """Single positive observation plus false right/down neighbours."""
    _check_cell(spec, cell)
    r, c = cell
    obs: dict[Cell, int] = {cell: 1}
    if c + 1 <= spec.n_cols:
        obs[(r, c + 1)] = 0
    if r + 1 <= spec.n_rows:
        obs[(r + 1, c)] = 0
    return obs


def encode_failure(spec: RubricSpec, constrained: bool) -> dict[Cell, int]:
    """Failed task: false at the lowest cell (constrained) or everywhere."""
    if constrained:
        return {(1, 1): 0}
    return {q: 0 for q in spec.cells()}


def encode_supplementary(
    used: Iterable[str], task: TaskSpec, observe_unused: bool = True
) -> dict[str, int]:
    """Direct observations: used skills are 1, applicable unused skills 0.

    ``observe_unused=False`` records only the positives, leaving unused
    applicable skills unobserved.
    """
    used = set(used)
    stray = used - task.applicable
    if stray:
        raise DataError(
            f"task {task.id}: skills {sorted(stray)} are not applicable to this task"
        )
    obs = {s: 1 for s in sorted(used)}
    if observe_unused:
        for s in sorted(task.applicable - used):
            obs[s] = 0
    return obs


def _check_cell(spec: RubricSpec, cell: Cell) -> None:
    r, c = cell
    if not (1 <= r <= spec.n_rows and 1 <= c <= spec.n_cols):
        raise DataError(f"cell {cell} outside the {spec.n_rows}x{spec.n_cols} grid")


# ---------------------------------------------------------------------------
# Rubric file format


def load_rubric(text: str) -> RubricSpec:
    """Parse the JSON rubric format (see README for the schema)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"rubric JSON does not parse: {exc}") from exc
    try:
        components = tuple(doc["components"])
        levels = tuple(doc["levels"])
    except KeyError as exc:
        raise DataError(f"rubric missing field {exc}") from exc
    n_rows, n_cols = len(components), len(levels)
    raw_imp = doc.get("implications", "consecutive")
    if raw_imp == "consecutive":
        implications = consecutive_implications(n_rows, n_cols)
    else:
        implications = tuple(
            ((int(sup[0]), int(sup[1])), (int(inf[0]), int(inf[1]))) for sup, inf in raw_imp
        )
    supplementary = tuple(
        (str(entry["id"]), str(entry["group"])) for entry in doc.get("supplementary", [])
    )
    group_rows = {
        str(g): tuple(int(r) for r in rows) for g, rows in doc.get("group_rows", {}).items()
    }
    label_to_cell = {}
    for r, comp in enumerate(components, start=1):
        for c, lev in enumerate(levels, start=1):
            label_to_cell[(comp, lev)] = (r, c)

    def parse_cell_map(nested, what) -> dict[Cell, float]:
        out: dict[Cell, float] = {}
        for comp, by_level in nested.items():
            for lev, lam in by_level.items():
                if (comp, lev) not in label_to_cell:
                    raise DataError(f"{what}: unknown cell {comp}/{lev}")
                out[label_to_cell[(comp, lev)]] = float(lam)
        return out

    tasks = []
    for entry in doc.get("tasks", []):
        tid = str(entry.get("id", f"task{len(tasks) + 1}"))
        lambda_targets = parse_cell_map(entry.get("lambda_targets", {}), f"task {tid} lambda_targets")
        lambda_supp: dict[tuple[str, Cell], float] = {}
        for skill, nested in entry.get("lambda_supp", {}).items():
            for cell, lam in parse_cell_map(nested, f"task {tid} lambda_supp[{skill}]").items():
                lambda_supp[(str(skill), cell)] = lam
        tasks.append(
            TaskSpec(
                id=tid,
                lambda_targets=lambda_targets,
                lambda_supp=lambda_supp,
                applicable=frozenset(str(s) for s in entry.get("applicable", [])),
                lambda_leak=float(entry.get("lambda_leak", 0.9)),
            )
        )
    return RubricSpec(
        components=components,
        levels=levels,
        implications=implications,
        supplementary=supplementary,
        group_rows=group_rows,
        tasks=tuple(tasks),
    )
