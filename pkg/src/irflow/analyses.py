"""Classical data-flow analyses over program graphs.

Each analysis labels graph vertices with a binary value relative to a root
vertex and reports how many synchronous update rounds the iterative solver
needed (a round counts when it changes at least one vertex's value set; the
final unchanged round does not count). Labels cover every vertex; vertices
outside the task's target kind are always 0.

`brute_force_*` are independent re-derivations from the set definitions
(path enumeration / closure recursion) used to cross-check the solvers.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graph import INSTRUCTION, VARIABLE, GraphIndex, ProgramGraph

REACHABILITY = "reachability"
DOMINANCE = "dominance"
DATADEP = "datadep"
LIVENESS = "liveness"
SUBEXPRESSIONS = "subexpressions"
TASKS = (REACHABILITY, DOMINANCE, DATADEP, LIVENESS, SUBEXPRESSIONS)

# Operand order is irrelevant for these opcodes; their expression operands
# compare as sorted lists. Asymmetric comparisons (slt, sgt, ...) stay
# position-ordered.
COMMUTATIVE_OPCODES = frozenset({
    "add", "mul", "and", "or", "xor", "fadd", "fmul", "icmp-eq", "icmp-ne",
})

BRUTE_FORCE_LIMIT = 200


class AnalysisError(Exception):
    pass


class InvalidRoot(AnalysisError):
    pass


class GraphTooLarge(AnalysisError):
    pass


@dataclass
class OracleResult:
    labels: list[int]
    step_count: int
    root: int


def target_kind(task: str) -> str:
    return VARIABLE if task == LIVENESS else INSTRUCTION


def _require_defined_instruction(idx: GraphIndex, root: int, task: str):
    if not (0 <= root < len(idx.kind)) or idx.kind[root] != INSTRUCTION:
        raise InvalidRoot(f"{task} root {root} is not an instruction vertex")
    if not idx.is_defined_instruction(root):
        raise InvalidRoot(f"{task} root {root} is not in a defined function")


def _labels_from(n: int, positives) -> list[int]:
    labels = [0] * n
    for v in positives:
        labels[v] = 1
    return labels


def reachability(graph: ProgramGraph, root: int) -> OracleResult:
    """Forward closure over control successors, root included."""
    idx = graph.index()
    _require_defined_instruction(idx, root, REACHABILITY)
    reached = {root}
    steps = 0
    while True:
        frontier = {s for v in reached for s in idx.succ(v)}
        new = reached | frontier
        if new == reached:
            break
        reached = new
        steps += 1
    return OracleResult(_labels_from(len(idx.kind), reached), steps, root)


def dominance(graph: ProgramGraph, root: int) -> OracleResult:
    """Labels every vertex the root dominates, within the root's function.

    Solved by synchronous iteration of dom(n) = {n} ∪ (∩ dom over control
    predecessors), with the function entry fixed at {entry} and all other
    instructions starting at the full set. An empty predecessor intersection
    is the full set, so instructions unreachable from the entry keep it:
    with no entry-to-m path at all, every instruction dominates m vacuously.
    """
    idx = graph.index()
    _require_defined_instruction(idx, root, DOMINANCE)
    instrs = idx.instructions_of[idx.function[root]]
    entry = idx.entry_of(idx.function[root])
    full = set(instrs)
    dom = {v: {v} if v == entry else set(full) for v in instrs}
    steps = 0
    while True:
        new_dom = {}
        changed = False
        for v in instrs:
            if v == entry:
                new_dom[v] = dom[v]
                continue
            preds = idx.control_pred[v]
            merged = set(full)
            for p in preds:
                merged &= dom[p]
            merged.add(v)
            new_dom[v] = merged
            if merged != dom[v]:
                changed = True
        if not changed:
            break
        dom = new_dom
        steps += 1
    return OracleResult(
        _labels_from(len(idx.kind), [v for v in instrs if root in dom[v]]), steps, root)


def _def_sites(idx: GraphIndex, v: int) -> set[int]:
    sites = set()
    for var in idx.uses_vars(v):
        d = idx.def_of[var]
        if d is not None:
            sites.add(d)
    return sites


def data_deps(graph: ProgramGraph, root: int) -> OracleResult:
    """Instructions that must run to produce the root's operands.

    The closure has no unconditional root term, but the root can re-enter
    through a phi cycle.
    """
    idx = graph.index()
    if not (0 <= root < len(idx.kind)) or idx.kind[root] != INSTRUCTION:
        raise InvalidRoot(f"{DATADEP} root {root} is not an instruction vertex")
    deps: set[int] = set()
    steps = 0
    while True:
        new = _def_sites(idx, root) | {d for p in deps for d in _def_sites(idx, p)}
        new |= deps
        if new == deps:
            break
        deps = new
        steps += 1
    return OracleResult(_labels_from(len(idx.kind), deps), steps, root)


def liveness(graph: ProgramGraph, root: int) -> OracleResult:
    """Variables live out of the root: used on some control path from the
    root before being redefined. Backward fixed point over the function."""
    idx = graph.index()
    _require_defined_instruction(idx, root, LIVENESS)
    instrs = idx.instructions_of[idx.function[root]]
    live_out: dict[int, set[int]] = {v: set() for v in instrs}
    steps = 0
    while True:
        changed = False
        new_live = {}
        for v in instrs:
            out = set()
            for s in idx.succ(v):
                out.update(idx.uses_vars(s))
                defs = idx.result_of[s]
                out.update(x for x in live_out[s] if x != defs)
            new_live[v] = out
            if out != live_out[v]:
                changed = True
        if not changed:
            break
        live_out = new_live
        steps += 1
    return OracleResult(_labels_from(len(idx.kind), live_out[root]), steps, root)


def _expression_key(idx: GraphIndex, v: int):
    opcode = idx.graph.vertices[v].text_key
    if opcode == "call":
        # Calls to different functions are never the same expression; the
        # callee is recoverable from the call edge out of the site.
        targets = sorted(idx.function[t] or "" for t in idx.call_targets[v])
        opcode = "call:" + ",".join(targets)
    operands = [src for _, src in idx.operands[v]]
    if opcode in COMMUTATIVE_OPCODES:
        operands = sorted(operands)
    return (opcode, tuple(operands))


def subexpressions(graph: ProgramGraph, root: int,
                   include_root: bool = True) -> OracleResult:
    """Instructions computing the same expression as the root.

    An expression is the instruction's opcode plus its operand vertices,
    position-ordered, except that commutative opcodes sort their operands.
    Operand identity is vertex identity, so scoping holds by construction.
    Non-iterative: step count is 0.
    """
    idx = graph.index()
    if not (0 <= root < len(idx.kind)) or idx.kind[root] != INSTRUCTION:
        raise InvalidRoot(f"{SUBEXPRESSIONS} root {root} is not an instruction vertex")
    if not idx.forms_expression(root):
        raise InvalidRoot(
            f"{SUBEXPRESSIONS} root {root} ({graph.vertices[root].text_key}) "
            "does not form an expression")
    key = _expression_key(idx, root)
    matches = {v for v in range(len(idx.kind))
               if idx.kind[v] == INSTRUCTION and idx.forms_expression(v)
               and _expression_key(idx, v) == key}
    if not include_root:
        matches.discard(root)
    return OracleResult(_labels_from(len(idx.kind), matches), 0, root)


def available_expressions(graph: ProgramGraph, function: str) -> dict[int, set]:
    """Per-instruction available-expression sets for one function.

    Forward intersection analysis: an expression is available at n if it is
    generated by n or available out of every predecessor and not killed by
    n's definition. Used as a cross-check for the subexpression grouping.
    """
    idx = graph.index()
    instrs = idx.instructions_of[function]
    all_keys = {_expression_key(idx, v) for v in instrs if idx.forms_expression(v)}
    entry = idx.entry_of(function)

    def gen(v):
        return {_expression_key(idx, v)} if idx.forms_expression(v) else set()

    def kill(v):
        defined = idx.result_of[v]
        if defined is None:
            return set()
        return {k for k in all_keys if defined in k[1]}

    avail = {v: gen(v) if v == entry else set(all_keys) for v in instrs}
    while True:
        changed = False
        new_avail = {}
        for v in instrs:
            if v == entry:
                new_avail[v] = avail[v]
                continue
            preds = idx.control_pred[v]
            merged = set(all_keys)
            for p in preds:
                merged &= avail[p]
            merged = gen(v) | (merged - kill(v))
            new_avail[v] = merged
            if merged != avail[v]:
                changed = True
        if not changed:
            return avail
        avail = new_avail


_DISPATCH = {
    REACHABILITY: reachability,
    DOMINANCE: dominance,
    DATADEP: data_deps,
    LIVENESS: liveness,
    SUBEXPRESSIONS: subexpressions,
}


def run_oracle(task: str, graph: ProgramGraph, root: int) -> OracleResult:
    if task not in _DISPATCH:
        raise AnalysisError(f"unknown task {task!r}")
    return _DISPATCH[task](graph, root)


# brute-force re-derivations -------------------------------------------------

def _dfs_control(idx: GraphIndex, start: int, skip: int | None = None) -> set[int]:
    seen = set()
    stack = [start]
    if start == skip:
        return seen
    while stack:
        v = stack.pop()
        if v in seen:
            continue
        seen.add(v)
        for s in idx.succ(v):
            if s != skip and s not in seen:
                stack.append(s)
    return seen


def _brute_reachability(idx: GraphIndex, root: int) -> set[int]:
    return _dfs_control(idx, root)


def _brute_dominance(idx: GraphIndex, root: int) -> set[int]:
    instrs = idx.instructions_of[idx.function[root]]
    entry = idx.entry_of(idx.function[root])
    reachable = _dfs_control(idx, entry)
    positives = set()
    for m in instrs:
        if m not in reachable:
            positives.add(m)  # no entry-to-m path: vacuously dominated
        elif m == root:
            positives.add(m)
        elif m not in _dfs_control(idx, entry, skip=root):
            positives.add(m)
    if root == entry:
        positives.update(reachable)
    return positives & set(instrs)


def _brute_data_deps(idx: GraphIndex, root: int) -> set[int]:
    out: set[int] = set()

    def visit(v):
        for d in _def_sites(idx, v):
            if d not in out:
                out.add(d)
                visit(d)

    visit(root)
    return out


def _brute_liveness(idx: GraphIndex, root: int) -> set[int]:
    instrs = idx.instructions_of[idx.function[root]]
    candidates = set()
    for v in instrs:
        candidates.update(idx.uses_vars(v))
        if idx.result_of[v] is not None:
            candidates.add(idx.result_of[v])
    live = set()
    for var in candidates:
        stack = list(idx.succ(root))
        seen = set()
        while stack:
            s = stack.pop()
            if s in seen:
                continue
            seen.add(s)
            if var in idx.uses_vars(s):
                live.add(var)
                break
            if idx.result_of[s] == var:
                continue  # redefined before use on this path
            stack.extend(idx.succ(s))
    return live


def _brute_subexpressions(idx: GraphIndex, root: int) -> set[int]:
    key = _expression_key(idx, root)
    out = set()
    for v in range(len(idx.kind)):
        if idx.kind[v] != INSTRUCTION or not idx.forms_expression(v):
            continue
        other = _expression_key(idx, v)
        if other[0] == key[0] and list(other[1]) == list(key[1]):
            out.add(v)
    return out


def brute_force_oracle(task: str, graph: ProgramGraph, root: int) -> list[int]:
    """Label vector from exhaustive enumeration; small graphs only."""
    if len(graph.vertices) > BRUTE_FORCE_LIMIT:
        raise GraphTooLarge(f"{len(graph.vertices)} vertices > {BRUTE_FORCE_LIMIT}")
    idx = graph.index()
    # Same root validity rules as the solvers.
    if task == REACHABILITY:
        _require_defined_instruction(idx, root, task)
        positives = _brute_reachability(idx, root)
    elif task == DOMINANCE:
        _require_defined_instruction(idx, root, task)
        positives = _brute_dominance(idx, root)
    elif task == DATADEP:
        if idx.kind[root] != INSTRUCTION:
            raise InvalidRoot(f"{task} root {root} is not an instruction vertex")
        positives = _brute_data_deps(idx, root)
    elif task == LIVENESS:
        _require_defined_instruction(idx, root, task)
        positives = _brute_liveness(idx, root)
    elif task == SUBEXPRESSIONS:
        if idx.kind[root] != INSTRUCTION or not idx.forms_expression(root):
            raise InvalidRoot(f"{task} root {root} does not form an expression")
        positives = _brute_subexpressions(idx, root)
    else:
        raise AnalysisError(f"unknown task {task!r}")
    return _labels_from(len(idx.kind), positives)
