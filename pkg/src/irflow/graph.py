"""Program graph construction from an IRModule.

The graph is a directed multigraph: instructions, variables, and constants
are vertices; control, data, and call relations are typed edges with a
local position attribute. Construction runs in three stages (control,
data, call) over a validated module; each stage only appends edges, so the
union of the stage outputs equals the combined single pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir import IRModule, validate

INSTRUCTION = "instruction"
VARIABLE = "variable"
CONSTANT = "constant"
VERTEX_KINDS = (INSTRUCTION, VARIABLE, CONSTANT)

CONTROL = "control"
DATA = "data"
CALL = "call"
FLOW_TYPES = (CONTROL, DATA, CALL)

# Embedding keys and owner tags for vertices that stand in for code outside
# the module. Owner tags start with "<" so they never collide with function
# names, which always start with "@".
UNDEFINED_FUNCTION_KEY = "<undefined-function>"
EXTERNAL_KEY = "<external>"
EXTERNAL_FUNCTION_ID = "<external>"


def dummy_function_id(callee: str) -> str:
    return f"<dummy:{callee}>"


def is_defined_function_id(function: str | None) -> bool:
    return function is not None and not function.startswith("<")


class InvalidModule(Exception):
    def __init__(self, diagnostics):
        self.diagnostics = diagnostics
        super().__init__(f"{len(diagnostics)} validation diagnostics")


@dataclass(frozen=True)
class GraphVertex:
    id: int
    kind: str
    text_key: str
    function: str | None


@dataclass(frozen=True)
class GraphEdge:
    src: int
    dst: int
    flow: str
    position: int


@dataclass
class ProgramGraph:
    vertices: list[GraphVertex] = field(default_factory=list)
    edges: list[GraphEdge] = field(default_factory=list)
    source_id: str = "<graph>"
    _index: "GraphIndex | None" = field(default=None, compare=False, repr=False)

    def index(self) -> "GraphIndex":
        if self._index is None:
            self._index = GraphIndex(self)
        return self._index


class GraphIndex:
    """Adjacency and use/def lookup structures derived from a ProgramGraph."""

    def __init__(self, graph: ProgramGraph):
        n = len(graph.vertices)
        self.graph = graph
        self.kind = [v.kind for v in graph.vertices]
        self.function = [v.function for v in graph.vertices]
        self.control_succ: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        self.control_pred: list[list[int]] = [[] for _ in range(n)]
        self.operands: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        self.result_of: list[int | None] = [None] * n
        self.def_of: list[int | None] = [None] * n
        self.var_uses: list[list[int]] = [[] for _ in range(n)]
        self.call_targets: list[list[int]] = [[] for _ in range(n)]
        for e in graph.edges:
            if e.flow == CONTROL:
                self.control_succ[e.src].append((e.position, e.dst))
                self.control_pred[e.dst].append(e.src)
            elif e.flow == DATA:
                if self.kind[e.dst] == INSTRUCTION:
                    self.operands[e.dst].append((e.position, e.src))
                    if self.kind[e.src] == VARIABLE:
                        self.var_uses[e.src].append(e.dst)
                else:
                    self.result_of[e.src] = e.dst
                    self.def_of[e.dst] = e.src
            else:
                self.call_targets[e.src].append(e.dst)
        for succ in self.control_succ:
            succ.sort()
        for ops in self.operands:
            ops.sort()
        self.instructions_of: dict[str, list[int]] = {}
        for v in graph.vertices:
            if v.kind == INSTRUCTION and v.function is not None:
                self.instructions_of.setdefault(v.function, []).append(v.id)
        self.defined_functions = sorted(
            f for f in self.instructions_of if is_defined_function_id(f))

    def succ(self, v: int) -> list[int]:
        return [dst for _, dst in self.control_succ[v]]

    def entry_of(self, function: str) -> int:
        # Instruction vertices are created in program order, so the entry
        # instruction of a function is its lowest-id instruction vertex.
        return min(self.instructions_of[function])

    def is_defined_instruction(self, v: int) -> bool:
        return self.kind[v] == INSTRUCTION and is_defined_function_id(self.function[v])

    def uses_vars(self, v: int) -> list[int]:
        return [s for _, s in self.operands[v] if self.kind[s] == VARIABLE]

    def forms_expression(self, v: int) -> bool:
        return (self.kind[v] == INSTRUCTION and self.result_of[v] is not None
                and len(self.operands[v]) > 0)


class _Builder:
    def __init__(self, module: IRModule, source_id: str):
        self.module = module
        self.graph = ProgramGraph(source_id=source_id)
        self.instr_vertex: dict[int, int] = {}
        self.value_vertex: dict[str, int] = {}

    def vertex(self, kind: str, text_key: str, function: str | None) -> int:
        vid = len(self.graph.vertices)
        self.graph.vertices.append(GraphVertex(vid, kind, text_key, function))
        return vid

    def edge(self, src: int, dst: int, flow: str, position: int):
        self.graph.edges.append(GraphEdge(src, dst, flow, position))

    def data_vertex(self, value_id: str) -> int:
        if value_id not in self.value_vertex:
            value = self.module.values[value_id]
            self.value_vertex[value_id] = self.vertex(
                VARIABLE if value.kind == "variable" else CONSTANT,
                value.dtype, value.scope)
        return self.value_vertex[value_id]

    def control_stage(self):
        for func in self.module.defined_functions():
            for block in func.blocks:
                for instr in block.instructions:
                    self.instr_vertex[instr.id] = self.vertex(
                        INSTRUCTION, instr.opcode, func.name)
        for func in self.module.defined_functions():
            first_instr = {b.id: self.instr_vertex[b.instructions[0].id] for b in func.blocks}
            for block in func.blocks:
                instrs = block.instructions
                for a, b in zip(instrs, instrs[1:]):
                    self.edge(self.instr_vertex[a.id], self.instr_vertex[b.id], CONTROL, 0)
                terminator = instrs[-1]
                for pos, succ in enumerate(terminator.successors):
                    self.edge(self.instr_vertex[terminator.id], first_instr[succ], CONTROL, pos)

    def data_stage(self):
        for func in self.module.defined_functions():
            for instr in func.instructions():
                iv = self.instr_vertex[instr.id]
                for pos, operand in enumerate(instr.operands):
                    self.edge(self.data_vertex(operand), iv, DATA, pos)
                if instr.result is not None:
                    self.edge(iv, self.data_vertex(instr.result), DATA, 0)

    def call_stage(self):
        dummies: dict[str, int] = {}
        returns: dict[str, list[int]] = {}
        entries: dict[str, int] = {}
        for func in self.module.defined_functions():
            entries[func.name] = self.instr_vertex[func.blocks[0].instructions[0].id]
            returns[func.name] = [self.instr_vertex[i.id] for i in func.instructions()
                                  if i.opcode == "ret"]
        for func in self.module.defined_functions():
            for instr in func.instructions():
                if instr.opcode != "call":
                    continue
                site = self.instr_vertex[instr.id]
                callee = instr.callee
                if callee in entries:
                    self.edge(site, entries[callee], CALL, 0)
                    for ret in returns[callee]:
                        self.edge(ret, site, CALL, 0)
                else:
                    if callee not in dummies:
                        dummies[callee] = self.vertex(
                            INSTRUCTION, UNDEFINED_FUNCTION_KEY, dummy_function_id(callee))
                    self.edge(site, dummies[callee], CALL, 0)
                    self.edge(dummies[callee], site, CALL, 0)
        visible = [f for f in self.module.defined_functions() if f.externally_visible]
        if visible:
            ecs = self.vertex(INSTRUCTION, EXTERNAL_KEY, EXTERNAL_FUNCTION_ID)
            for func in visible:
                self.edge(ecs, entries[func.name], CALL, 0)
                for ret in returns[func.name]:
                    self.edge(ret, ecs, CALL, 0)


def build_graph(module: IRModule, source_id: str | None = None,
                stages: str = "cdk") -> ProgramGraph:
    """Build the program graph; `stages` selects c(ontrol)/d(ata)/k (call)."""
    diags = validate(module)
    if diags:
        raise InvalidModule(diags)
    builder = _Builder(module, source_id or module.source_id)
    builder.control_stage()
    if "d" in stages:
        builder.data_stage()
    if "k" in stages:
        builder.call_stage()
    graph = builder.graph
    for e in graph.edges:
        assert not (e.flow == CONTROL and e.src == e.dst), "control self-loop"
    return graph


def graph_stats(graph: ProgramGraph) -> dict:
    kind_counts = {k: 0 for k in VERTEX_KINDS}
    for v in graph.vertices:
        kind_counts[v.kind] += 1
    flow_counts = {f: 0 for f in FLOW_TYPES}
    for e in graph.edges:
        flow_counts[e.flow] += 1
    return {
        "vertex_count": len(graph.vertices),
        "edge_count": len(graph.edges),
        "max_position": max((e.position for e in graph.edges), default=0),
        "kind_counts": kind_counts,
        "flow_counts": flow_counts,
    }


_DOT_SHAPES = {INSTRUCTION: "box", VARIABLE: "ellipse", CONSTANT: "diamond"}


def to_dot(graph: ProgramGraph, name: str = "program") -> str:
    """DOT rendering: boxes for instructions, ellipses for variables,
    diamonds for constants; edge labels carry flow type and position."""
    def esc(text):
        return text.replace("\\", "\\\\").replace('"', '\\"')

    lines = [f'digraph "{esc(name)}" {{']
    for v in graph.vertices:
        lines.append(f'  v{v.id} [label="{esc(v.text_key)}" shape={_DOT_SHAPES[v.kind]}];')
    for e in graph.edges:
        lines.append(f'  v{e.src} -> v{e.dst} [label="{e.flow} {e.position}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def check_graph_invariants(graph: ProgramGraph) -> list[str]:
    """Structural edge/vertex invariants; returns human-readable violations."""
    problems = []
    kind = [v.kind for v in graph.vertices]
    function = [v.function for v in graph.vertices]
    for v in graph.vertices:
        if not v.text_key:
            problems.append(f"vertex {v.id} has an empty text key")
        if v.kind == INSTRUCTION and v.function is None:
            problems.append(f"instruction vertex {v.id} has no owning function")
    data_touch = set()
    out_control: dict[int, list[int]] = {}
    in_positions: dict[int, list[int]] = {}
    for e in graph.edges:
        if e.flow == CONTROL:
            if kind[e.src] != INSTRUCTION or kind[e.dst] != INSTRUCTION:
                problems.append(f"control edge {e.src}->{e.dst} joins non-instructions")
            elif function[e.src] != function[e.dst]:
                problems.append(f"control edge {e.src}->{e.dst} crosses functions")
            if e.src == e.dst:
                problems.append(f"control self-loop at {e.src}")
            out_control.setdefault(e.src, []).append(e.position)
        elif e.flow == DATA:
            ok_use = kind[e.src] in (VARIABLE, CONSTANT) and kind[e.dst] == INSTRUCTION
            ok_def = kind[e.src] == INSTRUCTION and kind[e.dst] == VARIABLE
            if not (ok_use or ok_def):
                problems.append(f"data edge {e.src}->{e.dst} has invalid endpoint kinds")
            if ok_def and e.position != 0:
                problems.append(f"definition edge {e.src}->{e.dst} has nonzero position")
            if ok_use:
                in_positions.setdefault(e.dst, []).append(e.position)
            for end in (e.src, e.dst):
                if kind[end] != INSTRUCTION:
                    data_touch.add(end)
        else:
            if kind[e.src] != INSTRUCTION or kind[e.dst] != INSTRUCTION:
                problems.append(f"call edge {e.src}->{e.dst} joins non-instructions")
            if e.position != 0:
                problems.append(f"call edge {e.src}->{e.dst} has nonzero position")
    for src, positions in out_control.items():
        if sorted(positions) != list(range(len(positions))):
            problems.append(f"control positions out of {src} are not 0..k-1: {sorted(positions)}")
    for dst, positions in in_positions.items():
        if sorted(positions) != list(range(len(positions))):
            problems.append(f"operand positions into {dst} are not 0..k-1: {sorted(positions)}")
    for v in graph.vertices:
        if v.kind == VARIABLE and v.id not in data_touch:
            problems.append(f"variable vertex {v.id} has no incident data edge")
    # Control edges cannot span functions, so defined functions with bodies
    # appear as exactly that many weakly connected control components.
    idx = graph.index()
    defined = [v.id for v in graph.vertices
               if v.kind == INSTRUCTION and is_defined_function_id(v.function)]
    parent = {v: v for v in defined}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in graph.edges:
        if e.flow == CONTROL and e.src in parent and e.dst in parent:
            parent[find(e.src)] = find(e.dst)
    components = len({find(v) for v in defined})
    if components != len(idx.defined_functions):
        problems.append(
            f"{components} control components for {len(idx.defined_functions)} defined functions")
    return problems
