"""Mini SSA intermediate representation: parser, validator, printer.

The accepted syntax is a strict subset of textual LLVM IR. Anything the
grammar does not know is a hard parse error; nothing is skipped silently.

Top level        ::= global* (define | declare)*   (any interleaving)
global           ::= GLOBAL "=" ("global" | "constant") type literal
declare          ::= "declare" type GLOBAL "(" [type ("," type)*] ")"
define           ::= "define" [linkage] type GLOBAL "(" params ")" "{" block+ "}"
linkage          ::= "internal" | "private"
block            ::= [LABEL ":"] instruction+      (first label defaults to "entry")
instruction      ::=
    LOCAL "=" binop type operand "," operand
  | LOCAL "=" ("icmp" | "fcmp") predicate type operand "," operand
  | LOCAL "=" "phi" type incoming ("," incoming)+
  | LOCAL "=" "load" type "," type operand
  | LOCAL "=" "alloca" type
  | LOCAL "=" "getelementptr" type "," type operand ("," type operand)*
  | [LOCAL "="] "call" type GLOBAL "(" [type operand ("," type operand)*] ")"
  | "store" type operand "," type operand
  | "br" "label" LOCAL
  | "br" type operand "," "label" LOCAL "," "label" LOCAL
  | "switch" type operand "," "label" LOCAL "[" (type INT "," "label" LOCAL)* "]"
  | "ret" "void" | "ret" type operand
incoming         ::= "[" operand "," LOCAL "]"
operand          ::= LOCAL | GLOBAL | INT | FLOAT
type             ::= ("i1"|"i8"|"i16"|"i32"|"i64"|"float"|"double"|"void") "*"*

Comments run from ";" to end of line. Values are in SSA form: every local
name is defined exactly once (as a parameter or an instruction result).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

BINARY_OPS = frozenset({
    "add", "sub", "mul", "sdiv", "udiv", "srem", "and", "or", "xor",
    "shl", "lshr", "ashr", "fadd", "fsub", "fmul", "fdiv",
})
ICMP_PREDICATES = frozenset({"eq", "ne", "ugt", "uge", "ult", "ule", "sgt", "sge", "slt", "sle"})
FCMP_PREDICATES = frozenset({
    "oeq", "ogt", "oge", "olt", "ole", "one", "ord",
    "ueq", "ugt", "uge", "ult", "ule", "une", "uno",
})
TERMINATORS = frozenset({"br", "switch", "ret"})
BASE_TYPES = frozenset({"i1", "i8", "i16", "i32", "i64", "float", "double", "void"})


def canonical_type(text: str) -> str:
    """Canonical form of a type string; idempotent."""
    return "".join(text.split())


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    message: str
    line: int = 0
    col: int = 0

    def render(self, filename: str = "<ir>") -> str:
        return f"{filename}:{self.line}:{self.col}: {self.kind}: {self.message}"


class ParseError(Exception):
    """Raised by parse_module; carries the diagnostics that stopped it."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(d.render() for d in diagnostics))


@dataclass
class Value:
    """A variable or constant. Variables are SSA: one definition site."""

    id: str
    name: str           # source spelling: "%x", "@g", or the literal text
    kind: str           # "variable" | "constant"
    dtype: str
    literal: int | float | None = None
    scope: str | None = None        # owning function name, None = global
    def_instr: int | None = None    # defining instruction id (variables only)


@dataclass
class Instruction:
    id: int
    opcode: str                     # cmp predicates folded in: "icmp-slt"
    operands: list[str] = field(default_factory=list)   # Value ids
    result: str | None = None
    block: str = ""
    successors: list[str] = field(default_factory=list)  # block ids, terminators only
    callee: str | None = None
    phi_labels: list[str] | None = None  # incoming block ids, phi only (syntax carrier)
    type_text: str | None = None         # syntax carrier (call return type, gep element type)
    line: int = field(default=0, compare=False)


@dataclass
class Block:
    id: str         # "<function>:<label>"
    label: str
    instructions: list[Instruction] = field(default_factory=list)


@dataclass
class Function:
    name: str
    params: list[str] = field(default_factory=list)      # Value ids (defined functions)
    param_types: list[str] = field(default_factory=list)
    return_type: str = "void"
    blocks: list[Block] = field(default_factory=list)
    external: bool = False
    externally_visible: bool = True
    line: int = field(default=0, compare=False)

    def instructions(self):
        for block in self.blocks:
            yield from block.instructions


@dataclass
class IRModule:
    functions: list[Function] = field(default_factory=list)
    globals: list[Value] = field(default_factory=list)
    source_id: str = "<string>"
    values: dict[str, Value] = field(default_factory=dict)

    def function(self, name: str) -> Function | None:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    def defined_functions(self) -> list[Function]:
        return [f for f in self.functions if not f.external]


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r]+)"
    r"|(?P<comment>;[^\n]*)"
    r"|(?P<nl>\n)"
    r"|(?P<local>%[A-Za-z0-9._\-]+)"
    r"|(?P<glob>@[A-Za-z0-9._\-]+)"
    r"|(?P<float>-?\d+\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<int>-?\d+)"
    r"|(?P<word>[A-Za-z_][A-Za-z0-9._\-]*)"
    r"|(?P<punct>[=(){}\[\],:*])"
)


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError([Diagnostic("syntax", f"unexpected character {text[pos]!r}", line, col)])
        kind = m.lastgroup
        tok = m.group()
        if kind == "nl":
            line += 1
            col = 1
        else:
            if kind not in ("ws", "comment"):
                tokens.append(_Token(kind, tok, line, col))
            col += len(tok)
        pos = m.end()
    return tokens


@dataclass(frozen=True)
class _RawRef:
    kind: str   # "local" | "global" | "const"
    text: str
    dtype: str
    line: int
    col: int


class _Parser:
    def __init__(self, tokens: list[_Token], source_id: str):
        self.tokens = tokens
        self.pos = 0
        self.module = IRModule(source_id=source_id)
        self.next_instr_id = 0
        # instruction id -> (result name, result dtype) / raw operand refs
        self.raw_results: dict[int, tuple[str, str, int]] = {}
        self.raw_operands: dict[int, list[_RawRef]] = {}

    # token helpers ------------------------------------------------------

    def _peek(self, ahead: int = 0) -> _Token | None:
        i = self.pos + ahead
        return self.tokens[i] if i < len(self.tokens) else None

    def _next(self) -> _Token:
        tok = self._peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else _Token("eof", "", 1, 1)
            self._fail("syntax", "unexpected end of input", last)
        self.pos += 1
        return tok

    def _expect(self, kind: str, text: str | None = None) -> _Token:
        tok = self._next()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind
            self._fail("syntax", f"expected {want!r}, found {tok.text!r}", tok)
        return tok

    def _fail(self, kind: str, message: str, tok: _Token):
        raise ParseError([Diagnostic(kind, message, tok.line, tok.col)])

    # grammar ------------------------------------------------------------

    def parse(self) -> IRModule:
        while self._peek() is not None:
            tok = self._peek()
            if tok.kind == "word" and tok.text == "define":
                self._parse_define()
            elif tok.kind == "word" and tok.text == "declare":
                self._parse_declare()
            elif tok.kind == "glob":
                self._parse_global()
            else:
                self._fail("syntax", f"expected 'define', 'declare' or a global, found {tok.text!r}", tok)
        self._resolve()
        return self.module

    def _parse_type(self) -> str:
        tok = self._expect("word")
        if tok.text not in BASE_TYPES:
            self._fail("syntax", f"unknown type {tok.text!r}", tok)
        text = tok.text
        while self._peek() is not None and self._peek().kind == "punct" and self._peek().text == "*":
            self._next()
            text += "*"
        return canonical_type(text)

    def _parse_literal(self, dtype: str) -> tuple[int | float, str]:
        tok = self._next()
        if tok.kind == "int":
            value = int(tok.text)
        elif tok.kind == "float":
            value = float(tok.text)
        else:
            self._fail("syntax", f"expected literal, found {tok.text!r}", tok)
        return value, repr(value) if isinstance(value, float) else str(value)

    def _parse_global(self):
        name_tok = self._expect("glob")
        self._expect("punct", "=")
        kw = self._expect("word")
        if kw.text not in ("global", "constant"):
            self._fail("syntax", f"expected 'global' or 'constant', found {kw.text!r}", kw)
        dtype = self._parse_type()
        value, text = self._parse_literal(dtype)
        if name_tok.text in self.module.values:
            self._fail("ssa-violation", f"value {name_tok.text!r} redefined", name_tok)
        # Globals live in memory: the value usable as an operand is the address.
        val = Value(id=name_tok.text, name=name_tok.text, kind="constant",
                    dtype=dtype + "*", literal=value, scope=None)
        self.module.values[val.id] = val
        self.module.globals.append(val)

    def _parse_declare(self):
        start = self._expect("word", "declare")
        ret = self._parse_type()
        name = self._expect("glob").text
        self._expect("punct", "(")
        param_types = []
        while not (self._peek() and self._peek().kind == "punct" and self._peek().text == ")"):
            if param_types:
                self._expect("punct", ",")
            param_types.append(self._parse_type())
            if self._peek() and self._peek().kind == "local":
                self._next()  # tolerate a parameter name in a declaration
        self._expect("punct", ")")
        self.module.functions.append(Function(
            name=name, param_types=param_types, return_type=ret,
            external=True, externally_visible=True, line=start.line))

    def _parse_define(self):
        start = self._expect("word", "define")
        visible = True
        tok = self._peek()
        if tok is not None and tok.kind == "word" and tok.text in ("internal", "private"):
            self._next()
            visible = False
        ret = self._parse_type()
        name = self._expect("glob").text
        func = Function(name=name, return_type=ret, externally_visible=visible, line=start.line)
        self._expect("punct", "(")
        raw_params: list[tuple[str, str, _Token]] = []
        while not (self._peek() and self._peek().kind == "punct" and self._peek().text == ")"):
            if raw_params:
                self._expect("punct", ",")
            ptype = self._parse_type()
            ptok = self._expect("local")
            raw_params.append((ptok.text, ptype, ptok))
        self._expect("punct", ")")
        self._expect("punct", "{")

        for pname, ptype, ptok in raw_params:
            vid = f"{name}:{pname}"
            if vid in self.module.values:
                self._fail("ssa-violation", f"value {pname!r} redefined", ptok)
            self.module.values[vid] = Value(id=vid, name=pname, kind="variable",
                                            dtype=ptype, scope=name)
            func.params.append(vid)
            func.param_types.append(ptype)

        while True:
            tok = self._peek()
            if tok is None:
                self._fail("syntax", "missing '}'", self.tokens[-1])
            if tok.kind == "punct" and tok.text == "}":
                self._next()
                break
            self._parse_block(func)

        self.module.functions.append(func)

    def _parse_block(self, func: Function):
        tok = self._peek()
        nxt = self._peek(1)
        if tok.kind in ("word", "int") and nxt is not None and nxt.kind == "punct" and nxt.text == ":":
            label = self._next().text
            self._expect("punct", ":")
        elif not func.blocks:
            label = "entry"
        else:
            self._fail("syntax", f"expected block label, found {tok.text!r}", tok)
        block = Block(id=f"{func.name}:{label}", label=label)
        func.blocks.append(block)
        while True:
            tok = self._peek()
            if tok is None:
                self._fail("syntax", "missing '}'", self.tokens[-1])
            if tok.kind == "punct" and tok.text == "}":
                return
            nxt = self._peek(1)
            if tok.kind in ("word", "int") and nxt is not None and nxt.kind == "punct" and nxt.text == ":":
                return  # next block begins
            self._parse_instruction(func, block)

    def _new_instruction(self, opcode: str, block: Block, line: int) -> Instruction:
        instr = Instruction(id=self.next_instr_id, opcode=opcode, block=block.id, line=line)
        self.next_instr_id += 1
        block.instructions.append(instr)
        self.raw_operands[instr.id] = []
        return instr

    def _operand(self, instr: Instruction, dtype: str):
        tok = self._next()
        if tok.kind == "local":
            ref = _RawRef("local", tok.text, dtype, tok.line, tok.col)
        elif tok.kind == "glob":
            ref = _RawRef("global", tok.text, dtype, tok.line, tok.col)
        elif tok.kind == "int":
            ref = _RawRef("const", str(int(tok.text)), dtype, tok.line, tok.col)
        elif tok.kind == "float":
            ref = _RawRef("const", repr(float(tok.text)), dtype, tok.line, tok.col)
        else:
            self._fail("syntax", f"expected operand, found {tok.text!r}", tok)
        self.raw_operands[instr.id].append(ref)

    def _label_ref(self, func: Function) -> str:
        tok = self._expect("local")
        return f"{func.name}:{tok.text[1:]}"

    def _parse_instruction(self, func: Function, block: Block):
        tok = self._next()
        result_name = None
        if tok.kind == "local":
            result_name = tok.text
            self._expect("punct", "=")
            tok = self._next()
        if tok.kind != "word":
            self._fail("syntax", f"expected opcode, found {tok.text!r}", tok)
        opcode = tok.text
        line = tok.line

        if opcode in BINARY_OPS:
            instr = self._new_instruction(opcode, block, line)
            dtype = self._parse_type()
            self._operand(instr, dtype)
            self._expect("punct", ",")
            self._operand(instr, dtype)
            self._set_result(instr, result_name, dtype, tok)
        elif opcode in ("icmp", "fcmp"):
            pred = self._expect("word")
            preds = ICMP_PREDICATES if opcode == "icmp" else FCMP_PREDICATES
            if pred.text not in preds:
                self._fail("unknown-opcode", f"unknown {opcode} predicate {pred.text!r}", pred)
            instr = self._new_instruction(f"{opcode}-{pred.text}", block, line)
            dtype = self._parse_type()
            self._operand(instr, dtype)
            self._expect("punct", ",")
            self._operand(instr, dtype)
            self._set_result(instr, result_name, "i1", tok)
        elif opcode == "phi":
            instr = self._new_instruction(opcode, block, line)
            dtype = self._parse_type()
            instr.phi_labels = []
            while True:
                self._expect("punct", "[")
                self._operand(instr, dtype)
                self._expect("punct", ",")
                instr.phi_labels.append(self._label_ref(func))
                self._expect("punct", "]")
                if self._peek() and self._peek().kind == "punct" and self._peek().text == ",":
                    self._next()
                else:
                    break
            self._set_result(instr, result_name, dtype, tok)
        elif opcode == "load":
            instr = self._new_instruction(opcode, block, line)
            dtype = self._parse_type()
            self._expect("punct", ",")
            ptr_type = self._parse_type()
            self._operand(instr, ptr_type)
            self._set_result(instr, result_name, dtype, tok)
        elif opcode == "store":
            if result_name is not None:
                self._fail("syntax", "store produces no result", tok)
            instr = self._new_instruction(opcode, block, line)
            dtype = self._parse_type()
            self._operand(instr, dtype)
            self._expect("punct", ",")
            ptr_type = self._parse_type()
            self._operand(instr, ptr_type)
        elif opcode == "alloca":
            instr = self._new_instruction(opcode, block, line)
            dtype = self._parse_type()
            self._set_result(instr, result_name, dtype + "*", tok)
        elif opcode == "getelementptr":
            instr = self._new_instruction(opcode, block, line)
            instr.type_text = self._parse_type()
            self._expect("punct", ",")
            base_type = self._parse_type()
            self._operand(instr, base_type)
            while self._peek() and self._peek().kind == "punct" and self._peek().text == ",":
                self._next()
                idx_type = self._parse_type()
                self._operand(instr, idx_type)
            # Result approximated by the base pointer type (no structured type lattice).
            self._set_result(instr, result_name, base_type, tok)
        elif opcode == "call":
            instr = self._new_instruction(opcode, block, line)
            ret_type = self._parse_type()
            instr.type_text = ret_type
            instr.callee = self._expect("glob").text
            self._expect("punct", "(")
            first = True
            while not (self._peek() and self._peek().kind == "punct" and self._peek().text == ")"):
                if not first:
                    self._expect("punct", ",")
                first = False
                arg_type = self._parse_type()
                self._operand(instr, arg_type)
            self._expect("punct", ")")
            if ret_type == "void":
                if result_name is not None:
                    self._fail("syntax", "void call produces no result", tok)
            else:
                self._set_result(instr, result_name, ret_type, tok)
        elif opcode == "br":
            if result_name is not None:
                self._fail("syntax", "br produces no result", tok)
            instr = self._new_instruction(opcode, block, line)
            if self._peek() and self._peek().kind == "word" and self._peek().text == "label":
                self._next()
                instr.successors.append(self._label_ref(func))
            else:
                dtype = self._parse_type()
                self._operand(instr, dtype)
                self._expect("punct", ",")
                self._expect("word", "label")
                instr.successors.append(self._label_ref(func))
                self._expect("punct", ",")
                self._expect("word", "label")
                instr.successors.append(self._label_ref(func))
        elif opcode == "switch":
            if result_name is not None:
                self._fail("syntax", "switch produces no result", tok)
            instr = self._new_instruction(opcode, block, line)
            dtype = self._parse_type()
            self._operand(instr, dtype)
            self._expect("punct", ",")
            self._expect("word", "label")
            instr.successors.append(self._label_ref(func))
            self._expect("punct", "[")
            while not (self._peek() and self._peek().kind == "punct" and self._peek().text == "]"):
                case_type = self._parse_type()
                self._operand(instr, case_type)
                self._expect("punct", ",")
                self._expect("word", "label")
                instr.successors.append(self._label_ref(func))
            self._expect("punct", "]")
        elif opcode == "ret":
            if result_name is not None:
                self._fail("syntax", "ret produces no result", tok)
            instr = self._new_instruction(opcode, block, line)
            nxt = self._peek()
            if nxt is not None and nxt.kind == "word" and nxt.text == "void":
                self._next()
                instr.type_text = "void"
            else:
                dtype = self._parse_type()
                self._operand(instr, dtype)
        else:
            self._fail("unknown-opcode", f"unknown opcode {opcode!r}", tok)

        if result_name is None and opcode not in TERMINATORS and opcode not in ("store", "call"):
            self._fail("syntax", f"{opcode} requires a result name", tok)

    def _set_result(self, instr: Instruction, result_name: str | None, dtype: str, tok: _Token):
        if result_name is None:
            self._fail("syntax", f"{instr.opcode} requires a result name", tok)
        self.raw_results[instr.id] = (result_name, dtype, tok.line)

    # value resolution ---------------------------------------------------

    def _resolve(self):
        # Register results first (phi operands may reference later definitions),
        # then resolve operand references in lexical order.
        for func in self.module.functions:
            if func.external:
                continue
            defs = {self.module.values[vid].name: vid for vid in func.params}
            for instr in func.instructions():
                raw = self.raw_results.get(instr.id)
                if raw is None:
                    continue
                rname, rtype, rline = raw
                if rname in defs:
                    raise ParseError([Diagnostic(
                        "ssa-violation", f"value {rname!r} redefined", rline)])
                vid = f"{func.name}:{rname}"
                self.module.values[vid] = Value(
                    id=vid, name=rname, kind="variable", dtype=rtype,
                    scope=func.name, def_instr=instr.id)
                defs[rname] = vid
                instr.result = vid
            for instr in func.instructions():
                for ref in self.raw_operands[instr.id]:
                    instr.operands.append(self._resolve_ref(ref, defs))

    def _resolve_ref(self, ref: _RawRef, defs: dict[str, str]) -> str:
        if ref.kind == "local":
            vid = defs.get(ref.text)
            if vid is None:
                raise ParseError([Diagnostic(
                    "dangling-reference", f"use of undefined value {ref.text!r}",
                    ref.line, ref.col)])
            return vid
        if ref.kind == "global":
            if ref.text not in self.module.values:
                raise ParseError([Diagnostic(
                    "dangling-reference", f"use of undefined global {ref.text!r}",
                    ref.line, ref.col)])
            return ref.text
        # Constants are interned per (literal, type) module-wide.
        vid = f"{ref.text}:{ref.dtype}"
        if vid not in self.module.values:
            literal = float(ref.text) if ("." in ref.text or "e" in ref.text) else int(ref.text)
            self.module.values[vid] = Value(id=vid, name=ref.text, kind="constant",
                                            dtype=ref.dtype, literal=literal)
        return vid


def parse_module(text: str, source_id: str = "<string>") -> IRModule:
    """Parse IR text into an IRModule; raises ParseError on the first problem."""
    return _Parser(_tokenize(text), source_id).parse()


# validation ---------------------------------------------------------------

_FIXED_ARITY = {"load": 1, "store": 2, "alloca": 0}


def validate(module: IRModule) -> list[Diagnostic]:
    """Structural invariant check; an empty list means the module is well formed."""
    diags: list[Diagnostic] = []
    seen_names: set[str] = set()
    function_names = {f.name for f in module.functions}
    for func in module.functions:
        if func.name in seen_names:
            diags.append(Diagnostic("duplicate-function",
                                    f"function {func.name!r} defined more than once", func.line))
        seen_names.add(func.name)
        if func.external:
            continue
        if not func.blocks:
            diags.append(Diagnostic("empty-function", f"{func.name} has no blocks", func.line))
            continue
        block_ids = set()
        for block in func.blocks:
            if block.id in block_ids:
                diags.append(Diagnostic("duplicate-label",
                                        f"label {block.label!r} defined twice in {func.name}",
                                        block.instructions[0].line if block.instructions else func.line))
            block_ids.add(block.id)
        entry_id = func.blocks[0].id
        has_ret = False
        for block in func.blocks:
            if not block.instructions:
                diags.append(Diagnostic("empty-block", f"block {block.id} is empty", func.line))
                continue
            for i, instr in enumerate(block.instructions):
                terminator = instr.opcode in TERMINATORS
                last = i == len(block.instructions) - 1
                if terminator and not last:
                    diags.append(Diagnostic("terminator-position",
                                            f"{instr.opcode} is not the last instruction of {block.id}",
                                            instr.line))
                if last and not terminator:
                    diags.append(Diagnostic("missing-terminator",
                                            f"block {block.id} does not end in a terminator",
                                            instr.line))
                if instr.opcode == "ret":
                    has_ret = True
                diags.extend(_check_instruction(module, func, block, instr, block_ids, function_names))
            first = block.instructions[0]
            if len(block.instructions) == 1 and block.id in first.successors:
                diags.append(Diagnostic("self-loop-block",
                                        f"single-instruction block {block.id} branches to itself",
                                        first.line))
        if not has_ret:
            diags.append(Diagnostic("no-return", f"{func.name} has no ret instruction", func.line))
        for block in func.blocks:
            for instr in block.instructions:
                if entry_id in instr.successors:
                    diags.append(Diagnostic("entry-predecessor",
                                            f"entry block of {func.name} has a predecessor",
                                            instr.line))
    # SSA: every variable has exactly one definition site.
    def_counts: dict[str, int] = {}
    for func in module.defined_functions():
        for vid in func.params:
            def_counts[vid] = def_counts.get(vid, 0) + 1
        for instr in func.instructions():
            if instr.result is not None:
                def_counts[instr.result] = def_counts.get(instr.result, 0) + 1
    for vid, count in def_counts.items():
        if count > 1:
            diags.append(Diagnostic("ssa-violation", f"value {vid!r} has {count} definitions"))
    return diags


def _check_instruction(module, func, block, instr, block_ids, function_names):
    diags = []
    for succ in instr.successors:
        if succ not in block_ids:
            diags.append(Diagnostic("dangling-reference",
                                    f"branch to undefined label {succ.split(':', 1)[1]!r}",
                                    instr.line))
    if instr.opcode not in TERMINATORS and instr.successors:
        diags.append(Diagnostic("invalid-successors",
                                f"non-terminator {instr.opcode} has successors", instr.line))
    if instr.phi_labels is not None:
        for lbl in instr.phi_labels:
            if lbl not in block_ids:
                diags.append(Diagnostic("dangling-reference",
                                        f"phi references undefined label {lbl.split(':', 1)[1]!r}",
                                        instr.line))
        if len(instr.phi_labels) != len(instr.operands):
            diags.append(Diagnostic("arity", "phi operand/label count mismatch", instr.line))
    if instr.callee is not None and instr.callee not in function_names:
        diags.append(Diagnostic("dangling-reference",
                                f"call to undefined function {instr.callee!r}", instr.line))
    for vid in instr.operands:
        if vid not in module.values:
            diags.append(Diagnostic("unresolved-operand",
                                    f"operand {vid!r} is not a known value", instr.line))
    base = instr.opcode.split("-", 1)[0]
    n = len(instr.operands)
    if instr.opcode in BINARY_OPS or base in ("icmp", "fcmp"):
        if n != 2:
            diags.append(Diagnostic("arity", f"{instr.opcode} expects 2 operands, has {n}", instr.line))
    elif instr.opcode in _FIXED_ARITY:
        if n != _FIXED_ARITY[instr.opcode]:
            diags.append(Diagnostic("arity",
                                    f"{instr.opcode} expects {_FIXED_ARITY[instr.opcode]} operands, has {n}",
                                    instr.line))
    elif instr.opcode == "ret" and n > 1:
        diags.append(Diagnostic("arity", f"ret expects 0 or 1 operands, has {n}", instr.line))
    elif instr.opcode == "br" and not (
            (n == 0 and len(instr.successors) == 1) or (n == 1 and len(instr.successors) == 2)):
        diags.append(Diagnostic("arity", "malformed br", instr.line))
    elif instr.opcode == "switch" and n != len(instr.successors):
        diags.append(Diagnostic("arity", "switch case/label count mismatch", instr.line))
    elif instr.opcode == "phi" and n < 1:
        diags.append(Diagnostic("arity", "phi expects at least one incoming value", instr.line))
    elif instr.opcode == "getelementptr" and n < 1:
        diags.append(Diagnostic("arity", "getelementptr expects a base pointer", instr.line))
    return diags


# printing ------------------------------------------------------------------

def _label_of(block_id: str) -> str:
    return block_id.split(":", 1)[1]


def _print_instruction(module: IRModule, instr: Instruction) -> str:
    vals = module.values

    def name(vid):
        return vals[vid].name

    def dtype(vid):
        return vals[vid].dtype

    op = instr.opcode
    base = op.split("-", 1)[0]
    res = f"{name(instr.result)} = " if instr.result is not None else ""
    if op in BINARY_OPS:
        a, b = instr.operands
        return f"{res}{op} {dtype(a)} {name(a)}, {name(b)}"
    if base in ("icmp", "fcmp"):
        pred = op.split("-", 1)[1]
        a, b = instr.operands
        return f"{res}{base} {pred} {dtype(a)} {name(a)}, {name(b)}"
    if op == "phi":
        parts = [f"[ {name(v)}, %{_label_of(lbl)} ]"
                 for v, lbl in zip(instr.operands, instr.phi_labels or [])]
        return f"{res}phi {dtype(instr.result)} " + ", ".join(parts)
    if op == "load":
        (p,) = instr.operands
        return f"{res}load {dtype(instr.result)}, {dtype(p)} {name(p)}"
    if op == "store":
        v, p = instr.operands
        return f"store {dtype(v)} {name(v)}, {dtype(p)} {name(p)}"
    if op == "alloca":
        return f"{res}alloca {dtype(instr.result)[:-1]}"
    if op == "getelementptr":
        parts = [f"{dtype(v)} {name(v)}" for v in instr.operands]
        return f"{res}getelementptr {instr.type_text}, " + ", ".join(parts)
    if op == "call":
        args = ", ".join(f"{dtype(v)} {name(v)}" for v in instr.operands)
        return f"{res}call {instr.type_text} {instr.callee}({args})"
    if op == "br":
        if len(instr.successors) == 1:
            return f"br label %{_label_of(instr.successors[0])}"
        (c,) = instr.operands
        t, f = instr.successors
        return f"br {dtype(c)} {name(c)}, label %{_label_of(t)}, label %{_label_of(f)}"
    if op == "switch":
        scrut = instr.operands[0]
        cases = " ".join(
            f"{dtype(v)} {name(v)}, label %{_label_of(lbl)}"
            for v, lbl in zip(instr.operands[1:], instr.successors[1:]))
        return (f"switch {dtype(scrut)} {name(scrut)}, "
                f"label %{_label_of(instr.successors[0])} [ {cases} ]")
    if op == "ret":
        if not instr.operands:
            return "ret void"
        (v,) = instr.operands
        return f"ret {dtype(v)} {name(v)}"
    raise ValueError(f"cannot print opcode {op!r}")


def module_to_text(module: IRModule) -> str:
    """Canonical text form; parse_module(module_to_text(m)) is structurally m."""
    lines = []
    for g in module.globals:
        lit = repr(g.literal) if isinstance(g.literal, float) else str(g.literal)
        lines.append(f"{g.name} = global {g.dtype[:-1]} {lit}")
    for func in module.functions:
        if func.external:
            lines.append(f"declare {func.return_type} {func.name}({', '.join(func.param_types)})")
            continue
        params = ", ".join(f"{t} {module.values[v].name}"
                           for t, v in zip(func.param_types, func.params))
        linkage = "" if func.externally_visible else "internal "
        lines.append(f"define {linkage}{func.return_type} {func.name}({params}) {{")
        for block in func.blocks:
            lines.append(f"{block.label}:")
            for instr in block.instructions:
                lines.append(f"  {_print_instruction(module, instr)}")
        lines.append("}")
    return "\n".join(lines) + "\n"
