"""Random well-formed programs in the textual IR.

Generation is structured (straight runs, if/else diamonds, while loops
with phi headers, switches, calls, memory traffic through allocas and
globals) so every output parses, validates cleanly, and keeps SSA
definitions dominating their uses. Profiles trade size for shape:

  small   a few instructions to ~25, shallow data chains
  medium  up to ~45 instructions, more loops and calls
  chain   one function dominated by a long dependent arithmetic chain,
          which drives analysis step counts far past typical values
  mixed   weighted blend of the above
"""

from __future__ import annotations

import random

PROFILES = ("small", "medium", "chain", "mixed")

_ARITH = ("add", "sub", "mul", "and", "or", "xor", "shl")
_FARITH = ("fadd", "fsub", "fmul", "fdiv")
_PREDS = ("eq", "ne", "slt", "sgt", "sle", "sge")


class _FnBuilder:
    def __init__(self, rng: random.Random, name: str, n_params: int,
                 visible: bool, budget: int, callables: list[tuple[str, int]],
                 global_names: list[str]):
        self.rng = rng
        self.name = name
        self.visible = visible
        self.budget = budget
        self.callables = callables
        self.global_names = global_names
        self.params = [f"%p{i}" for i in range(n_params)]
        self.counter = 0
        self.blocks: list[tuple[str, list[str]]] = []
        self.block_count = 0
        self.current: list[str] | None = None
        self.current_label = ""
        self.pool32 = list(self.params)
        self.pool1: list[str] = []
        self.poolptr: list[str] = []
        self.poolf: list[str] = []
        self.new_block("entry")

    def fresh(self) -> str:
        self.counter += 1
        return f"%v{self.counter}"

    def new_block(self, hint: str) -> str:
        label = hint if hint == "entry" else f"{hint}{self.block_count}"
        self.block_count += 1
        lines: list[str] = []
        self.blocks.append((label, lines))
        self.current = lines
        self.current_label = label
        return label

    def emit(self, line: str):
        self.current.append(line)
        self.budget -= 1

    def pick32(self) -> str:
        # Bias to recent values: keeps dependence chains shallow by default.
        if self.pool32 and self.rng.random() < 0.85:
            tail = self.pool32[-3:]
            return self.rng.choice(tail)
        return str(self.rng.randint(-4, 9))

    def arith(self) -> str:
        name = self.fresh()
        op = self.rng.choice(_ARITH)
        self.emit(f"{name} = {op} i32 {self.pick32()}, {self.pick32()}")
        self.pool32.append(name)
        return name

    def compare(self) -> str:
        name = self.fresh()
        pred = self.rng.choice(_PREDS)
        self.emit(f"{name} = icmp {pred} i32 {self.pick32()}, {self.pick32()}")
        self.pool1.append(name)
        return name

    def float_run(self):
        name = self.fresh()
        if self.poolf and self.rng.random() < 0.6:
            a = self.rng.choice(self.poolf)
        else:
            a = f"{self.rng.randint(1, 9)}.5"
        self.emit(f"{name} = {self.rng.choice(_FARITH)} float {a}, 2.0")
        self.poolf.append(name)

    def memory(self):
        if self.poolptr and self.rng.random() < 0.5:
            ptr = self.rng.choice(self.poolptr)
        elif self.global_names and self.rng.random() < 0.4:
            ptr = self.rng.choice(self.global_names)
        else:
            ptr = self.fresh()
            self.emit(f"{ptr} = alloca i32")
            self.poolptr.append(ptr)
        if self.budget <= 1:
            return
        if self.rng.random() < 0.5:
            self.emit(f"store i32 {self.pick32()}, i32* {ptr}")
        loaded = self.fresh()
        self.emit(f"{loaded} = load i32, i32* {ptr}")
        self.pool32.append(loaded)
        if self.budget > 1 and ptr.startswith("%") and self.rng.random() < 0.3:
            gep = self.fresh()
            self.emit(f"{gep} = getelementptr i32, i32* {ptr}, i32 {self.pick32()}")
            self.poolptr.append(gep)

    def call(self):
        choices = list(self.callables)
        if self.rng.random() < 0.1:
            choices.append((self.name, len(self.params)))  # self recursion
        if not choices:
            return
        callee, arity = self.rng.choice(choices)
        args = ", ".join(f"i32 {self.pick32()}" for _ in range(arity))
        name = self.fresh()
        self.emit(f"{name} = call i32 {callee}({args})")
        self.pool32.append(name)

    def if_else(self, depth: int):
        cond = self.rng.choice(self.pool1) if self.pool1 and self.rng.random() < 0.4 \
            else self.compare()
        then_label = f"then{self.block_count}"
        else_label = f"else{self.block_count + 1}"
        self.emit(f"br i1 {cond}, label %{then_label}, label %{else_label}")
        saved32, saved1 = list(self.pool32), list(self.pool1)
        merged: list[tuple[str, str]] = []

        self.block_count += 2
        self.blocks.append((then_label, []))
        self.current, self.current_label = self.blocks[-1][1], then_label
        self.sequence(depth + 1, self.rng.randint(1, 3))
        then_out = self.fresh()
        self.emit(f"{then_out} = add i32 {self.pick32()}, 1")
        merge_label = f"merge{self.block_count}"
        merged.append((then_out, self.current_label))
        self.emit(f"br label %{merge_label}")

        self.pool32, self.pool1 = list(saved32), list(saved1)
        self.blocks.append((else_label, []))
        self.current, self.current_label = self.blocks[-1][1], else_label
        self.sequence(depth + 1, self.rng.randint(1, 3))
        else_out = self.fresh()
        self.emit(f"{else_out} = sub i32 {self.pick32()}, 1")
        merged.append((else_out, self.current_label))
        self.emit(f"br label %{merge_label}")

        self.pool32, self.pool1 = saved32, saved1
        self.blocks.append((merge_label, []))
        self.block_count += 1
        self.current, self.current_label = self.blocks[-1][1], merge_label
        if self.budget > 0:
            phi = self.fresh()
            incoming = ", ".join(f"[ {v}, %{lbl} ]" for v, lbl in merged)
            self.emit(f"{phi} = phi i32 {incoming}")
            self.pool32.append(phi)

    def loop(self):
        start = self.pick32()
        pre_label = self.current_label
        header = f"loop{self.block_count}"
        body = f"body{self.block_count + 1}"
        exit_label = f"exit{self.block_count + 2}"
        self.block_count += 3
        self.emit(f"br label %{header}")

        induction = self.fresh()
        acc_init = self.pick32()
        acc = self.fresh()
        step = self.fresh()
        acc_next = self.fresh()
        cond = self.fresh()
        self.blocks.append((header, []))
        self.current, self.current_label = self.blocks[-1][1], header
        self.emit(f"{induction} = phi i32 [ {start}, %{pre_label} ], [ {step}, %{body} ]")
        self.emit(f"{acc} = phi i32 [ {acc_init}, %{pre_label} ], [ {acc_next}, %{body} ]")
        self.emit(f"{cond} = icmp slt i32 {induction}, {self.rng.randint(2, 12)}")
        self.emit(f"br i1 {cond}, label %{body}, label %{exit_label}")

        # Straight-line body keeps the phi back-edge labels trivially right.
        self.blocks.append((body, []))
        self.current, self.current_label = self.blocks[-1][1], body
        self.emit(f"{acc_next} = add i32 {acc}, {induction}")
        if self.budget > 2 and self.rng.random() < 0.5:
            extra = self.fresh()
            self.emit(f"{extra} = mul i32 {acc_next}, {self.pick32()}")
        self.emit(f"{step} = add i32 {induction}, 1")
        self.emit(f"br label %{header}")

        self.blocks.append((exit_label, []))
        self.current, self.current_label = self.blocks[-1][1], exit_label
        self.pool32.extend([induction, acc])

    def switch(self):
        scrut = self.pick32()
        if not scrut.startswith("%"):
            scrut = self.arith()
        base = self.block_count
        labels = [f"case{base + i}" for i in range(2)]
        default = f"dflt{base + 2}"
        done = f"done{base + 3}"
        self.block_count += 4
        cases = " ".join(f"i32 {i}, label %{lbl}" for i, lbl in enumerate(labels))
        self.emit(f"switch i32 {scrut}, label %{default} [ {cases} ]")
        for lbl in labels + [default]:
            self.blocks.append((lbl, []))
            self.current, self.current_label = self.blocks[-1][1], lbl
            tmp = self.fresh()
            self.emit(f"{tmp} = xor i32 {self.pick32()}, {self.rng.randint(0, 7)}")
            self.emit(f"br label %{done}")
        self.blocks.append((done, []))
        self.current, self.current_label = self.blocks[-1][1], done

    def sequence(self, depth: int, length: int | None = None):
        steps = length if length is not None else self.rng.randint(2, 6)
        for _ in range(steps):
            if self.budget <= 1:
                return
            roll = self.rng.random()
            if depth < 2 and self.budget > 8 and roll < 0.14:
                self.if_else(depth)
            elif depth < 2 and self.budget > 9 and roll < 0.26:
                self.loop()
            elif depth < 2 and self.budget > 10 and roll < 0.31:
                self.switch()
            elif roll < 0.45:
                self.compare() if self.rng.random() < 0.35 else self.arith()
            elif roll < 0.6 and self.budget > 3:
                self.memory()
            elif roll < 0.7 and self.callables is not None and self.budget > 1:
                self.call()
            elif roll < 0.78 and self.budget > 1:
                self.float_run()
            else:
                self.arith()

    def dependent_chain(self, length: int):
        first = self.arith()
        current = first
        for _ in range(length):
            name = self.fresh()
            op = self.rng.choice(("add", "sub", "mul", "xor"))
            self.emit(f"{name} = {op} i32 {current}, {self.rng.randint(1, 5)}")
            current = name
        # A use of the chain head at the end keeps it live across the chain.
        tail = self.fresh()
        self.emit(f"{tail} = or i32 {current}, {first}")
        self.pool32.append(tail)

    def finish(self) -> str:
        value = self.pick32()
        self.emit(f"ret i32 {value}")
        header = f"define {'' if self.visible else 'internal '}i32 {self.name}" \
                 f"({', '.join(f'i32 {p}' for p in self.params)}) {{"
        lines = [header]
        for label, body in self.blocks:
            lines.append(f"{label}:")
            lines.extend(f"  {line}" for line in body)
        lines.append("}")
        return "\n".join(lines)


def generate_module_text(seed: int, profile: str = "small") -> str:
    """One deterministic random module; same seed, same text."""
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    rng = random.Random(("synth", seed, profile).__repr__())
    if profile == "mixed":
        profile = rng.choices(("small", "medium", "chain"), weights=(60, 25, 15))[0]

    parts = []
    global_names = []
    for i in range(rng.choices((0, 1, 2), weights=(60, 30, 10))[0]):
        global_names.append(f"@g{i}")
        parts.append(f"@g{i} = global i32 {rng.randint(0, 99)}")
    callables: list[tuple[str, int]] = []
    if rng.random() < 0.3:
        parts.append("declare i32 @ext(i32)")
        callables.append(("@ext", 1))

    if profile == "chain":
        budget = rng.randint(26, 64)
        fn = _FnBuilder(rng, "@f0", rng.randint(0, 2), rng.random() < 0.7,
                        budget, [], global_names)
        fn.dependent_chain(rng.randint(22, max(23, budget - 6)))
        parts.append(fn.finish())
        return "\n".join(parts) + "\n"

    total_budget = rng.randint(6, 26) if profile == "small" else rng.randint(18, 45)
    n_funcs = rng.choices((1, 2, 3), weights=(55, 30, 15))[0]
    for i in range(n_funcs):
        share = max(3, total_budget // n_funcs + rng.randint(-2, 2))
        fn = _FnBuilder(rng, f"@f{i}", rng.randint(0, 3), rng.random() < 0.6,
                        share, list(callables), global_names)
        fn.sequence(depth=0, length=rng.randint(2, 8))
        parts.append(fn.finish())
        callables.append((f"@f{i}", len(fn.params)))
    return "\n".join(parts) + "\n"


def generate_corpus(count: int, seed: int, profile: str = "mixed") -> list[tuple[str, str]]:
    """(source_id, text) pairs; ids are unique and stable for a seed."""
    return [(f"synth-{seed:04d}-{i:05d}", generate_module_text(seed * 1_000_003 + i, profile))
            for i in range(count)]
