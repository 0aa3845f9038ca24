"""The chain language: sampling, resolving, rendering and parsing.

A sentence is a random ordering of n clauses ``lhs = g rhs`` forming a
line graph rooted at a constant.  Variables are the 26 lowercase
letters, drawn without replacement, so every variable appears exactly
twice except the last one in the chain, which appears once.
"""

from __future__ import annotations

import random
import string
from dataclasses import dataclass, field

from .groups import GroupSpec, LegoError, apply_group

ALPHABET = tuple(string.ascii_lowercase)


class ChainError(LegoError):
    """Invalid or inconsistent chain."""


class ParseError(LegoError):
    """Sentence does not conform to the grammar."""


@dataclass(frozen=True)
class Clause:
    lhs: str
    op: str
    rhs: str  # variable symbol or the root constant


@dataclass
class Chain:
    n: int
    clauses: list[Clause]          # in chain (graph) order
    assignments: list[str]         # y_i for chain position i
    sentence_order: list[int]      # sentence_order[k] = chain index of k-th surface clause
    group: GroupSpec = field(repr=False, default=None)

    def __eq__(self, other):
        if not isinstance(other, Chain):
            return NotImplemented
        return (
            self.n == other.n
            and self.clauses == other.clauses
            and self.assignments == other.assignments
            and self.group is other.group
        )

    def surface_clauses(self) -> list[Clause]:
        return [self.clauses[i] for i in self.sentence_order]

    def chain_vars(self) -> list[str]:
        return [c.lhs for c in self.clauses]


def sample_chain(n: int, group: GroupSpec, rng: random.Random) -> Chain:
    """Draw a chain of n clauses: variables without replacement, labels uniform."""
    if n <= 0:
        raise ChainError("empty chain")
    if n > len(ALPHABET):
        raise ChainError("alphabet exhausted")
    variables = rng.sample(ALPHABET, n)
    labels = [rng.choice(group.set_elements) for _ in range(n)]
    clauses = []
    prev_value = group.root_value
    prev_symbol = group.root_symbol
    for i in range(n):
        ops = [g for g in group.elements if group.action(g, prev_value) == labels[i]]
        if len(ops) != 1:
            raise ChainError(
                f"group element mapping {prev_value!r} to {labels[i]!r} is not unique"
            )
        clauses.append(Clause(lhs=variables[i], op=ops[0], rhs=prev_symbol))
        prev_value = labels[i]
        prev_symbol = variables[i]
    order = list(range(n))
    rng.shuffle(order)
    return Chain(n=n, clauses=clauses, assignments=labels,
                 sentence_order=order, group=group)


def resolve_chain(chain: Chain) -> list[str]:
    """Recompute assignments by following the chain from the root."""
    group = chain.group
    prev_value = group.root_value
    prev_symbol = group.root_symbol
    seen = set()
    values = []
    for clause in chain.clauses:
        if clause.rhs != prev_symbol:
            raise ChainError("inconsistent chain")
        if clause.lhs in seen:
            raise ChainError("inconsistent chain")
        seen.add(clause.lhs)
        prev_value = apply_group(clause.op, prev_value, group)
        prev_symbol = clause.lhs
        values.append(prev_value)
    return values


def shortcut_last_parity(chain: Chain) -> str:
    """Resolve the last chain variable from the parity of minus signs alone."""
    if chain.group.kind != "Z2":
        raise ChainError("parity shortcut undefined for non-abelian task")
    minus = sum(1 for c in chain.clauses if c.op == "-")
    return "1" if minus % 2 == 0 else "-1"


def _clause_separator(group: GroupSpec) -> str:
    # single-character ops render compactly ("b=-a;"); multi-character
    # labels need a space before the rhs ("b=r1 a;")
    return "" if all(len(g) == 1 for g in group.elements) else " "


def render_clause(clause: Clause, group: GroupSpec) -> str:
    sep = _clause_separator(group)
    return f"{clause.lhs}={clause.op}{sep}{clause.rhs};"


def render_sentence(chain: Chain) -> str:
    """Surface form: "[BOS] j=-f; f=-b; ... [EOS]" in sentence order."""
    body = " ".join(render_clause(c, chain.group) for c in chain.surface_clauses())
    return f"[BOS] {body} [EOS]"


def parse_sentence(text: str, group: GroupSpec) -> Chain:
    """Inverse of render_sentence; recovers chain order and assignments."""
    stripped = text.strip()
    if not stripped.startswith("[BOS]") or not stripped.endswith("[EOS]"):
        raise ParseError("sentence must be delimited by [BOS] and [EOS]")
    body = stripped[len("[BOS]"):-len("[EOS]")].strip()
    pieces = [p.strip() for p in body.split(";") if p.strip()]
    clauses = []
    for piece in pieces:
        if "=" not in piece:
            raise ParseError(f"malformed clause: {piece!r}")
        lhs, rest = piece.split("=", 1)
        lhs = lhs.strip()
        rest = rest.strip()
        if " " in rest:
            op, rhs = rest.split(None, 1)
        else:
            op, rhs = rest[:1], rest[1:]
        if lhs not in ALPHABET:
            raise ParseError(f"unknown variable symbol: {lhs!r}")
        if op not in group.elements:
            raise ParseError(f"unknown group element: {op!r}")
        if rhs not in ALPHABET and rhs != group.root_symbol:
            raise ParseError(f"unknown symbol on right-hand side: {rhs!r}")
        clauses.append(Clause(lhs=lhs, op=op, rhs=rhs))

    by_lhs: dict[str, int] = {}
    for k, c in enumerate(clauses):
        if c.lhs in by_lhs:
            raise ParseError(f"duplicate left-hand side: {c.lhs!r}")
        by_lhs[c.lhs] = k
    roots = [k for k, c in enumerate(clauses) if c.rhs == group.root_symbol]
    if not roots:
        raise ParseError("missing root clause")
    if len(roots) > 1:
        raise ParseError("multiple root clauses")

    chain_order = [roots[0]]
    rhs_index = {}
    for k, c in enumerate(clauses):
        if c.rhs != group.root_symbol:
            if c.rhs in rhs_index:
                raise ParseError(f"branching chain at variable: {c.rhs!r}")
            rhs_index[c.rhs] = k
    while len(chain_order) < len(clauses):
        nxt = rhs_index.get(clauses[chain_order[-1]].lhs)
        if nxt is None:
            raise ParseError("cycle or disconnected clauses")
        chain_order.append(nxt)

    ordered = [clauses[k] for k in chain_order]
    # sentence_order[k] = chain position of the k-th surface clause
    chain_pos = {surface_idx: pos for pos, surface_idx in enumerate(chain_order)}
    sentence_order = [chain_pos[k] for k in range(len(clauses))]
    chain = Chain(n=len(clauses), clauses=ordered, assignments=[],
                  sentence_order=sentence_order, group=group)
    chain.assignments = resolve_chain(chain)
    return chain
