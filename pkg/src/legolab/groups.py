"""Finite (semi)group actions for the chain-following tasks.

Two concrete groups are provided: the sign group Z2 acting on {1, -1},
and the dihedral group D3 (order 6) acting on itself by left
multiplication.  Element labels for D3 are r0, r1, r2 (rotations) and
s0, s1, s2 (reflections); r0 is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass


class LegoError(Exception):
    """Base error for the chain language."""


@dataclass(frozen=True)
class GroupSpec:
    kind: str                       # "Z2" or "D3"
    elements: tuple[str, ...]       # group element labels, identity first
    set_elements: tuple[str, ...]   # labels of the acted-on set X
    root_value: str                 # value held by the root constant
    root_symbol: str                # surface symbol of the root constant

    def action(self, g: str, x: str) -> str:
        raise NotImplementedError

    @property
    def identity(self) -> str:
        return self.elements[0]


class _Z2(GroupSpec):
    def action(self, g: str, x: str) -> str:
        if g == "+":
            return x
        return "-1" if x == "1" else "1"


def _d3_compose(g: str, h: str) -> str:
    # r_a r_b = r_{a+b}, r_a s_b = s_{a+b}, s_a r_b = s_{a-b}, s_a s_b = r_{a-b}
    a, b = int(g[1]), int(h[1])
    if g[0] == "r":
        return h[0] + str((a + b) % 3)
    return ("s" if h[0] == "r" else "r") + str((a - b) % 3)


class _D3(GroupSpec):
    def action(self, g: str, x: str) -> str:
        return _d3_compose(g, x)


Z2 = _Z2(
    kind="Z2",
    elements=("+", "-"),
    set_elements=("1", "-1"),
    root_value="1",
    root_symbol="1",
)

D3 = _D3(
    kind="D3",
    elements=("r0", "r1", "r2", "s0", "s1", "s2"),
    set_elements=("r0", "r1", "r2", "s0", "s1", "s2"),
    root_value="r0",
    root_symbol="r0",
)

GROUPS = {"Z2": Z2, "D3": D3}


def get_group(kind: str) -> GroupSpec:
    if kind not in GROUPS:
        raise LegoError(f"unknown group kind: {kind!r}")
    return GROUPS[kind]


def apply_group(g: str, x: str, group: GroupSpec) -> str:
    """Apply group element g to set element x via the group's action table."""
    if g not in group.elements:
        raise LegoError(f"unknown group element: {g!r}")
    if x not in group.set_elements:
        raise LegoError(f"unknown set element: {x!r}")
    return group.action(g, x)
