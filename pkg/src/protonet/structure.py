"""Structural validation of a parsed net."""

from __future__ import annotations

from dataclasses import dataclass

from .graph import reachable
from .model import ProtocolNet

# report order
CODES = (
    "InitialHasIncoming",
    "FinalHasOutgoing",
    "Unreachable",
    "NoInputPlace",
    "NoOutputPlace",
)


@dataclass(frozen=True, order=True)
class Violation:
    code: str
    nodes: tuple[str, ...]
    arc: bool = False  # render nodes as an arc ``a->b``

    def render(self) -> str:
        sep = "->" if self.arc else ","
        return f"{self.code}({sep.join(self.nodes)})"

    def __str__(self) -> str:
        return self.render()


def validate_structure(net: ProtocolNet) -> list[Violation]:
    """All structural problems of *net*; empty means structurally valid."""
    out: list[Violation] = []
    for src in net.pred[net.initial]:
        out.append(Violation("InitialHasIncoming", (src, net.initial), arc=True))
    for f in sorted(net.finals):
        for dst in net.succ[f]:
            out.append(Violation("FinalHasOutgoing", (f, dst), arc=True))
    seen = reachable(net.succ, [net.initial])
    for n in net.node_ids:
        if n not in seen:
            out.append(Violation("Unreachable", (n,)))
    for t in net.transitions:
        if not net.pred[t.id]:
            out.append(Violation("NoInputPlace", (t.id,)))
        if not net.succ[t.id]:
            out.append(Violation("NoOutputPlace", (t.id,)))
    return sorted(out, key=lambda v: (CODES.index(v.code), v.nodes))
