"""Extended Petri-net protocol representation.

A :class:`ProtocolNet` describes one agent's side of an interaction. Places
may carry a :class:`RecvSpec` (a message the agent waits for); transitions
may carry a guard and at most one effect, either a :class:`SendSpec` or an
:class:`ActionSpec`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Union

from .predicates import PredExpr, references

NODE_ID_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_-]*\Z")
WILDCARD = "*"
ACTION_KINDS = ("execute", "read", "write")


# -- content -----------------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    value: str


@dataclass(frozen=True)
class AnyContent:
    """Recv content pattern matching every message body."""


@dataclass(frozen=True)
class ResultsOf:
    act_label: str


@dataclass(frozen=True)
class FromRecv:
    r_label: str


@dataclass(frozen=True)
class Omitted:
    pass


ANY = AnyContent()
OMITTED = Omitted()

ContentPattern = Union[Literal, AnyContent]
SendContent = Union[Literal, ResultsOf, Omitted]
ActionContent = Union[Literal, FromRecv, Omitted]


# -- labels ------------------------------------------------------------------

@dataclass(frozen=True)
class RecvSpec:
    r_label: str
    performative: str
    sender: str
    content: ContentPattern = ANY


@dataclass(frozen=True)
class SendSpec:
    s_label: str
    performative: str
    receiver: str
    content: SendContent = OMITTED


@dataclass(frozen=True)
class ActionSpec:
    act_label: str
    kind: str  # execute | read | write
    act: str
    content: ActionContent = OMITTED


Effect = Union[SendSpec, ActionSpec, None]


@dataclass(frozen=True)
class Place:
    id: str
    recv: Optional[RecvSpec] = None

    @property
    def is_recv(self) -> bool:
        return self.recv is not None


@dataclass(frozen=True)
class Transition:
    id: str
    guard: Optional[PredExpr] = None
    effect: Effect = None

    @property
    def send(self) -> Optional[SendSpec]:
        return self.effect if isinstance(self.effect, SendSpec) else None

    @property
    def action(self) -> Optional[ActionSpec]:
        return self.effect if isinstance(self.effect, ActionSpec) else None

    def references(self) -> set[tuple[str, str]]:
        """``(kind, label)`` data references made by guard and effect."""
        refs = references(self.guard) if self.guard is not None else set()
        if self.send is not None and isinstance(self.send.content, ResultsOf):
            refs.add(("result", self.send.content.act_label))
        if self.action is not None and isinstance(self.action.content, FromRecv):
            refs.add(("recv", self.action.content.r_label))
        return refs


# -- the net -----------------------------------------------------------------

@dataclass(frozen=True)
class ProtocolNet:
    """An extended Petri net.

    Node collections are normalised on construction (places and transitions
    sorted by id, arcs/peers/finals as frozensets) so two nets built from
    differently ordered inputs compare equal.
    """

    name: str
    role: str
    peers: frozenset[str]
    places: tuple[Place, ...]
    transitions: tuple[Transition, ...]
    arcs: frozenset[tuple[str, str]]
    initial: str
    finals: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "peers", frozenset(self.peers))
        object.__setattr__(self, "places", tuple(sorted(self.places, key=lambda p: p.id)))
        object.__setattr__(self, "transitions", tuple(sorted(self.transitions, key=lambda t: t.id)))
        object.__setattr__(self, "arcs", frozenset(tuple(a) for a in self.arcs))
        object.__setattr__(self, "finals", frozenset(self.finals))

    # lookups are cached; the dataclass is frozen so they never go stale
    @cached_property
    def place_map(self) -> dict[str, Place]:
        return {p.id: p for p in self.places}

    @cached_property
    def transition_map(self) -> dict[str, Transition]:
        return {t.id: t for t in self.transitions}

    @cached_property
    def node_ids(self) -> list[str]:
        return sorted(list(self.place_map) + list(self.transition_map))

    @cached_property
    def succ(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {n: [] for n in self.node_ids}
        for a, b in sorted(self.arcs):
            out.setdefault(a, []).append(b)
        return out

    @cached_property
    def pred(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {n: [] for n in self.node_ids}
        for a, b in sorted(self.arcs):
            out.setdefault(b, []).append(a)
        return out

    def is_place(self, node: str) -> bool:
        return node in self.place_map

    def is_transition(self, node: str) -> bool:
        return node in self.transition_map

    def inputs(self, t: str) -> list[str]:
        return self.pred[t]

    def outputs(self, t: str) -> list[str]:
        return self.succ[t]

    @cached_property
    def recv_by_label(self) -> dict[str, Place]:
        return {p.recv.r_label: p for p in self.places if p.recv is not None}

    @cached_property
    def action_by_label(self) -> dict[str, Transition]:
        return {t.action.act_label: t for t in self.transitions if t.action is not None}

    @cached_property
    def send_by_label(self) -> dict[str, Transition]:
        return {t.send.s_label: t for t in self.transitions if t.send is not None}

    def node_for_ref(self, kind: str, label: str) -> Optional[str]:
        """Node id holding the ``recv``/``result`` label, if any."""
        if kind == "recv":
            p = self.recv_by_label.get(label)
            return p.id if p else None
        t = self.action_by_label.get(label)
        return t.id if t else None


@dataclass(frozen=True)
class MessageEnvelope:
    performative: str
    sender: str
    receiver: str
    conversation: str
    content: str = ""

    def __post_init__(self):
        for name in ("performative", "sender", "receiver", "conversation"):
            if not getattr(self, name):
                raise ValueError(f"envelope field {name!r} must be nonempty")

    def to_dict(self) -> dict:
        return {
            "performative": self.performative,
            "sender": self.sender,
            "receiver": self.receiver,
            "conversation": self.conversation,
            "content": self.content,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MessageEnvelope":
        return cls(
            performative=data["performative"],
            sender=data["sender"],
            receiver=data["receiver"],
            conversation=data["conversation"],
            content=data.get("content", ""),
        )


def check_invariants(net: ProtocolNet) -> list[str]:
    """Type-level invariant problems of *net* (empty when it is well formed).

    Graph-shape properties such as reachability are reported separately by
    :func:`protonet.structure.validate_structure`.
    """
    from .predicates import PredicateTypeError, typecheck

    problems: list[str] = []
    ids = [p.id for p in net.places] + [t.id for t in net.transitions]
    seen: set[str] = set()
    for i in ids:
        if not isinstance(i, str) or not NODE_ID_RE.match(i):
            problems.append(f"bad node id {i!r}")
        if i in seen:
            problems.append(f"duplicate node id {i!r}")
        seen.add(i)

    def dupes(labels: list[str], what: str):
        s: set[str] = set()
        for lab in labels:
            if not NODE_ID_RE.match(lab):
                problems.append(f"bad {what} {lab!r}")
            if lab in s:
                problems.append(f"duplicate {what} {lab!r}")
            s.add(lab)

    dupes([p.recv.r_label for p in net.places if p.recv], "r_label")
    dupes([t.send.s_label for t in net.transitions if t.send], "s_label")
    dupes([t.action.act_label for t in net.transitions if t.action], "act_label")

    roles = set(net.peers) | {WILDCARD}
    for p in net.places:
        if p.recv and p.recv.sender not in roles:
            problems.append(f"recv {p.recv.r_label} sender {p.recv.sender!r} is not a peer")
    for t in net.transitions:
        if t.effect is not None and not isinstance(t.effect, (SendSpec, ActionSpec)):
            problems.append(f"transition {t.id} has an unknown effect")
        if t.send and t.send.receiver not in roles:
            problems.append(f"send {t.send.s_label} receiver {t.send.receiver!r} is not a peer")
        if t.action and t.action.kind not in ACTION_KINDS:
            problems.append(f"action {t.action.act_label} has unknown type {t.action.kind!r}")
        for kind, label in sorted(t.references()):
            if net.node_for_ref(kind, label) is None:
                what = "recv label" if kind == "recv" else "action label"
                problems.append(f"transition {t.id} references unknown {what} {label!r}")
        if t.guard is not None:
            try:
                typecheck(t.guard)
            except PredicateTypeError as e:
                problems.append(f"transition {t.id} guard: {e}")

    for a, b in sorted(net.arcs):
        if a not in seen or b not in seen:
            problems.append(f"arc {a}->{b} references an unknown node")
        elif net.is_place(a) == net.is_place(b):
            problems.append(f"arc {a}->{b} is not bipartite")

    if net.initial not in net.place_map:
        problems.append(f"initial {net.initial!r} is not a place")
    if not net.finals:
        problems.append("finals is empty")
    for f in sorted(net.finals):
        if f not in net.place_map:
            problems.append(f"final {f!r} is not a place")
    return problems


def make_net(
    name: str = "net",
    role: str = "self",
    peers=(),
    places=(),
    transitions=(),
    arcs=(),
    initial: str = "P0",
    finals=("P0",),
) -> ProtocolNet:
    """Convenience constructor: places/transitions may be given as bare ids."""
    ps = [Place(p) if isinstance(p, str) else p for p in places]
    ts = [Transition(t) if isinstance(t, str) else t for t in transitions]
    return ProtocolNet(
        name=name,
        role=role,
        peers=frozenset(peers),
        places=tuple(ps),
        transitions=tuple(ts),
        arcs=frozenset(tuple(a) for a in arcs),
        initial=initial,
        finals=frozenset(finals),
    )


def chain(*nodes: str) -> list[tuple[str, str]]:
    """Arcs along a path: ``chain("P0", "T1", "P1")``."""
    return list(zip(nodes, nodes[1:]))


__all__ = [
    "ANY", "OMITTED", "WILDCARD", "ACTION_KINDS", "Literal", "AnyContent", "ResultsOf",
    "FromRecv", "Omitted", "RecvSpec", "SendSpec", "ActionSpec", "Place", "Transition",
    "ProtocolNet", "MessageEnvelope", "check_invariants", "make_net", "chain",
]
