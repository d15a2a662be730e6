"""JSON wire format for protocol documents (``*.protocol.json``).

The canonical form keeps keys in schema order, sorts places, transitions,
arcs, peers and finals, and omits optional keys that are absent, so
``serialize_protocol`` is a pure function of the net's structure.
"""

from __future__ import annotations

import json
from typing import Any

from .errors import InvariantViolation, MalformedDocument, PredicateSyntaxError, SchemaViolation
from .model import (
    ANY, OMITTED, ActionSpec, FromRecv, Literal, Place, ProtocolNet, RecvSpec, ResultsOf,
    SendSpec, Transition, check_invariants,
)
from .predicates import parse_pred, render_pred

TOP_KEYS = ("name", "role", "peers", "places", "transitions", "arcs", "initial", "finals")


# -- parsing -----------------------------------------------------------------

def _expect_keys(obj: Any, path: str, required: tuple[str, ...], optional: tuple[str, ...] = ()):
    if not isinstance(obj, dict):
        raise SchemaViolation(path, "expected an object")
    for k in required:
        if k not in obj:
            raise SchemaViolation(f"{path}.{k}", "missing field")
    extra = sorted(set(obj) - set(required) - set(optional))
    if extra:
        raise SchemaViolation(f"{path}.{extra[0]}", "unexpected field")


def _str(obj: Any, path: str, allow_empty: bool = False) -> str:
    if not isinstance(obj, str):
        raise SchemaViolation(path, "expected a string")
    if not obj and not allow_empty:
        raise SchemaViolation(path, "must not be empty")
    return obj


def _str_list(obj: Any, path: str) -> list[str]:
    if not isinstance(obj, list):
        raise SchemaViolation(path, "expected a list")
    return [_str(v, f"{path}[{i}]") for i, v in enumerate(obj)]


def _content(obj: Any, path: str, allowed: dict[str, type]):
    """Decode ``null`` or a single-key content object."""
    if obj is None:
        return None
    if not isinstance(obj, dict) or len(obj) != 1:
        raise SchemaViolation(path, "expected null or an object with one key")
    (key, value), = obj.items()
    if key not in allowed:
        raise SchemaViolation(f"{path}.{key}", "unexpected field")
    return allowed[key](_str(value, f"{path}.{key}", allow_empty=(key == "literal")))


def _recv(obj: Any, path: str) -> RecvSpec:
    _expect_keys(obj, path, ("label", "performative", "sender", "content"))
    content = _content(obj["content"], f"{path}.content", {"literal": Literal})
    return RecvSpec(
        r_label=_str(obj["label"], f"{path}.label"),
        performative=_str(obj["performative"], f"{path}.performative"),
        sender=_str(obj["sender"], f"{path}.sender"),
        content=content if content is not None else ANY,
    )


def _send(obj: Any, path: str) -> SendSpec:
    _expect_keys(obj, path, ("label", "performative", "receiver", "content"))
    content = _content(obj["content"], f"{path}.content", {"literal": Literal, "results_of": ResultsOf})
    return SendSpec(
        s_label=_str(obj["label"], f"{path}.label"),
        performative=_str(obj["performative"], f"{path}.performative"),
        receiver=_str(obj["receiver"], f"{path}.receiver"),
        content=content if content is not None else OMITTED,
    )


def _action(obj: Any, path: str) -> ActionSpec:
    _expect_keys(obj, path, ("label", "type", "act", "content"))
    content = _content(obj["content"], f"{path}.content", {"literal": Literal, "from_recv": FromRecv})
    return ActionSpec(
        act_label=_str(obj["label"], f"{path}.label"),
        kind=_str(obj["type"], f"{path}.type"),
        act=_str(obj["act"], f"{path}.act"),
        content=content if content is not None else OMITTED,
    )


def protocol_from_dict(data: Any) -> ProtocolNet:
    """Build a net from already-decoded JSON, enforcing schema and invariants."""
    _expect_keys(data, "$", TOP_KEYS)
    problems: list[str] = []

    places = []
    if not isinstance(data["places"], list):
        raise SchemaViolation("$.places", "expected a list")
    for i, p in enumerate(data["places"]):
        path = f"$.places[{i}]"
        _expect_keys(p, path, ("id",), ("recv",))
        recv = _recv(p["recv"], f"{path}.recv") if "recv" in p else None
        places.append(Place(_str(p["id"], f"{path}.id"), recv))

    transitions = []
    if not isinstance(data["transitions"], list):
        raise SchemaViolation("$.transitions", "expected a list")
    for i, t in enumerate(data["transitions"]):
        path = f"$.transitions[{i}]"
        _expect_keys(t, path, ("id",), ("pred", "send", "action"))
        tid = _str(t["id"], f"{path}.id")
        guard = None
        if "pred" in t:
            try:
                guard = parse_pred(_str(t["pred"], f"{path}.pred"))
            except PredicateSyntaxError as e:
                problems.append(f"transition {tid} guard: {e}")
        if "send" in t and "action" in t:
            problems.append(f"transition {tid} carries two effects")
            effect = None
        elif "send" in t:
            effect = _send(t["send"], f"{path}.send")
        elif "action" in t:
            effect = _action(t["action"], f"{path}.action")
        else:
            effect = None
        transitions.append(Transition(tid, guard, effect))

    if not isinstance(data["arcs"], list):
        raise SchemaViolation("$.arcs", "expected a list")
    arcs = []
    for i, a in enumerate(data["arcs"]):
        path = f"$.arcs[{i}]"
        _expect_keys(a, path, ("from", "to"))
        arc = (_str(a["from"], f"{path}.from"), _str(a["to"], f"{path}.to"))
        if arc in arcs:
            problems.append(f"duplicate arc {arc[0]}->{arc[1]}")
        arcs.append(arc)

    peers = _str_list(data["peers"], "$.peers")
    finals = _str_list(data["finals"], "$.finals")
    if len(set(peers)) != len(peers):
        problems.append("duplicate peer")
    if len(set(finals)) != len(finals):
        problems.append("duplicate final")

    net = ProtocolNet(
        name=_str(data["name"], "$.name"),
        role=_str(data["role"], "$.role"),
        peers=frozenset(peers),
        places=tuple(places),
        transitions=tuple(transitions),
        arcs=frozenset(arcs),
        initial=_str(data["initial"], "$.initial"),
        finals=frozenset(finals),
    )
    problems.extend(check_invariants(net))
    if problems:
        raise InvariantViolation(problems)
    return net


def parse_protocol(doc: bytes | str) -> ProtocolNet:
    """Parse a protocol document.

    Raises :class:`MalformedDocument`, :class:`SchemaViolation` or
    :class:`InvariantViolation`.
    """
    if isinstance(doc, (bytes, bytearray)):
        try:
            doc = bytes(doc).decode("utf-8")
        except UnicodeDecodeError as e:
            raise MalformedDocument(f"not UTF-8: {e}") from None
    try:
        data = json.loads(doc)
    except json.JSONDecodeError as e:
        raise MalformedDocument(str(e)) from None
    return protocol_from_dict(data)


# -- serialisation -----------------------------------------------------------

def _content_obj(content) -> dict | None:
    if isinstance(content, Literal):
        return {"literal": content.value}
    if isinstance(content, ResultsOf):
        return {"results_of": content.act_label}
    if isinstance(content, FromRecv):
        return {"from_recv": content.r_label}
    return None


def protocol_to_dict(net: ProtocolNet) -> dict:
    places = []
    for p in net.places:
        obj: dict[str, Any] = {"id": p.id}
        if p.recv is not None:
            obj["recv"] = {
                "label": p.recv.r_label,
                "performative": p.recv.performative,
                "sender": p.recv.sender,
                "content": _content_obj(p.recv.content),
            }
        places.append(obj)
    transitions = []
    for t in net.transitions:
        obj = {"id": t.id}
        if t.guard is not None:
            obj["pred"] = render_pred(t.guard)
        if t.send is not None:
            obj["send"] = {
                "label": t.send.s_label,
                "performative": t.send.performative,
                "receiver": t.send.receiver,
                "content": _content_obj(t.send.content),
            }
        elif t.action is not None:
            obj["action"] = {
                "label": t.action.act_label,
                "type": t.action.kind,
                "act": t.action.act,
                "content": _content_obj(t.action.content),
            }
        transitions.append(obj)
    return {
        "name": net.name,
        "role": net.role,
        "peers": sorted(net.peers),
        "places": places,
        "transitions": transitions,
        "arcs": [{"from": a, "to": b} for a, b in sorted(net.arcs)],
        "initial": net.initial,
        "finals": sorted(net.finals),
    }


def serialize_protocol(net: ProtocolNet) -> bytes:
    text = json.dumps(protocol_to_dict(net), indent=2, ensure_ascii=False)
    return (text + "\n").encode("utf-8")


def to_dot(net: ProtocolNet) -> str:
    """Graphviz rendering, for documentation only."""
    lines = [f'digraph "{net.name}" {{', "  rankdir=LR;"]
    for p in net.places:
        label = p.id
        if p.recv:
            label += f"\\nRecv {p.recv.r_label} {p.recv.performative} <- {p.recv.sender}"
        periph = 2 if p.id in net.finals else 1
        style = ",style=bold" if p.id == net.initial else ""
        lines.append(f'  "{p.id}" [shape=circle,peripheries={periph}{style},label="{label}"];')
    for t in net.transitions:
        label = t.id
        if t.guard is not None:
            label += "\\nPred " + render_pred(t.guard).replace('"', '\\"')
        if t.send:
            label += f"\\nSend {t.send.s_label} {t.send.performative} -> {t.send.receiver}"
        if t.action:
            label += f"\\nAction {t.action.act_label} {t.action.kind} {t.action.act}"
        lines.append(f'  "{t.id}" [shape=box,label="{label}"];')
    for a, b in sorted(net.arcs):
        lines.append(f'  "{a}" -> "{b}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
