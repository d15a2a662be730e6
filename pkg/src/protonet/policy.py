"""Access-control lists, condition patterns, action templates and manifests.

These are the agent-side inputs to analysis. All of them load from JSON:

* ACL: ``{principal: {resource: ["read" | "write" | "execute", ...]}}``
* templates: ``[{"target": {...}, "past": [...], "future": [...], "flexible": [...]}]``
  with patterns ``{"kind": "recv", "performative", "sender"}``,
  ``{"kind": "send", "performative", "receiver"}`` or
  ``{"kind": "action", "type", "act"}``; any field may be ``"*"``.
* manifest: ``{"functions": [...], "variables": [...]}``
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Union

from .errors import ConfigError
from .model import ACTION_KINDS, WILDCARD, Place, ProtocolNet, Transition

PERMISSIONS = ("read", "write", "execute")


@dataclass(frozen=True)
class AccessControlList:
    entries: dict[str, dict[str, frozenset[str]]] = field(default_factory=dict)

    def allows(self, principal: str, resource: str, permission: str) -> bool:
        for who in (principal, WILDCARD):
            if permission in self.entries.get(who, {}).get(resource, ()):
                return True
        return False

    @classmethod
    def from_json(cls, data: Any) -> "AccessControlList":
        if not isinstance(data, dict):
            raise ConfigError("ACL must be an object")
        entries: dict[str, dict[str, frozenset[str]]] = {}
        for principal, resources in data.items():
            if not isinstance(resources, dict):
                raise ConfigError(f"ACL entry for {principal!r} must be an object")
            entries[principal] = {}
            for resource, perms in resources.items():
                if not isinstance(perms, list) or any(p not in PERMISSIONS for p in perms):
                    raise ConfigError(f"bad permissions for {principal}/{resource}: {perms!r}")
                entries[principal][resource] = frozenset(perms)
        return cls(entries)

    def to_json(self) -> dict:
        return {
            who: {res: sorted(perms) for res, perms in sorted(rs.items())}
            for who, rs in sorted(self.entries.items())
        }


# -- patterns ----------------------------------------------------------------

def _eq(pattern_field: str, value: str) -> bool:
    return pattern_field == WILDCARD or pattern_field == value


@dataclass(frozen=True)
class RecvPattern:
    performative: str
    sender: str = WILDCARD

    def matches(self, node: Union[Place, Transition]) -> bool:
        r = getattr(node, "recv", None)
        return r is not None and _eq(self.performative, r.performative) and _eq(self.sender, r.sender)

    def to_json(self) -> dict:
        return {"kind": "recv", "performative": self.performative, "sender": self.sender}


@dataclass(frozen=True)
class SendPattern:
    performative: str
    receiver: str = WILDCARD

    def matches(self, node: Union[Place, Transition]) -> bool:
        s = node.send if isinstance(node, Transition) else None
        return s is not None and _eq(self.performative, s.performative) and _eq(self.receiver, s.receiver)

    def to_json(self) -> dict:
        return {"kind": "send", "performative": self.performative, "receiver": self.receiver}


@dataclass(frozen=True)
class ActionPattern:
    kind: str
    act: str

    def matches(self, node: Union[Place, Transition]) -> bool:
        a = node.action if isinstance(node, Transition) else None
        return a is not None and _eq(self.kind, a.kind) and _eq(self.act, a.act)

    def to_json(self) -> dict:
        return {"kind": "action", "type": self.kind, "act": self.act}


ConditionPattern = Union[RecvPattern, SendPattern, ActionPattern]


def pattern_from_json(obj: Any, where: str = "pattern") -> ConditionPattern:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError(f"{where}: expected an object with a 'kind'")
    kind = obj["kind"]
    fields = {k: v for k, v in obj.items() if k != "kind"}
    expected = {
        "recv": ("performative", "sender"),
        "send": ("performative", "receiver"),
        "action": ("type", "act"),
    }.get(kind)
    if expected is None:
        raise ConfigError(f"{where}: unknown pattern kind {kind!r}")
    extra = set(fields) - set(expected)
    if extra:
        raise ConfigError(f"{where}: unexpected field(s) {sorted(extra)}")
    if any(not isinstance(v, str) for v in fields.values()):
        raise ConfigError(f"{where}: pattern fields must be strings")
    if kind == "recv":
        return RecvPattern(fields.get("performative", WILDCARD), fields.get("sender", WILDCARD))
    if kind == "send":
        return SendPattern(fields.get("performative", WILDCARD), fields.get("receiver", WILDCARD))
    t = fields.get("type", WILDCARD)
    if t != WILDCARD and t not in ACTION_KINDS:
        raise ConfigError(f"{where}: unknown action type {t!r}")
    return ActionPattern(t, fields.get("act", WILDCARD))


def describe_pattern(p: ConditionPattern) -> str:
    if isinstance(p, RecvPattern):
        return f"recv:{p.performative}:{p.sender}"
    if isinstance(p, SendPattern):
        return f"send:{p.performative}:{p.receiver}"
    return f"action:{p.kind}:{p.act}"


@dataclass(frozen=True)
class ActionTemplate:
    target: ActionPattern
    past: tuple[ConditionPattern, ...] = ()
    future: tuple[ConditionPattern, ...] = ()
    flexible: tuple[ConditionPattern, ...] = ()
    name: Optional[str] = None

    def __post_init__(self):
        groups = [set(self.past), set(self.future), set(self.flexible)]
        for i in range(3):
            for j in range(i + 1, 3):
                if groups[i] & groups[j]:
                    raise ConfigError(f"template {self.name or self.target}: overlapping precondition sets")

    @classmethod
    def from_json(cls, obj: Any) -> "ActionTemplate":
        if not isinstance(obj, dict) or "target" not in obj:
            raise ConfigError("template: expected an object with a 'target'")
        extra = set(obj) - {"name", "target", "past", "future", "flexible"}
        if extra:
            raise ConfigError(f"template: unexpected field(s) {sorted(extra)}")
        target = pattern_from_json(obj["target"], "template.target")
        if not isinstance(target, ActionPattern):
            raise ConfigError("template.target must be an action pattern")

        def group(key):
            items = obj.get(key, [])
            if not isinstance(items, list):
                raise ConfigError(f"template.{key} must be a list")
            return tuple(pattern_from_json(x, f"template.{key}[{i}]") for i, x in enumerate(items))

        return cls(target, group("past"), group("future"), group("flexible"), obj.get("name"))

    def to_json(self) -> dict:
        out: dict[str, Any] = {}
        if self.name is not None:
            out["name"] = self.name
        out["target"] = self.target.to_json()
        out["past"] = [p.to_json() for p in self.past]
        out["future"] = [p.to_json() for p in self.future]
        out["flexible"] = [p.to_json() for p in self.flexible]
        return out


def templates_from_json(data: Any) -> list[ActionTemplate]:
    if not isinstance(data, list):
        raise ConfigError("templates file must be a list")
    return [ActionTemplate.from_json(t) for t in data]


@dataclass(frozen=True)
class Manifest:
    """Names of the functions and variables an agent exposes."""

    functions: frozenset[str] = frozenset()
    variables: frozenset[str] = frozenset()

    @classmethod
    def from_json(cls, data: Any) -> "Manifest":
        if not isinstance(data, dict) or set(data) - {"functions", "variables"}:
            raise ConfigError("manifest must be an object with 'functions' and 'variables'")
        fs, vs = data.get("functions", []), data.get("variables", [])
        if not isinstance(fs, list) or not isinstance(vs, list):
            raise ConfigError("manifest entries must be lists")
        return cls(frozenset(fs), frozenset(vs))


@dataclass(frozen=True)
class AnalysisContext:
    manifest: Manifest = field(default_factory=Manifest)
    acl: AccessControlList = field(default_factory=AccessControlList)
    templates: tuple[ActionTemplate, ...] = ()
    author: str = "*"


def matching_nodes(net: ProtocolNet, pattern: ConditionPattern) -> set[str]:
    nodes = list(net.places) + list(net.transitions)
    return {n.id for n in nodes if pattern.matches(n)}
