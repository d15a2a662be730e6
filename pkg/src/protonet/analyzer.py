"""Static analysis of a received protocol.

The pipeline (:func:`analyze`) runs structural validation, then four
marking passes (semantics, loops, privacy, action templates), merges their
marks and propagates them to a fixpoint before deciding whether the
protocol can be adopted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Optional

from .graph import group_dominates, nodes_on_cycles, reachable
from .model import ProtocolNet
from .policy import (
    AccessControlList, ActionTemplate, AnalysisContext, ConditionPattern, Manifest, RecvPattern,
    matching_nodes,
)
from .structure import Violation, validate_structure


class MarkKind(str, Enum):
    SAFE = "safe"
    UNSAFE = "unsafe"
    UNUSABLE = "unusable"
    GUARANTEE = "guarantee-required"


@dataclass(frozen=True)
class SafetyMark:
    kind: MarkKind
    reason: str = ""
    obligations: tuple[RecvPattern, ...] = ()

    @property
    def condemned(self) -> bool:
        """Unsafe or unusable: the executor must never fire it."""
        return self.kind in (MarkKind.UNSAFE, MarkKind.UNUSABLE)

    def to_json(self) -> dict:
        out: dict = {"mark": self.kind.value}
        if self.reason:
            out["reason"] = self.reason
        if self.obligations:
            out["obligations"] = [p.to_json() for p in self.obligations]
        return out


SAFE = SafetyMark(MarkKind.SAFE)


def unsafe(reason: str) -> SafetyMark:
    return SafetyMark(MarkKind.UNSAFE, reason)


def unusable(reason: str = "") -> SafetyMark:
    return SafetyMark(MarkKind.UNUSABLE, reason)


def guarantee(*patterns: RecvPattern) -> SafetyMark:
    return SafetyMark(MarkKind.GUARANTEE, "", tuple(patterns))


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: str = ""

    def to_json(self) -> dict:
        if self.accepted:
            return {"status": "accepted"}
        return {"status": "rejected", "reason": self.reason}


ACCEPTED = Verdict(True)


def rejected(reason: str) -> Verdict:
    return Verdict(False, reason)


@dataclass(frozen=True)
class AnalysisReport:
    marks: Mapping[str, SafetyMark]
    verdict: Verdict
    obligations: tuple[tuple[str, RecvPattern], ...] = ()
    violations: tuple[Violation, ...] = ()

    def mark(self, node: str) -> SafetyMark:
        return self.marks.get(node, SAFE)

    def to_json(self) -> dict:
        return {
            "marks": {n: self.marks[n].to_json() for n in sorted(self.marks)},
            "verdict": self.verdict.to_json(),
            "obligations": [{"action": a, "pattern": p.to_json()} for a, p in self.obligations],
            "violations": [v.render() for v in self.violations],
        }

    def render(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"


# -- passes ------------------------------------------------------------------

def check_semantics(net: ProtocolNet, manifest: Manifest) -> dict[str, SafetyMark]:
    """Unknown or mis-typed Act names, and sends/guards that depend on them."""
    out: dict[str, SafetyMark] = {}
    for t in net.transitions:
        a = t.action
        if a is None:
            continue
        if a.kind == "execute":
            if a.act in manifest.functions:
                continue
            out[t.id] = unsafe("kind mismatch" if a.act in manifest.variables else "unknown function")
        else:
            if a.act in manifest.variables:
                continue
            out[t.id] = unsafe("kind mismatch" if a.act in manifest.functions else "unknown variable")

    for t in net.transitions:
        if t.id in out:
            continue
        for kind, label in sorted(t.references()):
            if net.node_for_ref(kind, label) in out:
                out[t.id] = unsafe("references unsafe node")
                break
    return out


def detect_loops(net: ProtocolNet) -> dict[str, SafetyMark]:
    """Mark nodes on cycles that pass through no Recv place and no guarded transition."""
    free = {p.id for p in net.places if not p.is_recv}
    free |= {t.id for t in net.transitions if t.guard is None}
    sub = {n: [m for m in net.succ[n] if m in free] for n in free}
    return {n: unsafe("unbounded loop") for n in nodes_on_cycles(sub)}


def check_privacy(net: ProtocolNet, acl: AccessControlList, author: str) -> dict[str, SafetyMark]:
    out = {}
    for t in net.transitions:
        a = t.action
        if a is not None and not acl.allows(author, a.act, a.kind):
            out[t.id] = unsafe("privacy")
    return out


def past_satisfied(net: ProtocolNet, action: str, pattern: ConditionPattern) -> bool:
    """Every path initial -> *action* passes through a node matching *pattern*."""
    return group_dominates(net.succ, net.initial, action, matching_nodes(net, pattern))


_EXIT = "\x00exit"


def future_satisfied(net: ProtocolNet, action: str, pattern: ConditionPattern) -> bool:
    """Every path from *action* to a reachable final passes through a match.

    Vacuously true when no final place is reachable from *action*.
    """
    reach = reachable(net.succ, net.succ[action]) | {action}
    finals = sorted(f for f in net.finals if f in reach)
    if not finals:
        return True
    rev: dict[str, list[str]] = {n: [] for n in reach}
    for n in reach:
        for m in net.succ[n]:
            rev[m].append(n)
    rev[_EXIT] = finals
    group = matching_nodes(net, pattern) & reach
    return group_dominates(rev, _EXIT, action, group)


def check_templates(net: ProtocolNet, templates: Iterable[ActionTemplate]) -> dict[str, SafetyMark]:
    templates = list(templates)
    out: dict[str, SafetyMark] = {}
    for t in net.transitions:
        if t.action is None:
            continue
        reason: Optional[str] = None
        needed: list[RecvPattern] = []

        def missing_future(p: ConditionPattern):
            nonlocal reason
            if isinstance(p, RecvPattern):
                if p not in needed:
                    needed.append(p)
            elif reason is None:
                reason = "missing future precondition"

        for tpl in templates:
            if not tpl.target.matches(t):
                continue
            for p in tpl.past:
                if reason is None and not past_satisfied(net, t.id, p):
                    reason = "missing past precondition"
            for p in tpl.future:
                if not future_satisfied(net, t.id, p):
                    missing_future(p)
            for p in tpl.flexible:
                if not (past_satisfied(net, t.id, p) or future_satisfied(net, t.id, p)):
                    missing_future(p)
        if reason is not None:
            out[t.id] = unsafe(reason)
        elif needed:
            out[t.id] = guarantee(*needed)
    return out


# -- propagation -------------------------------------------------------------

def propagate_safety(net: ProtocolNet, base: Mapping[str, SafetyMark]) -> dict[str, SafetyMark]:
    """Least fixpoint of the unsafe/unusable rules, seeded with *base*.

    Unsafe: a transition with an unsafe output place; a non-final place
    whose outgoing transitions (at least one) are all unsafe.
    Unusable: a transition with an unsafe/unusable input place; a
    non-initial place all of whose feeders are unsafe/unusable (places fed
    only by messages are exempt). Unsafe wins over unusable.
    """
    bad = {n for n, m in base.items() if m.kind is MarkKind.UNSAFE}
    changed = True
    while changed:
        changed = False
        for t in net.transitions:
            if t.id not in bad and any(p in bad for p in net.succ[t.id]):
                bad.add(t.id)
                changed = True
        for p in net.places:
            outs = net.succ[p.id]
            if p.id not in bad and p.id not in net.finals and outs and all(t in bad for t in outs):
                bad.add(p.id)
                changed = True

    flagged = bad | {n for n, m in base.items() if m.kind is MarkKind.UNUSABLE}
    changed = True
    while changed:
        changed = False
        for t in net.transitions:
            if t.id not in flagged and any(p in flagged for p in net.pred[t.id]):
                flagged.add(t.id)
                changed = True
        for p in net.places:
            if p.id == net.initial or p.id in flagged:
                continue
            feeders = net.pred[p.id]
            if p.is_recv and not feeders:
                continue
            if all(t in flagged for t in feeders):
                flagged.add(p.id)
                changed = True

    out: dict[str, SafetyMark] = {}
    for n in net.node_ids:
        b = base.get(n)
        if n in bad:
            if b is not None and b.kind is MarkKind.UNSAFE:
                out[n] = b
            elif net.is_transition(n):
                first = min(p for p in net.succ[n] if p in bad)
                out[n] = unsafe(f"leads to unsafe {first}")
            else:
                out[n] = unsafe("no safe continuation")
        elif n in flagged:
            out[n] = b if b is not None and b.kind is MarkKind.UNUSABLE else unusable("unreachable avoiding unsafe nodes")
        elif b is not None and b.kind is MarkKind.GUARANTEE:
            out[n] = b
        else:
            out[n] = SAFE
    return out


def merge_marks(*passes: Mapping[str, SafetyMark]) -> dict[str, SafetyMark]:
    """Combine pass results: the first unsafe mark wins, guarantee obligations union."""
    out: dict[str, SafetyMark] = {}
    for marks in passes:
        for n, m in marks.items():
            old = out.get(n)
            if old is None or (m.kind is MarkKind.UNSAFE and old.kind is not MarkKind.UNSAFE):
                out[n] = m
            elif old.kind is MarkKind.GUARANTEE and m.kind is MarkKind.GUARANTEE:
                extra = tuple(p for p in m.obligations if p not in old.obligations)
                out[n] = guarantee(*(old.obligations + extra))
    return out


def verdict_for(net: ProtocolNet, marks: Mapping[str, SafetyMark]) -> Verdict:
    def m(n):
        return marks.get(n, SAFE)

    if m(net.initial).condemned:
        return rejected(f"initial {m(net.initial).kind.value}")
    if all(m(f).condemned for f in net.finals):
        return rejected("all finals unsafe or unusable")
    if all(m(n).kind is MarkKind.UNSAFE for n in net.node_ids):
        return rejected("entire net unsafe")
    return ACCEPTED


def analyze(net: ProtocolNet, ctx: AnalysisContext) -> AnalysisReport:
    violations = validate_structure(net)
    if violations:
        return AnalysisReport({}, rejected("structural"), (), tuple(violations))
    base = merge_marks(
        check_semantics(net, ctx.manifest),
        detect_loops(net),
        check_privacy(net, ctx.acl, ctx.author),
        check_templates(net, ctx.templates),
    )
    marks = propagate_safety(net, base)
    obligations = tuple(
        (n, p) for n in sorted(marks) if marks[n].kind is MarkKind.GUARANTEE for p in marks[n].obligations
    )
    return AnalysisReport(marks, verdict_for(net, marks), obligations)


def malformed_report(detail: str = "malformed") -> AnalysisReport:
    return AnalysisReport({}, rejected(detail))


__all__ = [
    "MarkKind", "SafetyMark", "SAFE", "unsafe", "unusable", "guarantee", "Verdict", "ACCEPTED",
    "rejected", "AnalysisReport", "check_semantics", "detect_loops", "check_privacy",
    "past_satisfied", "future_satisfied", "check_templates", "propagate_safety", "merge_marks",
    "verdict_for", "analyze", "malformed_report",
]
