"""One agent: mailbox, protocol library, bootstrap and guarantee handling.

An agent holds conversations keyed by conversation id. It *adopts* a
protocol fetched from another agent (after analysis) or *plays* one of its
own protocols when an unsolicited message matches that protocol's initial
Recv place. :meth:`Agent.step` processes at most one inbound envelope and
at most one firing, so a scheduler can interleave agents deterministically.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from . import messages as sysmsg
from .analyzer import AnalysisReport, analyze, malformed_report
from .errors import NoActiveProtocol, ProtonetError, UnboundRole
from .executor import (
    ActionRun, ExecState, HostRegistry, Outbound, Status, deliver_message, enabled_transitions,
    fire, guarantee_envelope, init_execution, matching_place, outstanding_guarantees,
    request_guarantee, resolve_guarantee, terminate,
)
from .graph import reachable
from .messages import Descriptor
from .model import WILDCARD, MessageEnvelope, ProtocolNet
from .policy import AccessControlList, ActionTemplate, AnalysisContext, Manifest
from .trace import Trace
from .wire import parse_protocol, serialize_protocol

log = logging.getLogger(__name__)

ADOPTER = "adopter"
PLAYER = "player"


@dataclass
class AgentConfig:
    name: str
    protocols: dict[str, ProtocolNet] = field(default_factory=dict)
    acl: AccessControlList = field(default_factory=AccessControlList)
    templates: tuple[ActionTemplate, ...] = ()
    registry: HostRegistry = field(default_factory=HostRegistry)
    # own protocols started on an unsolicited message; value = extra role bindings
    plays: dict[str, dict[str, str]] = field(default_factory=dict)

    def manifest(self) -> Manifest:
        return self.registry.manifest()


@dataclass
class Adoption:
    adopted: bool
    report: AnalysisReport
    state: Optional[ExecState] = None
    reason: str = ""


@dataclass
class Conversation:
    id: str
    side: str
    partner: str
    protocol: str
    bindings: dict[str, str] = field(default_factory=dict)
    document: Optional[str] = None
    report: Optional[AnalysisReport] = None
    state: Optional[ExecState] = None
    outcome: Optional[str] = None  # set once the conversation is over
    buffer: deque = field(default_factory=deque)
    promised: list[Descriptor] = field(default_factory=list)
    seen: list[tuple[str, str]] = field(default_factory=list)  # (performative, sender) delivered


def _marking_json(state: ExecState) -> dict:
    return {p: state.marking[p] for p in sorted(state.marking)}


class Agent:
    def __init__(self, config: AgentConfig, trace: Optional[Trace] = None):
        self.config = config
        self.name = config.name
        self.trace = trace if trace is not None else Trace()
        self.mailbox: deque[MessageEnvelope] = deque()
        self.conversations: dict[str, Conversation] = {}
        self._own_reports: dict[str, AnalysisReport] = {}

    # -- analysis contexts --------------------------------------------------

    def context(self, author: str) -> AnalysisContext:
        return AnalysisContext(self.config.manifest(), self.config.acl, tuple(self.config.templates), author)

    def own_report(self, name: str) -> AnalysisReport:
        """Analysis of one of the agent's own protocols; privacy checks use the agent itself as author."""
        if name not in self._own_reports:
            net = self.config.protocols[name]
            m = self.config.manifest()
            full = {r: frozenset(("read", "write", "execute")) for r in m.functions | m.variables}
            acl = AccessControlList({**self.config.acl.entries, self.name: full})
            ctx = AnalysisContext(m, acl, tuple(self.config.templates), self.name)
            self._own_reports[name] = analyze(net, ctx)
        return self._own_reports[name]

    # -- trace helpers ------------------------------------------------------

    def _emit(self, env: MessageEnvelope, out: list[MessageEnvelope]) -> None:
        self.trace.record(
            "emit", agent=self.name, conversation=env.conversation, performative=env.performative,
            sender=env.sender, receiver=env.receiver, content=env.content,
        )
        out.append(env)

    def _status(self, conv: Conversation, status: str, reason: str = "") -> None:
        rec = dict(agent=self.name, conversation=conv.id, side=conv.side, status=status)
        if reason:
            rec["reason"] = reason
        if conv.state is not None:
            rec.update(marking=_marking_json(conv.state), armed=sorted(conv.state.armed))
        self.trace.record("status", **rec)

    def _set_state(self, conv: Conversation, state: ExecState) -> None:
        before = conv.state.status if conv.state is not None else None
        conv.state = state
        if before is Status.RUNNING and state.status is not Status.RUNNING:
            conv.outcome = state.status.value
            self._status(conv, state.status.value, state.reason)
            self._check_promises(conv)

    def _check_promises(self, conv: Conversation) -> None:
        for d in conv.promised:
            if (d.performative, d.sender) not in conv.seen:
                log.warning("%s: broken promise in %s: %s never sent %s", self.name, conv.id, d.sender, d.performative)

    # -- bootstrap ----------------------------------------------------------

    def request_protocol(
        self, provider: str, name: str, conversation: str, bindings: Optional[dict[str, str]] = None
    ) -> MessageEnvelope:
        conv = Conversation(conversation, ADOPTER, provider, name, dict(bindings or {}))
        self.conversations[conversation] = conv
        self._status(conv, "requested")
        out: list[MessageEnvelope] = []
        self._emit(sysmsg.envelope(sysmsg.RequestProtocol(name), self.name, provider, conversation), out)
        return out[0]

    def handle_protocol_request(self, env: MessageEnvelope) -> MessageEnvelope:
        """Serve a protocol document. Open to every requester; mutates nothing."""
        req = sysmsg.decode(env)
        net = self.config.protocols.get(req.name)
        if net is None:
            reply = sysmsg.ProtocolNotFound(req.name)
        else:
            reply = sysmsg.ReplyProtocol(req.name, serialize_protocol(net).decode("utf-8"))
        log.info("%s: served %r to %s (%s)", self.name, req.name, env.sender, type(reply).__name__)
        return sysmsg.envelope(reply, self.name, env.sender, env.conversation)

    def adopt_protocol(
        self, doc, author: str, conversation: str = "conversation", bindings: Optional[dict[str, str]] = None
    ) -> Adoption:
        """Parse, analyse and (if accepted) start executing a received protocol."""
        try:
            net = parse_protocol(doc)
        except ProtonetError as e:
            log.info("%s: malformed protocol from %s: %s", self.name, author, e)
            return Adoption(False, malformed_report(), reason="malformed")
        report = analyze(net, self.context(author))
        if not report.verdict.accepted:
            return Adoption(False, report, reason=report.verdict.reason)
        roles = dict(bindings or {})
        unbound = sorted(r for r in net.peers if r not in roles)
        if len(unbound) == 1:
            roles[unbound[0]] = author
        try:
            state = init_execution(net, report, self.config.registry, self.name, roles, conversation)
        except UnboundRole as e:
            return Adoption(False, report, reason=str(e))
        return Adoption(True, report, state)

    def adopt(self, conversation: str) -> Adoption:
        conv = self.conversations.get(conversation)
        if conv is None or conv.side != ADOPTER:
            raise NoActiveProtocol(conversation)
        if conv.outcome is not None:
            return Adoption(False, conv.report or malformed_report(conv.outcome), reason=conv.outcome)
        if conv.document is None:
            conv.outcome = "rejected"
            self._status(conv, "rejected", "no protocol received")
            return Adoption(False, malformed_report("no protocol received"), reason="no protocol received")
        result = self.adopt_protocol(conv.document, conv.partner, conv.id, conv.bindings)
        conv.report = result.report
        if not result.adopted:
            conv.outcome = "rejected"
            self._status(conv, "rejected", result.reason)
            return result
        conv.state = result.state
        self._status(conv, "adopted")
        if not result.state.running:
            conv.outcome = result.state.status.value
            self._status(conv, conv.outcome, result.state.reason)
        return result

    # -- guarantees ---------------------------------------------------------

    def can_guarantee(self, descriptor: Descriptor, conversation: str) -> bool:
        """Whether our own side can still send the described message."""
        conv = self.conversations.get(conversation)
        if conv is None or conv.state is None or not conv.state.running:
            raise NoActiveProtocol(conversation)
        state = conv.state
        if descriptor.sender != self.name:
            return False
        roots = [p for p, n in state.marking.items() if n > 0] + sorted(state.armed)
        ahead = reachable(state.net.succ, roots)
        for t in state.net.transitions:
            s = t.send
            if s is None or s.performative != descriptor.performative:
                continue
            if state.agent_for(s.receiver) != descriptor.receiver:
                continue
            if state.report.mark(t.id).condemned:
                continue
            if t.id in ahead:
                return True
        return False

    def _answer_guarantee(self, env: MessageEnvelope, out: list[MessageEnvelope]) -> None:
        req = sysmsg.decode(env)
        try:
            ok = self.can_guarantee(req.descriptor, env.conversation)
        except NoActiveProtocol:
            ok = False
        reply = sysmsg.GuaranteeGrant(req.descriptor) if ok else sysmsg.GuaranteeRefuse(req.descriptor)
        self.trace.record(
            "guarantee", agent=self.name, conversation=env.conversation,
            event="grant-sent" if ok else "refuse-sent", descriptor=req.descriptor.to_json(),
        )
        self._emit(sysmsg.envelope(reply, self.name, env.sender, env.conversation), out)

    def _guarantee_answer(self, env: MessageEnvelope, out: list[MessageEnvelope]) -> None:
        conv = self.conversations.get(env.conversation)
        if conv is None or conv.state is None or conv.state.pending_guarantee is None:
            log.warning("%s: unexpected %s in %s", self.name, env.performative, env.conversation)
            return
        granted = env.performative == sysmsg.SYS_GUARANTEE_GRANT
        tid = conv.state.pending_guarantee[0]
        desc = sysmsg.decode(env).descriptor
        self.trace.record(
            "guarantee", agent=self.name, conversation=conv.id, event="granted" if granted else "refused",
            transition=tid, descriptor=desc.to_json(),
        )
        if granted:
            conv.promised.append(desc)
        state, effects = resolve_guarantee(conv.state, granted)
        for eff in effects:
            self._emit(eff.envelope, out)
        self._set_state(conv, state)

    # -- inbound ------------------------------------------------------------

    def _deliver(self, conv: Conversation, env: MessageEnvelope, outcome: str) -> bool:
        place = matching_place(conv.state, env)
        state, matched = deliver_message(conv.state, env)
        rec = dict(
            agent=self.name, conversation=conv.id, performative=env.performative, sender=env.sender,
            content=env.content,
        )
        if matched:
            conv.seen.append((env.performative, env.sender))
            rec.update(outcome=outcome, place=place, label=state.net.place_map[place].recv.r_label,
                       marking=_marking_json(state), armed=sorted(state.armed))
            self.trace.record("deliver", **rec)
            self._set_state(conv, state)
        return matched

    def _spawn(self, env: MessageEnvelope) -> Optional[Conversation]:
        for name in sorted(self.config.plays):
            net = self.config.protocols[name]
            init = net.place_map[net.initial]
            r = init.recv
            if r is None or r.performative != env.performative:
                continue
            bindings = dict(self.config.plays[name])
            if r.sender != WILDCARD:
                bindings[r.sender] = env.sender
            elif len(net.peers) == 1:
                bindings[next(iter(net.peers))] = env.sender
            report = self.own_report(name)
            try:
                state = init_execution(net, report, self.config.registry, self.name, bindings, env.conversation)
            except ProtonetError as e:
                log.warning("%s: cannot play %r: %s", self.name, name, e)
                continue
            if matching_place(state, env) is None:
                continue
            conv = Conversation(env.conversation, PLAYER, env.sender, name, bindings, report=report, state=state)
            self.conversations[conv.id] = conv
            self._status(conv, "started", name)
            return conv
        return None

    def _handle_message(self, env: MessageEnvelope, out: list[MessageEnvelope]) -> None:
        rec = dict(agent=self.name, conversation=env.conversation, performative=env.performative,
                   sender=env.sender, content=env.content)
        conv = self.conversations.get(env.conversation)
        if conv is None:
            conv = self._spawn(env)
            if conv is None:
                log.warning("%s: dropped %s from %s: no conversation", self.name, env.performative, env.sender)
                self.trace.record("deliver", **rec, outcome="dropped")
                return
        if conv.state is None or not conv.state.running:
            log.warning("%s: dropped %s in inactive conversation %s", self.name, env.performative, conv.id)
            self.trace.record("deliver", **rec, outcome="dropped")
            return
        if not self._deliver(conv, env, "matched"):
            conv.buffer.append(env)
            self.trace.record("deliver", **rec, outcome="buffered")

    def _rematch(self, conv: Conversation) -> None:
        """Give each buffered message its single re-match attempt."""
        pending, conv.buffer = list(conv.buffer), deque()
        for env in pending:
            if conv.state.running and self._deliver(conv, env, "rematched"):
                continue
            log.warning("%s: dropped unmatched %s from %s", self.name, env.performative, env.sender)
            self.trace.record(
                "deliver", agent=self.name, conversation=conv.id, performative=env.performative,
                sender=env.sender, content=env.content, outcome="dropped",
            )

    def _handle(self, env: MessageEnvelope, out: list[MessageEnvelope]) -> None:
        p = env.performative
        if p == sysmsg.SYS_REQUEST:
            self._emit(self.handle_protocol_request(env), out)
        elif p == sysmsg.SYS_REPLY:
            conv = self.conversations.get(env.conversation)
            if conv is None or conv.side != ADOPTER:
                log.warning("%s: unsolicited protocol reply in %s", self.name, env.conversation)
                return
            msg = sysmsg.decode(env)
            if isinstance(msg, sysmsg.ProtocolNotFound):
                conv.outcome = "rejected"
                self._status(conv, "rejected", f"ProtocolNotFound({msg.name})")
            else:
                conv.document = msg.document
        elif p == sysmsg.SYS_GUARANTEE_REQ:
            self._answer_guarantee(env, out)
        elif p in (sysmsg.SYS_GUARANTEE_GRANT, sysmsg.SYS_GUARANTEE_REFUSE):
            self._guarantee_answer(env, out)
        elif p == sysmsg.SYS_TERMINATE:
            conv = self.conversations.get(env.conversation)
            if conv is not None and conv.state is not None:
                reason = f"terminated by {env.sender}: {sysmsg.decode(env).reason}"
                self._set_state(conv, terminate(conv.state, reason))
        else:
            self._handle_message(env, out)

    # -- stepping -----------------------------------------------------------

    def _next_action(self):
        """``(conversation, kind, transition)`` for the next firing or guarantee request."""
        for cid in sorted(self.conversations):
            conv = self.conversations[cid]
            st = conv.state
            if st is None or not st.running:
                continue
            for tid in enabled_transitions(st):
                if outstanding_guarantees(st, tid):
                    if st.pending_guarantee is None:
                        return conv, "request", tid
                    continue
                return conv, "fire", tid
        return None

    @property
    def quiescent(self) -> bool:
        return not self.mailbox and self._next_action() is None

    def step(self) -> list[MessageEnvelope]:
        out: list[MessageEnvelope] = []
        if self.mailbox:
            self._handle(self.mailbox.popleft(), out)
        action = self._next_action()
        if action is None:
            return out
        conv, kind, tid = action
        if kind == "request":
            state, req = request_guarantee(conv.state, tid)
            conv.state = state
            self.trace.record(
                "guarantee", agent=self.name, conversation=conv.id, event="request", transition=tid,
                descriptor=req.descriptor.to_json(),
            )
            self._emit(guarantee_envelope(state, req), out)
            return out

        before = conv.state
        state, effects = fire(before, tid)
        if state.status is Status.FAILED:
            self._set_state(conv, state)
            return out
        effect = None
        t = state.net.transition_map[tid]
        for eff in effects:
            if isinstance(eff, ActionRun):
                effect = {"action": eff.label, "type": eff.kind, "act": eff.act, "value": eff.value}
        if t.send is not None:
            effect = {"send": t.send.s_label}
        self.trace.record(
            "fire", agent=self.name, conversation=conv.id, transition=tid,
            mark=before.report.mark(tid).kind.value,
            consumed=list(state.net.pred[tid]),
            produced=[p for p in state.net.succ[tid] if not state.net.place_map[p].is_recv],
            armed=[p for p in state.net.succ[tid] if state.net.place_map[p].is_recv],
            effect=effect, marking=_marking_json(state),
        )
        for eff in effects:
            if isinstance(eff, Outbound):
                self._emit(eff.envelope, out)
        self._set_state(conv, state)
        if conv.buffer and state.armed - before.armed:
            self._rematch(conv)
        return out


__all__ = ["AgentConfig", "Agent", "Adoption", "Conversation", "ADOPTER", "PLAYER"]
