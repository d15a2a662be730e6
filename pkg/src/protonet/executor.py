"""Token-game execution of an accepted protocol.

Execution states are immutable; every operation returns a new
:class:`ExecState`. Recv places work in two steps: a structural token from
a predecessor transition *arms* the place, and a matching message then puts
the consumable token on it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Mapping, Optional, Union

from .analyzer import AnalysisReport, MarkKind
from .errors import (
    GuaranteeNotResolved, HostFunctionFailure, NoPendingGuarantee, NotEnabled, NotGuaranteeGated,
    RejectedProtocol, UnboundReference, UnboundRole,
)
from .messages import Descriptor, GuaranteeRequest, Terminate, envelope
from .model import WILDCARD, FromRecv, Literal, MessageEnvelope, ProtocolNet, ResultsOf
from .policy import Manifest, RecvPattern
from .predicates import evaluate_pred

log = logging.getLogger(__name__)


class Status(str, Enum):
    RUNNING = "running"
    COMPLETED = "completed"
    TERMINATED = "terminated"
    FAILED = "failed"


@dataclass
class HostRegistry:
    """Functions (``str -> str``) and variable cells an agent exposes to protocols."""

    functions: dict[str, Callable[[str], str]] = field(default_factory=dict)
    variables: dict[str, str] = field(default_factory=dict)

    def manifest(self) -> Manifest:
        return Manifest(frozenset(self.functions), frozenset(self.variables))


@dataclass(frozen=True)
class DataStore:
    recv_values: Mapping[str, str] = field(default_factory=dict)
    results: Mapping[str, str] = field(default_factory=dict)
    vars: Mapping[str, str] = field(default_factory=dict)

    def bound(self, kind: str, label: str) -> bool:
        return label in (self.recv_values if kind == "recv" else self.results)


@dataclass(frozen=True)
class Outbound:
    envelope: MessageEnvelope


@dataclass(frozen=True)
class ActionRun:
    label: str
    kind: str
    act: str
    value: str


Effect = Union[Outbound, ActionRun]


@dataclass(frozen=True)
class AlreadyResolved:
    """Returned by :func:`request_guarantee` when no new request is needed."""

    pending: bool


@dataclass(frozen=True)
class ExecState:
    net: ProtocolNet
    report: AnalysisReport
    registry: HostRegistry
    self_name: str
    bindings: Mapping[str, str]
    conversation: str
    marking: Mapping[str, int] = field(default_factory=dict)
    store: DataStore = field(default_factory=DataStore)
    armed: frozenset[str] = frozenset()
    status: Status = Status.RUNNING
    reason: str = ""
    pending_guarantee: Optional[tuple[str, RecvPattern]] = None
    granted: frozenset[tuple[str, RecvPattern]] = frozenset()

    def tokens(self, place: str) -> int:
        return self.marking.get(place, 0)

    @property
    def running(self) -> bool:
        return self.status is Status.RUNNING

    def agent_for(self, role: str) -> Optional[str]:
        if role == self.net.role:
            return self.self_name
        return self.bindings.get(role)


def _completed(state: ExecState) -> ExecState:
    if state.running and any(state.tokens(f) > 0 for f in state.net.finals):
        return replace(state, status=Status.COMPLETED)
    return state


def init_execution(
    net: ProtocolNet,
    report: AnalysisReport,
    registry: HostRegistry,
    self_name: str,
    peer_bindings: Mapping[str, str],
    conversation: str = "conversation",
) -> ExecState:
    if not report.verdict.accepted:
        raise RejectedProtocol(report.verdict.reason)
    for role in sorted(net.peers):
        if role not in peer_bindings:
            raise UnboundRole(role)
    state = ExecState(
        net=net,
        report=report,
        registry=registry,
        self_name=self_name,
        bindings=dict(peer_bindings),
        conversation=conversation,
        store=DataStore(vars=dict(registry.variables)),
    )
    if net.place_map[net.initial].is_recv:
        return replace(state, armed=frozenset({net.initial}))
    return _completed(replace(state, marking={net.initial: 1}))


def _recv_matches(state: ExecState, place: str, env: MessageEnvelope) -> bool:
    r = state.net.place_map[place].recv
    if r.performative != env.performative:
        return False
    if r.sender != WILDCARD and state.bindings.get(r.sender) != env.sender:
        return False
    return not isinstance(r.content, Literal) or r.content.value == env.content


def matching_place(state: ExecState, env: MessageEnvelope) -> Optional[str]:
    for p in sorted(state.armed):
        if _recv_matches(state, p, env):
            return p
    return None


def deliver_message(state: ExecState, env: MessageEnvelope) -> tuple[ExecState, bool]:
    """Put a token on the first armed Recv place (by id) that *env* matches."""
    if not state.running:
        return state, False
    p = matching_place(state, env)
    if p is None:
        return state, False
    label = state.net.place_map[p].recv.r_label
    marking = dict(state.marking)
    marking[p] = marking.get(p, 0) + 1
    store = replace(state.store, recv_values={**state.store.recv_values, label: env.content})
    new = replace(state, marking=marking, armed=state.armed - {p}, store=store)
    return _completed(new), True


def _is_enabled(state: ExecState, tid: str) -> bool:
    net = state.net
    t = net.transition_map[tid]
    inputs = net.pred[tid]
    if not inputs or any(state.tokens(p) < 1 for p in inputs):
        return False
    if state.report.mark(tid).condemned:
        return False
    if any(not state.store.bound(k, lab) for k, lab in t.references()):
        return False
    return t.guard is None or evaluate_pred(t.guard, state.store)


def enabled_transitions(state: ExecState) -> list[str]:
    """Fireable transitions in id order, ignoring the guarantee gate."""
    if not state.running:
        return []
    return [t.id for t in state.net.transitions if _is_enabled(state, t.id)]


def outstanding_guarantees(state: ExecState, tid: str) -> list[RecvPattern]:
    mark = state.report.mark(tid)
    if mark.kind is not MarkKind.GUARANTEE:
        return []
    return [p for p in mark.obligations if (tid, p) not in state.granted]


def _resolve_send_content(state: ExecState, content) -> str:
    if isinstance(content, Literal):
        return content.value
    if isinstance(content, ResultsOf):
        if content.act_label not in state.store.results:
            raise UnboundReference(content.act_label)
        return state.store.results[content.act_label]
    return ""


def _resolve_action_content(state: ExecState, content) -> str:
    if isinstance(content, Literal):
        return content.value
    if isinstance(content, FromRecv):
        if content.r_label not in state.store.recv_values:
            raise UnboundReference(content.r_label)
        return state.store.recv_values[content.r_label]
    return ""


def fire(state: ExecState, tid: str) -> tuple[ExecState, list[Effect]]:
    """Fire *tid*: consume inputs, run its effect, produce outputs / arm Recv outputs.

    A failing host function leaves the marking untouched and returns a
    ``FAILED`` state instead of raising.
    """
    if tid not in enabled_transitions(state):
        raise NotEnabled(f"{tid} is not enabled")
    if outstanding_guarantees(state, tid):
        raise GuaranteeNotResolved(tid)

    net = state.net
    t = net.transition_map[tid]
    results = dict(state.store.results)
    variables = dict(state.store.vars)
    effects: list[Effect] = []

    try:
        if t.send is not None:
            s = t.send
            receiver = state.agent_for(s.receiver)
            if receiver is None:
                raise HostFunctionFailure(s.s_label, f"cannot resolve receiver {s.receiver!r}")
            body = _resolve_send_content(state, s.content)
            env = MessageEnvelope(s.performative, state.self_name, receiver, state.conversation, body)
            effects.append(Outbound(env))
        elif t.action is not None:
            a = t.action
            arg = _resolve_action_content(state, a.content)
            if a.kind == "execute":
                fn = state.registry.functions.get(a.act)
                if fn is None:
                    raise HostFunctionFailure(a.act, "no such function")
                try:
                    value = fn(arg)
                except Exception as e:  # host code is arbitrary
                    raise HostFunctionFailure(a.act, str(e) or type(e).__name__) from e
                if not isinstance(value, str):
                    raise HostFunctionFailure(a.act, f"returned {type(value).__name__}, expected str")
                results[a.act_label] = value
            elif a.kind == "read":
                if a.act not in variables:
                    raise HostFunctionFailure(a.act, "no such variable")
                value = variables[a.act]
                results[a.act_label] = value
            else:
                if a.act not in variables:
                    raise HostFunctionFailure(a.act, "no such variable")
                value = arg
                variables[a.act] = arg
            effects.append(ActionRun(a.act_label, a.kind, a.act, value))
    except HostFunctionFailure as e:
        log.warning("%s: transition %s failed: %s", state.self_name, tid, e)
        return replace(state, status=Status.FAILED, reason=f"HostFunctionFailure({e})"), []

    marking = dict(state.marking)
    for p in net.pred[tid]:
        marking[p] -= 1
        if marking[p] == 0:
            del marking[p]
    armed = set(state.armed)
    for p in net.succ[tid]:
        if net.place_map[p].is_recv:
            armed.add(p)
        else:
            marking[p] = marking.get(p, 0) + 1
    store = replace(state.store, results=results, vars=variables)
    new = replace(state, marking=marking, armed=frozenset(armed), store=store)
    return _completed(new), effects


def _descriptor(state: ExecState, pattern: RecvPattern) -> Descriptor:
    if pattern.sender == WILDCARD:
        agents = sorted(set(state.bindings.values()))
        if len(agents) != 1:
            raise UnboundRole(WILDCARD)
        sender = agents[0]
    else:
        sender = state.bindings.get(pattern.sender)
        if sender is None:
            raise UnboundRole(pattern.sender)
    return Descriptor(pattern.performative, sender, state.self_name)


def request_guarantee(
    state: ExecState, tid: str
) -> tuple[ExecState, Union[GuaranteeRequest, AlreadyResolved]]:
    """Ask for the next outstanding guarantee gating *tid*.

    Returns the request (send it with :meth:`guarantee_envelope`) or
    :class:`AlreadyResolved` when a request is pending or none remain.
    """
    if state.report.mark(tid).kind is not MarkKind.GUARANTEE:
        raise NotGuaranteeGated(tid)
    if state.pending_guarantee is not None:
        return state, AlreadyResolved(pending=True)
    remaining = outstanding_guarantees(state, tid)
    if not remaining:
        return state, AlreadyResolved(pending=False)
    if tid not in enabled_transitions(state):
        raise NotEnabled(f"{tid} is not enabled")
    pattern = remaining[0]
    req = GuaranteeRequest(_descriptor(state, pattern))
    return replace(state, pending_guarantee=(tid, pattern)), req


def guarantee_envelope(state: ExecState, req: GuaranteeRequest) -> MessageEnvelope:
    return envelope(req, state.self_name, req.descriptor.sender, state.conversation)


def resolve_guarantee(state: ExecState, granted: bool) -> tuple[ExecState, list[Effect]]:
    if state.pending_guarantee is None:
        raise NoPendingGuarantee()
    tid, pattern = state.pending_guarantee
    if granted:
        return replace(state, pending_guarantee=None, granted=state.granted | {(tid, pattern)}), []
    asked = _descriptor(state, pattern).sender
    reason = "guarantee refused"
    env = envelope(Terminate(reason), state.self_name, asked, state.conversation)
    new = replace(state, pending_guarantee=None, status=Status.TERMINATED, reason=reason)
    return new, [Outbound(env)]


def terminate(state: ExecState, reason: str) -> ExecState:
    if not state.running:
        return state
    return replace(state, status=Status.TERMINATED, reason=reason)
