"""Petri-net interaction protocols for agents: model, safety analysis, execution and runtime."""

from .analyzer import AnalysisReport, MarkKind, SafetyMark, Verdict, analyze, propagate_safety
from .executor import (
    ExecState, HostRegistry, Status, deliver_message, enabled_transitions, fire, init_execution,
    request_guarantee, resolve_guarantee,
)
from .model import (
    ActionSpec, FromRecv, Literal, MessageEnvelope, Place, ProtocolNet, RecvSpec, ResultsOf, SendSpec,
    Transition, check_invariants,
)
from .policy import AccessControlList, ActionPattern, ActionTemplate, AnalysisContext, Manifest, RecvPattern, SendPattern
from .predicates import evaluate_pred, parse_pred, render_pred
from .runtime import Agent, AgentConfig
from .structure import validate_structure
from .transport import Bus, TcpBus
from .wire import parse_protocol, serialize_protocol

__version__ = "0.1.0"

__all__ = [
    "AnalysisReport", "MarkKind", "SafetyMark", "Verdict", "analyze", "propagate_safety",
    "ExecState", "HostRegistry", "Status", "deliver_message", "enabled_transitions", "fire",
    "init_execution", "request_guarantee", "resolve_guarantee",
    "ActionSpec", "FromRecv", "Literal", "MessageEnvelope", "Place", "ProtocolNet", "RecvSpec",
    "ResultsOf", "SendSpec", "Transition", "check_invariants",
    "AccessControlList", "ActionPattern", "ActionTemplate", "AnalysisContext", "Manifest",
    "RecvPattern", "SendPattern", "evaluate_pred", "parse_pred", "render_pred",
    "Agent", "AgentConfig", "validate_structure", "Bus", "TcpBus", "parse_protocol", "serialize_protocol",
]
