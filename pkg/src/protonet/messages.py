"""Reserved ``sys-*`` messages: protocol request/reply and the guarantee handshake.

Payloads are JSON objects carried in ``MessageEnvelope.content``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

from .model import MessageEnvelope

SYS_REQUEST = "sys-request"
SYS_REPLY = "sys-reply"
SYS_GUARANTEE_REQ = "sys-guarantee-req"
SYS_GUARANTEE_GRANT = "sys-guarantee-grant"
SYS_GUARANTEE_REFUSE = "sys-guarantee-refuse"
SYS_TERMINATE = "sys-terminate"

RESERVED = frozenset({
    SYS_REQUEST, SYS_REPLY, SYS_GUARANTEE_REQ, SYS_GUARANTEE_GRANT, SYS_GUARANTEE_REFUSE, SYS_TERMINATE,
})


def is_reserved(performative: str) -> bool:
    return performative in RESERVED


def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class Descriptor:
    """A promised message: *sender* will send *performative* to *receiver*."""

    performative: str
    sender: str
    receiver: str

    def to_json(self) -> dict:
        return {"performative": self.performative, "receiver": self.receiver, "sender": self.sender}


@dataclass(frozen=True)
class RequestProtocol:
    name: str
    performative = SYS_REQUEST

    def payload(self) -> dict:
        return {"protocol": self.name}


@dataclass(frozen=True)
class ReplyProtocol:
    name: str
    document: str
    performative = SYS_REPLY

    def payload(self) -> dict:
        return {"document": self.document, "protocol": self.name}


@dataclass(frozen=True)
class ProtocolNotFound:
    name: str
    performative = SYS_REPLY

    def payload(self) -> dict:
        return {"error": "ProtocolNotFound", "protocol": self.name}


@dataclass(frozen=True)
class GuaranteeRequest:
    descriptor: Descriptor
    performative = SYS_GUARANTEE_REQ

    def payload(self) -> dict:
        return self.descriptor.to_json()


@dataclass(frozen=True)
class GuaranteeGrant:
    descriptor: Descriptor
    performative = SYS_GUARANTEE_GRANT

    def payload(self) -> dict:
        return self.descriptor.to_json()


@dataclass(frozen=True)
class GuaranteeRefuse:
    descriptor: Descriptor
    performative = SYS_GUARANTEE_REFUSE

    def payload(self) -> dict:
        return self.descriptor.to_json()


@dataclass(frozen=True)
class Terminate:
    reason: str
    performative = SYS_TERMINATE

    def payload(self) -> dict:
        return {"reason": self.reason}


BootstrapMessage = Union[
    RequestProtocol, ReplyProtocol, ProtocolNotFound, GuaranteeRequest, GuaranteeGrant,
    GuaranteeRefuse, Terminate,
]


def envelope(msg: BootstrapMessage, sender: str, receiver: str, conversation: str) -> MessageEnvelope:
    return MessageEnvelope(msg.performative, sender, receiver, conversation, _dump(msg.payload()))


def decode(env: MessageEnvelope) -> BootstrapMessage:
    """Inverse of :func:`envelope`. Raises ``ValueError`` on bad payloads."""
    try:
        data = json.loads(env.content)
    except json.JSONDecodeError as e:
        raise ValueError(f"bad {env.performative} payload: {e}") from None
    p = env.performative
    try:
        if p == SYS_REQUEST:
            return RequestProtocol(data["protocol"])
        if p == SYS_REPLY:
            if data.get("error") == "ProtocolNotFound":
                return ProtocolNotFound(data["protocol"])
            return ReplyProtocol(data["protocol"], data["document"])
        if p in (SYS_GUARANTEE_REQ, SYS_GUARANTEE_GRANT, SYS_GUARANTEE_REFUSE):
            d = Descriptor(data["performative"], data["sender"], data["receiver"])
            cls = {SYS_GUARANTEE_REQ: GuaranteeRequest, SYS_GUARANTEE_GRANT: GuaranteeGrant,
                   SYS_GUARANTEE_REFUSE: GuaranteeRefuse}[p]
            return cls(d)
        if p == SYS_TERMINATE:
            return Terminate(data["reason"])
    except (KeyError, TypeError) as e:
        raise ValueError(f"bad {p} payload: {e}") from None
    raise ValueError(f"{p!r} is not a reserved performative")
