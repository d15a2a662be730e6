"""Exception hierarchy for protonet."""

from __future__ import annotations


class ProtonetError(Exception):
    """Base class for all errors raised by this package."""


class MalformedDocument(ProtonetError):
    """The document is not UTF-8 JSON."""


class SchemaViolation(ProtonetError):
    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


class InvariantViolation(ProtonetError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


class PredicateSyntaxError(ProtonetError):
    pass


class PredicateTypeError(ProtonetError, TypeError):
    pass


class UnboundReference(ProtonetError):
    def __init__(self, label: str):
        super().__init__(f"unbound reference {label!r}")
        self.label = label


# executor

class RejectedProtocol(ProtonetError):
    pass


class UnboundRole(ProtonetError):
    def __init__(self, role: str):
        super().__init__(f"no agent bound to role {role!r}")
        self.role = role


class NotEnabled(ProtonetError):
    pass


class GuaranteeNotResolved(ProtonetError):
    pass


class NotGuaranteeGated(ProtonetError):
    pass


class NoPendingGuarantee(ProtonetError):
    pass


class HostFunctionFailure(ProtonetError):
    def __init__(self, name: str, detail: str):
        super().__init__(f"{name}: {detail}")
        self.name = name
        self.detail = detail


# runtime / transport

class NoActiveProtocol(ProtonetError):
    pass


class UnknownReceiver(ProtonetError):
    pass


class ConfigError(ProtonetError):
    """Bad scenario, agent, ACL, template or manifest file."""
