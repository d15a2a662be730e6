"""Scenario files: agent configs plus a script, run under a deterministic scheduler.

Scenario JSON::

    {"agents": ["agents/bidder.json", ...],
     "script": [{"op": "request", "agent": "A", "from": "B", "protocol": "bidding",
                 "conversation": "c1", "bindings": {"Broker": "Broker"}},
                {"op": "run-until-quiescent"},
                {"op": "adopt", "agent": "A", "conversation": "c1"},
                {"op": "inject", "envelope": {...}},
                {"op": "run-until-quiescent"}]}

Agent config JSON::

    {"name": "B", "protocols": {"bidding": "../protocols/bidding.json"},
     "plays": ["auctioneer"], "acl": {...} | "acl.json", "templates": [...] | "t.json",
     "functions": {"Makechoice": "pick-first"}, "variables": {"CreditCard": "4111"}}

Relative paths resolve against the file that mentions them.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError, ProtonetError, UnknownReceiver
from .executor import HostRegistry
from .model import MessageEnvelope
from .policy import AccessControlList, templates_from_json
from .runtime import ADOPTER, Agent, AgentConfig
from .stubs import make_stub
from .trace import Trace
from .transport import Bus, TcpBus
from .wire import parse_protocol

log = logging.getLogger(__name__)

DIRECTIVES = ("request", "adopt", "inject", "run-until-quiescent")
DEFAULT_MAX_STEPS = 10_000


def _load_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from None


def _inline_or_file(value: Any, base: Path) -> Any:
    if isinstance(value, str):
        return _load_json(base / value)
    return value


def load_agent_config(path) -> AgentConfig:
    path = Path(path)
    data = _load_json(path)
    base = path.parent
    if not isinstance(data, dict) or not isinstance(data.get("name"), str):
        raise ConfigError(f"{path}: agent config needs a 'name'")
    unknown = set(data) - {"name", "protocols", "plays", "acl", "templates", "functions", "variables"}
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")

    protocols = {}
    for pname, ppath in sorted(data.get("protocols", {}).items()):
        p = base / ppath
        try:
            protocols[pname] = parse_protocol(p.read_bytes())
        except OSError as e:
            raise ConfigError(f"cannot read {p}: {e.strerror}") from None
        except ProtonetError as e:
            raise ConfigError(f"{p}: {e}") from None

    plays = data.get("plays", {})
    if isinstance(plays, list):
        plays = {n: {} for n in plays}
    for n in plays:
        if n not in protocols:
            raise ConfigError(f"{path}: plays unknown protocol {n!r}")

    acl = AccessControlList.from_json(_inline_or_file(data.get("acl", {}), base))
    templates = templates_from_json(_inline_or_file(data.get("templates", []), base))
    functions = {f: make_stub(spec) for f, spec in sorted(data.get("functions", {}).items())}
    variables = {k: str(v) for k, v in sorted(data.get("variables", {}).items())}
    return AgentConfig(
        name=data["name"], protocols=protocols, acl=acl, templates=tuple(templates),
        registry=HostRegistry(functions, variables), plays={k: dict(v) for k, v in plays.items()},
    )


@dataclass
class Scenario:
    agents: list[AgentConfig]
    script: list[dict]
    max_steps: int = DEFAULT_MAX_STEPS


def load_scenario(path) -> Scenario:
    path = Path(path)
    data = _load_json(path)
    if not isinstance(data, dict) or not isinstance(data.get("agents"), list):
        raise ConfigError(f"{path}: scenario needs an 'agents' list")
    agents = [load_agent_config(path.parent / a) for a in data["agents"]]
    names = [a.name for a in agents]
    if len(set(names)) != len(names):
        raise ConfigError(f"{path}: duplicate agent names")
    script = data.get("script", [])
    for d in script:
        if not isinstance(d, dict) or d.get("op") not in DIRECTIVES:
            raise ConfigError(f"{path}: bad directive {d!r}")
        for key in ("agent", "from"):
            if key in d and d[key] not in names:
                raise ConfigError(f"{path}: unknown agent {d[key]!r}")
    return Scenario(agents, script, int(data.get("max_steps", DEFAULT_MAX_STEPS)))


@dataclass
class Simulation:
    """Single-threaded scheduler over a set of agents and a bus."""

    scenario: Scenario
    transport: str = "memory"
    trace: Trace = field(default_factory=Trace)

    def __post_init__(self):
        if self.transport == "memory":
            self.bus = Bus()
        elif self.transport == "tcp":
            self.bus = TcpBus()
        else:
            raise ConfigError(f"unknown transport {self.transport!r}")
        self.agents: dict[str, Agent] = {}
        for cfg in self.scenario.agents:
            self.agents[cfg.name] = Agent(cfg, self.trace)
            self.bus.register(cfg.name)
        self.steps = 0

    def _send(self, env: MessageEnvelope) -> None:
        try:
            self.bus.send(env)
        except UnknownReceiver:
            log.warning("dropping %s to unknown receiver %s", env.performative, env.receiver)

    def _tick(self) -> bool:
        progress = False
        pumped = self.bus.pump()
        if pumped is not None:
            receiver, env = pumped
            self.agents[receiver].mailbox.append(env)
            progress = True
        for name in sorted(self.agents):
            agent = self.agents[name]
            if agent.quiescent:
                continue
            for env in agent.step():
                self._send(env)
            progress = True
        return progress

    def run_until_quiescent(self) -> None:
        while self.steps < self.scenario.max_steps:
            self.steps += 1
            if not self._tick():
                return
        log.warning("step limit %d reached", self.scenario.max_steps)

    def apply(self, d: dict) -> None:
        op = d["op"]
        if op == "request":
            agent = self.agents[d["agent"]]
            self._send(agent.request_protocol(d["from"], d["protocol"], d.get("conversation", "c1"),
                                              d.get("bindings", {})))
        elif op == "adopt":
            self.agents[d["agent"]].adopt(d.get("conversation", "c1"))
        elif op == "inject":
            try:
                env = MessageEnvelope.from_dict(d["envelope"])
            except (KeyError, TypeError, ValueError) as e:
                raise ConfigError(f"bad injected envelope: {e}") from None
            self.trace.record(
                "emit", agent=env.sender, conversation=env.conversation, performative=env.performative,
                sender=env.sender, receiver=env.receiver, content=env.content, injected=True,
            )
            self._send(env)
        else:
            self.run_until_quiescent()

    def run(self) -> Trace:
        try:
            for d in self.scenario.script:
                self.apply(d)
        finally:
            self.bus.close()
        return self.trace


def adopter_outcomes(records: list[dict]) -> dict[tuple[str, str], str]:
    """Last status of every adopter-side conversation, keyed by (agent, conversation)."""
    out: dict[tuple[str, str], str] = {}
    for r in records:
        if r["kind"] == "status" and r.get("side") == ADOPTER:
            out[(r["agent"], r["conversation"])] = r["status"]
    return out


def exit_code(records: list[dict]) -> int:
    """0 iff every adopter conversation in the trace ended completed."""
    return 0 if all(s == "completed" for s in adopter_outcomes(records).values()) else 1


def run_scenario(path, transport: str = "memory", trace_path: Optional[str] = None) -> tuple[Trace, int]:
    trace = Simulation(load_scenario(path), transport).run()
    if trace_path is not None:
        trace.write(trace_path)
    return trace, exit_code(trace.records)
