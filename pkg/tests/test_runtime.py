import json
import logging

import pytest

from conftest import PROTOCOLS, load_protocol
from protonet import runtime as rt
from protonet.errors import NoActiveProtocol
from protonet.executor import HostRegistry, Status
from protonet.messages import (
    SYS_GUARANTEE_GRANT, SYS_GUARANTEE_REFUSE, Descriptor, GuaranteeRequest, RequestProtocol,
    decode, envelope,
)
from protonet.model import MessageEnvelope
from protonet.policy import AccessControlList
from protonet.runtime import Agent, AgentConfig
from protonet.stubs import make_stub
from protonet.wire import parse_protocol


@pytest.fixture
def auctioneer():
    return Agent(AgentConfig("auct", protocols={"pta": load_protocol("pta"), "auctioneer": load_protocol("auctioneer")},
                             plays={"auctioneer": {}}))


@pytest.fixture
def bidder():
    return Agent(AgentConfig(
        "bidder", acl=AccessControlList.from_json({"*": {"Makechoice": ["execute"]}}),
        registry=HostRegistry({"Makechoice": make_stub("pick-first")}),
    ))


def seller(net_name):
    return Agent(AgentConfig("seller", protocols={"sell": load_protocol(net_name)}, plays={"sell": {}}))


def request(name, sender="anyone"):
    return envelope(RequestProtocol(name), sender, "auct", "c1")


def test_serves_protocol(auctioneer):
    reply = auctioneer.handle_protocol_request(request("pta"))
    msg = decode(reply)
    assert reply.receiver == "anyone" and parse_protocol(msg.document) == load_protocol("pta")
    assert not auctioneer.conversations and not auctioneer.trace.records


def test_serves_not_found(auctioneer):
    assert json.loads(auctioneer.handle_protocol_request(request("unknown")).content) == {
        "error": "ProtocolNotFound", "protocol": "unknown"}


def test_adopt_safe(bidder):
    doc = (PROTOCOLS / "pta.protocol.json").read_bytes()
    res = bidder.adopt_protocol(doc, "auct", "c1", {"Broker": "broker"})
    assert res.adopted and res.state.bindings == {"Broker": "broker", "Auctioneer": "auct"}


def test_adopt_rejects_creditcard():
    agent = Agent(AgentConfig("buyer", registry=HostRegistry(variables={"CreditCard": "4111"})))
    res = agent.adopt_protocol((PROTOCOLS / "creditcard.protocol.json").read_bytes(), "auct")
    assert not res.adopted and res.state is None and res.report.verdict.reason == "initial unsafe"


def test_adopt_malformed(bidder):
    res = bidder.adopt_protocol((PROTOCOLS / "malformed.protocol.json").read_bytes(), "auct")
    assert not res.adopted and res.reason == "malformed"
    assert res.report.verdict.to_json() == {"status": "rejected", "reason": "malformed"}


def start_seller(agent):
    agent.mailbox.append(MessageEnvelope("Request", "buyer", "seller", "c1", "item"))
    out = agent.step()
    assert [e.performative for e in out] == ["Inform-Price"]
    return agent


def guarantee_req(performative="Inform-Receipt"):
    return envelope(GuaranteeRequest(Descriptor(performative, "seller", "buyer")), "buyer", "seller", "c1")


def test_can_guarantee_grant():
    agent = start_seller(seller("seller"))
    assert agent.can_guarantee(Descriptor("Inform-Receipt", "seller", "buyer"), "c1")
    agent.mailbox.append(guarantee_req())
    out = agent.step()
    assert [e.performative for e in out] == [SYS_GUARANTEE_GRANT]
    assert not [r for r in agent.trace.records if r["kind"] == "fire" and r["seq"] > 3]


def test_can_guarantee_unsafe_branch():
    agent = start_seller(seller("seller-unsafe-receipt"))
    assert "T4" in {t.id for t in agent.conversations["c1"].state.net.transitions if t.send}
    assert not agent.can_guarantee(Descriptor("Inform-Receipt", "seller", "buyer"), "c1")
    agent.mailbox.append(guarantee_req())
    assert [e.performative for e in agent.step()] == [SYS_GUARANTEE_REFUSE]


def test_can_guarantee_no_protocol():
    agent = seller("seller")
    with pytest.raises(NoActiveProtocol):
        agent.can_guarantee(Descriptor("Inform-Receipt", "seller", "buyer"), "c1")
    agent.mailbox.append(guarantee_req())
    assert [e.performative for e in agent.step()] == [SYS_GUARANTEE_REFUSE]


def test_wrong_receiver_or_passed_send():
    agent = start_seller(seller("seller"))
    assert not agent.can_guarantee(Descriptor("Inform-Receipt", "seller", "someone-else"), "c1")
    assert not agent.can_guarantee(Descriptor("Inform-Price", "seller", "buyer"), "c1")


def test_quiescent_step_returns_nothing(auctioneer):
    assert auctioneer.quiescent and auctioneer.step() == []


def test_reserved_never_reach_executor(monkeypatch, auctioneer):
    seen = []
    real = rt.deliver_message

    def spy(state, env):
        seen.append(env.performative)
        return real(state, env)

    monkeypatch.setattr(rt, "deliver_message", spy)
    auctioneer.mailbox.append(request("pta"))
    auctioneer.mailbox.append(MessageEnvelope("Inform", "bidder", "auct", "c1", "register"))
    auctioneer.mailbox.append(envelope(GuaranteeRequest(Descriptor("x", "auct", "bidder")), "bidder", "auct", "c1"))
    while not auctioneer.quiescent:
        auctioneer.step()
    assert seen == ["Inform"]


def test_unmatched_messages_are_buffered_then_rematched(auctioneer):
    auctioneer.mailbox.append(MessageEnvelope("Inform", "bidder", "auct", "c1", "register"))
    auctioneer.step()  # spawns, delivers, fires T1 (arms P1)
    conv = auctioneer.conversations["c1"]
    assert conv.state.armed == {"P1"}
    auctioneer.mailbox.append(MessageEnvelope("Noise", "bidder", "auct", "c1"))
    auctioneer.step()
    assert [r["outcome"] for r in auctioneer.trace.of_kind("deliver")][-1] == "buffered"
    auctioneer.mailbox.append(MessageEnvelope("Bid", "bidder", "auct", "c1", "b"))
    auctioneer.step()  # Bid matches P1, T2 fires; P1 was not re-armed, so the buffer only drains on arming
    assert conv.state.status is Status.COMPLETED


def test_rematch_after_arming():
    """A message that arrives before its place is armed gets one more chance."""
    from protonet.model import Place, RecvSpec, chain, make_net
    net = make_net(peers=["X"], role="Me",
                   places=[Place("P0", RecvSpec("R0", "Start", "X")), Place("P1", RecvSpec("R1", "Late", "X")), "P2", "P3"],
                   transitions=["T0", "T1", "T2"],
                   arcs=chain("P0", "T0", "P2", "T1", "P1", "T2", "P3"), initial="P0", finals=["P3"])
    agent = Agent(AgentConfig("me", protocols={"n": net}, plays={"n": {}}))
    agent.mailbox.append(MessageEnvelope("Start", "x", "me", "c1"))
    agent.mailbox.append(MessageEnvelope("Late", "x", "me", "c1", "v"))
    agent.step()  # deliver Start, fire T0
    agent.step()  # Late arrives early: buffered; T1 fires and arms P1, re-match succeeds
    outcomes = [r["outcome"] for r in agent.trace.of_kind("deliver")]
    assert outcomes == ["matched", "buffered", "rematched"]
    while not agent.quiescent:
        agent.step()
    assert agent.conversations["c1"].state.status is Status.COMPLETED


def test_broken_promise_logged(caplog):
    agent = Agent(AgentConfig("buyer"))
    conv = rt.Conversation("c1", rt.ADOPTER, "seller", "p")
    conv.promised.append(Descriptor("Inform-Receipt", "seller", "buyer"))
    with caplog.at_level(logging.WARNING):
        agent._check_promises(conv)
    assert "broken promise" in caplog.text


def test_adopt_without_document(bidder):
    bidder.request_protocol("auct", "pta", "c9")
    res = bidder.adopt("c9")
    assert not res.adopted and res.reason == "no protocol received"
    with pytest.raises(NoActiveProtocol):
        bidder.adopt("nope")


def test_unsolicited_message_dropped(bidder):
    bidder.mailbox.append(MessageEnvelope("Inform", "x", "bidder", "zz"))
    assert bidder.step() == []
    assert bidder.trace.records[-1]["outcome"] == "dropped"
