import pytest

from conftest import load_protocol
from protonet.analyzer import analyze
from protonet.errors import (
    GuaranteeNotResolved, NoPendingGuarantee, NotEnabled, NotGuaranteeGated, RejectedProtocol, UnboundRole,
)
from protonet.executor import (
    ActionRun, AlreadyResolved, HostRegistry, Outbound, Status, deliver_message, enabled_transitions, fire,
    init_execution, outstanding_guarantees, request_guarantee, resolve_guarantee, terminate,
)
from protonet.messages import SYS_GUARANTEE_REQ, SYS_TERMINATE, Descriptor
from protonet.model import ActionSpec, FromRecv, Literal, MessageEnvelope, Transition, chain, make_net
from protonet.policy import AccessControlList, AnalysisContext, Manifest, templates_from_json
from protonet.stubs import make_stub

ROLES = {"Broker": "broker", "Auctioneer": "auct"}


@pytest.fixture
def registry():
    return HostRegistry({"Makechoice": make_stub("pick-first")}, {"CreditCard": "4111"})


@pytest.fixture
def pta_state(pta, permissive_ctx, registry):
    return init_execution(pta, analyze(pta, permissive_ctx), registry, "me", ROLES, "c1")


def env(perf, sender, content="", receiver="me"):
    return MessageEnvelope(perf, sender, receiver, "c1", content)


def test_init_arms_recv_initial(pta_state):
    assert pta_state.armed == {"P0"} and not pta_state.marking
    assert pta_state.running and enabled_transitions(pta_state) == []


def test_init_rejects(pta, registry):
    report = analyze(pta, AnalysisContext())
    with pytest.raises(RejectedProtocol):
        init_execution(pta, report, registry, "me", ROLES)


def test_init_unbound_role(pta, permissive_ctx, registry):
    with pytest.raises(UnboundRole):
        init_execution(pta, analyze(pta, permissive_ctx), registry, "me", {"Broker": "b"})


def test_full_pta_run(pta_state):
    s, ok = deliver_message(pta_state, env("Inform", "stranger"))
    assert not ok and s is pta_state
    s, ok = deliver_message(pta_state, env("Inform", "broker", "open"))
    assert ok and s.marking == {"P0": 1}
    s, eff = fire(s, "T1")
    assert eff == [Outbound(MessageEnvelope("Inform", "me", "auct", "c1", "register"))]
    assert s.armed == {"P1"}
    s, ok = deliver_message(s, env("CFP", "auct", "x|y"))
    s, eff = fire(s, "T2")
    assert eff == [ActionRun("A2", "execute", "Makechoice", "x")]
    assert s.store.results == {"A2": "x"}
    s, eff = fire(s, "T3")
    assert eff[0].envelope.content == "x" and eff[0].envelope.performative == "Bid"
    s, _ = deliver_message(s, env("Inform", "auct", "lost"))
    assert enabled_transitions(s) == ["T5"]
    s, _ = fire(s, "T5")
    assert s.status is Status.COMPLETED and s.marking == {"P5": 1}
    assert enabled_transitions(s) == []


def test_states_are_immutable(pta_state):
    s, _ = deliver_message(pta_state, env("Inform", "broker"))
    assert pta_state.marking == {} and s.marking == {"P0": 1}
    with pytest.raises(Exception):
        s.status = Status.FAILED


def test_fire_not_enabled(pta_state):
    with pytest.raises(NotEnabled):
        fire(pta_state, "T1")


def test_lexicographic_delivery():
    from protonet.model import Place, RecvSpec
    net = make_net(peers=["X"], places=[Place("P0"), Place("P2", RecvSpec("R2", "Ping", "X")),
                                        Place("P1", RecvSpec("R1", "Ping", "X")), "P3", "P4"],
                   transitions=["T0", "T1", "T2"],
                   arcs=[("P0", "T0"), ("T0", "P1"), ("T0", "P2"), ("P1", "T1"), ("T1", "P3"), ("P2", "T2"), ("T2", "P4")],
                   finals=["P3", "P4"])
    s = init_execution(net, analyze(net, AnalysisContext()), HostRegistry(), "me", {"X": "x"})
    s, _ = fire(s, "T0")
    s, _ = deliver_message(s, env("Ping", "x", "first"))
    assert s.marking == {"P1": 1} and s.store.recv_values == {"R1": "first"}


def action_net(kind, act, content=None):
    return make_net(places=["P0", "P1"],
                    transitions=[Transition("T1", None, ActionSpec("A1", kind, act, content or Literal("7")))],
                    arcs=chain("P0", "T1", "P1"), finals=["P1"])


def run_action(kind, act, registry):
    net = action_net(kind, act)
    ctx = AnalysisContext(registry.manifest(), AccessControlList.from_json({"*": {act: [kind]}}))
    s = init_execution(net, analyze(net, ctx), registry, "me", {})
    return fire(s, "T1")


def test_write_and_read():
    reg = HostRegistry(variables={"V": "0"})
    s, eff = run_action("write", "V", reg)
    assert s.store.vars["V"] == "7" and reg.variables["V"] == "0"
    assert eff == [ActionRun("A1", "write", "V", "7")]
    s, eff = run_action("read", "V", reg)
    assert s.store.results["A1"] == "0"


def test_host_failure_marks_failed():
    reg = HostRegistry({"Add": make_stub("int-add:1")})
    net = action_net("execute", "Add", Literal("seven"))
    ctx = AnalysisContext(reg.manifest(), AccessControlList.from_json({"*": {"Add": ["execute"]}}))
    s0 = init_execution(net, analyze(net, ctx), reg, "me", {})
    s, eff = fire(s0, "T1")
    assert s.status is Status.FAILED and eff == [] and s.marking == s0.marking
    assert s.reason.startswith("HostFunctionFailure(")
    assert enabled_transitions(s) == []


def test_terminate():
    s = terminate(init_execution(load_protocol("auctioneer"), analyze(load_protocol("auctioneer"), AnalysisContext()),
                                 HostRegistry(), "me", {"Bidder": "b"}), "bye")
    assert s.status is Status.TERMINATED and terminate(s, "again").reason == "bye"


# -- guarantees ---------------------------------------------------------------

@pytest.fixture
def purchase_state():
    net = load_protocol("purchase")
    tpls = templates_from_json([{
        "target": {"kind": "action", "type": "read", "act": "CreditCard"},
        "future": [{"kind": "recv", "performative": "Inform-Receipt", "sender": "Seller"}],
    }])
    ctx = AnalysisContext(Manifest(variables=frozenset({"CreditCard"})),
                          AccessControlList.from_json({"seller": {"CreditCard": ["read"]}}), tuple(tpls), "seller")
    report = analyze(net, ctx)
    assert report.verdict.accepted and [n for n, _ in report.obligations] == ["T2"]
    s = init_execution(net, report, HostRegistry(variables={"CreditCard": "4111"}), "buyer", {"Seller": "seller"}, "c1")
    s, _ = fire(s, "T1")
    s, _ = deliver_message(s, env("Inform-Price", "seller", "250", "buyer"))
    return s


def test_guarantee_gate(purchase_state):
    s = purchase_state
    assert enabled_transitions(s) == ["T2"]
    assert len(outstanding_guarantees(s, "T2")) == 1
    with pytest.raises(GuaranteeNotResolved):
        fire(s, "T2")
    with pytest.raises(NotGuaranteeGated):
        request_guarantee(s, "T1")
    with pytest.raises(NoPendingGuarantee):
        resolve_guarantee(s, True)

    s, req = request_guarantee(s, "T2")
    assert req.descriptor == Descriptor("Inform-Receipt", "seller", "buyer")
    again, res = request_guarantee(s, "T2")
    assert res == AlreadyResolved(pending=True) and again is s

    granted, effects = resolve_guarantee(s, True)
    assert effects == [] and outstanding_guarantees(granted, "T2") == []
    assert request_guarantee(granted, "T2")[1] == AlreadyResolved(pending=False)
    done, eff = fire(granted, "T2")
    assert eff[0].value == "4111"


def test_guarantee_refused(purchase_state):
    s, req = request_guarantee(purchase_state, "T2")
    s, effects = resolve_guarantee(s, False)
    assert s.status is Status.TERMINATED and s.reason == "guarantee refused"
    (out,) = effects
    assert out.envelope.performative == SYS_TERMINATE and out.envelope.receiver == "seller"


def test_guarantee_envelope(purchase_state):
    from protonet.executor import guarantee_envelope
    s, req = request_guarantee(purchase_state, "T2")
    e = guarantee_envelope(s, req)
    assert e.performative == SYS_GUARANTEE_REQ and e.receiver == "seller" and e.conversation == "c1"


def test_from_recv_argument(pta_state):
    s, _ = deliver_message(pta_state, env("Inform", "broker"))
    s, _ = fire(s, "T1")
    s, _ = deliver_message(s, env("CFP", "auct", "only"))
    assert fire(s, "T2")[1][0].value == "only"
    assert isinstance(s.net.transition_map["T2"].action.content, FromRecv)
